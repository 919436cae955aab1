"""Two-stage retrieval of fact-checking articles for multimodal posts.

Stage 1 generates candidates with BM25 (optionally expanding the query
with text read out of the post's images); stage 2 re-ranks the
candidates with a multimodal attention network trained on triplet hinge
loss.
"""

__version__ = "0.1.0"
