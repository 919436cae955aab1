"""Offline feature extraction for the fcrank retrieval engine.

Runs a contextual token encoder (1024-d), a visual encoder (2048-d
penultimate features) and a static word-vector table (300-d) over a
corpus, optionally calls an OCR service for image text, and writes the
engine's binary embedding-store format plus OCR-augmented corpus files.
"""

__version__ = "0.1.0"
