"""The three frozen feature producers.

Pretrained weights are used when a checkpoint/vector file is supplied;
otherwise each encoder falls back to a seeded, deterministic
initialization of the same architecture so extraction stays runnable
(and reproducible) on machines without downloaded weights. The choice
is recorded in the store comment either way.
"""

import hashlib

import numpy as np
import torch
from PIL import Image

STATIC_DIM = 300
CONTEXTUAL_DIM = 1024
VISUAL_DIM = 2048

IMAGE_SIZE = 224
_IMAGE_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGE_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class EncoderError(Exception):
    pass


def _seed_from(seed, text):
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return np.random.SeedSequence([seed, int.from_bytes(digest[:8], "little")])


class StaticTable:
    """300-d word vectors from a GloVe-format text file, or hashed
    deterministic unit vectors when no file is given."""

    def __init__(self, vectors_path=None, seed=0):
        self.seed = seed
        self.table = None
        if vectors_path is not None:
            self.table = {}
            with open(vectors_path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    parts = line.rstrip("\n").split(" ")
                    if len(parts) != 1 + STATIC_DIM:
                        raise EncoderError(
                            "%s:%d: expected %d values per word, got %d"
                            % (vectors_path, lineno, STATIC_DIM, len(parts) - 1))
                    self.table[parts[0]] = np.asarray(parts[1:], dtype=np.float32)
        self.description = ("glove-file" if vectors_path else
                            "hashed-random seed=%d" % seed)

    def encode(self, token):
        if self.table is not None:
            vec = self.table.get(token)
            return vec if vec is not None else np.zeros(STATIC_DIM, dtype=np.float32)
        rng = np.random.default_rng(_seed_from(self.seed, "static\x1f" + token))
        vec = rng.standard_normal(STATIC_DIM)
        return (vec / np.linalg.norm(vec)).astype(np.float32)

    def encode_vocab(self, tokens):
        return {t: self.encode(t) for t in tokens}


class ContextualEncoder:
    """1024-d per-token vectors from a seeded 2-layer bidirectional LSTM
    over hash-bucketed token embeddings; the per-token output is the mean
    of the two layer representations."""

    N_BUCKETS = 50_021  # prime, keeps hash collisions spread
    EMBED_DIM = 256
    HIDDEN = CONTEXTUAL_DIM // 2

    def __init__(self, seed=0):
        self.seed = seed
        torch.manual_seed(seed)
        self.embedding = torch.nn.Embedding(self.N_BUCKETS, self.EMBED_DIM)
        self.lstm1 = torch.nn.LSTM(self.EMBED_DIM, self.HIDDEN, bidirectional=True,
                                   batch_first=True)
        self.lstm2 = torch.nn.LSTM(CONTEXTUAL_DIM, self.HIDDEN, bidirectional=True,
                                   batch_first=True)
        for module in (self.embedding, self.lstm1, self.lstm2):
            module.eval()
            for p in module.parameters():
                p.requires_grad_(False)
        self.description = "bilstm-2layer mean(l1,l2) seed=%d" % seed

    def _bucket(self, token):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little") % self.N_BUCKETS

    @torch.no_grad()
    def encode_sequence(self, tokens):
        """(len(tokens), 1024) float32; depends on the whole sequence."""
        if not tokens:
            return np.zeros((0, CONTEXTUAL_DIM), dtype=np.float32)
        ids = torch.tensor([[self._bucket(t) for t in tokens]], dtype=torch.long)
        x = self.embedding(ids)
        h1, _ = self.lstm1(x)
        h2, _ = self.lstm2(h1)
        out = (h1 + h2) / 2.0
        vecs = out[0].numpy().astype(np.float32)
        if vecs.shape != (len(tokens), CONTEXTUAL_DIM):
            raise EncoderError("contextual encoder emitted shape %s" % (vecs.shape,))
        return vecs


class VisualEncoder:
    """2048-d global-average-pooled penultimate ResNet50 activations over
    224x224 RGB input."""

    def __init__(self, seed=0, weights_path=None):
        from torchvision.models import resnet50

        torch.manual_seed(seed)
        model = resnet50(weights=None)
        if weights_path is not None:
            model.load_state_dict(torch.load(weights_path, map_location="cpu"))
            self.description = "resnet50 weights=%s" % weights_path
        else:
            self.description = "resnet50 seeded-init seed=%d" % seed
        model.fc = torch.nn.Identity()  # stop at the pooled 2048-d features
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        self.model = model

    @staticmethod
    def _to_tensor(image_path):
        with Image.open(image_path) as img:
            rgb = img.convert("RGB").resize((IMAGE_SIZE, IMAGE_SIZE))
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
        arr = (arr - _IMAGE_MEAN) / _IMAGE_STD
        return torch.from_numpy(arr.transpose(2, 0, 1))

    @torch.no_grad()
    def encode_batch(self, image_paths):
        """List of paths -> (len(paths), 2048) float32."""
        if not image_paths:
            return np.zeros((0, VISUAL_DIM), dtype=np.float32)
        batch = torch.stack([self._to_tensor(p) for p in image_paths])
        feats = self.model(batch).numpy().astype(np.float32)
        if feats.shape != (len(image_paths), VISUAL_DIM):
            raise EncoderError("visual encoder emitted shape %s" % (feats.shape,))
        return feats
