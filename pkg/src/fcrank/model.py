"""The multimodal attention ranker and its variants.

Scoring a (query, document) pair:

  1. project static word vectors (tanh linear) and contextual token
     vectors (tanh linear) to a shared dimension;
  2. build four N x M interaction matrices: static cosine S, gate
     G = 2*sigmoid(-euclidean distance of contextual projections),
     attended A = S * G, contextual cosine C; stack [S, A, C, S - C];
  3. run n same-padded CNNs (kernel i x i x 4, F channels each) over the
     stack and k-max pool every output channel into a feature vector;
  4. project raw image features linearly, take the max pairwise cosine
     between query and document images as a scalar visual feature
     (-1 when the document has no images);
  5. feed [text features; visual scalar] through a bias-free relu MLP.

Variants: MAN uses everything; CTM drops the visual scalar; VMN returns
the visual scalar itself. All arithmetic is float64; analytic gradients
for every trainable tensor are produced by the hand-written backward
pass below and are checked against finite differences in the tests.
"""

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .corpus import build_query_text

VARIANTS = ("MAN", "CTM", "VMN")

CHECKPOINT_MAGIC = b"FCCKPT01"


class ModelError(Exception):
    pass


@dataclass
class Hyperparams:
    proj_dim: int = 256  # shared projection width P
    filters: int = 16  # CNN output channels F
    kmax: int = 32  # pooled values per channel
    num_cnns: int = 2  # CNN tower count n (kernel i x i for i = 1..n)
    visual_proj_dim: int = 300
    visual_dim: int = 2048
    static_dim: int = 300
    contextual_dim: int = 1024

    def __post_init__(self):
        for name in ("proj_dim", "filters", "kmax", "num_cnns"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be positive" % name)

    @property
    def text_feat_len(self):
        return self.num_cnns * self.filters * self.kmax

    @classmethod
    def best_snopes(cls):
        return cls(proj_dim=256, filters=16, kmax=32, num_cnns=2)

    @classmethod
    def best_politifact(cls):
        return cls(proj_dim=256, filters=16, kmax=48, num_cnns=3)


def param_shapes(hyper, variant):
    """Tensor name -> shape, in a fixed (checkpoint) order."""
    mlp_in = hyper.text_feat_len + (0 if variant == "CTM" else 1)
    shapes = {
        "w1": (hyper.proj_dim, hyper.static_dim),
        "b1": (hyper.proj_dim,),
        "w2": (hyper.proj_dim, hyper.contextual_dim),
        "b2": (hyper.proj_dim,),
        "w3": (hyper.visual_proj_dim, hyper.visual_dim),
        "b3": (hyper.visual_proj_dim,),
    }
    for i in range(1, hyper.num_cnns + 1):
        shapes["conv%d" % i] = (hyper.filters, i, i, 4)
    shapes["w4"] = (128, mlp_in)
    shapes["w5"] = (64, 128)
    shapes["w6"] = (1, 64)
    return shapes


class ModelParams:
    """All trainable tensors, float64, keyed by name in checkpoint order."""

    def __init__(self, tensors):
        self.tensors = dict(tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self):
        return ModelParams({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def sq_norm(self):
        return float(sum(np.sum(v * v) for v in self.tensors.values()))

    @classmethod
    def initialize(cls, hyper, variant="MAN", seed=0):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in param_shapes(hyper, variant).items():
            if name in ("b1", "b2", "b3"):
                tensors[name] = np.zeros(shape)
                continue
            if name.startswith("conv"):
                i = shape[1]
                fan_in, fan_out = i * i * 4, i * i * shape[0]
            else:
                fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        return cls(tensors)


# ---------------------------------------------------------------------------
# building blocks (forward + backward)
# ---------------------------------------------------------------------------


def tanh_project(X, W, b):
    out = np.tanh(X @ W.T + b)
    return out


def tanh_project_backward(d_out, out, X, W):
    d_pre = d_out * (1.0 - out * out)
    return d_pre.T @ X, d_pre.sum(axis=0)


def cosine_forward(A, B):
    """Row-pairwise cosine; rows with zero norm yield similarity 0."""
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    ua = np.divide(A, na[:, None], out=np.zeros_like(A), where=na[:, None] > 0)
    ub = np.divide(B, nb[:, None], out=np.zeros_like(B), where=nb[:, None] > 0)
    S = ua @ ub.T
    return S, (ua, ub, na, nb)


def cosine_backward(dS, S, cache):
    ua, ub, na, nb = cache
    dA = dS @ ub - (dS * S).sum(axis=1, keepdims=True) * ua
    dA = np.divide(dA, na[:, None], out=np.zeros_like(dA), where=na[:, None] > 0)
    dB = dS.T @ ua - (dS * S).sum(axis=0)[:, None] * ub
    dB = np.divide(dB, nb[:, None], out=np.zeros_like(dB), where=nb[:, None] > 0)
    return dA, dB


def gate_forward(Hq, Hd):
    """G_ij = 2 * sigmoid(-||Hq_i - Hd_j||); always in (0, 1]."""
    sq = (Hq * Hq).sum(axis=1)
    sd = (Hd * Hd).sum(axis=1)
    D2 = np.maximum(sq[:, None] + sd[None, :] - 2.0 * (Hq @ Hd.T), 0.0)
    D = np.sqrt(D2)
    G = 2.0 / (1.0 + np.exp(D))
    return G, D


def gate_backward(dG, G, D, Hq, Hd):
    # dG/dD = -G * (1 - G/2); at D == 0 the distance is not differentiable,
    # subgradient 0 is used
    dG_dD = -G * (1.0 - 0.5 * G)
    coef = np.divide(dG * dG_dD, D, out=np.zeros_like(D), where=D > 0)
    dHq = coef.sum(axis=1)[:, None] * Hq - coef @ Hd
    dHd = coef.sum(axis=0)[:, None] * Hd - coef.T @ Hq
    return dHq, dHd


def conv_same(Z, K):
    """Same-padded 2-D convolution of an (N, M, 4) stack with (F, i, i, 4)
    filters; no nonlinearity (the downstream relu layers supply it)."""
    size = K.shape[1]
    pl = (size - 1) // 2
    pr = size - 1 - pl
    Zp = np.pad(Z, ((pl, pr), (pl, pr), (0, 0)))
    N, M = Z.shape[:2]
    P = np.zeros((N, M, K.shape[0]))
    for a in range(size):
        for b in range(size):
            P += Zp[a : a + N, b : b + M, :] @ K[:, a, b, :].T
    return P, Zp


def conv_same_backward(dP, Zp, K):
    size = K.shape[1]
    pl = (size - 1) // 2
    N, M = dP.shape[:2]
    dK = np.zeros_like(K)
    dZp = np.zeros_like(Zp)
    for a in range(size):
        for b in range(size):
            dK[:, a, b, :] = np.einsum("nmf,nmc->fc", dP, Zp[a : a + N, b : b + M, :])
            dZp[a : a + N, b : b + M, :] += dP @ K[:, a, b, :]
    return dK, dZp[pl : pl + N, pl : pl + M, :]


def kmax_pool(channel, k):
    """The k largest values, descending. When the map has fewer than k
    cells the output is padded with the channel minimum so its length
    (and differentiability) never depends on N*M."""
    flat = channel.ravel()
    order = np.argsort(-flat, kind="stable")
    if flat.size >= k:
        idx = order[:k]
        return flat[idx], (idx, None, 0, channel.shape)
    idx = order
    pad = k - flat.size
    pad_idx = order[-1]
    vals = np.concatenate([flat[idx], np.full(pad, flat[pad_idx])])
    return vals, (idx, pad_idx, pad, channel.shape)


def kmax_pool_backward(d_vals, cache):
    idx, pad_idx, pad, shape = cache
    d_flat = np.zeros(shape[0] * shape[1])
    np.add.at(d_flat, idx, d_vals[: len(idx)])
    if pad:
        d_flat[pad_idx] += d_vals[len(idx) :].sum()
    return d_flat.reshape(shape)


def relu_mlp(x, w4, w5, w6):
    u1 = w4 @ x
    r1 = np.maximum(u1, 0.0)
    u2 = w5 @ r1
    r2 = np.maximum(u2, 0.0)
    f = float((w6 @ r2)[0])
    return f, (x, u1, r1, u2, r2)


def relu_mlp_backward(df, cache, w4, w5, w6):
    x, u1, r1, u2, r2 = cache
    dw6 = df * r2[None, :]
    dr2 = df * w6[0]
    du2 = dr2 * (u2 > 0)
    dw5 = np.outer(du2, r1)
    dr1 = w5.T @ du2
    du1 = dr1 * (u1 > 0)
    dw4 = np.outer(du1, x)
    dx = w4.T @ du1
    return dw4, dw5, dw6, dx


# ---------------------------------------------------------------------------
# pair assembly and the full pipeline
# ---------------------------------------------------------------------------


@dataclass
class PairInputs:
    """Frozen embeddings for one (query, document) pair, float64."""

    q_tokens: list
    d_tokens: list
    tq: np.ndarray  # N x 300 static
    lq: np.ndarray  # N x 1024 contextual
    td: np.ndarray
    ld: np.ndarray
    vq: np.ndarray  # X x 2048 raw visual
    vd: np.ndarray  # Y x 2048


def build_pair_inputs(q, d, store, scenario_cfg):
    q_tokens = build_query_text(q, scenario_cfg)
    d_tokens = d.doc_tokens
    return PairInputs(
        q_tokens=q_tokens,
        d_tokens=d_tokens,
        tq=store.static.lookup_all(q_tokens).astype(np.float64),
        lq=store.contextual.lookup_range(q.id, len(q_tokens)).astype(np.float64),
        td=store.static.lookup_all(d_tokens).astype(np.float64),
        ld=store.contextual.lookup_range(d.id, len(d_tokens)).astype(np.float64),
        vq=store.visual.lookup_all(q.image_ids).astype(np.float64),
        vd=store.visual.lookup_all(d.image_ids).astype(np.float64),
    )


def interaction_forward(inputs, params):
    Gq = tanh_project(inputs.tq, params["w1"], params["b1"])
    Gd = tanh_project(inputs.td, params["w1"], params["b1"])
    Hq = tanh_project(inputs.lq, params["w2"], params["b2"])
    Hd = tanh_project(inputs.ld, params["w2"], params["b2"])
    S, s_cache = cosine_forward(Gq, Gd)
    G, D = gate_forward(Hq, Hd)
    A = S * G
    C, c_cache = cosine_forward(Hq, Hd)
    Z = np.stack([S, A, C, S - C], axis=2)
    return {
        "Gq": Gq, "Gd": Gd, "Hq": Hq, "Hd": Hd,
        "S": S, "s_cache": s_cache, "G": G, "D": D, "A": A,
        "C": C, "c_cache": c_cache, "Z": Z,
    }


def interaction_tensors(q, d, params, store, scenario_cfg):
    """S, G, A, C, Z plus the token axes, for inspection/dumping."""
    inputs = build_pair_inputs(q, d, store, scenario_cfg)
    ctx = interaction_forward(inputs, params)
    return {
        "q_tokens": inputs.q_tokens,
        "d_tokens": inputs.d_tokens,
        "S": ctx["S"], "G": ctx["G"], "A": ctx["A"], "C": ctx["C"], "Z": ctx["Z"],
    }


def textual_features(Z, params, hyper):
    """The concatenated k-max pooled CNN features (length n*F*k)."""
    o, _ = _textual_forward(Z, params, hyper)
    return o


def _textual_forward(Z, params, hyper):
    pieces = []
    cnn_caches = []
    for i in range(1, hyper.num_cnns + 1):
        K = params["conv%d" % i]
        P, Zp = conv_same(Z, K)
        pool_caches = []
        for j in range(hyper.filters):
            vals, cache = kmax_pool(P[:, :, j], hyper.kmax)
            pieces.append(vals)
            pool_caches.append(cache)
        cnn_caches.append((Zp, pool_caches))
    return np.concatenate(pieces), cnn_caches


def _textual_backward(d_o, cnn_caches, params, hyper, Z_shape):
    dZ = np.zeros(Z_shape)
    grads = {}
    off = 0
    for i in range(1, hyper.num_cnns + 1):
        K = params["conv%d" % i]
        Zp, pool_caches = cnn_caches[i - 1]
        dP = np.zeros(Z_shape[:2] + (hyper.filters,))
        for j in range(hyper.filters):
            dP[:, :, j] = kmax_pool_backward(d_o[off : off + hyper.kmax], pool_caches[j])
            off += hyper.kmax
        dK, dZ_i = conv_same_backward(dP, Zp, K)
        grads["conv%d" % i] = dK
        dZ += dZ_i
    return grads, dZ


def visual_forward(vq, vd, params):
    """Max pairwise cosine of linearly projected image features.

    A document without images scores -1; a query without images is an
    error (the corpora guarantee query images exist).
    """
    if vq.shape[0] == 0:
        raise ModelError("query has no images; visual matching undefined")
    Mq = vq @ params["w3"].T + params["b3"]
    if vd.shape[0] == 0:
        return -1.0, None
    Md = vd @ params["w3"].T + params["b3"]
    V, v_cache = cosine_forward(Mq, Md)
    arg = np.unravel_index(np.argmax(V), V.shape)
    return float(V[arg]), (Mq, Md, V, v_cache, arg)


def visual_backward(ds, cache, inputs):
    if cache is None:
        return None  # s is the constant -1
    Mq, Md, V, v_cache, arg = cache
    dV = np.zeros_like(V)
    dV[arg] = ds
    dMq, dMd = cosine_backward(dV, V, v_cache)
    dw3 = dMq.T @ inputs.vq + dMd.T @ inputs.vd
    db3 = dMq.sum(axis=0) + dMd.sum(axis=0)
    return dw3, db3


def forward(inputs, params, hyper, variant="MAN"):
    """Score one pair; returns (score, cache) with cache sufficient for
    the analytic backward pass."""
    if variant not in VARIANTS:
        raise ValueError("unknown variant: %r" % (variant,))
    cache = {"variant": variant}

    if variant != "CTM":
        s, v_cache = visual_forward(inputs.vq, inputs.vd, params)
        cache["s"] = s
        cache["v_cache"] = v_cache
        if variant == "VMN":
            return s, cache

    ctx = interaction_forward(inputs, params)
    cache["ctx"] = ctx
    o, cnn_caches = _textual_forward(ctx["Z"], params, hyper)
    cache["cnn_caches"] = cnn_caches

    if variant == "CTM":
        x = o
    else:
        x = np.concatenate([o, [cache["s"]]])
    f, mlp_cache = relu_mlp(x, params["w4"], params["w5"], params["w6"])
    cache["mlp_cache"] = mlp_cache
    return f, cache


def backward(df, inputs, params, hyper, cache):
    """Gradients of df * score with respect to every trainable tensor."""
    variant = cache["variant"]
    grads = {name: np.zeros_like(t) for name, t in params.tensors.items()}

    if variant == "VMN":
        vis = visual_backward(df, cache["v_cache"], inputs)
        if vis is not None:
            grads["w3"], grads["b3"] = grads["w3"] + vis[0], grads["b3"] + vis[1]
        return grads

    dw4, dw5, dw6, dx = relu_mlp_backward(df, cache["mlp_cache"], params["w4"], params["w5"], params["w6"])
    grads["w4"] += dw4
    grads["w5"] += dw5
    grads["w6"] += dw6

    if variant == "CTM":
        d_o = dx
    else:
        d_o = dx[:-1]
        vis = visual_backward(float(dx[-1]), cache["v_cache"], inputs)
        if vis is not None:
            grads["w3"] += vis[0]
            grads["b3"] += vis[1]

    ctx = cache["ctx"]
    conv_grads, dZ = _textual_backward(d_o, cache["cnn_caches"], params, hyper, ctx["Z"].shape)
    for name, g in conv_grads.items():
        grads[name] += g

    dS = dZ[:, :, 0] + dZ[:, :, 3]
    dA = dZ[:, :, 1]
    dC = dZ[:, :, 2] - dZ[:, :, 3]

    # A = S * G
    dS = dS + dA * ctx["G"]
    dG = dA * ctx["S"]

    dGq, dGd = cosine_backward(dS, ctx["S"], ctx["s_cache"])
    dHq_c, dHd_c = cosine_backward(dC, ctx["C"], ctx["c_cache"])
    dHq_g, dHd_g = gate_backward(dG, ctx["G"], ctx["D"], ctx["Hq"], ctx["Hd"])
    dHq = dHq_c + dHq_g
    dHd = dHd_c + dHd_g

    dw1_q, db1_q = tanh_project_backward(dGq, ctx["Gq"], inputs.tq, params["w1"])
    dw1_d, db1_d = tanh_project_backward(dGd, ctx["Gd"], inputs.td, params["w1"])
    grads["w1"] += dw1_q + dw1_d
    grads["b1"] += db1_q + db1_d
    dw2_q, db2_q = tanh_project_backward(dHq, ctx["Hq"], inputs.lq, params["w2"])
    dw2_d, db2_d = tanh_project_backward(dHd, ctx["Hd"], inputs.ld, params["w2"])
    grads["w2"] += dw2_q + dw2_d
    grads["b2"] += db2_q + db2_d
    return grads


def score_pair(q, d, params, hyper, variant, store, scenario_cfg):
    inputs = build_pair_inputs(q, d, store, scenario_cfg)
    f, _ = forward(inputs, params, hyper, variant)
    return f


def score_pair_with_grads(q, d, params, hyper, variant, store, scenario_cfg):
    inputs = build_pair_inputs(q, d, store, scenario_cfg)
    f, cache = forward(inputs, params, hyper, variant)
    return f, backward(1.0, inputs, params, hyper, cache)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, hyper, variant, scenario, params, meta=None):
    """Versioned binary dump: JSON header + shape-prefixed float32 tensors."""
    header = {
        "hyper": asdict(hyper),
        "variant": variant,
        "scenario": scenario,
        "meta": meta or {},
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, tensor in params.tensors.items():
            nraw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nraw)))
            fh.write(nraw)
            fh.write(struct.pack("<B", tensor.ndim))
            for dim in tensor.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.asarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ModelError("not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        hyper = Hyperparams(**header["hyper"])
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack("<%dI" % ndim, fh.read(4 * ndim))
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * size), dtype="<f4")
            if data.size != size:
                raise ModelError("truncated checkpoint tensor %r" % name)
            tensors[name] = data.astype(np.float64).reshape(shape)
    params = ModelParams(tensors)
    expected = param_shapes(hyper, header["variant"])
    for name, shape in expected.items():
        if name not in tensors or tensors[name].shape != shape:
            raise ModelError("checkpoint tensor %r missing or mis-shaped" % name)
    return hyper, header["variant"], header["scenario"], params, header["meta"]
