"""Recurrent d-vector encoder: one LSTM or GRU layer, dense projection, L2 norm.

Forward and backward passes are written out by hand in numpy. Utterances of
different length are processed together by left-padding to the longest one
and masking, so every sequence's final state sits at the last time step.

Weight layout follows ``W @ concat(x, h)``: ``W`` is ``(G*H, D+H)`` with gate
blocks stacked by rows (LSTM: input, forget, output, candidate; GRU: update,
reset, candidate).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, NonFiniteActivation, StaleCache

NORM_EPS = 1e-8
GATES = {"lstm": 4, "gru": 3}


@dataclass
class EncoderParams:
    cell_kind: str
    input_dim: int
    hidden: int
    embed_dim: int
    W: np.ndarray
    bias: np.ndarray
    P: np.ndarray
    pbias: np.ndarray
    version: int = field(default=0, compare=False)

    NAMES = ("W", "bias", "P", "pbias")

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.NAMES}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.cell_kind, self.input_dim, self.hidden, self.embed_dim,
                             self.W.copy(), self.bias.copy(), self.P.copy(), self.pbias.copy(),
                             self.version)

    @property
    def n_gate_params(self) -> int:
        return self.W.size + self.bias.size

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def bump(self) -> None:
        """Mark parameters as changed; caches from earlier forwards become stale."""
        self.version += 1

    def validate(self) -> None:
        g = GATES[self.cell_kind]
        shapes = {"W": (g * self.hidden, self.input_dim + self.hidden), "bias": (g * self.hidden,),
                  "P": (self.embed_dim, self.hidden), "pbias": (self.embed_dim,)}
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DimMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteActivation(f"{name} contains non-finite values")


def init(cell_kind: str = "lstm", input_dim: int = 43, hidden: int = 128,
         embed_dim: int = 128, seed: int = 0) -> EncoderParams:
    """Uniform(-0.1, 0.1) weights, zero biases, LSTM forget-gate bias 1."""
    cell_kind = cell_kind.lower()
    if cell_kind not in GATES:
        raise ValueError(f"cell_kind must be 'lstm' or 'gru', got {cell_kind!r}")
    rng = np.random.default_rng(seed)
    g = GATES[cell_kind]
    W = rng.uniform(-0.1, 0.1, (g * hidden, input_dim + hidden))
    P = rng.uniform(-0.1, 0.1, (embed_dim, hidden))
    bias = np.zeros(g * hidden)
    if cell_kind == "lstm":
        bias[hidden:2 * hidden] = 1.0
    return EncoderParams(cell_kind, input_dim, hidden, embed_dim, W, bias, P, np.zeros(embed_dim))


@dataclass
class DVector:
    e: np.ndarray
    subject_id: str = ""
    sentence_index: int = -1
    degenerate: bool = False


@dataclass
class ForwardCache:
    version: int
    cell_kind: str
    x: np.ndarray            # T x B x D (left-padded)
    mask: np.ndarray         # T x B x 1
    hs: np.ndarray           # (T+1) x B x H, hs[0] = 0
    gates: np.ndarray        # T x B x G*H post-activation
    extra: np.ndarray        # LSTM: (T+1) x B x H cell states; GRU: T x B x H of r*h
    tanh_c: np.ndarray | None
    v: np.ndarray            # B x E pre-normalisation
    norms: np.ndarray        # B
    d: np.ndarray            # B x E


def _sigmoid_(a: np.ndarray) -> np.ndarray:
    # in place, overflow-free: sigma(a) = (1 + tanh(a/2)) / 2
    a *= 0.5
    np.tanh(a, out=a)
    a += 1.0
    a *= 0.5
    return a


def _as_array(seq) -> np.ndarray:
    return np.asarray(getattr(seq, "frames", seq), dtype=np.float64)


def pad_batch(seqs, input_dim: int) -> tuple[np.ndarray, np.ndarray]:
    arrays = [_as_array(s) for s in seqs]
    for a in arrays:
        if a.ndim != 2 or a.shape[1] != input_dim:
            raise DimMismatch(f"sequence of shape {a.shape} for an encoder with input_dim={input_dim}")
        if a.shape[0] < 1:
            raise DimMismatch("sequences need at least one frame")
    t_max = max(a.shape[0] for a in arrays)
    x = np.zeros((t_max, len(arrays), input_dim))
    mask = np.zeros((t_max, len(arrays), 1))
    for b, a in enumerate(arrays):
        x[t_max - a.shape[0]:, b] = a
        mask[t_max - a.shape[0]:, b] = 1.0
    return x, mask


def _lstm_forward(params, x, mask):
    t_max, batch, _ = x.shape
    H = params.hidden
    Wx, Wh = params.W[:, :params.input_dim], params.W[:, params.input_dim:]
    gates = x @ Wx.T
    gates += params.bias
    hs = np.zeros((t_max + 1, batch, H))
    cs = np.zeros((t_max + 1, batch, H))
    tanh_c = np.empty((t_max, batch, H))
    WhT = np.ascontiguousarray(Wh.T)
    for t in range(t_max):
        a = gates[t]
        a += hs[t] @ WhT
        _sigmoid_(a[:, :3 * H])
        np.tanh(a[:, 3 * H:], out=a[:, 3 * H:])
        i, f, o, g = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        cn = f * cs[t] + i * g
        tc = np.tanh(cn)
        m = mask[t]
        cs[t + 1] = cs[t] + m * (cn - cs[t])
        hs[t + 1] = hs[t] + m * (o * tc - hs[t])
        tanh_c[t] = tc
    return hs, gates, cs, tanh_c


def _gru_forward(params, x, mask):
    t_max, batch, _ = x.shape
    H = params.hidden
    Wx, Wh = params.W[:, :params.input_dim], params.W[:, params.input_dim:]
    gates = x @ Wx.T
    gates += params.bias
    hs = np.zeros((t_max + 1, batch, H))
    rh = np.empty((t_max, batch, H))
    WzrT = np.ascontiguousarray(Wh[:2 * H].T)
    WnT = np.ascontiguousarray(Wh[2 * H:].T)
    for t in range(t_max):
        a = gates[t]
        h = hs[t]
        zr = a[:, :2 * H]
        zr += h @ WzrT
        _sigmoid_(zr)
        z, r = zr[:, :H], zr[:, H:]
        np.multiply(r, h, out=rh[t])
        n = a[:, 2 * H:]
        n += rh[t] @ WnT
        np.tanh(n, out=n)
        hn = n + z * (h - n)
        hs[t + 1] = h + mask[t] * (hn - h)
    return hs, gates, rh, None


def forward_batch(params: EncoderParams, seqs) -> tuple[np.ndarray, ForwardCache]:
    """Encode a list of T_b x D sequences; returns (B x E d-vectors, cache)."""
    x, mask = pad_batch(seqs, params.input_dim)
    if params.cell_kind == "lstm":
        hs, gates, extra, tanh_c = _lstm_forward(params, x, mask)
    else:
        hs, gates, extra, tanh_c = _gru_forward(params, x, mask)
    v = hs[-1] @ params.P.T + params.pbias
    norms = np.linalg.norm(v, axis=1)
    d = v / np.maximum(norms, NORM_EPS)[:, None]
    if not np.all(np.isfinite(d)):
        raise NonFiniteActivation("non-finite encoder output")
    cache = ForwardCache(params.version, params.cell_kind, x, mask, hs, gates, extra, tanh_c,
                         v, norms, d)
    return d, cache


def forward(params: EncoderParams, seq) -> DVector:
    """d-vector of one utterance (a FeatureSequence or a T x D array)."""
    d, cache = forward_batch(params, [seq])
    return DVector(d[0], getattr(seq, "subject_id", ""), getattr(seq, "sentence_index", -1),
                   degenerate=bool(cache.norms[0] < NORM_EPS))


def _lstm_backward(params, cache, dh):
    H = params.hidden
    D = params.input_dim
    gates, cs, tanh_c, mask, hs = cache.gates, cache.extra, cache.tanh_c, cache.mask, cache.hs
    t_max = gates.shape[0]
    dgates = np.empty_like(gates)
    dc = np.zeros_like(dh)
    Wh = params.W[:, D:]
    for t in range(t_max - 1, -1, -1):
        a = gates[t]
        i, f, o, g = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        m = mask[t]
        tc = tanh_c[t]
        dhn = m * dh
        dcn = m * dc + dhn * o * (1.0 - tc * tc)
        da = dgates[t]
        da[:, :H] = dcn * g * i * (1.0 - i)
        da[:, H:2 * H] = dcn * cs[t] * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dhn * tc * o * (1.0 - o)
        da[:, 3 * H:] = dcn * i * (1.0 - g * g)
        dc = dcn * f + (1.0 - m) * dc
        dh = da @ Wh + (1.0 - m) * dh
    flat = dgates.reshape(-1, dgates.shape[-1])
    dW = np.hstack([flat.T @ cache.x.reshape(-1, D), flat.T @ hs[:-1].reshape(-1, H)])
    return dW, flat.sum(axis=0)


def _gru_backward(params, cache, dh):
    H = params.hidden
    D = params.input_dim
    gates, rh, mask, hs = cache.gates, cache.extra, cache.mask, cache.hs
    t_max = gates.shape[0]
    dgates = np.empty_like(gates)
    Wzr = params.W[:2 * H, D:]
    Wn = params.W[2 * H:, D:]
    for t in range(t_max - 1, -1, -1):
        a = gates[t]
        z, r, n = a[:, :H], a[:, H:2 * H], a[:, 2 * H:]
        h = hs[t]
        m = mask[t]
        dhn = m * dh
        da = dgates[t]
        dan = da[:, 2 * H:]
        np.multiply(dhn * (1.0 - z), 1.0 - n * n, out=dan)
        drh = dan @ Wn
        da[:, :H] = dhn * (h - n) * z * (1.0 - z)
        da[:, H:2 * H] = drh * h * r * (1.0 - r)
        dh = dhn * z + drh * r + da[:, :2 * H] @ Wzr + (1.0 - m) * dh
    flat = dgates.reshape(-1, dgates.shape[-1])
    dWx = flat.T @ cache.x.reshape(-1, D)
    hprev = hs[:-1].reshape(-1, H)
    dWh = np.vstack([flat[:, :2 * H].T @ hprev, flat[:, 2 * H:].T @ rh.reshape(-1, H)])
    return np.hstack([dWx, dWh]), flat.sum(axis=0)


def normalize_backward(cache: ForwardCache, d_dvec: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the pre-normalisation vector ``v`` given one w.r.t. ``v / |v|``."""
    norms = cache.norms[:, None]
    proj = np.sum(cache.d * d_dvec, axis=1, keepdims=True)
    live = norms >= NORM_EPS
    return np.where(live, (d_dvec - cache.d * proj) / np.where(live, norms, 1.0), d_dvec / NORM_EPS)


def backward(params: EncoderParams, cache: ForwardCache, d_dvec) -> dict[str, np.ndarray]:
    """Parameter gradients given dL/d(d-vector) for each sequence of the cached batch."""
    if cache is None or cache.version != params.version or cache.cell_kind != params.cell_kind:
        raise StaleCache("forward cache does not belong to the current parameters")
    d_dvec = np.asarray(d_dvec, dtype=np.float64)
    if d_dvec.shape != cache.d.shape:
        raise DimMismatch(f"upstream gradient shape {d_dvec.shape}, expected {cache.d.shape}")
    dv = normalize_backward(cache, d_dvec)
    h_last = cache.hs[-1]
    grads = {"P": dv.T @ h_last, "pbias": dv.sum(axis=0)}
    dh = dv @ params.P
    if params.cell_kind == "lstm":
        grads["W"], grads["bias"] = _lstm_backward(params, cache, dh)
    else:
        grads["W"], grads["bias"] = _gru_backward(params, cache, dh)
    return grads
