"""Generalized end-to-end softmax loss over a batch of speakers x utterances.

A batch is an ``(n, t, E)`` array of unit d-vectors: ``n`` speakers, ``t``
utterances each. The similarity matrix has one row per utterance (speaker
major) and one column per speaker centroid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NeedTwoUtterances, NonUnitDvec

COS_EPS = 1e-12
UNIT_TOL = 1e-6
W_INIT = 10.0
B_INIT = -5.0
W_MIN = 1e-6


def _check_batch(dvecs: np.ndarray, check_unit: bool) -> np.ndarray:
    e = np.asarray(dvecs, dtype=np.float64)
    if e.ndim != 3:
        raise DimMismatch(f"batch must be n x t x E, got shape {e.shape}")
    n, t, _ = e.shape
    if n < 2 or t < 1:
        raise DimMismatch(f"need n >= 2 speakers and t >= 1 utterances, got n={n}, t={t}")
    if check_unit:
        norms = np.linalg.norm(e, axis=2)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise NonUnitDvec(f"d-vector norms deviate from 1 by up to {np.max(np.abs(norms - 1)):.3g}")
    return e


def centroids(dvecs) -> np.ndarray:
    """Per-speaker mean d-vector (not re-normalised), shape n x E."""
    return np.asarray(dvecs, dtype=np.float64).mean(axis=1)


def exclusive_centroids(dvecs) -> np.ndarray:
    """``out[j, i]`` = mean of speaker j's d-vectors other than utterance i."""
    e = np.asarray(dvecs, dtype=np.float64)
    t = e.shape[1]
    if t < 2:
        raise NeedTwoUtterances("exclusive centroids need at least 2 utterances per speaker")
    return (e.sum(axis=1, keepdims=True) - e) / (t - 1)


def exclusive_centroid(dvecs, j: int, i: int) -> np.ndarray:
    e = np.asarray(dvecs, dtype=np.float64)
    if e.shape[1] < 2:
        raise NeedTwoUtterances("exclusive centroids need at least 2 utterances per speaker")
    return np.delete(e[j], i, axis=0).mean(axis=0)


def _cos(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    return np.sum(a * b, axis=-1) / np.maximum(na * nb, COS_EPS)


@dataclass
class SimilarityMatrix:
    S: np.ndarray        # (n*t) x n
    w: float
    b: float
    cos: np.ndarray      # n x t x n raw cosines
    exclusive: bool
    dvecs: np.ndarray
    cents: np.ndarray    # n x E
    excl: np.ndarray | None  # n x t x E

    @property
    def n(self) -> int:
        return self.cos.shape[0]

    @property
    def t(self) -> int:
        return self.cos.shape[1]


def similarity_matrix(dvecs, w: float = W_INIT, b: float = B_INIT, exclusive: bool = True,
                      check_unit: bool = True) -> SimilarityMatrix:
    """``S[(j, i), k] = w * cos(e_ji, c_k) + b``.

    With ``exclusive`` the true-speaker column (k == j) compares against the
    centroid of speaker j's other utterances.
    """
    if w <= 0:
        raise ValueError(f"similarity scale must be positive, got {w}")
    e = _check_batch(dvecs, check_unit)
    n, t, _ = e.shape
    cents = centroids(e)
    cos = _cos(e[:, :, None, :], cents[None, None, :, :])
    excl = None
    if exclusive:
        excl = exclusive_centroids(e)
        own = _cos(e, excl)
        cos[np.arange(n), :, np.arange(n)] = own
    S = (w * cos + b).reshape(n * t, n)
    return SimilarityMatrix(S, float(w), float(b), cos, exclusive, e, cents, excl)


def ge2e_softmax_loss(sim: SimilarityMatrix) -> tuple[float, np.ndarray, float, float]:
    """Mean over rows of ``-S[row, own] + logsumexp(S[row])``.

    Returns ``(loss, dS, dw, db)``.
    """
    n, t = sim.n, sim.t
    S = sim.S
    own = np.repeat(np.arange(n), t)
    rows = np.arange(n * t)
    shifted = S - S.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    denom = expd.sum(axis=1, keepdims=True)
    logp = shifted - np.log(denom)
    loss = float(-logp[rows, own].mean())
    dS = expd / denom
    dS[rows, own] -= 1.0
    dS /= n * t
    dw = float(np.sum(dS * sim.cos.reshape(n * t, n)))
    db = float(dS.sum())
    return loss, dS, dw, db


def _cos_grads(a, b, cos, g):
    """Gradients of ``g * cos(a, b)`` w.r.t. a and b (broadcast over leading axes)."""
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    denom = np.maximum(na * nb, COS_EPS)
    g = g[..., None]
    c = cos[..., None]
    da = g * (b / denom - c * a / np.maximum(na * na, COS_EPS))
    db = g * (a / denom - c * b / np.maximum(nb * nb, COS_EPS))
    return da, db


def similarity_backward(sim: SimilarityMatrix, dS: np.ndarray) -> np.ndarray:
    """dL/d(d-vectors), shape n x t x E, given dL/dS."""
    n, t = sim.n, sim.t
    e = sim.dvecs
    dcos = (sim.w * dS).reshape(n, t, n)
    own_mask = np.zeros((n, 1, n), dtype=bool)
    own_mask[np.arange(n), 0, np.arange(n)] = sim.exclusive
    g_shared = np.where(own_mask, 0.0, dcos)

    de, dc = _cos_grads(e[:, :, None, :], sim.cents[None, None, :, :], sim.cos, g_shared)
    grad = de.sum(axis=2)
    # every centroid is the mean of its speaker's t d-vectors
    grad += (dc.sum(axis=(0, 1)) / t)[:, None, :]

    if sim.exclusive:
        idx = np.arange(n)
        g_own = dcos[idx, :, idx]                          # n x t
        de_own, dx = _cos_grads(e, sim.excl, sim.cos[idx, :, idx], g_own)
        grad += de_own
        # excl[j, i] = (sum_m e[j, m] - e[j, i]) / (t - 1)
        total = dx.sum(axis=1, keepdims=True)
        grad += (total - dx) / (t - 1)
    return grad


def loss_and_grads(dvecs, w: float = W_INIT, b: float = B_INIT, exclusive: bool = True,
                   check_unit: bool = True) -> tuple[float, np.ndarray, float, float]:
    """GE2E loss of a batch with gradients w.r.t. d-vectors, ``w`` and ``b``."""
    sim = similarity_matrix(dvecs, w, b, exclusive, check_unit)
    loss, dS, dw, db = ge2e_softmax_loss(sim)
    return loss, similarity_backward(sim, dS), dw, db
