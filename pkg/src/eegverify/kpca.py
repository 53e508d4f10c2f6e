"""Polynomial-kernel PCA for reducing EEG-155 frames to 30 components."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientData, NonFiniteInput, ParseError, RankDeficient

EIG_FLOOR = 1e-12
KPCA_MAGIC = b"KPCA"
KPCA_HEADER = struct.Struct("<4sIIIIddd")  # magic, M, K, D, degree, gamma, coef0, total variance


def poly_kernel(x: np.ndarray, y: np.ndarray, degree: int = 3, gamma: float = 1.0,
                coef0: float = 1.0) -> np.ndarray:
    return (gamma * (x @ y.T) + coef0) ** degree


@dataclass
class KpcaModel:
    landmarks: np.ndarray          # M x D, after input standardisation if any
    alphas: np.ndarray             # M x K
    kernel_row_means: np.ndarray   # M
    kernel_grand_mean: float
    eigenvalues: np.ndarray        # K, nonincreasing
    total_variance: float          # sum of all positive eigenvalues
    degree: int = 3
    gamma: float = 1.0
    coef0: float = 1.0
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @property
    def n_components(self) -> int:
        return self.alphas.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.eigenvalues / self.total_variance

    def _prepare(self, frames: np.ndarray) -> np.ndarray:
        if self.input_mean is not None:
            frames = (frames - self.input_mean) / self.input_scale
        return frames

    def kernel(self, frames: np.ndarray) -> np.ndarray:
        return poly_kernel(frames, self.landmarks, self.degree, self.gamma, self.coef0)

    def transform(self, frames) -> np.ndarray:
        """Project an N x D block of frames; returns N x K."""
        frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
        if not np.all(np.isfinite(frames)):
            raise NonFiniteInput("KPCA input contains NaN or inf")
        k = self.kernel(self._prepare(frames))
        kc = k - k.mean(axis=1, keepdims=True) - self.kernel_row_means + self.kernel_grand_mean
        return kc @ self.alphas


def fit(frames, k: int = 30, m: int = 2000, seed: int = 0, degree: int = 3,
        gamma: float = 1.0, coef0: float = 1.0, standardize: bool = False) -> KpcaModel:
    """Fit kernel PCA on at most ``m`` uniformly sampled frames.

    Landmark rows keep their original order, so with ``m >= N`` the fit uses
    the frames exactly as given. Dual coefficients are scaled so that
    ``alpha_k @ Kc @ alpha_k == 1``; each component's sign makes its
    largest-magnitude coefficient positive.

    ``standardize`` z-scores the inputs with statistics of the landmark set
    before the kernel is applied; the statistics are stored on the model.
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("frames must be N x D")
    n = x.shape[0]
    if k < 1 or m < k:
        raise ValueError(f"need k >= 1 and m >= k, got k={k}, m={m}")
    if n < k or n < 2:
        raise InsufficientData(f"{n} frames cannot support {k} components")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("KPCA training frames contain NaN or inf")

    if n > m:
        idx = np.sort(np.random.default_rng(seed).choice(n, size=m, replace=False))
        x = x[idx]
    mean = scale = None
    if standardize:
        mean = x.mean(axis=0)
        scale = np.maximum(x.std(axis=0), 1e-8)
        x = (x - mean) / scale

    gram = poly_kernel(x, x, degree, gamma, coef0)
    row_means = gram.mean(axis=0)
    grand = float(row_means.mean())
    centred = gram - row_means[None, :] - row_means[:, None] + grand
    centred = 0.5 * (centred + centred.T)

    vals, vecs = np.linalg.eigh(centred)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    # floor relative to the spectrum's scale so round-off is not mistaken for rank
    floor = EIG_FLOOR * max(1.0, float(vals[0]))
    positive = vals > floor
    if int(positive.sum()) < k:
        raise RankDeficient(f"only {int(positive.sum())} positive eigenvalues, {k} requested")
    total = float(vals[positive].sum())
    vals, vecs = vals[:k], vecs[:, :k].copy()

    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(k)])
    vecs *= signs
    alphas = vecs / np.sqrt(vals)
    return KpcaModel(x, alphas, row_means, grand,
                     vals.copy(), total, degree, gamma, coef0, mean, scale)


def project(model: KpcaModel, frame) -> np.ndarray:
    """Project one frame to ``model.n_components`` values."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise ValueError("project() takes a single frame; use model.transform for blocks")
    return model.transform(frame[None, :])[0]


def explained_variance_table(model: KpcaModel) -> list[tuple[int, float, float]]:
    """Rows of (component number from 1, variance ratio, cumulative ratio)."""
    ratios = model.explained_variance_ratio
    cumulative = np.cumsum(ratios)
    return [(i + 1, float(r), float(c)) for i, (r, c) in enumerate(zip(ratios, cumulative))]


def save(model: KpcaModel, path) -> None:
    m, d = model.landmarks.shape
    k = model.n_components
    has_scaler = model.input_mean is not None
    with open(path, "wb") as f:
        f.write(KPCA_HEADER.pack(KPCA_MAGIC, m, k, d, model.degree, model.gamma, model.coef0,
                                 model.total_variance))
        f.write(struct.pack("<I", int(has_scaler)))
        for arr in (model.landmarks, model.alphas, model.kernel_row_means,
                    np.array([model.kernel_grand_mean]), model.eigenvalues):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if has_scaler:
            f.write(np.ascontiguousarray(model.input_mean, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(model.input_scale, dtype="<f8").tobytes())


def load(path) -> KpcaModel:
    data = Path(path).read_bytes()
    if len(data) < KPCA_HEADER.size + 4 or data[:4] != KPCA_MAGIC:
        raise ParseError(f"{path}: not a KPCA model file")
    _, m, k, d, degree, gamma, coef0, total = KPCA_HEADER.unpack_from(data)
    (has_scaler,) = struct.unpack_from("<I", data, KPCA_HEADER.size)
    sizes = [m * d, m * k, m, 1, k] + ([d, d] if has_scaler else [])
    body = np.frombuffer(data, dtype="<f8", offset=KPCA_HEADER.size + 4)
    if body.size != sum(sizes):
        raise ParseError(f"{path}: expected {sum(sizes)} values, found {body.size}")
    parts = np.split(body.astype(np.float64), np.cumsum(sizes)[:-1])
    return KpcaModel(parts[0].reshape(m, d), parts[1].reshape(m, k), parts[2], float(parts[3][0]),
                     parts[4], total, degree, gamma, coef0,
                     parts[5] if has_scaler else None, parts[6] if has_scaler else None)
