"""Frame-level features at 100 Hz: MFCC-13 from speech, five statistics per EEG channel.

Both streams share the 10 ms hop, so an utterance's MFCC and EEG frames line
up one to one (up to a few trailing frames, see :func:`align_concat`).
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .errors import (ChannelCountMismatch, DimMismatch, IdentityMismatch,
                     NonFiniteInput, ParseError, TooShort)

FRAME_RATE = 100

# MFCC front end
AUDIO_RATE = 16000
WIN = 400
HOP = 160
NFFT = 512
N_MELS = 40
N_CEPS = 13
PREEMPH = 0.97
LOG_FLOOR = 1e-10

# EEG statistics
EEG_RATE = 1000
EEG_WIN = 100
EEG_HOP = 10
N_EEG_STATS = 5
VAR_FLOOR = 1e-12


class FeatureKind(enum.IntEnum):
    MFCC13 = 1
    EEG155 = 2
    EEG_KPCA30 = 3
    CONCAT43 = 4

    @property
    def dim(self) -> int:
        return {1: 13, 2: 155, 3: 30, 4: 43}[self.value]

    @property
    def slug(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, name) -> "FeatureKind":
        if isinstance(name, cls):
            return name
        key = str(name).lower()
        aliases = {"mfcc13": cls.MFCC13, "eeg155": cls.EEG155, "eeg_kpca30": cls.EEG_KPCA30,
                   "kpca30": cls.EEG_KPCA30, "eeg30": cls.EEG_KPCA30, "concat43": cls.CONCAT43}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown feature kind {name!r}") from None


@dataclass
class FeatureSequence:
    frames: np.ndarray
    kind: FeatureKind
    subject_id: str = ""
    sentence_index: int = -1
    frame_rate: int = FRAME_RATE

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.kind = FeatureKind.parse(self.kind)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.kind.dim:
            raise DimMismatch(f"{self.kind.name} needs D={self.kind.dim}, got shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise NonFiniteInput(f"non-finite {self.kind.name} frames for "
                                 f"({self.subject_id}, {self.sentence_index})")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def frame_times(self) -> np.ndarray:
        """Start time of each frame in seconds."""
        return np.arange(self.n_frames) / self.frame_rate


# ---------------------------------------------------------------------------
# MFCC

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, nfft: int = NFFT, sr: int = AUDIO_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters on the HTK mel scale, evaluated at the FFT bin frequencies.

    Returns an (n_mels, nfft // 2 + 1) weight matrix with unit peak height.
    """
    fmax = sr / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.arange(nfft // 2 + 1) * sr / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins - lo) / (mid - lo)
    down = (hi - bins) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


_FBANK = mel_filterbank()
_HAMMING = np.hamming(WIN)


def mfcc_frame_count(n_samples: int) -> int:
    return 1 + (n_samples - WIN) // HOP


def mfcc13(audio, subject_id: str = "", sentence_index: int = -1) -> FeatureSequence:
    """13 cepstral coefficients (c0..c12) per 25 ms frame, 10 ms hop.

    Pre-emphasis 0.97, Hamming window, 512-point FFT power spectrum, 40 mel
    filters over 0-8 kHz, natural log with a 1e-10 floor, orthonormal DCT-II.
    No liftering.
    """
    x = np.asarray(audio, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("audio must be one-dimensional")
    if len(x) < WIN:
        raise TooShort(f"need at least {WIN} samples, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("audio contains NaN or inf")
    logmel = log_mel_energies(x)
    ceps = dct(logmel, type=2, norm="ortho", axis=1)[:, :N_CEPS]
    return FeatureSequence(ceps, FeatureKind.MFCC13, subject_id, sentence_index)


def log_mel_energies(audio) -> np.ndarray:
    """Per-frame log mel energies (before the DCT), same framing as :func:`mfcc13`."""
    x = np.asarray(audio, dtype=np.float64)
    y = np.concatenate([x[:1], x[1:] - PREEMPH * x[:-1]])
    frames = sliding_window_view(y, WIN)[::HOP][:mfcc_frame_count(len(y))] * _HAMMING
    power = np.abs(np.fft.rfft(frames, NFFT, axis=1)) ** 2
    return np.log(np.maximum(power @ _FBANK.T, LOG_FLOOR))


# ---------------------------------------------------------------------------
# EEG statistics

def _zcr(frames: np.ndarray) -> np.ndarray:
    s = np.sign(frames)
    if np.all(s):
        return np.count_nonzero(s[..., 1:] != s[..., :-1], axis=-1) / (frames.shape[-1] - 1)
    # zeros inherit the previous nonzero sign; leading zeros take no part
    idx = np.where(s != 0, np.arange(s.shape[-1]), -1)
    idx = np.maximum.accumulate(idx, axis=-1)
    filled = np.where(idx >= 0, np.take_along_axis(s, np.maximum(idx, 0), axis=-1), 0.0)
    changes = (filled[..., 1:] * filled[..., :-1]) < 0
    return changes.sum(axis=-1) / (frames.shape[-1] - 1)


def _stats(frames: np.ndarray) -> np.ndarray:
    """(..., L) windows -> (..., 5) statistics."""
    frames = np.ascontiguousarray(frames)
    sq = frames * frames
    rms = np.sqrt(sq.mean(axis=-1))
    zcr = _zcr(frames)
    mwa = frames.mean(axis=-1)
    centred = frames - mwa[..., None]
    c2 = np.multiply(centred, centred, out=sq)
    m2 = c2.mean(axis=-1)
    m4 = np.einsum("...i,...i->...", c2, c2) / frames.shape[-1]
    safe = np.where(m2 < VAR_FLOOR, 1.0, m2)
    kurt = np.where(m2 < VAR_FLOOR, 0.0, m4 / safe**2)

    spec = np.fft.rfft(frames, axis=-1)
    spec = spec.real**2 + spec.imag**2
    n = frames.shape[-1]
    # one-sided periodogram: interior bins carry both halves
    stop = n // 2 if n % 2 == 0 else n // 2 + 1
    spec[..., 1:stop] *= 2.0
    total = spec.sum(axis=-1, keepdims=True)
    p = spec / np.where(total > 0, total, 1.0)
    plogp = p * np.log(np.where(p > 0, p, 1.0))
    pse = -plogp.sum(axis=-1) + 0.0  # no negative zero
    return np.stack([rms, zcr, mwa, kurt, pse], axis=-1)


def eeg_frame_features(frame, fs: float = EEG_RATE) -> np.ndarray:
    """(rms, zcr, mwa, kurtosis, pse) of one 100-sample single-channel window.

    ``zcr`` counts sign changes over the 99 consecutive pairs, ``mwa`` is the
    window mean, kurtosis is the Pearson (non-excess) m4/m2^2 with 0 for a
    flat window, and ``pse`` is the natural-log Shannon entropy of the
    normalised one-sided periodogram (0 for an all-zero window).
    """
    x = np.asarray(frame, dtype=np.float64)
    if x.shape != (EEG_WIN,):
        raise TooShort(f"EEG frame must have {EEG_WIN} samples, got shape {x.shape}")
    return _stats(x)


def eeg_frame_count(n_samples: int) -> int:
    return 1 + (n_samples - EEG_WIN) // EEG_HOP


def eeg155(eeg, channel_count: int = 31, subject_id: str = "",
           sentence_index: int = -1) -> FeatureSequence:
    """Five statistics per channel on 100 ms windows with a 10 ms hop.

    Each output frame lists channel 0's five values, then channel 1's, and so
    on. Expects already-filtered EEG at 1 kHz.
    """
    x = np.asarray(eeg, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("eeg must be channels x samples")
    if x.shape[0] != channel_count:
        raise ChannelCountMismatch(f"got {x.shape[0]} channels, configured for {channel_count}")
    if x.shape[1] < EEG_WIN:
        raise TooShort(f"need at least {EEG_WIN} EEG samples, got {x.shape[1]}")
    return FeatureSequence(eeg_stats(x), FeatureKind.EEG155, subject_id, sentence_index)


def eeg_stats(eeg) -> np.ndarray:
    """T x 5C statistics for any montage; :func:`eeg155` is the validated 31-channel case."""
    x = np.asarray(eeg, dtype=np.float64)
    n = eeg_frame_count(x.shape[1])
    windows = sliding_window_view(x, EEG_WIN, axis=1)[:, ::EEG_HOP][:, :n]
    return _stats(windows).transpose(1, 0, 2).reshape(n, -1)


def align_concat(a: FeatureSequence, b: FeatureSequence) -> FeatureSequence:
    """MFCC-13 followed by EEG-KPCA-30 per frame, truncated to the shorter stream."""
    if (a.subject_id, a.sentence_index) != (b.subject_id, b.sentence_index):
        raise IdentityMismatch(f"({a.subject_id}, {a.sentence_index}) vs ({b.subject_id}, {b.sentence_index})")
    if a.kind != FeatureKind.MFCC13 or b.kind != FeatureKind.EEG_KPCA30:
        raise DimMismatch(f"expected MFCC13 + EEG_KPCA30, got {a.kind.name} + {b.kind.name}")
    if a.frame_rate != FRAME_RATE or b.frame_rate != FRAME_RATE:
        raise ValueError("both streams must be at 100 Hz")
    t = min(a.n_frames, b.n_frames)
    return FeatureSequence(np.hstack([a.frames[:t], b.frames[:t]]), FeatureKind.CONCAT43,
                           a.subject_id, a.sentence_index)


# ---------------------------------------------------------------------------
# global normalisation (statistics from training subjects only)

@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, frames: np.ndarray, floor: float = 1e-8) -> "Standardizer":
        frames = np.asarray(frames, dtype=np.float64)
        return cls(frames.mean(axis=0), np.maximum(frames.std(axis=0), floor))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.mean) / self.scale


# ---------------------------------------------------------------------------
# FEAT files

FEAT_MAGIC = b"FEAT"
FEAT_HEADER = struct.Struct("<4sIII")


def write_features(path, seq: FeatureSequence) -> None:
    with open(path, "wb") as f:
        f.write(FEAT_HEADER.pack(FEAT_MAGIC, int(seq.kind), seq.n_frames, seq.dim))
        f.write(np.ascontiguousarray(seq.frames, dtype="<f4").tobytes())


def read_features(path, subject_id: str = "", sentence_index: int = -1) -> FeatureSequence:
    data = Path(path).read_bytes()
    if len(data) < FEAT_HEADER.size:
        raise ParseError(f"{path}: truncated FEAT header")
    magic, kind, t, d = FEAT_HEADER.unpack_from(data)
    if magic != FEAT_MAGIC:
        raise ParseError(f"{path}: bad FEAT magic {magic!r}")
    body = data[FEAT_HEADER.size:]
    if len(body) != 4 * t * d:
        raise ParseError(f"{path}: header says {t}x{d}, body has {len(body) // 4} values")
    try:
        kind = FeatureKind(kind)
    except ValueError:
        raise ParseError(f"{path}: unknown feature kind code {kind}") from None
    frames = np.frombuffer(body, dtype="<f4").reshape(t, d).astype(np.float64)
    return FeatureSequence(frames, kind, subject_id, sentence_index)


def feature_path(root, kind, subject_id: str, sentence_index: int) -> Path:
    return Path(root) / FeatureKind.parse(kind).slug / f"{subject_id}_{sentence_index:03d}.feat"
