"""IIR preprocessing filters for EEG: Butterworth bandpass and mains notch.

Filters are designed as cascades of second-order sections with ``a0``
normalised to one. Each section is stored as ``(b0, b1, b2, a1, a2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import InvalidBand, NonFiniteInput

POLE_MARGIN = 1e-9


@dataclass(frozen=True)
class BiquadCascade:
    sections: tuple[tuple[float, float, float, float, float], ...]
    kind: str
    sample_rate: float
    f_low: float | None = None
    f_high: float | None = None
    f_center: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def order(self) -> int:
        return 2 * len(self.sections)

    def sos(self) -> np.ndarray:
        """Sections in scipy's ``(b0, b1, b2, 1, a1, a2)`` layout."""
        out = np.empty((len(self.sections), 6))
        for k, (b0, b1, b2, a1, a2) in enumerate(self.sections):
            out[k] = (b0, b1, b2, 1.0, a1, a2)
        return out

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots([1.0, a1, a2]) for *_, a1, a2 in self.sections])

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0 - POLE_MARGIN))

    def response(self, freqs, fs: float | None = None) -> np.ndarray:
        """Complex frequency response evaluated at ``freqs`` (Hz)."""
        fs = self.sample_rate if fs is None else fs
        z = np.exp(1j * 2 * np.pi * np.asarray(freqs, dtype=float) / fs)
        zi = 1.0 / z
        h = np.ones_like(z)
        for b0, b1, b2, a1, a2 in self.sections:
            h = h * (b0 + b1 * zi + b2 * zi**2) / (1.0 + a1 * zi + a2 * zi**2)
        return h

    def magnitude_db(self, freqs) -> np.ndarray:
        mag = np.abs(self.response(freqs))
        with np.errstate(divide="ignore"):
            return 20 * np.log10(mag)


def _butter_prototype(n: int) -> np.ndarray:
    # left-half-plane poles of the unit-cutoff analog Butterworth lowpass
    k = np.arange(1, n + 1)
    return np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))


def design_bandpass(f_low: float, f_high: float, fs: float, order: int = 4) -> BiquadCascade:
    """Butterworth bandpass of total ``order`` via the prewarped bilinear transform.

    Both band edges are prewarped, so the digital response is exactly -3 dB
    at ``f_low`` and ``f_high``. The result has ``order // 2`` sections, each
    with zeros at z = 1 and z = -1.
    """
    if order not in (2, 4, 6, 8):
        raise InvalidBand(f"order must be one of 2, 4, 6, 8, got {order}")
    if not (0 < f_low < f_high < fs / 2):
        raise InvalidBand(f"need 0 < f_low < f_high < fs/2, got {f_low}, {f_high}, fs={fs}")

    n = order // 2
    fs2 = 2.0 * fs
    wl = fs2 * math.tan(math.pi * f_low / fs)
    wh = fs2 * math.tan(math.pi * f_high / fs)
    bw = wh - wl
    w0sq = wl * wh

    # each entry is a pole pair forming one section
    pairs = []
    for p in _butter_prototype(n):
        if p.imag < -1e-12:
            continue
        half = p * bw / 2
        root = np.sqrt(half * half - w0sq + 0j)
        if abs(p.imag) > 1e-12:
            pairs.append((half + root, np.conj(half + root)))
            pairs.append((half - root, np.conj(half - root)))
        else:
            pairs.append((half + root, half - root))

    sections = []
    for s1, s2 in pairs:
        z1 = (fs2 + s1) / (fs2 - s1)
        z2 = (fs2 + s2) / (fs2 - s2)
        sections.append([1.0, 0.0, -1.0, -(z1 + z2).real, (z1 * z2).real])

    cascade = BiquadCascade(tuple(tuple(sec) for sec in sections), "bandpass", fs, f_low=f_low, f_high=f_high)
    # unit gain at the geometric band centre
    w_center = 2 * math.atan(math.sqrt(w0sq) / fs2)
    g = abs(cascade.response([w_center * fs / (2 * math.pi)])[0])
    scale = g ** (-1.0 / n)
    sections = [(b0 * scale, b1 * scale, b2 * scale, a1, a2) for b0, b1, b2, a1, a2 in cascade.sections]
    return BiquadCascade(tuple(sections), "bandpass", fs, f_low=f_low, f_high=f_high)


def design_notch(f_center: float, fs: float, quality: float = 30.0) -> BiquadCascade:
    """Single-section notch (RBJ cookbook form) with -3 dB width ``f_center / quality``."""
    if not (0 < f_center < fs / 2):
        raise InvalidBand(f"notch centre {f_center} Hz outside (0, {fs / 2})")
    if quality <= 0:
        raise InvalidBand(f"quality must be positive, got {quality}")
    w0 = 2 * math.pi * f_center / fs
    alpha = math.sin(w0) / (2 * quality)
    a0 = 1 + alpha
    c = -2 * math.cos(w0)
    section = (1 / a0, c / a0, 1 / a0, c / a0, (1 - alpha) / a0)
    return BiquadCascade((section,), "notch", fs, f_center=f_center)


def apply(cascade: BiquadCascade, x, axis: int = -1) -> np.ndarray:
    """Causal DF-II-transposed filtering from zero state along ``axis``.

    Channels (the other axes) are filtered independently.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("filter input contains NaN or inf")
    return signal.sosfilt(cascade.sos(), x, axis=axis)


def identity_stage(eeg: np.ndarray) -> np.ndarray:
    """Placeholder for artifact removal (e.g. ICA component rejection); returns input unchanged."""
    return eeg


def preprocess_eeg(eeg, fs: float = 1000.0, f_low: float = 0.1, f_high: float = 70.0,
                   order: int = 4, notch_hz: float = 60.0, notch_q: float = 30.0,
                   artifact_stage=identity_stage) -> np.ndarray:
    """Bandpass, notch, then the artifact-removal hook, channel by channel (rows)."""
    bp = design_bandpass(f_low, f_high, fs, order)
    notch = design_notch(notch_hz, fs, notch_q)
    y = apply(bp, eeg, axis=-1)
    y = apply(notch, y, axis=-1)
    return artifact_stage(y)
