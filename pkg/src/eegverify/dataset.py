"""Recordings, dataset manifests and the synthetic speech+EEG corpus generator.

On disk a dataset is a directory holding ``manifest.json``, 16-bit mono WAV
audio at 16 kHz and EEG in a small float32 binary container (see
:func:`write_eeg`). Paths in the manifest are relative to the manifest file.
"""
from __future__ import annotations

import json
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import filters
from .errors import (ChannelCountMismatch, IoError, MissingFile, NotFound,
                     ParseError, RateMismatch, SplitOverlap)

AUDIO_RATE = 16000
EEG_RATE = 1000
EEG_MAGIC = b"EEGF"
EEG_HEADER = struct.Struct("<4sIII")
MAX_DURATION_SKEW = 0.050

# identity-bearing EEG bands (Hz)
EEG_BANDS = ((1.0, 4.0), (4.0, 8.0), (8.0, 16.0), (16.0, 32.0))
N_CHANNEL_GROUPS = 4
IDENTITY_DIM = 8


@dataclass
class Recording:
    subject_id: str
    sentence_index: int
    audio: np.ndarray
    eeg: np.ndarray
    noise_level_db: float = float("nan")

    @property
    def audio_duration(self) -> float:
        return len(self.audio) / AUDIO_RATE

    @property
    def eeg_duration(self) -> float:
        return self.eeg.shape[1] / EEG_RATE


@dataclass
class DatasetManifest:
    subjects: list[str]
    utterances_per_subject: int
    channel_count: int
    train_subjects: list[str]
    test_subjects: list[str]
    entries: dict[tuple[str, int], tuple[str, str]]
    root: Path = field(default_factory=Path)
    noise_db: float | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def paths(self, subject_id: str, sentence_index: int) -> tuple[Path, Path]:
        try:
            audio, eeg = self.entries[(subject_id, sentence_index)]
        except KeyError:
            raise NotFound(f"no entry for ({subject_id!r}, {sentence_index})") from None
        return self.root / audio, self.root / eeg

    def to_json(self) -> dict:
        doc = {
            "channel_count": self.channel_count,
            "utterances_per_subject": self.utterances_per_subject,
            "subjects": list(self.subjects),
            "train_subjects": list(self.train_subjects),
            "test_subjects": list(self.test_subjects),
        }
        if self.noise_db is not None:
            doc["noise_db"] = self.noise_db
        doc["entries"] = [
            {"subject": s, "sentence": i, "audio": a, "eeg": e}
            for (s, i), (a, e) in self.entries.items()
        ]
        return doc

    def save(self, path) -> Path:
        path = Path(path)
        text = json.dumps(self.to_json(), indent=1)
        try:
            path.write_text(text + "\n")
        except OSError as exc:
            raise IoError(str(exc)) from exc
        return path


def validate_manifest(m: DatasetManifest, check_files: bool = True) -> DatasetManifest:
    overlap = set(m.train_subjects) & set(m.test_subjects)
    if overlap:
        raise SplitOverlap(f"subjects in both train and test: {sorted(overlap)}")
    known = set(m.subjects)
    stray = (set(m.train_subjects) | set(m.test_subjects)) - known
    if stray:
        raise ParseError(f"split subjects without entries: {sorted(stray)}")
    if m.utterances_per_subject < 1 or m.channel_count < 1:
        raise ParseError("utterances_per_subject and channel_count must be positive")
    for s in m.subjects:
        for i in range(m.utterances_per_subject):
            if (s, i) not in m.entries:
                raise ParseError(f"missing entry ({s}, {i})")
    expected = len(m.subjects) * m.utterances_per_subject
    if len(m.entries) != expected:
        raise ParseError(f"expected {expected} entries, found {len(m.entries)}")
    if check_files:
        for key in m.entries:
            for p in m.paths(*key):
                if not p.is_file():
                    raise MissingFile(f"{p} referenced by entry {key} does not exist")
    return m


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest {path} does not exist")
    try:
        doc = json.loads(path.read_text())
        entries: dict[tuple[str, int], tuple[str, str]] = {}
        subjects: list[str] = []
        for e in doc["entries"]:
            key = (str(e["subject"]), int(e["sentence"]))
            if key in entries:
                raise ParseError(f"duplicate entry {key}")
            if key[0] not in subjects:
                subjects.append(key[0])
            entries[key] = (str(e["audio"]), str(e["eeg"]))
        if "subjects" in doc:
            listed = [str(s) for s in doc["subjects"]]
            if set(listed) != set(subjects):
                raise ParseError("'subjects' does not match the subjects found in 'entries'")
            subjects = listed
        m = DatasetManifest(
            subjects=subjects,
            utterances_per_subject=int(doc.get("utterances_per_subject", 90)),
            channel_count=int(doc.get("channel_count", 31)),
            train_subjects=[str(s) for s in doc["train_subjects"]],
            test_subjects=[str(s) for s in doc["test_subjects"]],
            entries=entries,
            root=path.parent,
            noise_db=doc.get("noise_db"),
        )
    except ParseError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed manifest {path}: {exc}") from exc
    return validate_manifest(m, check_files)


# ---------------------------------------------------------------------------
# file formats

def write_wav(path, audio: np.ndarray, rate: int = AUDIO_RATE) -> None:
    """Write float samples in [-1, 1) as 16-bit PCM mono."""
    pcm = np.clip(np.round(np.asarray(audio) * 32768.0), -32768, 32767).astype("<i2")
    try:
        with wave.open(str(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(rate)
            w.writeframes(pcm.tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_wav(path) -> tuple[np.ndarray, int]:
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1 or w.getsampwidth() != 2:
                raise ParseError(f"{path}: expected 16-bit mono PCM")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate


def write_eeg(path, eeg: np.ndarray) -> None:
    """Channel-major float32 little-endian with a 16-byte header."""
    eeg = np.asarray(eeg)
    if eeg.ndim != 2:
        raise ValueError("eeg must be channels x samples")
    c, s = eeg.shape
    try:
        with open(path, "wb") as f:
            f.write(EEG_HEADER.pack(EEG_MAGIC, c, s, 0))
            f.write(np.ascontiguousarray(eeg, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_eeg(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < EEG_HEADER.size:
        raise ParseError(f"{path}: truncated EEG header")
    magic, c, s, _ = EEG_HEADER.unpack_from(data)
    if magic != EEG_MAGIC:
        raise ParseError(f"{path}: bad EEG magic {magic!r}")
    body = data[EEG_HEADER.size:]
    if len(body) != 4 * c * s:
        raise ParseError(f"{path}: header says {c}x{s} samples, body has {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(c, s).astype(np.float64)


def load_recording(manifest: DatasetManifest, subject_id: str, sentence_index: int) -> Recording:
    audio_path, eeg_path = manifest.paths(subject_id, sentence_index)
    audio, rate = read_wav(audio_path)
    if rate != AUDIO_RATE:
        raise RateMismatch(f"{audio_path}: audio at {rate} Hz, expected {AUDIO_RATE}")
    eeg = read_eeg(eeg_path)
    if eeg.shape[0] != manifest.channel_count:
        raise ChannelCountMismatch(
            f"{eeg_path}: {eeg.shape[0]} channels, manifest says {manifest.channel_count}")
    rec = Recording(subject_id, sentence_index, audio, eeg,
                    float("nan") if manifest.noise_db is None else float(manifest.noise_db))
    if abs(rec.audio_duration - rec.eeg_duration) > MAX_DURATION_SKEW:
        raise RateMismatch(
            f"({subject_id}, {sentence_index}): audio {rec.audio_duration:.3f} s vs "
            f"EEG {rec.eeg_duration:.3f} s")
    return rec


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass
class SynthSpec:
    num_subjects: int = 10
    utterances_per_subject: int = 90
    channel_count: int = 31
    noise_db: float = 40.0
    seed: int = 0
    n_test: int = 2
    min_duration: float = 2.0
    max_duration: float = 4.0


# stream tags for per-purpose RNGs
_IDENTITY, _DURATION, _SOURCE, _NOISE, _EEG = range(5)


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


def subject_identity(seed: int, subject_index: int) -> np.ndarray:
    return _rng(seed, _IDENTITY, subject_index).standard_normal(IDENTITY_DIM)


def _eeg_mixing() -> np.ndarray:
    # fixed map from identity to per-(group, band) log-gains; same for every corpus
    return np.random.default_rng(20190412).standard_normal((N_CHANNEL_GROUPS * len(EEG_BANDS), IDENTITY_DIM))


def eeg_band_gains(identity: np.ndarray) -> np.ndarray:
    """Deterministic (group, band) amplitude gains carried by a subject's EEG."""
    logg = np.tanh(_eeg_mixing() @ identity / np.sqrt(IDENTITY_DIM))
    return np.exp(1.2 * logg).reshape(N_CHANNEL_GROUPS, len(EEG_BANDS))


def channel_groups(channel_count: int) -> np.ndarray:
    return np.arange(channel_count) * N_CHANNEL_GROUPS // channel_count


def synth_audio(identity: np.ndarray, n_samples: int, src_rng: np.random.Generator,
                noise_rng: np.random.Generator, snr_db: float) -> np.ndarray:
    """Voiced harmonic source shaped by identity-dependent formants, plus white noise at ``snr_db``."""
    t = np.arange(n_samples) / AUDIO_RATE
    f0 = 120.0 * np.exp(0.25 * identity[0] + 0.08 * src_rng.standard_normal())
    formants = np.array([550.0, 1600.0, 2600.0]) * np.exp(
        0.12 * identity[1:4] + 0.06 * src_rng.standard_normal(3))
    bandwidths = np.array([90.0, 140.0, 200.0])
    contour = f0 * (1.0 + 0.06 * np.sin(2 * np.pi * src_rng.uniform(0.3, 1.2) * t
                                         + src_rng.uniform(0, 2 * np.pi)))
    base = np.exp(1j * 2 * np.pi * np.cumsum(contour) / AUDIO_RATE)
    x = np.zeros(n_samples)
    harmonic = np.ones(n_samples, dtype=complex)
    for k in range(1, int(7000 // f0) + 1):
        harmonic *= base
        fk = k * f0
        env = np.sum(1.0 / (1.0 + ((fk - formants) / bandwidths) ** 2)) + 0.02
        x += env / np.sqrt(k) * (harmonic * np.exp(1j * src_rng.uniform(0, 2 * np.pi))).imag
    syll = 0.55 + 0.45 * np.sin(2 * np.pi * src_rng.uniform(3.0, 5.0) * t
                                + src_rng.uniform(0, 2 * np.pi)) ** 2
    x *= syll
    x /= np.sqrt(np.mean(x**2))
    noise = noise_rng.standard_normal(n_samples) * 10 ** (-snr_db / 20)
    y = x + noise
    return 0.9 * y / np.max(np.abs(y))


def synth_eeg(identity: np.ndarray, n_samples: int, channel_count: int,
              rng: np.random.Generator) -> np.ndarray:
    """Per-channel band-limited noise whose band gains encode ``identity``.

    Also adds broadband background, a slow drift and 60 Hz mains pickup so
    the preprocessing filters have something to remove.
    """
    gains = eeg_band_gains(identity)
    groups = channel_groups(channel_count)
    jitter = np.exp(0.1 * rng.standard_normal(gains.shape))
    eeg = 2.0 * rng.standard_normal((channel_count, n_samples))
    for b, (lo, hi) in enumerate(EEG_BANDS):
        band = filters.design_bandpass(lo, hi, EEG_RATE, 4)
        src = filters.apply(band, rng.standard_normal((channel_count, n_samples + 500)))[:, 500:]
        src /= np.sqrt(np.mean(src**2, axis=1, keepdims=True))
        eeg += 10.0 * (gains[groups, b] * jitter[groups, b])[:, None] * src
    t = np.arange(n_samples) / EEG_RATE
    eeg += 20.0 * np.sin(2 * np.pi * 0.05 * t + rng.uniform(0, 2 * np.pi, (channel_count, 1)))
    eeg += 5.0 * np.sin(2 * np.pi * 60.0 * t + rng.uniform(0, 2 * np.pi, (channel_count, 1)))
    return eeg


def band_power_signature(eeg: np.ndarray, fs: float = EEG_RATE) -> np.ndarray:
    """Channels x bands mean power in :data:`EEG_BANDS`, from the FFT of each channel."""
    spec = np.abs(np.fft.rfft(eeg, axis=1)) ** 2
    freqs = np.fft.rfftfreq(eeg.shape[1], 1.0 / fs)
    out = np.empty((eeg.shape[0], len(EEG_BANDS)))
    for b, (lo, hi) in enumerate(EEG_BANDS):
        sel = (freqs >= lo) & (freqs < hi)
        out[:, b] = spec[:, sel].mean(axis=1)
    return out


def subject_name(index: int, total: int) -> str:
    return f"s{index + 1:0{max(2, len(str(total)))}d}"


def synth_recording(spec: SynthSpec, subject_index: int, sentence_index: int) -> Recording:
    identity = subject_identity(spec.seed, subject_index)
    dur = _rng(spec.seed, _DURATION, subject_index, sentence_index).uniform(spec.min_duration, spec.max_duration)
    n_eeg = int(round(dur * EEG_RATE))
    n_audio = n_eeg * (AUDIO_RATE // EEG_RATE)
    audio = synth_audio(identity, n_audio,
                        _rng(spec.seed, _SOURCE, subject_index, sentence_index),
                        _rng(spec.seed, _NOISE, subject_index, sentence_index),
                        spec.noise_db)
    eeg = synth_eeg(identity, n_eeg, spec.channel_count,
                    _rng(spec.seed, _EEG, subject_index, sentence_index))
    return Recording(subject_name(subject_index, spec.num_subjects), sentence_index,
                     audio, eeg, float(spec.noise_db))


def synth_dataset(spec: SynthSpec, out_dir) -> DatasetManifest:
    """Generate a deterministic corpus under ``out_dir`` and write its manifest.

    Every subject gets a latent identity vector. The audio carries it through
    pitch and formant positions, buried in white noise at ``noise_db`` SNR;
    the EEG carries it through band-power gains and is generated from its own
    random stream, so it does not change with ``noise_db``.
    """
    if spec.num_subjects < 2:
        raise ValueError("need at least 2 subjects")
    if spec.utterances_per_subject < 1:
        raise ValueError("need at least 1 utterance per subject")
    n_test = min(spec.n_test, spec.num_subjects - 1)
    out = Path(out_dir)
    try:
        (out / "audio").mkdir(parents=True, exist_ok=True)
        (out / "eeg").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc

    subjects = [subject_name(k, spec.num_subjects) for k in range(spec.num_subjects)]
    entries = {}
    for k, sid in enumerate(subjects):
        for i in range(spec.utterances_per_subject):
            rec = synth_recording(spec, k, i)
            audio_rel = f"audio/{sid}_{i:03d}.wav"
            eeg_rel = f"eeg/{sid}_{i:03d}.eeg"
            write_wav(out / audio_rel, rec.audio)
            write_eeg(out / eeg_rel, rec.eeg)
            entries[(sid, i)] = (audio_rel, eeg_rel)

    manifest = DatasetManifest(
        subjects=subjects,
        utterances_per_subject=spec.utterances_per_subject,
        channel_count=spec.channel_count,
        train_subjects=subjects[: spec.num_subjects - n_test],
        test_subjects=subjects[spec.num_subjects - n_test:],
        entries=entries,
        root=out,
        noise_db=float(spec.noise_db),
    )
    manifest.save(out / "manifest.json")
    return manifest
