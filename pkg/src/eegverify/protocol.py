"""Sentence-windowed GE2E training and rolling enrollment/evaluation scoring.

Utterances 0..U-1 of every subject are cut into consecutive windows of N
sentences (the last one possibly shorter). A training epoch walks the
windows in order; each step takes two random training subjects and that
window's utterances of both. Testing slides over the same windows: window s
enrolls, window s+1 is scored, and so on.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoder, ge2e
from .errors import (DegenerateBatch, EmptyScores, FeatureMissing, InvalidWindow,
                     TooFewWindows)
from .features import FeatureKind, Standardizer

log = logging.getLogger(__name__)

SENTENCE_GRID = (3, 5, 7, 10, 15, 20, 30)


def train_steps_per_epoch(utterances: int, n: int) -> list[int]:
    """Window sizes covering ``utterances`` sentences in chunks of ``n``.

    >>> train_steps_per_epoch(90, 20)
    [20, 20, 20, 20, 10]
    """
    if not (utterances >= n >= 1):
        raise InvalidWindow(f"need U >= N >= 1, got U={utterances}, N={n}")
    full, rest = divmod(utterances, n)
    return [n] * full + ([rest] if rest else [])


def window_bounds(utterances: int, n: int) -> list[tuple[int, int]]:
    bounds, start = [], 0
    for size in train_steps_per_epoch(utterances, n):
        bounds.append((start, start + size))
        start += size
    return bounds


# ---------------------------------------------------------------------------
# EER

def det_points(target_scores, impostor_scores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, FAR, FRR) over the sorted unique scores plus +inf.

    FAR(th) is the fraction of impostor scores >= th, FRR(th) the fraction of
    target scores < th.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64).ravel())
    imp = np.sort(np.asarray(impostor_scores, dtype=np.float64).ravel())
    if tar.size == 0 or imp.size == 0:
        raise EmptyScores("EER needs at least one target and one impostor score")
    th = np.append(np.unique(np.concatenate([tar, imp])), np.inf)
    far = 1.0 - np.searchsorted(imp, th, side="left") / imp.size
    frr = np.searchsorted(tar, th, side="left") / tar.size
    return th, far, frr


def eer(target_scores, impostor_scores) -> float:
    """Equal error rate at the FAR/FRR crossing of a threshold sweep.

    FAR - FRR never increases along the sweep; if it does not hit zero
    exactly, the rates are interpolated linearly between the two thresholds
    that bracket the sign change.
    """
    _, far, frr = det_points(target_scores, impostor_scores)
    diff = far - frr
    i = int(np.argmax(diff <= 0))       # the +inf threshold guarantees a hit
    if diff[i] == 0 or i == 0:
        return float(far[i])
    lam = diff[i - 1] / (diff[i - 1] - diff[i])
    return float(far[i - 1] + lam * (far[i] - far[i - 1]))


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    sentences_per_step: int = 3
    cell_kind: str = "lstm"
    feature_kind: str = "concat43"
    epochs: int = 10
    learning_rate: float = 0.01
    grad_clip_norm: float = 3.0
    seed: int = 0
    hidden: int = 128
    embed_dim: int = 128
    speakers_per_step: int = 2
    exclusive_centroids: bool = True
    normalize_inputs: bool = True

    def __post_init__(self):
        if self.sentences_per_step < 1:
            raise InvalidWindow("sentences_per_step must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.cell_kind = self.cell_kind.lower()
        self.feature_kind = FeatureKind.parse(self.feature_kind).slug


@dataclass
class TrainResult:
    params: encoder.EncoderParams
    w: float
    b: float
    normalizer: Standardizer
    config: TrainConfig
    loss_log: list[tuple[int, int, float]] = field(default_factory=list)

    def epoch_means(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for epoch, _, loss in self.loss_log:
            by_epoch.setdefault(epoch, []).append(loss)
        return [float(np.mean(v)) for _, v in sorted(by_epoch.items())]

    def loss_csv(self) -> str:
        lines = ["epoch,step,loss"]
        lines += [f"{e},{s},{loss!r}" for e, s, loss in self.loss_log]
        return "\n".join(lines) + "\n"


def _frames(store, subject: str, sentence: int, kind: FeatureKind) -> np.ndarray:
    try:
        seq = store[(subject, sentence)]
    except KeyError:
        raise FeatureMissing(f"no {kind.slug} features for ({subject}, {sentence})") from None
    frames = getattr(seq, "frames", seq)
    if getattr(seq, "kind", kind) != kind:
        raise FeatureMissing(f"({subject}, {sentence}) holds {seq.kind.slug}, not {kind.slug}")
    return np.asarray(frames, dtype=np.float64)


def _clip(grads: dict[str, np.ndarray], dw: float, db: float, max_norm: float):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()) + dw * dw + db * db)
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        grads = {k: g * scale for k, g in grads.items()}
        dw, db = dw * scale, db * scale
    return grads, dw, db, total


def train(manifest, config: TrainConfig, store, progress=None) -> TrainResult:
    """Plain gradient descent on GE2E loss with the sentence-window schedule.

    ``store`` maps ``(subject, sentence)`` to a FeatureSequence (or frames
    array) of ``config.feature_kind``. ``progress``, if given, is called as
    ``progress(epoch, mean_loss)`` after every epoch.
    """
    kind = FeatureKind.parse(config.feature_kind)
    subjects = list(manifest.train_subjects)
    if len(subjects) < config.speakers_per_step:
        raise DegenerateBatch(f"{len(subjects)} training subjects, need {config.speakers_per_step}")
    utterances = manifest.utterances_per_subject
    bounds = window_bounds(utterances, config.sentences_per_step)

    data = {(s, i): _frames(store, s, i, kind) for s in subjects for i in range(utterances)}
    if config.normalize_inputs:
        normalizer = Standardizer.fit(np.vstack(list(data.values())))
        data = {key: normalizer(x) for key, x in data.items()}
    else:
        normalizer = Standardizer.identity(kind.dim)

    init_seq, sample_seq = np.random.SeedSequence(config.seed).spawn(2)
    params = encoder.init(config.cell_kind, kind.dim, config.hidden, config.embed_dim,
                          seed=int(init_seq.generate_state(1)[0]))
    rng = np.random.default_rng(sample_seq)
    w, b = ge2e.W_INIT, ge2e.B_INIT
    lr = config.learning_rate
    result = TrainResult(params, w, b, normalizer, config)

    n_spk = config.speakers_per_step
    for epoch in range(config.epochs):
        for step, (lo, hi) in enumerate(bounds):
            t = hi - lo
            if t < 1:
                raise DegenerateBatch(f"window {step} is empty")
            picked = rng.choice(len(subjects), size=n_spk, replace=False)
            seqs = [data[(subjects[j], i)] for j in picked for i in range(lo, hi)]
            dvecs, cache = encoder.forward_batch(params, seqs)
            # a single-utterance window has no "other utterances" to exclude
            exclusive = config.exclusive_centroids and t >= 2
            loss, d_dvecs, dw, db = ge2e.loss_and_grads(
                dvecs.reshape(n_spk, t, -1), w, b, exclusive)
            grads = encoder.backward(params, cache, d_dvecs.reshape(n_spk * t, -1))
            grads, dw, db, _ = _clip(grads, dw, db, config.grad_clip_norm)
            for name, arr in params.arrays().items():
                arr -= lr * grads[name]
            params.bump()
            w = max(w - lr * dw, ge2e.W_MIN)
            b = b - lr * db
            result.loss_log.append((epoch, step, float(loss)))
        if progress is not None:
            progress(epoch, result.epoch_means()[-1])
        log.debug("epoch %d mean loss %.4f", epoch, result.epoch_means()[-1])

    result.w, result.b = float(w), float(b)
    return result


# ---------------------------------------------------------------------------
# evaluation

STEP_NOTE = ("{steps} steps from {windows} windows: step s enrolls on window s and scores "
             "window s+1, so the last window is never used for enrollment and there is one "
             "step fewer than windows")


@dataclass
class EvalReport:
    per_step_eer: list[float]
    mean_eer: float
    config: dict

    def to_json(self) -> str:
        doc = {"config": self.config, "per_step_eer": self.per_step_eer, "mean_eer": self.mean_eer}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(list(doc["per_step_eer"]), float(doc["mean_eer"]), dict(doc["config"]))

    def csv_row(self) -> str:
        c = self.config
        return f"{c.get('N')},{c.get('feature_kind')},{c.get('cell_kind')},{c.get('dataset', '')},{self.mean_eer!r}"


def embed_utterances(params, normalizer, arrays, chunk: int = 32) -> np.ndarray:
    """d-vectors for a list of frame arrays, in fixed-size chunks."""
    out = []
    for k in range(0, len(arrays), chunk):
        d, _ = encoder.forward_batch(params, [normalizer(a) for a in arrays[k:k + chunk]])
        out.append(d)
    return np.vstack(out)


def score_step(dvecs: np.ndarray, enroll: slice, evaluate: slice) -> tuple[list[float], list[float]]:
    """Cosine scores of evaluation d-vectors against every subject's enrollment centroid.

    ``dvecs`` is subjects x utterances x E.
    """
    cents = dvecs[:, enroll].mean(axis=1)
    cents = cents / np.maximum(np.linalg.norm(cents, axis=1, keepdims=True), ge2e.COS_EPS)
    ev = dvecs[:, evaluate]
    ev = ev / np.maximum(np.linalg.norm(ev, axis=2, keepdims=True), ge2e.COS_EPS)
    scores = ev @ cents.T                      # subj x utt x centroid
    n = dvecs.shape[0]
    same = np.eye(n, dtype=bool)[:, None, :].repeat(ev.shape[1], axis=1)
    return scores[same].tolist(), scores[~same].tolist()


def evaluate(model, manifest, store, n: int, dataset_tag: str = "") -> EvalReport:
    """Rolling enrollment/evaluation over the test subjects.

    ``model`` is anything with ``params``, ``normalizer`` and ``config``
    attributes (a TrainResult or a loaded Checkpoint). No randomness is
    involved, so the report is a pure function of its inputs.
    """
    kind = FeatureKind.parse(model.config.feature_kind)
    subjects = list(manifest.test_subjects)
    if len(subjects) < 2:
        raise TooFewWindows(f"need at least 2 test subjects, got {len(subjects)}")
    utterances = manifest.utterances_per_subject
    bounds = window_bounds(utterances, n)
    if len(bounds) < 2:
        raise TooFewWindows(f"U={utterances}, N={n} gives {len(bounds)} window(s); need 2")

    per_subject = []
    for s in subjects:
        arrays = [_frames(store, s, i, kind) for i in range(utterances)]
        per_subject.append(embed_utterances(model.params, model.normalizer, arrays))
    dvecs = np.stack(per_subject)

    per_step = []
    for (a0, a1), (b0, b1) in zip(bounds[:-1], bounds[1:]):
        tar, imp = score_step(dvecs, slice(a0, a1), slice(b0, b1))
        per_step.append(eer(tar, imp))
    cfg = model.config
    report_cfg = {
        "N": n,
        "feature_kind": kind.slug,
        "cell_kind": cfg.cell_kind,
        "dataset": dataset_tag,
        "test_subjects": subjects,
        "utterances_per_subject": utterances,
        "windows": [b1 - b0 for b0, b1 in bounds],
        "steps": len(per_step),
        "note": STEP_NOTE.format(steps=len(per_step), windows=len(bounds)),
        "train_config": asdict(cfg),
    }
    return EvalReport(per_step, sum(per_step) / len(per_step), report_cfg)
