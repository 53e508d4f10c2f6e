"""In-memory feature pipeline: recordings -> MFCC / EEG-155 -> KPCA-30 -> concat-43.

Stores are plain dicts keyed by ``(subject, sentence)``.
"""
from __future__ import annotations

import numpy as np

from . import kpca
from .dataset import DatasetManifest, Recording, load_recording
from .features import (FeatureKind, FeatureSequence, align_concat, eeg155, mfcc13)
from .filters import preprocess_eeg


def recording_features(rec: Recording, channel_count: int = 31) -> tuple[FeatureSequence, FeatureSequence]:
    """MFCC-13 of the raw audio and EEG-155 of the bandpass+notch filtered EEG."""
    m = mfcc13(rec.audio, rec.subject_id, rec.sentence_index)
    e = eeg155(preprocess_eeg(rec.eeg), channel_count, rec.subject_id, rec.sentence_index)
    return m, e


def extract_all(manifest: DatasetManifest, subjects=None) -> tuple[dict, dict]:
    subjects = manifest.subjects if subjects is None else subjects
    mfcc, eeg = {}, {}
    for s in subjects:
        for i in range(manifest.utterances_per_subject):
            rec = load_recording(manifest, s, i)
            mfcc[(s, i)], eeg[(s, i)] = recording_features(rec, manifest.channel_count)
    return mfcc, eeg


def fit_kpca(manifest: DatasetManifest, eeg_store: dict, k: int = 30, m: int = 2000,
             seed: int = 0, degree: int = 3, gamma: float = 1.0, coef0: float = 1.0) -> kpca.KpcaModel:
    """Fit on training subjects' frames only; test subjects are projected later."""
    frames = np.vstack([eeg_store[(s, i)].frames for s in manifest.train_subjects
                        for i in range(manifest.utterances_per_subject)])
    return kpca.fit(frames, k=k, m=m, seed=seed, degree=degree, gamma=gamma, coef0=coef0,
                    standardize=True)


def project_all(model: kpca.KpcaModel, eeg_store: dict) -> dict:
    out = {}
    for key, seq in eeg_store.items():
        out[key] = FeatureSequence(model.transform(seq.frames), FeatureKind.EEG_KPCA30,
                                   seq.subject_id, seq.sentence_index)
    return out


def concat_all(mfcc_store: dict, kpca_store: dict) -> dict:
    return {key: align_concat(mfcc_store[key], kpca_store[key]) for key in mfcc_store}


def prepare_features(manifest: DatasetManifest, k: int = 30, m: int = 2000,
                     seed: int = 0) -> tuple[dict[FeatureKind, dict], kpca.KpcaModel]:
    """All four feature stores for a dataset plus the fitted KPCA model."""
    mfcc, eeg = extract_all(manifest)
    model = fit_kpca(manifest, eeg, k=k, m=m, seed=seed)
    reduced = project_all(model, eeg)
    stores = {
        FeatureKind.MFCC13: mfcc,
        FeatureKind.EEG155: eeg,
        FeatureKind.EEG_KPCA30: reduced,
        FeatureKind.CONCAT43: concat_all(mfcc, reduced),
    }
    return stores, model
