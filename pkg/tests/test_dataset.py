import hashlib
import json
import wave

import numpy as np
import pytest

from eegverify import dataset
from eegverify.errors import (ChannelCountMismatch, MissingFile, NotFound, ParseError,
                              RateMismatch, SplitOverlap)


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    spec = dataset.SynthSpec(num_subjects=3, utterances_per_subject=2, channel_count=31,
                             noise_db=40, seed=7, min_duration=0.5, max_duration=0.8)
    return dataset.synth_dataset(spec, root), spec


def test_synth_counts_and_split(small):
    manifest, _ = small
    assert len(manifest) == 6
    assert manifest.train_subjects == ["s01"] and manifest.test_subjects == ["s02", "s03"]
    assert len(list((manifest.root / "audio").glob("*.wav"))) == 6
    assert len(list((manifest.root / "eeg").glob("*.eeg"))) == 6


def test_synth_is_bit_reproducible(small, tmp_path):
    manifest, spec = small
    again = dataset.synth_dataset(spec, tmp_path)
    assert _digest(manifest.root) == _digest(again.root)


def test_synth_seed_changes_audio(small, tmp_path):
    _, spec = small
    other = dataset.SynthSpec(**{**spec.__dict__, "seed": 8})
    a = dataset.synth_recording(spec, 0, 0).audio
    b = dataset.synth_recording(other, 0, 0).audio
    assert a.shape != b.shape or not np.array_equal(a, b)


def test_synth_needs_two_subjects(tmp_path):
    with pytest.raises(ValueError):
        dataset.synth_dataset(dataset.SynthSpec(num_subjects=1, utterances_per_subject=1), tmp_path)


def test_eeg_does_not_depend_on_acoustic_noise():
    quiet = dataset.SynthSpec(num_subjects=2, utterances_per_subject=1, noise_db=40, seed=3)
    loud = dataset.SynthSpec(num_subjects=2, utterances_per_subject=1, noise_db=0, seed=3)
    a, b = dataset.synth_recording(quiet, 1, 0), dataset.synth_recording(loud, 1, 0)
    assert np.array_equal(a.eeg, b.eeg)
    assert np.array_equal(dataset.band_power_signature(a.eeg), dataset.band_power_signature(b.eeg))
    assert not np.array_equal(a.audio, b.audio)


def test_eeg_signature_separates_subjects():
    spec = dataset.SynthSpec(num_subjects=2, utterances_per_subject=4, seed=5)
    sig = {k: np.log(np.stack([dataset.band_power_signature(dataset.synth_recording(spec, k, i).eeg)
                               for i in range(4)])) for k in range(2)}
    within = max(np.abs(sig[k] - sig[k].mean(axis=0)).mean() for k in range(2))
    between = np.abs(sig[0].mean(axis=0) - sig[1].mean(axis=0)).mean()
    assert between > 2 * within


def test_durations_in_range_and_aligned():
    spec = dataset.SynthSpec(num_subjects=2, utterances_per_subject=5, seed=1, channel_count=4)
    for i in range(5):
        rec = dataset.synth_recording(spec, 0, i)
        assert 2.0 <= rec.audio_duration <= 4.0
        assert abs(rec.audio_duration - rec.eeg_duration) <= 0.05


def test_load_recording(small):
    manifest, _ = small
    rec = dataset.load_recording(manifest, "s01", 0)
    assert rec.eeg.shape[0] == 31 and rec.sentence_index == 0
    with pytest.raises(NotFound):
        dataset.load_recording(manifest, "s99", 0)


def test_wav_round_trip(tmp_path):
    x = np.round(np.random.default_rng(0).uniform(-0.9, 0.9, 3000) * 32768) / 32768
    dataset.write_wav(tmp_path / "a.wav", x)
    y, rate = dataset.read_wav(tmp_path / "a.wav")
    assert rate == 16000 and np.array_equal(x, y)


def test_eeg_round_trip_and_header(tmp_path):
    x = np.random.default_rng(1).standard_normal((5, 321)).astype(np.float32)
    dataset.write_eeg(tmp_path / "a.eeg", x)
    assert np.array_equal(dataset.read_eeg(tmp_path / "a.eeg"), x)
    raw = (tmp_path / "a.eeg").read_bytes()
    assert raw[:4] == b"EEGF" and len(raw) == 16 + 4 * x.size
    (tmp_path / "bad.eeg").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParseError):
        dataset.read_eeg(tmp_path / "bad.eeg")


def test_rate_mismatch(small, tmp_path):
    manifest, _ = small
    audio_path, _ = manifest.paths("s01", 1)
    samples, _ = dataset.read_wav(audio_path)
    with wave.open(str(audio_path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(8000)
        w.writeframes((samples[::2] * 32767).astype("<i2").tobytes())
    with pytest.raises(RateMismatch):
        dataset.load_recording(manifest, "s01", 1)


def test_channel_count_mismatch(small):
    manifest, _ = small
    _, eeg_path = manifest.paths("s02", 0)
    eeg = dataset.read_eeg(eeg_path)
    dataset.write_eeg(eeg_path, eeg[:30])
    with pytest.raises(ChannelCountMismatch):
        dataset.load_recording(manifest, "s02", 0)


def _manifest_doc(subjects, train, test, utt=2):
    return {"channel_count": 31, "utterances_per_subject": utt, "train_subjects": train,
            "test_subjects": test,
            "entries": [{"subject": s, "sentence": i, "audio": f"a/{s}_{i}.wav", "eeg": f"e/{s}_{i}.eeg"}
                        for s in subjects for i in range(utt)]}


def _touch_all(root, doc):
    for e in doc["entries"]:
        for key in ("audio", "eeg"):
            p = root / e[key]
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(b"")


@pytest.mark.parametrize("n_subjects,n_train", [(10, 8), (8, 6)])
def test_load_manifest_standard_splits(tmp_path, n_subjects, n_train):
    subjects = [f"s{k + 1:02d}" for k in range(n_subjects)]
    doc = _manifest_doc(subjects, subjects[:n_train], subjects[n_train:], utt=90)
    _touch_all(tmp_path, doc)
    (tmp_path / "m.json").write_text(json.dumps(doc))
    m = dataset.load_manifest(tmp_path / "m.json")
    assert len(m) == 90 * n_subjects and len(m.test_subjects) == 2


def test_load_manifest_errors(tmp_path):
    doc = _manifest_doc(["a", "b"], ["a", "b"], ["b"])
    _touch_all(tmp_path, doc)
    (tmp_path / "overlap.json").write_text(json.dumps(doc))
    with pytest.raises(SplitOverlap):
        dataset.load_manifest(tmp_path / "overlap.json")

    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(ParseError):
        dataset.load_manifest(tmp_path / "broken.json")

    doc = _manifest_doc(["a", "b"], ["a"], ["b"])
    doc["entries"][0]["eeg"] = "e/missing.eeg"
    (tmp_path / "dangling.json").write_text(json.dumps(doc))
    with pytest.raises(MissingFile):
        dataset.load_manifest(tmp_path / "dangling.json")

    doc = _manifest_doc(["a", "b"], ["a"], ["b"])
    doc["entries"].pop()
    (tmp_path / "short.json").write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        dataset.load_manifest(tmp_path / "short.json")


def test_manifest_save_load_round_trip(small, tmp_path):
    manifest, _ = small
    back = dataset.load_manifest(manifest.root / "manifest.json")
    assert back.entries == manifest.entries
    assert back.subjects == manifest.subjects and back.noise_db == manifest.noise_db
