"""
From a recording to feature frames
==================================

Audio becomes 13 MFCCs per 10 ms; EEG becomes five statistics per channel
per 10 ms. Both streams therefore run at 100 frames per second and can be
glued together frame by frame.
"""

import numpy as np

from eegverify import dataset, features, filters

spec = dataset.SynthSpec(num_subjects=2, utterances_per_subject=1, noise_db=10, seed=0)
rec = dataset.synth_recording(spec, subject_index=0, sentence_index=0)
print(f"audio {rec.audio.shape} @16 kHz, eeg {rec.eeg.shape} @1 kHz, {rec.audio_duration:.2f} s")

###############################################################################
# MFCC-13. Frame count follows 1 + (len - 400) // 160.
mfcc = features.mfcc13(rec.audio, rec.subject_id, rec.sentence_index)
print("MFCC frames:", mfcc.frames.shape, " expected T =", features.mfcc_frame_count(len(rec.audio)))
print("first frame:", np.round(mfcc.frames[0], 2))

###############################################################################
# EEG-155: rms, zero-crossing rate, window mean, kurtosis and spectral
# entropy on 100-sample windows, for each of 31 channels.
eeg = features.eeg155(filters.preprocess_eeg(rec.eeg), 31, rec.subject_id, rec.sentence_index)
print("EEG frames :", eeg.frames.shape)
names = ["rms", "zcr", "mwa", "kurtosis", "pse"]
for name, value in zip(names, eeg.frames[0, :5]):
    print(f"  channel 0 {name:9s} {value:9.4f}")

###############################################################################
# A few hand-checkable frames.
print("alternating +-1:", features.eeg_frame_features(np.array([1.0, -1.0] * 50)))
print("all zeros      :", features.eeg_frame_features(np.zeros(100)))
sine = np.sin(2 * np.pi * 50 * np.arange(100) / 1000)
noise = np.random.default_rng(0).standard_normal(100)
print("pse of a 50 Hz sine vs noise:",
      features.eeg_frame_features(sine)[4], features.eeg_frame_features(noise)[4])
