"""
Cleaning EEG with a bandpass and a mains notch
==============================================

Raw EEG carries slow electrode drift and 60 Hz pickup from the mains.
Before any features are computed each channel goes through a 4th-order
Butterworth bandpass (0.1-70 Hz) and a narrow notch at 60 Hz.
"""

import numpy as np

from eegverify import filters

fs = 1000.0
bandpass = filters.design_bandpass(0.1, 70.0, fs, order=4)
notch = filters.design_notch(60.0, fs, quality=30.0)

# The bandpass is two biquads. Each numerator is (1, 0, -1), which puts a
# zero exactly at DC.
print(bandpass.sos())

###############################################################################
# Magnitude response at a few frequencies. The band edges sit at -3 dB.
probe = np.array([0.0, 0.1, 1.0, 10.0, 35.0, 60.0, 70.0, 200.0])
for f, bp, nt in zip(probe, bandpass.magnitude_db(probe), notch.magnitude_db(probe)):
    print(f"{f:7.1f} Hz   bandpass {bp:9.3f} dB   notch {nt:9.3f} dB")

###############################################################################
# A synthetic channel: 10 Hz rhythm, drift and mains hum.
t = np.arange(int(8 * fs)) / fs
rhythm = np.sin(2 * np.pi * 10 * t)
raw = rhythm + 20 * np.sin(2 * np.pi * 0.05 * t) + 5 * np.sin(2 * np.pi * 60 * t)
clean = filters.preprocess_eeg(raw[None, :])[0]

tail = t > 4.0      # skip the start-up transient
print("rms of raw   :", np.sqrt(np.mean(raw[tail] ** 2)))
print("rms of clean :", np.sqrt(np.mean(clean[tail] ** 2)))
print("rms of rhythm:", np.sqrt(np.mean(rhythm[tail] ** 2)))

###############################################################################
# The ICA artifact-removal step is a hook. Any callable taking and returning
# a channels x samples array can be slotted in.
def clip_stage(eeg):
    return np.clip(eeg, -50, 50)

clipped = filters.preprocess_eeg(raw[None, :], artifact_stage=clip_stage)
print("with a custom stage:", clipped.shape)
