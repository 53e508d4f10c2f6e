"""
Equal error rate from a threshold sweep
=======================================

Scores above a threshold are accepted. Raising the threshold trades false
acceptances for false rejections; the EER is where the two rates meet.
"""

import numpy as np

from eegverify import protocol

print("separable       :", protocol.eer([0.9, 0.8], [0.2, 0.1]))
print("interleaved     :", protocol.eer([0.8, 0.2], [0.9, 0.1]))
print("indistinguishable:", protocol.eer([0.3, 0.5], [0.3, 0.5]))

###############################################################################
# The full sweep for two overlapping Gaussians.
rng = np.random.default_rng(0)
targets = rng.normal(1.0, 0.5, 200)
impostors = rng.normal(0.0, 0.5, 400)
th, far, frr = protocol.det_points(targets, impostors)
crossing = np.argmax(far <= frr)
print(f"{len(th)} thresholds, crossing near {th[crossing]:.3f}")
print(f"EER {protocol.eer(targets, impostors):.4f}")

###############################################################################
# Any strictly increasing map of the scores leaves the EER alone. This is
# why test-time scoring can use raw cosine instead of w * cos + b.
print("after 10 * s - 5:", protocol.eer(10 * targets - 5, 10 * impostors - 5))

###############################################################################
# Rolling evaluation windows: with 90 utterances in windows of 3 there are
# 30 windows and 29 enrol/score pairs.
print(len(protocol.train_steps_per_epoch(90, 3)), "windows;", protocol.train_steps_per_epoch(90, 20))
