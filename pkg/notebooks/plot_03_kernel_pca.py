"""
Shrinking 155 EEG features to 30 with kernel PCA
================================================

A cubic polynomial kernel, (x.y + 1)^3, is fitted on training frames and
kept frozen for everything else. The explained-variance table is what one
would plot to choose the component count.
"""

import numpy as np

from eegverify import dataset, features, filters, kpca

spec = dataset.SynthSpec(num_subjects=3, utterances_per_subject=4, noise_db=10, seed=1)
frames = []
for subj in range(2):          # training subjects only
    for utt in range(4):
        rec = dataset.synth_recording(spec, subj, utt)
        frames.append(features.eeg155(filters.preprocess_eeg(rec.eeg)).frames)
frames = np.vstack(frames)
print("training frames:", frames.shape)

model = kpca.fit(frames, k=30, m=800, seed=0, standardize=True)
print("landmarks used :", model.landmarks.shape[0])

###############################################################################
# Explained variance of the leading components.
for comp, ratio, cum in kpca.explained_variance_table(model)[:10]:
    print(f"  component {comp:2d}  ratio {ratio:.4f}  cumulative {cum:.4f}")

###############################################################################
# Projecting a held-out subject's utterance.
rec = dataset.synth_recording(spec, 2, 0)
held_out = features.eeg155(filters.preprocess_eeg(rec.eeg)).frames
reduced = model.transform(held_out)
print("held-out projection:", reduced.shape)
print("first frame        :", np.round(reduced[0, :6], 3))
