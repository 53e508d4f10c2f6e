"""
Does EEG help when the audio is noisy?
======================================

A small corpus at 10 dB SNR: pitch and formant cues are smeared by noise,
while the EEG band powers still say who is speaking. We train the same
encoder on MFCC-13 alone and on MFCC-13 + EEG-KPCA-30, then compare test
EER. This takes a few minutes on one core.
"""

import tempfile
import time

from eegverify import dataset, pipeline, protocol
from eegverify.features import FeatureKind

start = time.perf_counter()
workdir = tempfile.mkdtemp(prefix="eegverify_")
spec = dataset.SynthSpec(num_subjects=6, utterances_per_subject=30, noise_db=10, seed=4)
manifest = dataset.synth_dataset(spec, workdir)
print(f"{len(manifest)} recordings, train {manifest.train_subjects}, test {manifest.test_subjects}")

stores, model = pipeline.prepare_features(manifest, k=30, m=600, seed=0)
print(f"features ready, KPCA keeps {model.explained_variance_ratio.sum():.1%} of kernel variance")

###############################################################################
# Same schedule for both inputs: windows of 3 sentences, two random
# training subjects per step.
for kind in ("mfcc13", "concat43"):
    cfg = protocol.TrainConfig(sentences_per_step=3, cell_kind="gru", feature_kind=kind,
                               epochs=15, learning_rate=0.03, hidden=64, embed_dim=64, seed=0)
    result = protocol.train(manifest, cfg, stores[FeatureKind.parse(kind)])
    means = result.epoch_means()
    report = protocol.evaluate(result, manifest, stores[FeatureKind.parse(kind)], 3)
    print(f"{kind:9s} loss {means[0]:.3f} -> {means[-1]:.3f}   "
          f"test EER {report.mean_eer:.3f} over {len(report.per_step_eer)} steps")

print(f"done in {time.perf_counter() - start:.0f} s")
