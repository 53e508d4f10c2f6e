"""
d-vectors and the GE2E softmax loss
===================================

A single recurrent layer reads a feature sequence; its last hidden state
goes through a dense layer and is scaled to unit length. The loss pulls
each d-vector towards its own speaker's centroid and away from the others.
"""

import numpy as np

from eegverify import encoder, ge2e

rng = np.random.default_rng(0)
params = encoder.init("lstm", input_dim=43, hidden=32, embed_dim=16, seed=0)

# two speakers, three utterances each, of different lengths
seqs = [rng.standard_normal((int(rng.integers(50, 120)), 43)) + k for k in (0, 1) for _ in range(3)]
dvecs, cache = encoder.forward_batch(params, seqs)
print("d-vector norms:", np.round(np.linalg.norm(dvecs, axis=1), 6))

###############################################################################
# The similarity matrix has one row per utterance and one column per
# speaker. With exclusive centroids the own-speaker column leaves the
# utterance itself out of the centroid.
sim = ge2e.similarity_matrix(dvecs.reshape(2, 3, -1), w=10.0, b=-5.0)
print(np.round(sim.S, 3))

loss, dS, dw, db = ge2e.ge2e_softmax_loss(sim)
print(f"loss {loss:.4f}  dL/dw {dw:.4f}  dL/db {db:.1e}")
# dL/db is zero: adding b to every entry of a row does not change its softmax.

###############################################################################
# Back to the encoder weights, and a finite-difference spot check.
_, d_dvecs, _, _ = ge2e.loss_and_grads(dvecs.reshape(2, 3, -1))
grads = encoder.backward(params, cache, d_dvecs.reshape(6, -1))


def total_loss():
    d, _ = encoder.forward_batch(params, seqs)
    return ge2e.loss_and_grads(d.reshape(2, 3, -1))[0]


idx = (5, 7)
keep = params.W[idx]
params.W[idx] = keep + 1e-6
up = total_loss()
params.W[idx] = keep - 1e-6
down = total_loss()
params.W[idx] = keep
print("analytic", grads["W"][idx], " numeric", (up - down) / 2e-6)
