import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegverify import ge2e
from eegverify.errors import NeedTwoUtterances, NonUnitDvec


def _unit_batch(n, t, e, seed=0):
    x = np.random.default_rng(seed).standard_normal((n, t, e))
    return x / np.linalg.norm(x, axis=2, keepdims=True)


def test_centroids():
    v = np.array([0.6, 0.8])
    assert np.allclose(ge2e.centroids(np.stack([np.stack([v] * 4)] * 2)), [v, v])
    batch = np.array([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0]]])
    assert np.allclose(ge2e.centroids(batch)[0], [0.5, 0.5])
    assert np.allclose(ge2e.exclusive_centroid(batch, 0, 0), [0.0, 1.0])
    assert np.allclose(ge2e.exclusive_centroids(batch)[0, 0], [0.0, 1.0])
    with pytest.raises(NeedTwoUtterances):
        ge2e.exclusive_centroid(batch[:, :1], 0, 0)
    with pytest.raises(NeedTwoUtterances):
        ge2e.exclusive_centroids(batch[:, :1])


def test_similarity_entries():
    # each speaker's utterances identical: cos to own centroid is 1, to the other 0
    batch = np.array([[[1.0, 0.0]] * 3, [[0.0, 1.0]] * 3])
    sim = ge2e.similarity_matrix(batch)
    assert np.allclose(sim.S[:3, 0], 5.0) and np.allclose(sim.S[:3, 1], -5.0)
    doubled = ge2e.similarity_matrix(_unit_batch(2, 3, 4), w=20.0)
    base = ge2e.similarity_matrix(_unit_batch(2, 3, 4), w=10.0)
    assert np.allclose(doubled.S - doubled.b, 2 * (base.S - base.b))


def test_similarity_rejects_non_unit():
    with pytest.raises(NonUnitDvec):
        ge2e.similarity_matrix(2 * _unit_batch(2, 3, 4))


def test_uniform_loss_is_log_n():
    batch = np.array([[[1.0, 0.0]] * 2, [[1.0, 0.0]] * 2])
    loss, dS, dw, db = ge2e.ge2e_softmax_loss(ge2e.similarity_matrix(batch))
    assert loss == pytest.approx(math.log(2), abs=1e-12)


def test_confident_row_loss():
    sim = ge2e.similarity_matrix(_unit_batch(2, 1, 4), exclusive=False)
    sim.S = np.array([[10.0, -10.0], [-10.0, 10.0]])
    loss, *_ = ge2e.ge2e_softmax_loss(sim)
    assert loss == pytest.approx(math.log1p(math.exp(-20)), rel=1e-9)


@pytest.mark.parametrize("exclusive", [True, False])
def test_gradients_against_finite_differences(exclusive):
    e = _unit_batch(2, 3, 4, seed=1)
    w, b = 7.0, -2.0
    loss, grad, dw, db = ge2e.loss_and_grads(e, w, b, exclusive)

    def f(x, ww=w, bb=b):
        return ge2e.loss_and_grads(x, ww, bb, exclusive, check_unit=False)[0]

    h = 1e-6
    num = np.zeros_like(e)
    for idx in np.ndindex(e.shape):
        xp, xm = e.copy(), e.copy()
        xp[idx] += h
        xm[idx] -= h
        num[idx] = (f(xp) - f(xm)) / (2 * h)
    assert np.allclose(grad, num, rtol=1e-4, atol=1e-8)
    assert dw == pytest.approx((f(e, w + h) - f(e, w - h)) / (2 * h), rel=1e-4)
    assert abs(db - (f(e, w, b + h) - f(e, w, b - h)) / (2 * h)) <= 1e-8


def test_rows_of_dS_sum_to_zero():
    _, dS, _, db = ge2e.ge2e_softmax_loss(ge2e.similarity_matrix(_unit_batch(3, 4, 5)))
    assert np.allclose(dS.sum(axis=1), 0.0, atol=1e-12)
    assert abs(db) <= 1e-12


def test_permutation_equivariance():
    e = _unit_batch(3, 4, 5, seed=2)
    a = ge2e.similarity_matrix(e)
    perm = [2, 0, 1]
    b = ge2e.similarity_matrix(e[perm])
    assert ge2e.ge2e_softmax_loss(a)[0] == pytest.approx(ge2e.ge2e_softmax_loss(b)[0], abs=1e-12)
    assert np.allclose(b.S.reshape(3, 4, 3), a.S.reshape(3, 4, 3)[perm][:, :, perm])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), row=st.integers(0, 5), bump=st.floats(0.01, 5.0))
def test_loss_bounds_and_monotone_separation(seed, row, bump):
    sim = ge2e.similarity_matrix(_unit_batch(2, 3, 4, seed))
    loss, *_ = ge2e.ge2e_softmax_loss(sim)
    assert loss >= 0
    sim.S = sim.S.copy()
    sim.S[row, row // 3] += bump
    assert ge2e.ge2e_softmax_loss(sim)[0] < loss
