import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cdsskill import spd
from cdsskill.errors import NonFiniteInput, NotSPD


def random_spd(rng, cond_max=1e6):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    logs = rng.uniform(0, np.log(cond_max), 3)
    logs -= logs.min()
    return (q * np.exp(logs) * rng.uniform(0.1, 1000)) @ q.T


def test_identity_and_diagonal():
    assert np.array_equal(spd.encode(np.eye(3)), [1, 0, 1, 0, 0, 1])
    assert np.array_equal(spd.encode(np.diag([4.0, 9, 16])), [2, 0, 3, 0, 0, 4])


def test_ordering_golden_vector():
    k = [[4, 2, 0], [2, 5, 0], [0, 0, 9]]
    v = spd.encode(np.array(k, float))
    assert np.allclose(v, oracles.cholesky3(k), atol=1e-15)
    assert np.allclose(v, [2, 1, 2, 0, 0, 3], atol=1e-15)


def test_ordering_full_matrix():
    k = [[4.0, 2.0, -2.0], [2.0, 10.0, 1.0], [-2.0, 1.0, 6.0]]
    assert np.allclose(spd.encode(np.array(k)), oracles.cholesky3(k), atol=1e-14)


def test_decode_identity():
    assert np.array_equal(spd.decode([1, 0, 1, 0, 0, 1]), np.eye(3))


def test_decode_clamps_negative_diagonal(caplog):
    with caplog.at_level(logging.WARNING):
        k = spd.decode([-0.5, 0, 1, 0, 0, 1])
    assert np.array_equal(k, spd.decode([spd.DELTA_MIN, 0, 1, 0, 0, 1]))
    assert np.linalg.eigvalsh(k).min() > 0
    assert "ClampTriggered" in caplog.text


def test_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k = random_spd(rng)
        back = spd.decode(spd.encode(k))
        assert np.max(np.abs(back - k) / np.abs(k).max()) < 1e-9


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6))
def test_decode_always_spd(v):
    k = spd.decode(v)
    assert np.array_equal(k, k.T)
    low = np.linalg.cholesky(k)
    assert np.all(np.diag(low) > 0)


def test_decode_many_matches_decode():
    rng = np.random.default_rng(2)
    vs = rng.normal(size=(50, 6))
    ks, n_clamped = spd.decode_many(vs)
    assert n_clamped == int((vs[:, [0, 2, 5]] < spd.DELTA_MIN).any(axis=1).sum())
    for v, k in zip(vs, ks):
        assert np.allclose(k, spd.decode(v))


def test_encode_near_spd_uses_jitter():
    k = np.diag([1.0, 1.0, 0.0])
    v = spd.encode(k)
    assert v[5] > 0


def test_encode_rejects():
    with pytest.raises(NotSPD):
        spd.encode(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(NotSPD):
        spd.encode(np.array([[1.0, 0.5, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(NonFiniteInput):
        spd.decode([np.nan, 0, 1, 0, 0, 1])


def test_clamped_chain_stays_spd_in_floating_point():
    v = [0.0, 6.0, 0.0, 0.0, 20.0, 0.0]
    k = spd.decode(v)
    assert np.linalg.eigvalsh(k).min() > 0
    np.linalg.cholesky(k)
    exact = spd.decode([spd.DELTA_MIN, 6.0, spd.DELTA_MIN, 0.0, 20.0, spd.DELTA_MIN])
    assert np.allclose(k, exact, rtol=0, atol=1e-9 * np.abs(exact).max())
