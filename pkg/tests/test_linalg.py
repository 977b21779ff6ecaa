"""Positive-definite state: construction guards and inverse maintenance."""

import numpy as np
import pytest

from topm.errors import DimensionMismatch
from topm.linalg import PosDefState


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def test_rejects_non_square():
    with pytest.raises(DimensionMismatch):
        PosDefState(np.ones((2, 3)))


def test_rejects_asymmetric():
    m = np.array([[2.0, 0.5], [0.1, 2.0]])
    with pytest.raises(ValueError):
        PosDefState(m)


def test_rejects_indefinite():
    with pytest.raises(ValueError):
        PosDefState(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_from_regularization_is_scaled_identity():
    s = PosDefState.from_regularization(3, 0.25)
    assert np.array_equal(s.matrix, 0.25 * np.eye(3))
    assert np.allclose(s.inverse, 4.0 * np.eye(3))
    with pytest.raises(ValueError):
        PosDefState.from_regularization(3, 0.0)


def test_rank_one_update_tracks_dense_inverse():
    """Sherman-Morrison chain stays within 1e-10 of batch inversion."""
    rng = np.random.default_rng(7)
    for trial in range(20):
        n = int(rng.integers(2, 6))
        s = PosDefState(random_spd(rng, n), recompute_every=10 ** 9)
        mat = s.matrix.copy()
        for _ in range(50):
            x = rng.standard_normal(n)
            s.rank_one_update(x)
            mat += np.outer(x, x)
        assert np.abs(s.matrix - mat).max() < 1e-9
        assert np.abs(s.inverse - np.linalg.inv(mat)).max() < 1e-10


def test_update_rejects_wrong_shape():
    s = PosDefState(np.eye(2))
    with pytest.raises(DimensionMismatch):
        s.rank_one_update(np.ones(3))


def test_quad_form_matches_direct_and_clips_at_zero():
    rng = np.random.default_rng(3)
    s = PosDefState(random_spd(rng, 4))
    for _ in range(25):
        y = rng.standard_normal(4)
        direct = float(y @ np.linalg.inv(s.matrix) @ y)
        assert s.quad_form(y) >= 0.0
        assert abs(s.quad_form(y) - direct) < 1e-10
    assert s.quad_form(np.zeros(4)) == 0.0


def test_periodic_recompute_bounds_drift():
    """With recompute_every=25 the inverse error stays tiny over 500 updates."""
    rng = np.random.default_rng(11)
    s = PosDefState(np.eye(3) * 0.05, recompute_every=25)
    for _ in range(500):
        s.rank_one_update(rng.standard_normal(3))
    assert s.inverse_error() < 1e-8


def test_manual_recompute_resets_inverse():
    rng = np.random.default_rng(5)
    s = PosDefState(random_spd(rng, 3), recompute_every=10 ** 9)
    for _ in range(200):
        s.rank_one_update(rng.standard_normal(3))
    s.recompute()
    assert s.inverse_error() < 1e-11
    assert np.array_equal(s.inverse, s.inverse.T)
