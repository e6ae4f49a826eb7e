import numpy as np
import pytest

from dunes import ShapeError, UndefinedDisplacement
from dunes.metrics import area_accuracy, correlation_surface, displacement, rmse


def brute_correlation(a, b):
    a = a - a.mean()
    b = b - b.mean()
    R, S = a.shape
    c = np.empty((R, S))
    for dx in range(R):
        for dy in range(S):
            c[dx, dy] = (np.roll(a, (dx, dy), axis=(0, 1)) * b).sum()
    return c / np.sqrt((a * a).sum() * (b * b).sum())


def test_area_accuracy_examples():
    g = np.random.default_rng(0).random((8, 8))
    assert area_accuracy(g, g, 0.5) == 1.0
    b = (g >= 0.5).astype(float)
    assert area_accuracy(b, 1 - b, 0.5) == 0.0
    assert area_accuracy(np.array([[1, 1], [0, 0]]), np.array([[1, 0], [0, 0]]), 0.5) == 0.75


def test_area_accuracy_symmetry_and_shift_invariance(rng):
    a, b = rng.random((2, 10, 12))
    assert area_accuracy(a, b, 0.4) == area_accuracy(b, a, 0.4)
    assert area_accuracy(a, b, 0.4) == area_accuracy(np.roll(a, (3, 5), (0, 1)),
                                                     np.roll(b, (3, 5), (0, 1)), 0.4)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        area_accuracy(np.zeros((2, 2)), np.zeros((2, 3)), 0.5)
    with pytest.raises(ShapeError):
        rmse(np.zeros((2, 2)), np.zeros((3, 2)))


def test_rmse_examples(rng):
    a = rng.random((6, 7))
    assert rmse(a, a) == 0.0
    assert np.isclose(rmse(a + 0.3, a), 0.3)
    b = rng.random((6, 7))
    s = 0.0
    for i in range(6):
        for j in range(7):
            s += (a[i, j] - b[i, j]) ** 2
    assert abs(rmse(a, b) - (s / 42) ** 0.5) < 1e-6


def test_rmse_triangle_inequality(rng):
    for _ in range(200):
        a, b, c = rng.normal(size=(3, 5, 5))
        assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-12


def test_correlation_surface_matches_brute_force(rng):
    a, b = rng.random((2, 6, 9))
    assert np.allclose(correlation_surface(a, b), brute_correlation(a, b))


def test_displacement_identity_and_shift(rng):
    a = rng.random((16, 24))
    assert displacement(a, a) == (0, 0)
    assert displacement(a, np.roll(a, 3, axis=0)) == (3, 0)
    assert displacement(a, np.roll(a, (-2, 5), axis=(0, 1))) == (-2, 5)


def test_displacement_antisymmetry(rng):
    for _ in range(20):
        a = rng.random((12, 12))
        b = np.roll(a, tuple(rng.integers(-5, 6, 2)), axis=(0, 1)) + 0.05 * rng.random((12, 12))
        dx, dy = displacement(a, b)
        rx, ry = displacement(b, a)
        assert (dx + rx) % 12 == 0 and (dy + ry) % 12 == 0


def test_displacement_tie_break():
    # a row pattern with period 4 correlates perfectly at dx = -4, 0, 4
    a = np.tile(np.array([0.0, 1.0, 0.0, 0.0]), 4)[:, None] * np.ones((1, 8))
    a[:, 0] += 0.5
    assert displacement(a, np.roll(a, 4, axis=0), max_shift=7) == (0, 0)
    b = np.roll(a, 2, axis=0)      # best at dx = -2 and +2: tie goes to -2
    assert displacement(a, b, max_shift=7) == (-2, 0)


def test_displacement_flat_frames_error():
    with pytest.raises(UndefinedDisplacement):
        displacement(np.ones((4, 4)), np.ones((4, 4)))


def test_displacement_max_shift_bound(rng):
    a = rng.random((8, 8))
    with pytest.raises(ValueError):
        displacement(a, a, max_shift=8)
