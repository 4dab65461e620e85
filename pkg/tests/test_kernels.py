import math

import numpy as np
import pytest

from crystalsym import _kernels_py as py
from crystalsym import kernels

try:
    from crystalsym import _kernels as cy
except ImportError:  # extension not built
    cy = None

needs_cy = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def _poly(rng, n, centre, r=1.0):
    th = np.sort(rng.uniform(0, 2 * math.pi, n))
    return np.ascontiguousarray(centre + r * np.column_stack([np.cos(th), np.sin(th)]))


def _seg_dist_oracle(P, Q, n=2000):
    t = np.linspace(0, 1, n)[:, None]
    edges = lambda A: np.vstack([A[i] + t * (A[(i + 1) % len(A)] - A[i]) for i in range(len(A))])
    a, b = edges(P), edges(Q)
    return np.min(np.linalg.norm(a[:, None] - b[None], axis=-1))


def test_selector_exposes_kernels():
    assert isinstance(kernels.COMPILED, bool)
    for name in kernels.__all__[1:]:
        assert callable(getattr(kernels, name))


def test_polygon_distance_matches_sampling_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        P = _poly(rng, 5, np.zeros(2))
        Q = _poly(rng, 4, rng.uniform(2.5, 4, 2))
        want = _seg_dist_oracle(P, Q, 600)
        got = py.polygon_distance(P, Q)
        assert got <= want + 1e-12
        assert got == pytest.approx(want, abs=1e-2)


def test_point_polygon_distance():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    assert py.point_polygon_distance(0.5, 0.5, sq) == 0.0
    assert py.point_polygon_distance(2.0, 2.0, sq) == pytest.approx(math.sqrt(2))


def test_match_2d_recovers_rotation():
    S = np.array([[0, 0], [1.2, 0], [0.3, 0.9]])
    th = 0.7
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    X = S[[1, 2, 0]] @ R.T + [3.0, -1.0]
    perms = np.array([[0, 1, 2], [1, 2, 0], [2, 0, 1]], dtype=np.int64)
    k, dev, ang = py.match_2d(X, S, perms)
    assert k == 1 and dev < 1e-12 and ang == pytest.approx(th)


def test_tetra_kernels_unit_cases():
    T = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]], float)
    assert py.tetra_overlap(T, T + 0.1) > 0
    assert py.tetra_overlap(T, T + 2.0) < 0
    d = py.points_tetra_distance(np.array([[0.1, 0.1, 0.1], [0, 0, -2.0], [1, 1, 1]]), T)
    assert d[0] == 0.0 and d[1] == pytest.approx(2.0) and d[2] == pytest.approx(2 / math.sqrt(3))


@needs_cy
def test_parity_2d_kernels():
    rng = np.random.default_rng(2)
    for _ in range(200):
        P = _poly(rng, int(rng.integers(3, 6)), np.zeros(2))
        Q = _poly(rng, int(rng.integers(3, 6)), rng.uniform(-2.5, 2.5, 2))
        assert cy.polygon_gap(P, Q) == pytest.approx(py.polygon_gap(P, Q), abs=1e-13)
        assert cy.polygon_distance(P, Q) == pytest.approx(py.polygon_distance(P, Q), abs=1e-13)
        x, y = rng.uniform(-2, 2, 2)
        assert cy.point_polygon_distance(x, y, P) == pytest.approx(py.point_polygon_distance(x, y, P), abs=1e-13)
        X = rng.uniform(-2, 2, (7, 2))
        assert np.allclose(cy.points_polygon_distance(X, P), py.points_polygon_distance(X, P), atol=1e-13)
        fa = rng.integers(0, 2, len(P)).astype(np.int8)
        fb = rng.integers(0, 2, len(Q)).astype(np.int8)
        shared = bool(rng.integers(2))
        assert cy.pair_conflict_2d(P, Q, fa, fb, shared, 0.3, 1e-9) == py.pair_conflict_2d(P, Q, fa, fb, shared, 0.3, 1e-9)


@needs_cy
def test_parity_match_2d():
    rng = np.random.default_rng(3)
    S = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    perms = np.array([np.roll(range(4), k) for k in range(4)] + [np.roll(range(4)[::-1], k) for k in range(4)],
                     dtype=np.int64)
    for _ in range(100):
        X = S + rng.normal(scale=0.05, size=S.shape)
        a, b = cy.match_2d(X, S, perms), py.match_2d(X, S, perms)
        assert a[0] == b[0] and a[1] == pytest.approx(b[1], abs=1e-12) and a[2] == pytest.approx(b[2], abs=1e-12)


@needs_cy
def test_parity_tet_kernels():
    rng = np.random.default_rng(4)
    for _ in range(50):
        SA = np.ascontiguousarray(rng.normal(size=(3, 4, 3)))
        SB = np.ascontiguousarray(rng.normal(size=(2, 4, 3)) + rng.normal(size=3))
        assert cy.tetra_overlap(SA, SB) == pytest.approx(py.tetra_overlap(SA, SB), abs=1e-12)
        X = rng.normal(size=(9, 3)) * 2
        assert np.allclose(cy.points_tetra_distance(X, SA), py.points_tetra_distance(X, SA), atol=1e-12)
