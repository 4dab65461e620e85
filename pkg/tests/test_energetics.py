import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crystalsym.energetics import (ModelParams, blurred_configuration, blurred_min_N, compute_m0,
                                   count_violations, fit_local_bound, local_energy_cubic,
                                   local_energy_triangular, quadratic_potential, sample_local_terms,
                                   standard_configuration, surface_measure, tabulated_potential,
                                   total_hamiltonian, verify_local_bound)
from crystalsym.extraction import PointConfig, extract
from crystalsym.geometry import rotation_2d
from crystalsym.tessellation import build, compute_constants

EPS, RHO = 0.05, 0.1
TRI = build("triangular")
SQ = build("cubic", 2)
PHI = quadratic_potential(0.25)


def test_triangular_local_energy():
    s = TRI.prototiles[0].corners
    assert local_energy_triangular(s, PHI) == pytest.approx(0.0, abs=1e-30)
    assert local_energy_triangular(s * 1.1, PHI) == pytest.approx(1.5 * 0.01)
    # sides 1.01, 1.00, 0.99
    a = 1.01
    c = 0.99
    x = np.array([0.0, 0.0])
    y = np.array([a, 0.0])
    cosz = (a * a + c * c - 1.0) / (2 * a * c)
    z = c * np.array([cosz, math.sqrt(1 - cosz ** 2)])
    assert local_energy_triangular(np.array([x, y, z]), PHI) == pytest.approx(1e-4, rel=1e-9)


def test_potential_domain_is_enforced():
    with pytest.raises(ValueError):
        local_energy_triangular(TRI.prototiles[0].corners * 1.5, PHI)


def test_cubic_local_energy():
    p = SQ.prototiles[0]
    corr = tuple(range(4))
    assert local_energy_cubic(p.corners, corr, p, PHI) == 0.0
    s = 1.03
    assert local_energy_cubic(p.corners * s, corr, p, PHI) == pytest.approx(6 * (s - 1) ** 2)
    x = p.corners.copy()
    x[1] += [0.01, 0.0]
    want = 0.0
    for a, b in itertools.combinations(range(4), 2):
        ratio = np.linalg.norm(x[a] - x[b]) / np.linalg.norm(p.corners[a] - p.corners[b])
        want += (ratio - 1) ** 2
    assert local_energy_cubic(x, corr, p, PHI) == pytest.approx(want, rel=1e-12)


def test_hamiltonian_examples():
    prm = ModelParams(sigma=10.0, m=2.0)
    P = standard_configuration(TRI, 4)
    cx = extract(P, TRI, EPS, RHO)
    assert total_hamiltonian(cx, TRI, prm) == pytest.approx(-32.0)
    assert total_hamiltonian(cx, TRI, prm, "tilde") == pytest.approx(-32.0)
    assert surface_measure(cx) == 0
    P1 = PointConfig(P.dom, np.delete(P.points, 5, axis=0))
    cx1 = extract(P1, TRI, EPS, RHO)
    assert surface_measure(cx1) == 6
    assert total_hamiltonian(cx1, TRI, prm) == pytest.approx(30.0)
    # one exterior point: S + 1, |P| + 1
    P2 = PointConfig(P.dom, np.vstack([P1.points, P.points[5] + [0.3, 0.1]]))
    cx2 = extract(P2, TRI, EPS, RHO)
    assert len(cx2.tiles) == len(cx1.tiles)
    assert total_hamiltonian(cx2, TRI, prm) - total_hamiltonian(cx1, TRI, prm) == pytest.approx(prm.sigma - prm.m)
    with pytest.raises(ValueError):
        total_hamiltonian(cx, TRI, prm, "other")


def test_plain_and_tilde_differ_by_surface_term():
    rng = np.random.default_rng(1)
    prm = ModelParams(sigma=10.0, m=2.0)
    c = 3 * PHI.sup_abs()
    for _ in range(6):
        P = standard_configuration(TRI, 4)
        pts = P.points + rng.uniform(-0.01, 0.01, P.points.shape)
        P = PointConfig(P.dom, np.delete(pts, rng.choice(len(pts), rng.integers(0, 3), replace=False), axis=0))
        cx = extract(P, TRI, EPS, RHO)
        gap = abs(total_hamiltonian(cx, TRI, prm) - total_hamiltonian(cx, TRI, prm, "tilde"))
        assert gap <= c * len(cx.surface_points) + 1e-12


def test_hamiltonian_rotation_invariant():
    prm = ModelParams(sigma=10.0, m=2.0)
    pts = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2], [1.5, math.sqrt(3) / 2], [1.0, math.sqrt(3)]])
    pts = pts * 1.01 + np.random.default_rng(2).uniform(-0.003, 0.003, pts.shape)
    dom = TRI.domain(8)
    centre = np.array([4.0, 3.0])
    H0 = total_hamiltonian(extract(PointConfig(dom, pts + centre), TRI, EPS, RHO), TRI, prm)
    for th in (0.3, 1.1, 2.5):
        rot = (pts - pts.mean(0)) @ rotation_2d(th).T + pts.mean(0) + centre
        assert total_hamiltonian(extract(PointConfig(dom, rot), TRI, EPS, RHO), TRI, prm) == pytest.approx(H0, abs=1e-9)


def test_m0_examples():
    assert compute_m0(TRI, 0.5, PHI, 1.0) == pytest.approx(0.0)
    assert compute_m0(SQ, 0.5, PHI, 1.0) == pytest.approx(0.0)
    assert compute_m0(TRI, -1.0, PHI, 1.0) == pytest.approx(math.sqrt(3))


def test_standard_counts():
    assert len(standard_configuration(TRI, 4)) == 16
    P = standard_configuration(SQ, 4)
    assert len(P) == 16 and len(extract(P, SQ, EPS, RHO).tiles) == 16
    with pytest.raises(ValueError):
        standard_configuration(TRI, 0)


def test_blurred_small_r_is_near_standard():
    r = 1e-6
    N = blurred_min_N(r, EPS) + 20
    P = blurred_configuration(SQ, N, r, np.random.default_rng(0))
    n_box = math.floor(N / (1 + r))
    assert len(P) == n_box ** 2
    # bulk boxes sit within n_box * r + r / 2 of integer lattice points
    bulk = P.points[np.all(P.points < (n_box - 80) * (1 + r) - 0.5, axis=1)]
    assert len(bulk) > 0
    assert np.abs(bulk - np.round(bulk)).max() <= n_box * r + r / 2


def test_blurred_rejects_small_N():
    with pytest.raises(ValueError, match="minimal N"):
        blurred_configuration(TRI, 20, 0.01, np.random.default_rng(0))
    with pytest.raises(ValueError):
        blurred_configuration(TRI, 100, 0.5, np.random.default_rng(0))


def test_blurred_configuration_is_defect_free():
    N = blurred_min_N(0.01, EPS)
    P = blurred_configuration(SQ, N, 0.01, np.random.default_rng(3))
    cx = extract(P, SQ, EPS, RHO, verify=False)
    assert not cx.surface_points
    assert len(cx.tiles) >= 0.5 * N * N


def test_local_bound_fit_and_identity_tile():
    rng = np.random.default_rng(5)
    fit = verify_local_bound(TRI, PHI, 1.0, EPS, 2000, rng)
    assert fit.c1 > 0 and fit.violations == 0 and fit.n_samples == 2000
    # the identity tile gives 0 >= 0
    assert count_violations(np.zeros((1, 3)), fit.c1, fit.c2) == 0
    with pytest.raises(ValueError):
        verify_local_bound(TRI, PHI, 1.0, EPS, 10, rng)


def test_local_terms_respect_eps_class():
    T = sample_local_terms(SQ, PHI, 1.0, EPS, 500, np.random.default_rng(6))
    assert T.shape == (500, 3)
    assert np.all(T[:, 1] >= 0) and np.all(T[:, 2] >= 0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=30))
def test_fit_local_bound_is_feasible(rows):
    D = np.array([r[0] for r in rows]) + 0.01
    A = np.array([r[1] for r in rows])
    # rows at the prototile volume keep c1 bounded
    A[::2] = 0.0
    E = 0.7 * D + 0.2 * A + np.array([r[2] for r in rows])
    terms = np.column_stack([E, D, A])
    c1, c2 = fit_local_bound(terms)
    assert c1 >= 0.7 - 1e-9
    assert count_violations(terms, c1, c2) == 0


def test_model_params_validation():
    consts = compute_constants(TRI)
    ModelParams().validate(TRI, consts)
    for bad in ({"eps": 0.1}, {"rho": 0.5}, {"ell": 1.5}, {"sigma": -1}, {"beta": 0}, {"tilde_multiplicity": "x"}):
        with pytest.raises(ValueError):
            ModelParams(**bad).validate(TRI, consts)


def test_tabulated_potential(tmp_path):
    p = tmp_path / "phi.csv"
    rs = np.linspace(0.7, 1.3, 61)
    p.write_text("r,phi\n" + "".join(f"{r},{(r - 1) ** 2}\n" for r in rs))
    phi = tabulated_potential(p, 0.25)
    phi.validate()
    assert phi(1.1) == pytest.approx(0.01, abs=1e-9)
