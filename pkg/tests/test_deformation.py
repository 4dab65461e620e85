import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crystalsym.deformation import (build_deformation, field_distance, labelled_spanning_tree, labels_in_set,
                                    local_distortion, order_parameter, tile_tree_ratios, tree_edge_terms,
                                    tree_lower_bound)
from crystalsym.energetics import standard_configuration
from crystalsym.extraction import PointConfig, extract
from crystalsym.geometry import rotation_2d
from crystalsym.tessellation import build

EPS, RHO = 0.05, 0.1
TRI = build("triangular")
CENTRE = np.array([4.5, 3.0])


def _patch(Q=np.eye(2), s=1.0, rings=2):
    """Finite triangular patch around a lattice point, rotated by Q and scaled by s, on a large torus."""
    pts = []
    for i in range(-rings, rings + 1):
        for j in range(-rings, rings + 1):
            if abs(i + j) <= rings:
                pts.append(i * np.array([1.0, 0.0]) + j * np.array([0.5, math.sqrt(3) / 2]))
    pts = np.array(pts) * s @ Q.T + CENTRE
    return PointConfig(TRI.domain(10), pts)


def _angle_scan(fld, n=6284):
    w = np.array([e.weight for e in fld.entries])
    G = np.array([e.gradient for e in fld.entries])
    th = np.linspace(0, 2 * math.pi, n, endpoint=False)
    R = np.stack([np.stack([np.cos(th), -np.sin(th)], -1), np.stack([np.sin(th), np.cos(th)], -1)], -2)
    d = ((G[None] - R[:, None]) ** 2).sum(axis=(-1, -2)) @ w
    return d.min() / fld.n_tiles


def _same_mod_hexagonal(A, B):
    return any(np.allclose(A, B @ rotation_2d(k * math.pi / 3), atol=1e-9) for k in range(6))


def test_standard_field_is_identity():
    cx = extract(standard_configuration(TRI, 4), TRI, EPS, RHO)
    fld = build_deformation(cx, TRI)
    assert all(np.allclose(e.gradient, np.eye(2), atol=1e-12) for e in fld.entries)
    op, R = order_parameter(fld)
    assert op <= 1e-20 and np.allclose(R, np.eye(2))


@settings(max_examples=10, deadline=None)
@given(st.floats(-math.pi / 6 + 0.01, math.pi / 6 - 0.01))
def test_rotated_patch(th):
    Q = rotation_2d(th)
    P = _patch(Q)
    cx = extract(P, TRI, EPS, RHO)
    fld = build_deformation(cx, TRI)
    assert all(np.allclose(e.gradient, Q.T, atol=1e-9) for e in fld.entries)
    op, R = order_parameter(fld)
    assert op <= 1e-18 and np.allclose(R, Q.T, atol=1e-9)
    assert all(local_distortion(fld, k) <= 1e-18 for k in range(fld.n_tiles))
    tree = labelled_spanning_tree(cx, fld, TRI)
    assert tree_lower_bound(tree, P, Q.T) <= 1e-18


def test_dilated_patch():
    s = 1.02
    cx = extract(_patch(s=s), TRI, EPS, RHO)
    fld = build_deformation(cx, TRI)
    assert all(np.allclose(e.gradient, np.eye(2) / s, atol=1e-12) for e in fld.entries)
    lam = s * s * math.sqrt(3) / 4
    want = lam * 2 * (1 - 1 / s) ** 2
    for k in range(fld.n_tiles):
        assert local_distortion(fld, k) == pytest.approx(want, rel=1e-9)
    op, R = order_parameter(fld)
    assert op == pytest.approx(want, rel=1e-9)
    assert np.allclose(R, np.eye(2))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_order_parameter_matches_angle_scan(seed):
    rng = np.random.default_rng(seed)
    P = _patch(rotation_2d(rng.uniform(-3, 3)), s=1.01)
    P = PointConfig(P.dom, P.points + rng.uniform(-0.004, 0.004, P.points.shape))
    cx = extract(P, TRI, EPS, RHO)
    if not cx.tiles:
        return
    fld = build_deformation(cx, TRI)
    op, _ = order_parameter(fld)
    assert op <= _angle_scan(fld) + 1e-12
    assert op == pytest.approx(_angle_scan(fld), abs=1e-6)


def test_rotation_equivariance():
    rng = np.random.default_rng(3)
    P = _patch(s=1.01)
    P = PointConfig(P.dom, P.points + rng.uniform(-0.003, 0.003, P.points.shape))
    Q = rotation_2d(0.8)
    P2 = PointConfig(P.dom, (P.points - CENTRE) @ Q.T + CENTRE)
    f1 = build_deformation(extract(P, TRI, EPS, RHO), TRI)
    f2 = build_deformation(extract(P2, TRI, EPS, RHO), TRI)
    v1, R1 = order_parameter(f1)
    v2, R2 = order_parameter(f2)
    assert v2 == pytest.approx(v1, abs=1e-9)
    # charts pick the lowest-deviation correspondence, so R* is defined modulo the 60-degree symmetry
    assert _same_mod_hexagonal(R2, R1 @ Q.T)


def test_large_rotation_reduces_modulo_symmetry():
    Q = rotation_2d(2.0)
    op, R = order_parameter(build_deformation(extract(_patch(Q), TRI, EPS, RHO), TRI))
    assert op <= 1e-18 and _same_mod_hexagonal(R, Q.T)


def test_spanning_tree_of_standard_configuration():
    P = standard_configuration(TRI, 4)
    cx = extract(P, TRI, EPS, RHO)
    fld = build_deformation(cx, TRI)
    tree = labelled_spanning_tree(cx, fld, TRI)
    assert tree.n_edges == 15
    assert labels_in_set(tree, TRI)
    assert all(tree.order.index(tree.parent[c]) < tree.order.index(c) for c in tree.parent)
    assert tree_lower_bound(tree, P, np.eye(2)) == pytest.approx(0.0, abs=1e-24)


def test_single_tile_tree():
    P = PointConfig(TRI.domain(6), TRI.prototiles[0].corners + 2.0)
    cx = extract(P, TRI, EPS, RHO)
    tree = labelled_spanning_tree(cx, build_deformation(cx, TRI), TRI)
    assert tree.n_edges == 2


def test_tile_ratios_bound_global_ratio():
    rng = np.random.default_rng(4)
    P = standard_configuration(TRI, 4)
    P = PointConfig(P.dom, P.points + rng.uniform(-0.005, 0.005, P.points.shape))
    cx = extract(P, TRI, EPS, RHO)
    fld = build_deformation(cx, TRI)
    _, R = order_parameter(fld)
    tree = labelled_spanning_tree(cx, fld, TRI)
    terms = tree_edge_terms(tree, P, R)
    assert terms.sum() == pytest.approx(tree_lower_bound(tree, P, R))
    ratios = tile_tree_ratios(fld, tree, P, R)
    owned_mass = sum(
        sum(e.weight * float(np.sum((e.gradient - R) ** 2)) for e in fld.entries if e.tile == t) for t in ratios)
    assert min(ratios.values()) <= owned_mass / terms.sum() + 1e-12
    assert min(ratios.values()) <= field_distance(fld, R) / terms.sum() + 1e-12


def test_empty_field_raises():
    from crystalsym.deformation import DeformationField
    with pytest.raises(ValueError):
        order_parameter(DeformationField([], 0, 2))
