"""Distances and overlap tests between small convex polytopes given by their corners."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from . import kernels

def ccw_order(points: np.ndarray) -> np.ndarray:
    """Indices ordering the corners of a convex polygon counter-clockwise."""
    c = points.mean(axis=0)
    ang = np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0])
    return np.argsort(ang, kind="stable")


def _as_polygon(points: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(points[ccw_order(points)], dtype=float)


def min_norm_point(P: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Point of conv(rows of P) closest to the origin (Wolfe's algorithm)."""
    P = np.asarray(P, float)
    scale = max(1.0, float(np.max(np.einsum("nd,nd->n", P, P))))
    S = [int(np.argmin(np.einsum("nd,nd->n", P, P)))]
    w = np.array([1.0])
    x = P[S[0]].copy()
    for _ in range(50 * len(P) + 50):
        j = int(np.argmin(P @ x))
        if x @ x - P[j] @ x <= tol * scale or j in S:
            break
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            Q = P[S]
            k = len(S)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = Q @ Q.T
            K[:k, k] = 1.0
            K[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            v = np.linalg.lstsq(K, rhs, rcond=None)[0][:k]
            if np.all(v > tol):
                w = v
                break
            neg = v <= tol
            theta = min(1.0, float(np.min(w[neg] / (w[neg] - v[neg]))))
            w = theta * v + (1 - theta) * w
            keep = w > tol
            if not np.any(keep):
                keep[np.argmax(w)] = True
            S = [s for s, f in zip(S, keep) if f]
            w = w[keep] / w[keep].sum()
        x = w @ P[S]
    return x


def _hull_distance(A: np.ndarray, B: np.ndarray) -> float:
    D = (A[:, None, :] - B[None, :, :]).reshape(-1, A.shape[1])
    return float(np.linalg.norm(min_norm_point(D)))


def convex_distance(A: np.ndarray, B: np.ndarray) -> float:
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    if A.shape[1] == 2:
        if len(A) >= 3 and len(B) >= 3:
            return float(kernels.polygon_distance(_as_polygon(A), _as_polygon(B)))
    return _hull_distance(A, B)


def point_convex_distance(x: np.ndarray, A: np.ndarray) -> float:
    A = np.asarray(A, float)
    x = np.asarray(x, float)
    if A.shape[1] == 2 and len(A) >= 3:
        return float(kernels.point_polygon_distance(float(x[0]), float(x[1]), _as_polygon(A)))
    return _hull_distance(x[None, :], A)


def halfspaces(A: np.ndarray) -> np.ndarray:
    eq = ConvexHull(A).equations
    return eq / np.linalg.norm(eq[:, :-1], axis=1, keepdims=True)


def overlap_depth(A: np.ndarray, B: np.ndarray) -> float:
    """Positive iff the interiors intersect; magnitude is a penetration depth."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    if A.shape[1] == 2:
        return float(kernels.polygon_gap(_as_polygon(A), _as_polygon(B)))
    H = np.vstack([halfspaces(A), halfspaces(B)])
    d = A.shape[1]
    # maximize s subject to n.x + s <= -c
    A_ub = np.hstack([H[:, :d], np.ones((len(H), 1))])
    b_ub = -H[:, d]
    c = np.zeros(d + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * d + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        return -math.inf
    return float(res.x[-1])
