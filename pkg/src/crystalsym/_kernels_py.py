"""Pure-Python 2D kernels; same signatures as the compiled module."""

import math

import numpy as np


def _seg_point(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L = dx * dx + dy * dy
    if L <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - ax - t * dx, py - ay - t * dy)


def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _seg_seg(ax, ay, bx, by, cx, cy, dx, dy):
    d1 = _cross(cx, cy, dx, dy, ax, ay)
    d2 = _cross(cx, cy, dx, dy, bx, by)
    d3 = _cross(ax, ay, bx, by, cx, cy)
    d4 = _cross(ax, ay, bx, by, dx, dy)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return 0.0
    return min(
        _seg_point(ax, ay, cx, cy, dx, dy),
        _seg_point(bx, by, cx, cy, dx, dy),
        _seg_point(cx, cy, ax, ay, bx, by),
        _seg_point(dx, dy, ax, ay, bx, by),
    )


def polygon_gap(P, Q):
    """Smallest projected overlap over all edge normals of two CCW convex polygons.

    Positive: interiors overlap by at least that depth. Negative: separated.
    """
    best = math.inf
    for poly in (P, Q):
        n = poly.shape[0]
        for i in range(n):
            j = (i + 1) % n
            nx = poly[j, 1] - poly[i, 1]
            ny = poly[i, 0] - poly[j, 0]
            L = math.hypot(nx, ny)
            if L == 0.0:
                continue
            nx /= L
            ny /= L
            pmin = pmax = P[0, 0] * nx + P[0, 1] * ny
            for k in range(1, P.shape[0]):
                v = P[k, 0] * nx + P[k, 1] * ny
                pmin = min(pmin, v)
                pmax = max(pmax, v)
            qmin = qmax = Q[0, 0] * nx + Q[0, 1] * ny
            for k in range(1, Q.shape[0]):
                v = Q[k, 0] * nx + Q[k, 1] * ny
                qmin = min(qmin, v)
                qmax = max(qmax, v)
            ov = min(pmax, qmax) - max(pmin, qmin)
            if ov < best:
                best = ov
    return best


def polygon_distance(P, Q):
    """Euclidean distance between two CCW convex polygons (0 when they meet)."""
    if polygon_gap(P, Q) >= 0.0:
        return 0.0
    best = math.inf
    n, m = P.shape[0], Q.shape[0]
    for i in range(n):
        i2 = (i + 1) % n
        for j in range(m):
            j2 = (j + 1) % m
            v = _seg_seg(P[i, 0], P[i, 1], P[i2, 0], P[i2, 1], Q[j, 0], Q[j, 1], Q[j2, 0], Q[j2, 1])
            if v < best:
                best = v
    return best


def point_polygon_distance(x, y, P):
    n = P.shape[0]
    inside = True
    best = math.inf
    for i in range(n):
        j = (i + 1) % n
        if _cross(P[i, 0], P[i, 1], P[j, 0], P[j, 1], x, y) < 0.0:
            inside = False
        v = _seg_point(x, y, P[i, 0], P[i, 1], P[j, 0], P[j, 1])
        if v < best:
            best = v
    return 0.0 if inside else best


def points_polygon_distance(X, P):
    out = np.empty(X.shape[0])
    for k in range(X.shape[0]):
        out[k] = point_polygon_distance(X[k, 0], X[k, 1], P)
    return out


def match_2d(X, S, perms):
    """Kabsch over candidate correspondences; returns (best index, deviation, angle)."""
    n = X.shape[0]
    mx = X[:, 0].mean()
    my = X[:, 1].mean()
    best_k, best_dev, best_th = -1, math.inf, 0.0
    for k in range(perms.shape[0]):
        sx = sy = 0.0
        for i in range(n):
            sx += S[perms[k, i], 0]
            sy += S[perms[k, i], 1]
        sx /= n
        sy /= n
        h00 = h01 = h10 = h11 = 0.0
        for i in range(n):
            ax, ay = X[i, 0] - mx, X[i, 1] - my
            bx, by = S[perms[k, i], 0] - sx, S[perms[k, i], 1] - sy
            h00 += ax * bx
            h01 += ax * by
            h10 += ay * bx
            h11 += ay * by
        th = math.atan2(h10 - h01, h00 + h11)
        c, s = math.cos(th), math.sin(th)
        dev = 0.0
        for i in range(n):
            bx, by = S[perms[k, i], 0] - sx, S[perms[k, i], 1] - sy
            ex = X[i, 0] - mx - (c * bx - s * by)
            ey = X[i, 1] - my - (s * bx + c * by)
            v = math.hypot(ex, ey)
            if v > dev:
                dev = v
        if dev < best_dev:
            best_k, best_dev, best_th = k, dev, th
    return best_k, best_dev, best_th


def pair_conflict_2d(A, B, a_free, b_free, any_shared, three_rho, tol):
    """Conflict test for two CCW convex polygons already in a common frame.

    Without shared corners: conflict iff the distance is at most ``three_rho``.
    With shared corners: conflict iff the interiors overlap or a free corner of
    either polygon lies within ``three_rho`` of the other.
    """
    if not any_shared:
        return polygon_distance(A, B) <= three_rho
    if polygon_gap(A, B) > tol:
        return True
    for k in range(A.shape[0]):
        if a_free[k] and point_polygon_distance(A[k, 0], A[k, 1], B) <= three_rho:
            return True
    for k in range(B.shape[0]):
        if b_free[k] and point_polygon_distance(B[k, 0], B[k, 1], A) <= three_rho:
            return True
    return False


_TET_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])
_TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


def _unit(V: np.ndarray) -> tuple:
    n = np.linalg.norm(V, axis=-1, keepdims=True)
    ok = n[..., 0] > 1e-12
    return np.where(ok[..., None], V / np.where(n > 1e-12, n, 1.0), 0.0), ok


def tetra_overlap(SA: np.ndarray, SB: np.ndarray) -> float:
    """Largest separating-axis overlap over all pairs of tetrahedra from SA (m,4,3) and SB (n,4,3).

    Positive iff some pair has intersecting interiors.
    """
    def frame(S):
        F = S[:, _TET_FACES]
        N, _ = _unit(np.cross(F[:, :, 1] - F[:, :, 0], F[:, :, 2] - F[:, :, 0]))
        E = S[:, _TET_EDGES[:, 1]] - S[:, _TET_EDGES[:, 0]]
        return N, E

    NA, EA = frame(SA)
    NB, EB = frame(SB)
    m, n = len(SA), len(SB)
    C, okc = _unit(np.cross(EA[:, None, :, None, :], EB[None, :, None, :, :]).reshape(m, n, 36, 3))
    axes = np.concatenate([
        np.broadcast_to(NA[:, None], (m, n, 4, 3)),
        np.broadcast_to(NB[None, :], (m, n, 4, 3)),
        C,
    ], axis=2)
    valid = np.concatenate([np.ones((m, n, 8), bool), okc], axis=2)
    pa = np.einsum("mkd,mnad->mnak", SA, axes)
    pb = np.einsum("nkd,mnad->mnak", SB, axes)
    ov = np.minimum(pa.max(-1), pb.max(-1)) - np.maximum(pa.min(-1), pb.min(-1))
    ov = np.where(valid, ov, np.inf)
    return float(ov.min(axis=2).max())


def _segment_distances(X, A, B):
    D = B - A
    L = np.einsum("td,td->t", D, D)
    t = np.einsum("ptd,td->pt", X[:, None] - A[None], D) / np.where(L > 0, L, 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(X[:, None] - A[None] - t[..., None] * D[None], axis=-1)


def points_triangles_distance(X: np.ndarray, A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Distances (p, t) from points X to triangles with corners A, B, C (each (t,3))."""
    n, _ = _unit(np.cross(B - A, C - A))
    rel = X[:, None] - A[None]
    h = np.einsum("ptd,td->pt", rel, n)
    v2 = rel - h[..., None] * n[None]
    v0, v1 = B - A, C - A
    d00 = np.einsum("td,td->t", v0, v0)
    d01 = np.einsum("td,td->t", v0, v1)
    d11 = np.einsum("td,td->t", v1, v1)
    d20 = np.einsum("ptd,td->pt", v2, v0)
    d21 = np.einsum("ptd,td->pt", v2, v1)
    den = d00 * d11 - d01 * d01
    den = np.where(np.abs(den) > 1e-300, den, 1.0)
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    edge = np.minimum(np.minimum(_segment_distances(X, A, B), _segment_distances(X, B, C)),
                      _segment_distances(X, C, A))
    return np.where(inside, np.abs(h), edge)


def points_tetra_distance(X: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Distances from points X (p,3) to the union of tetrahedra S (m,4,3)."""
    X = np.atleast_2d(np.asarray(X, float))
    T = np.transpose(S[:, 1:] - S[:, :1], (0, 2, 1))
    lam = np.linalg.solve(T[None], (X[:, None] - S[None, :, 0])[..., None])[..., 0]
    inside = np.any((lam >= -1e-12).all(-1) & (lam.sum(-1) <= 1 + 1e-12), axis=1)
    F = S[:, _TET_FACES].reshape(-1, 3, 3)
    d = points_triangles_distance(X, F[:, 0], F[:, 1], F[:, 2]).min(axis=1)
    return np.where(inside, 0.0, d)
