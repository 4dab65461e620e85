# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 2D kernels; mirrors crystalsym._kernels_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot, atan2, cos, sin, INFINITY

cnp.import_array()


cdef inline double _seg_point(double px, double py, double ax, double ay, double bx, double by) noexcept nogil:
    cdef double dx = bx - ax, dy = by - ay
    cdef double L = dx * dx + dy * dy
    cdef double t
    if L <= 0.0:
        return hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return hypot(px - ax - t * dx, py - ay - t * dy)


cdef inline double _cross(double ox, double oy, double ax, double ay, double bx, double by) noexcept nogil:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


cdef inline double _seg_seg(double ax, double ay, double bx, double by,
                            double cx, double cy, double dx, double dy) noexcept nogil:
    cdef double d1 = _cross(cx, cy, dx, dy, ax, ay)
    cdef double d2 = _cross(cx, cy, dx, dy, bx, by)
    cdef double d3 = _cross(ax, ay, bx, by, cx, cy)
    cdef double d4 = _cross(ax, ay, bx, by, dx, dy)
    cdef double best, v
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return 0.0
    best = _seg_point(ax, ay, cx, cy, dx, dy)
    v = _seg_point(bx, by, cx, cy, dx, dy)
    if v < best:
        best = v
    v = _seg_point(cx, cy, ax, ay, bx, by)
    if v < best:
        best = v
    v = _seg_point(dx, dy, ax, ay, bx, by)
    if v < best:
        best = v
    return best


cdef double _gap(const double[:, :] P, const double[:, :] Q) noexcept nogil:
    cdef double best = INFINITY
    cdef double nx, ny, L, pmin, pmax, qmin, qmax, v, ov
    cdef Py_ssize_t i, j, k, n, side
    cdef const double[:, :] poly
    for side in range(2):
        if side == 0:
            poly = P
        else:
            poly = Q
        n = poly.shape[0]
        for i in range(n):
            j = (i + 1) % n
            nx = poly[j, 1] - poly[i, 1]
            ny = poly[i, 0] - poly[j, 0]
            L = hypot(nx, ny)
            if L == 0.0:
                continue
            nx = nx / L
            ny = ny / L
            pmin = P[0, 0] * nx + P[0, 1] * ny
            pmax = pmin
            for k in range(1, P.shape[0]):
                v = P[k, 0] * nx + P[k, 1] * ny
                if v < pmin:
                    pmin = v
                if v > pmax:
                    pmax = v
            qmin = Q[0, 0] * nx + Q[0, 1] * ny
            qmax = qmin
            for k in range(1, Q.shape[0]):
                v = Q[k, 0] * nx + Q[k, 1] * ny
                if v < qmin:
                    qmin = v
                if v > qmax:
                    qmax = v
            ov = (pmax if pmax < qmax else qmax) - (pmin if pmin > qmin else qmin)
            if ov < best:
                best = ov
    return best


def polygon_gap(const double[:, :] P, const double[:, :] Q):
    return _gap(P, Q)


def polygon_distance(const double[:, :] P, const double[:, :] Q):
    cdef double best = INFINITY, v
    cdef Py_ssize_t i, i2, j, j2, n = P.shape[0], m = Q.shape[0]
    if _gap(P, Q) >= 0.0:
        return 0.0
    for i in range(n):
        i2 = (i + 1) % n
        for j in range(m):
            j2 = (j + 1) % m
            v = _seg_seg(P[i, 0], P[i, 1], P[i2, 0], P[i2, 1], Q[j, 0], Q[j, 1], Q[j2, 0], Q[j2, 1])
            if v < best:
                best = v
    return best


cdef double _point_poly(double x, double y, const double[:, :] P) noexcept nogil:
    cdef Py_ssize_t i, j, n = P.shape[0]
    cdef bint inside = True
    cdef double best = INFINITY, v
    for i in range(n):
        j = (i + 1) % n
        if _cross(P[i, 0], P[i, 1], P[j, 0], P[j, 1], x, y) < 0.0:
            inside = False
        v = _seg_point(x, y, P[i, 0], P[i, 1], P[j, 0], P[j, 1])
        if v < best:
            best = v
    if inside:
        return 0.0
    return best


def point_polygon_distance(double x, double y, const double[:, :] P):
    return _point_poly(x, y, P)


def points_polygon_distance(const double[:, :] X, const double[:, :] P):
    cdef Py_ssize_t k, m = X.shape[0]
    out = np.empty(m)
    cdef double[:] o = out
    with nogil:
        for k in range(m):
            o[k] = _point_poly(X[k, 0], X[k, 1], P)
    return out


def match_2d(const double[:, :] X, const double[:, :] S, const long[:, :] perms):
    cdef Py_ssize_t n = X.shape[0], k, i
    cdef double mx = 0.0, my = 0.0, sx, sy, h00, h01, h10, h11, ax, ay, bx, by
    cdef double th, c, s, dev, ex, ey, v
    cdef Py_ssize_t best_k = -1
    cdef double best_dev = INFINITY, best_th = 0.0
    for i in range(n):
        mx += X[i, 0]
        my += X[i, 1]
    mx /= n
    my /= n
    for k in range(perms.shape[0]):
        sx = 0.0
        sy = 0.0
        for i in range(n):
            sx += S[perms[k, i], 0]
            sy += S[perms[k, i], 1]
        sx /= n
        sy /= n
        h00 = 0.0
        h01 = 0.0
        h10 = 0.0
        h11 = 0.0
        for i in range(n):
            ax = X[i, 0] - mx
            ay = X[i, 1] - my
            bx = S[perms[k, i], 0] - sx
            by = S[perms[k, i], 1] - sy
            h00 += ax * bx
            h01 += ax * by
            h10 += ay * bx
            h11 += ay * by
        th = atan2(h10 - h01, h00 + h11)
        c = cos(th)
        s = sin(th)
        dev = 0.0
        for i in range(n):
            bx = S[perms[k, i], 0] - sx
            by = S[perms[k, i], 1] - sy
            ex = X[i, 0] - mx - (c * bx - s * by)
            ey = X[i, 1] - my - (s * bx + c * by)
            v = hypot(ex, ey)
            if v > dev:
                dev = v
        if dev < best_dev:
            best_k = k
            best_dev = dev
            best_th = th
    return best_k, best_dev, best_th


def pair_conflict_2d(const double[:, :] A, const double[:, :] B, const signed char[:] a_free,
                     const signed char[:] b_free, bint any_shared, double three_rho, double tol):
    cdef Py_ssize_t k
    if not any_shared:
        return polygon_distance(A, B) <= three_rho
    if _gap(A, B) > tol:
        return True
    for k in range(A.shape[0]):
        if a_free[k] and _point_poly(A[k, 0], A[k, 1], B) <= three_rho:
            return True
    for k in range(B.shape[0]):
        if b_free[k] and _point_poly(B[k, 0], B[k, 1], A) <= three_rho:
            return True
    return False


cdef int[4][3] TET_FACES = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]
cdef int[6][2] TET_EDGES = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]


cdef inline double _dot3(double* a, double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef double _pt_tri(double* p, double* a, double* b, double* c) noexcept nogil:
    # closest point on a triangle by Voronoi region
    cdef double ab[3]
    cdef double ac[3]
    cdef double ap[3]
    cdef double bp[3]
    cdef double cp[3]
    cdef double q[3]
    cdef double d1, d2, d3, d4, d5, d6, va, vb, vc, v, w, den
    cdef int i
    for i in range(3):
        ab[i] = b[i] - a[i]
        ac[i] = c[i] - a[i]
        ap[i] = p[i] - a[i]
        bp[i] = p[i] - b[i]
        cp[i] = p[i] - c[i]
    d1 = _dot3(ab, ap)
    d2 = _dot3(ac, ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return sqrt(_dot3(ap, ap))
    d3 = _dot3(ab, bp)
    d4 = _dot3(ac, bp)
    if d3 >= 0.0 and d4 <= d3:
        return sqrt(_dot3(bp, bp))
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        for i in range(3):
            q[i] = ap[i] - v * ab[i]
        return sqrt(_dot3(q, q))
    d5 = _dot3(ab, cp)
    d6 = _dot3(ac, cp)
    if d6 >= 0.0 and d5 <= d6:
        return sqrt(_dot3(cp, cp))
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        for i in range(3):
            q[i] = ap[i] - w * ac[i]
        return sqrt(_dot3(q, q))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        for i in range(3):
            q[i] = bp[i] - w * (c[i] - b[i])
        return sqrt(_dot3(q, q))
    den = 1.0 / (va + vb + vc)
    v = vb * den
    w = vc * den
    for i in range(3):
        q[i] = ap[i] - ab[i] * v - ac[i] * w
    return sqrt(_dot3(q, q))


def points_tetra_distance(X, S):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :, ::1] Sv = np.ascontiguousarray(S, dtype=np.float64)
    cdef Py_ssize_t p = Xv.shape[0], m = Sv.shape[0], i, t, f, r, c
    out = np.empty(p)
    cdef double[::1] o = out
    inv_np = np.zeros((m, 3, 3))
    ok_np = np.zeros(m, dtype=np.int8)
    T = np.transpose(np.asarray(Sv)[:, 1:] - np.asarray(Sv)[:, :1], (0, 2, 1))
    for t in range(m):
        if abs(np.linalg.det(T[t])) > 1e-300:
            inv_np[t] = np.linalg.inv(T[t])
            ok_np[t] = 1
    cdef double[:, :, ::1] inv = inv_np
    cdef signed char[::1] ok = ok_np
    cdef double best, v, s, lam, rel[3]
    cdef double pt[3]
    cdef double A[3]
    cdef double B[3]
    cdef double C[3]
    cdef bint inside
    with nogil:
        for i in range(p):
            best = INFINITY
            pt[0] = Xv[i, 0]
            pt[1] = Xv[i, 1]
            pt[2] = Xv[i, 2]
            for t in range(m):
                if ok[t]:
                    for c in range(3):
                        rel[c] = pt[c] - Sv[t, 0, c]
                    inside = True
                    s = 0.0
                    for r in range(3):
                        lam = inv[t, r, 0] * rel[0] + inv[t, r, 1] * rel[1] + inv[t, r, 2] * rel[2]
                        if lam < -1e-12:
                            inside = False
                        s += lam
                    if inside and s <= 1.0 + 1e-12:
                        best = 0.0
                        break
                for f in range(4):
                    for c in range(3):
                        A[c] = Sv[t, TET_FACES[f][0], c]
                        B[c] = Sv[t, TET_FACES[f][1], c]
                        C[c] = Sv[t, TET_FACES[f][2], c]
                    v = _pt_tri(pt, A, B, C)
                    if v < best:
                        best = v
            o[i] = best
    return out


cdef void _tet_frame(const double[:, :, ::1] S, Py_ssize_t t, double* N, double* E) noexcept nogil:
    cdef int f, c
    cdef double u[3]
    cdef double w[3]
    cdef double L
    for f in range(4):
        for c in range(3):
            u[c] = S[t, TET_FACES[f][1], c] - S[t, TET_FACES[f][0], c]
            w[c] = S[t, TET_FACES[f][2], c] - S[t, TET_FACES[f][0], c]
        N[3 * f] = u[1] * w[2] - u[2] * w[1]
        N[3 * f + 1] = u[2] * w[0] - u[0] * w[2]
        N[3 * f + 2] = u[0] * w[1] - u[1] * w[0]
        L = sqrt(_dot3(&N[3 * f], &N[3 * f]))
        if L > 1e-12:
            for c in range(3):
                N[3 * f + c] /= L
        else:
            for c in range(3):
                N[3 * f + c] = 0.0
    for f in range(6):
        for c in range(3):
            E[3 * f + c] = S[t, TET_EDGES[f][1], c] - S[t, TET_EDGES[f][0], c]


cdef inline double _axis_overlap(const double[:, :, ::1] SA, Py_ssize_t a, const double[:, :, ::1] SB,
                                 Py_ssize_t b, double* ax) noexcept nogil:
    cdef double amin = INFINITY, amax = -INFINITY, bmin = INFINITY, bmax = -INFINITY, v
    cdef int k
    for k in range(4):
        v = SA[a, k, 0] * ax[0] + SA[a, k, 1] * ax[1] + SA[a, k, 2] * ax[2]
        if v < amin:
            amin = v
        if v > amax:
            amax = v
        v = SB[b, k, 0] * ax[0] + SB[b, k, 1] * ax[1] + SB[b, k, 2] * ax[2]
        if v < bmin:
            bmin = v
        if v > bmax:
            bmax = v
    return (amax if amax < bmax else bmax) - (amin if amin > bmin else bmin)


def tetra_overlap(SA_, SB_):
    cdef const double[:, :, ::1] SA = np.ascontiguousarray(SA_, dtype=np.float64)
    cdef const double[:, :, ::1] SB = np.ascontiguousarray(SB_, dtype=np.float64)
    cdef Py_ssize_t m = SA.shape[0], n = SB.shape[0], a, b
    cdef double NA[12]
    cdef double EA[18]
    cdef double NB[12]
    cdef double EB[18]
    cdef double ax[3]
    cdef double best = -INFINITY, gap, v, L
    cdef int f, g
    with nogil:
        for a in range(m):
            _tet_frame(SA, a, NA, EA)
            for b in range(n):
                _tet_frame(SB, b, NB, EB)
                gap = INFINITY
                for f in range(4):
                    if NA[3 * f] != 0.0 or NA[3 * f + 1] != 0.0 or NA[3 * f + 2] != 0.0:
                        v = _axis_overlap(SA, a, SB, b, &NA[3 * f])
                        if v < gap:
                            gap = v
                    if NB[3 * f] != 0.0 or NB[3 * f + 1] != 0.0 or NB[3 * f + 2] != 0.0:
                        v = _axis_overlap(SA, a, SB, b, &NB[3 * f])
                        if v < gap:
                            gap = v
                for f in range(6):
                    for g in range(6):
                        ax[0] = EA[3 * f + 1] * EB[3 * g + 2] - EA[3 * f + 2] * EB[3 * g + 1]
                        ax[1] = EA[3 * f + 2] * EB[3 * g] - EA[3 * f] * EB[3 * g + 2]
                        ax[2] = EA[3 * f] * EB[3 * g + 1] - EA[3 * f + 1] * EB[3 * g]
                        L = sqrt(_dot3(ax, ax))
                        if L <= 1e-12:
                            continue
                        ax[0] /= L
                        ax[1] /= L
                        ax[2] /= L
                        v = _axis_overlap(SA, a, SB, b, ax)
                        if v < gap:
                            gap = v
                if gap > best:
                    best = gap
    return best
