"""Raster matrix fields, the discrete exterior derivative and rigidity-gap experiments."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .geometry import haar_rotation, nearest_rotation

GAP_HEADER = ["kind", "p", "eta", "lhs", "rhs1", "rhs2", "C1", "C2"]
_DYADIC = 2.0 ** 30
_MAGIC = b"RFLD0001"


@dataclass
class RasterField:
    """Cell-centred d x d matrix field on a parallelepiped ``origin + axes @ [0,1]^d``.

    ``values`` has shape ``shape + (d, d)``; ``periodic`` makes the domain a torus.
    """

    axes: np.ndarray
    origin: np.ndarray
    periodic: bool
    resolution: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.axes.shape[0]

    @property
    def shape(self) -> tuple:
        return self.values.shape[: self.d]

    @property
    def spacing(self) -> np.ndarray:
        """Column j is the grid step along axis j."""
        return self.axes / np.array(self.shape, float)[None, :]

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.spacing)))

    @property
    def orthogonal(self) -> bool:
        A = self.axes
        return bool(np.all(np.abs(A - np.diag(np.diag(A))) == 0.0))

    def centres(self) -> np.ndarray:
        grids = np.meshgrid(*[(np.arange(n) + 0.5) / n for n in self.shape], indexing="ij")
        frac = np.stack(grids, axis=-1)
        return self.origin + frac @ self.axes.T


def grid_shape(axes: np.ndarray, resolution: float) -> tuple:
    lengths = np.linalg.norm(axes, axis=0)
    return tuple(max(1, int(round(resolution * L))) for L in lengths)


def box_axes(lengths) -> tuple:
    """Axes and origin of a box centred at the origin."""
    A = np.diag(np.asarray(lengths, float))
    return A, -0.5 * np.asarray(lengths, float)


# pointwise helpers ------------------------------------------------------------------------


def dist_to_so_many(A: np.ndarray) -> np.ndarray:
    """Frobenius distance to SO(d) for stacked matrices."""
    d = A.shape[-1]
    if d == 2:
        p = 0.5 * (A[..., 0, 0] + A[..., 1, 1])
        q = 0.5 * (A[..., 1, 0] - A[..., 0, 1])
        r = 0.5 * (A[..., 0, 0] - A[..., 1, 1])
        s = 0.5 * (A[..., 0, 1] + A[..., 1, 0])
        return np.sqrt(2 * (np.hypot(p, q) - 1) ** 2 + 2 * (r * r + s * s))
    sv = np.linalg.svd(A, compute_uv=False)
    last = np.where(np.linalg.det(A) < 0, -sv[..., -1], sv[..., -1])
    return np.sqrt(np.sum((sv[..., :-1] - 1) ** 2, axis=-1) + (last - 1) ** 2)


def _rot_plane(theta: np.ndarray, d: int) -> np.ndarray:
    """Rotations by ``theta`` in the (x1, x2) plane, stacked."""
    out = np.zeros(theta.shape + (d, d))
    c, s = np.cos(theta), np.sin(theta)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    for k in range(2, d):
        out[..., k, k] = 1.0
    return out


def bump(r: np.ndarray) -> np.ndarray:
    """Smooth bump equal to 1 at 0 and vanishing for r >= 1."""
    r = np.asarray(r, float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


# field construction ---------------------------------------------------------------------------

FIELD_KINDS = ("constant_rotation", "gradient", "dislocation", "counterexample", "smooth_random")


def _vertex_grid(axes, origin, shape, periodic):
    counts = [n if periodic else n + 1 for n in shape]
    grids = np.meshgrid(*[np.arange(c) / n for c, n in zip(counts, shape)], indexing="ij")
    return origin + np.stack(grids, axis=-1) @ axes.T


def _forward_gradient(v: np.ndarray, shape, spacing_len, periodic) -> np.ndarray:
    """Cell gradient of vertex values ``v`` (shape + (d,)) by forward differences along each axis."""
    d = len(shape)
    out = np.zeros(tuple(shape) + (d, d))
    for k in range(d):
        if periodic:
            diff = np.roll(v, -1, axis=k) - v
        else:
            hi = [slice(None)] * d
            lo = [slice(None)] * d
            hi[k] = slice(1, None)
            lo[k] = slice(None, -1)
            diff = v[tuple(hi)] - v[tuple(lo)]
        crop = tuple(slice(0, n) for n in shape)
        out[..., :, k] = diff[crop] / spacing_len[k]
    return out


def _fourier_modes(rng, d, n_modes, max_freq):
    ks = rng.integers(-max_freq, max_freq + 1, size=(n_modes, d))
    ks[np.all(ks == 0, axis=1), 0] = 1
    phases = rng.uniform(0, 2 * math.pi, n_modes)
    amps = rng.normal(size=n_modes) / n_modes
    return ks, phases, amps


def make_field(kind: str, axes: np.ndarray, origin, resolution: float, params: Optional[dict] = None,
               rng: Optional[np.random.Generator] = None, periodic: bool = False) -> RasterField:
    """Build a field of the given kind; ``params['eta']`` pulls it back as V(y / eta)."""
    params = dict(params or {})
    rng = rng if rng is not None else np.random.default_rng(params.get("seed", 0))
    axes = np.asarray(axes, float)
    origin = np.asarray(origin, float)
    d = axes.shape[0]
    if resolution < 16:
        raise ValueError("resolution must be at least 16 cells per unit length")
    shape = grid_shape(axes, resolution)
    eta = float(params.get("eta", 1.0))
    R0 = np.asarray(params["rotation"], float) if "rotation" in params else None
    if kind == "constant_rotation":
        R = R0 if R0 is not None else haar_rotation(d, rng)
        vals = np.broadcast_to(R, shape + (d, d)).copy()
    elif kind == "gradient":
        if not np.allclose(axes, np.diag(np.diag(axes))):
            raise ValueError("gradient fields need an axis-aligned domain")
        R = R0 if R0 is not None else haar_rotation(d, rng)
        amp = float(params.get("amplitude", 0.01))
        ks, ph, am = _fourier_modes(rng, d, int(params.get("modes", 4)), int(params.get("max_freq", 2)))
        dirs = rng.normal(size=(len(am), d))
        L = np.diag(axes) / eta
        X = _vertex_grid(axes, origin, shape, periodic) / eta
        arg = 2 * math.pi * (X / L) @ ks.T + ph
        pert = eta * amp * (np.sin(arg) @ (am[:, None] * dirs))
        # dyadic values keep the discrete curl of the gradient exactly zero
        pert = np.round(pert * _DYADIC) / _DYADIC
        Rq = np.round(R * _DYADIC) / _DYADIC
        vals = Rq + _forward_gradient(pert, shape, np.diag(axes) / np.array(shape), periodic)
    elif kind == "dislocation":
        if d != 2 or periodic:
            raise ValueError("dislocation fields are two-dimensional on a box")
        b = np.asarray(params.get("burgers", (1.0, 0.0)), float) * eta
        core = origin + axes @ np.full(d, 0.5)
        if "core_offset" in params:
            core = core + np.asarray(params["core_offset"], float)
        else:
            # keep the core inside a plaquette, off the vertex lattice
            core = core + axes @ (np.array([0.5, 0.5]) / np.array(shape)) * 0.5
        X = _vertex_grid(axes, origin, shape, False)
        theta = np.arctan2(X[..., 1] - core[1], X[..., 0] - core[0])
        h = np.diag(axes) / np.array(shape)
        dth = np.zeros(shape + (2,))
        dx = theta[1:, :-1] - theta[:-1, :-1]
        dy = theta[:-1, 1:] - theta[:-1, :-1]
        dth[..., 0] = (dx + math.pi) % (2 * math.pi) - math.pi
        dth[..., 1] = (dy + math.pi) % (2 * math.pi) - math.pi
        grad = dth / h
        vals = np.broadcast_to(np.eye(2), shape + (2, 2)).copy()
        vals += (b[:, None] / (2 * math.pi))[None, None] * grad[..., None, :]
    elif kind == "counterexample":
        R = R0 if R0 is not None else np.eye(d)
        amp = float(params.get("amplitude", 1.0))
        radius = float(params.get("radius", 1.0))
        Y = _cell_centres(axes, origin, shape) / eta
        theta = amp * bump(np.linalg.norm(Y, axis=-1) / radius)
        vals = R @ _rot_plane(theta, d)
    elif kind == "smooth_random":
        amp = float(params.get("amplitude", 0.2))
        angle_amp = float(params.get("angle_amplitude", 1.0))
        Y = _cell_centres(axes, origin, shape) / eta
        L = np.linalg.norm(axes, axis=0) / eta
        ks, ph, am = _fourier_modes(rng, d, int(params.get("modes", 4)), int(params.get("max_freq", 2)))
        theta = angle_amp * np.sin(2 * math.pi * (Y / L) @ ks.T + ph) @ am
        ks2, ph2, am2 = _fourier_modes(rng, d, int(params.get("modes", 4)), int(params.get("max_freq", 2)))
        mats = rng.normal(size=(len(am2), d, d))
        S = np.einsum("...m,mij->...ij", np.sin(2 * math.pi * (Y / L) @ ks2.T + ph2) * am2, mats)
        vals = _rot_plane(theta, d) @ (np.eye(d) + amp * S)
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    meta = {"kind": kind, **{k: v for k, v in params.items() if k != "rotation"}}
    return RasterField(axes, origin, periodic, float(resolution), np.ascontiguousarray(vals), meta)


def _cell_centres(axes, origin, shape):
    grids = np.meshgrid(*[(np.arange(n) + 0.5) / n for n in shape], indexing="ij")
    return origin + np.stack(grids, axis=-1) @ axes.T


# exterior derivative ------------------------------------------------------------------------


def _fwd(a: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return np.roll(a, -1, axis=axis) - a
    return np.diff(a, axis=axis)


def curl_components(fld: RasterField) -> np.ndarray:
    """Coefficients of dV_i on dx_k ^ dx_l, shape ``grid + (d, n_pairs)`` with pairs k < l."""
    d = fld.d
    V = fld.values
    per = fld.periodic
    pairs = [(k, l) for k in range(d) for l in range(k + 1, d)]
    out = np.zeros(fld.shape + (d, len(pairs)))
    if not per and min(fld.shape) < 2:
        raise ValueError("box grids need at least two cells per axis")
    if fld.orthogonal:
        h = np.diag(fld.axes) / np.array(fld.shape, float)
        for j, (k, l) in enumerate(pairs):
            a = V[..., :, l]
            b = V[..., :, k]
            if per:
                c = _fwd(a, k, True) / h[k] - _fwd(b, l, True) / h[l]
            else:
                # both differences on the same plaquette so the curl of a gradient cancels exactly
                sk = [slice(None)] * a.ndim
                sl_ = [slice(None)] * a.ndim
                sk[l] = slice(0, fld.shape[l] - 1)
                sl_[k] = slice(0, fld.shape[k] - 1)
                c = _fwd(a, k, False)[tuple(sk)] / h[k] - _fwd(b, l, False)[tuple(sl_)] / h[l]
                pad = [(0, 0)] * c.ndim
                pad[k] = pad[l] = (0, 1)
                c = np.pad(c, pad, mode="edge")
            out[..., j] = c
        return out
    if d != 2:
        raise ValueError("skew grids are supported in two dimensions only")
    H = fld.spacing
    # circulation of each row around the plaquette spanned by the two grid steps
    e0 = V @ H[:, 0]
    e1 = V @ H[:, 1]
    if per:
        circ = _fwd(e1, 0, True) - _fwd(e0, 1, True)
    else:
        circ = _fwd(e1, 0, False)[:, :-1] - _fwd(e0, 1, False)[:-1, :]
        circ = np.pad(circ, [(0, 1), (0, 1), (0, 0)], mode="edge")
    out[..., 0] = circ / np.linalg.det(H)
    return out


def discrete_d(fld: RasterField, p: float) -> tuple:
    """``(||dV||_{L^p}, coefficients)`` with ``||dV||_p^p = sum_i sum_{k<l} int |coef|^p``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    coef = curl_components(fld)
    total = float(np.sum(np.abs(coef) ** p)) * fld.cell_volume
    return total ** (1.0 / p), coef


# rigidity gap ------------------------------------------------------------------------------------


@dataclass
class GapReport:
    lhs: float
    rhs1: float
    rhs2: float
    p: float
    rotation: np.ndarray
    kind: str = ""
    eta: float = 1.0


def rigidity_gap(fld: RasterField, p: float) -> GapReport:
    d = fld.d
    if p < 2 * d / (2 + d) - 1e-12:
        warnings.warn("p below 2d/(2+d): the estimate is not expected to hold", RuntimeWarning, stacklevel=2)
    vol = fld.cell_volume
    V = fld.values.reshape(-1, d, d)
    R = nearest_rotation(V.mean(axis=0)).rotation
    diff = V - R
    lhs = math.sqrt(float(np.sum(diff * diff)) * vol)
    rhs1 = math.sqrt(float(np.sum(dist_to_so_many(V) ** 2)) * vol)
    rhs2, _ = discrete_d(fld, p)
    return GapReport(lhs, rhs1, rhs2, float(p), R, fld.meta.get("kind", ""), float(fld.meta.get("eta", 1.0)))


def estimate_constants(reports: list, objective: str = "sum", tol: float = 1e-13) -> tuple:
    """Smallest (C1, C2) >= 0 with lhs <= C1 rhs1 + C2 rhs2 on every report.

    ``objective='sum'`` minimizes C1 + C2; ``'normalized'`` minimizes C1/C1_ref + C2/C2_ref with
    C_ref the largest single-term ratio, which makes the fit equivariant under rescaling of one column.
    """
    rows = [r for r in reports if r.lhs > tol]
    if not rows:
        return 0.0, 0.0
    A = np.array([[r.rhs1, r.rhs2] for r in rows])
    b = np.array([r.lhs for r in rows])
    if objective == "sum":
        c = np.ones(2)
    elif objective == "normalized":
        refs = []
        for j in range(2):
            ratios = [bi / a for bi, a in zip(b, A[:, j]) if a > tol]
            refs.append(max(ratios) if ratios else 1.0)
        c = 1.0 / np.array(refs)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    # columns that are zero on every row are unconstrained; pin them to zero
    bounds = [(0, None) if np.any(A[:, j] > tol) else (0, 0) for j in range(2)]
    res = linprog(c, A_ub=-A, b_ub=-b, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"constant fit failed: {res.message}")
    C1, C2 = (float(x) for x in res.x)
    # exact feasibility on the rows
    if np.any(A[:, 1] > tol):
        need = (b - C1 * A[:, 0]) / np.where(A[:, 1] > tol, A[:, 1], np.inf)
        C2 = max(C2, float(np.max(need)))
    if np.any(A[:, 0] > tol):
        need = (b - C2 * A[:, 1]) / np.where(A[:, 0] > tol, A[:, 0], np.inf)
        C1 = max(C1, float(np.max(need)))
    return C1, C2


def count_gap_violations(reports: list, C1: float, C2: float, rel: float = 1e-12, tol: float = 1e-13) -> int:
    return sum(1 for r in reports if r.lhs > (C1 * r.rhs1 + C2 * r.rhs2) * (1 + rel) + tol)


# experiments -----------------------------------------------------------------------------------

DEFAULT_SCALING_ENSEMBLE = (
    ("gradient", {"amplitude": 0.02}),
    ("gradient", {"amplitude": 0.05}),
    ("counterexample", {"amplitude": 0.5, "radius": 0.45}),
    ("counterexample", {"amplitude": 1.0, "radius": 0.35}),
    ("smooth_random", {"amplitude": 0.1}),
    ("smooth_random", {"amplitude": 0.3}),
    ("smooth_random", {"amplitude": 0.05, "angle_amplitude": 2.0}),
    ("constant_rotation", {}),
)


def ensemble_reports(ensemble, axes, origin, resolution, p, eta=1.0, seed=0, periodic=False) -> list:
    out = []
    for j, (kind, params) in enumerate(ensemble):
        prm = dict(params, eta=eta)
        rng = np.random.default_rng([seed, j])
        fld = make_field(kind, axes, origin, resolution, prm, rng, periodic)
        out.append(rigidity_gap(fld, p))
    return out


def mixed_ensemble(kinds, size: int, resolution: float, seed: int = 0, lengths=(1.0, 1.0)) -> list:
    """``size`` fields on a centred box cycling through ``kinds`` with randomized parameters."""
    rng = np.random.default_rng(seed)
    axes, origin = box_axes(lengths)
    out = []
    for j in range(size):
        kind = kinds[j % len(kinds)]
        if kind == "gradient":
            prm = {"amplitude": float(rng.uniform(0.005, 0.05))}
        elif kind == "dislocation":
            ang = rng.uniform(0, 2 * math.pi)
            mag = rng.uniform(0.02, 0.2)
            prm = {"burgers": (mag * math.cos(ang), mag * math.sin(ang))}
        elif kind == "counterexample":
            prm = {"amplitude": float(rng.uniform(0.2, 1.5)), "radius": float(rng.uniform(0.2, 0.5)),
                   "rotation": haar_rotation(len(lengths), rng)}
        elif kind == "smooth_random":
            prm = {"amplitude": float(rng.uniform(0.02, 0.3)), "angle_amplitude": float(rng.uniform(0.1, 2.0))}
        else:
            prm = {}
        out.append(make_field(kind, axes, origin, resolution, prm, np.random.default_rng([seed, j])))
    return out


@dataclass
class ScalingResult:
    etas: list
    C1: list
    C2: list
    slope_C1: float
    slope_C2: float
    reports: dict


def scaling_experiment(etas=(1, 2, 4, 8), p: float = 2.0, ensemble=DEFAULT_SCALING_ENSEMBLE,
                       resolution: float = 64, base_lengths=(1.0, 1.0), seed: int = 0,
                       objective: str = "normalized") -> ScalingResult:
    """Fit (C1, C2) on eta M for each eta with fields pulled back as V(y / eta); log-log slopes."""
    if len(etas) < 3:
        raise ValueError("need at least three scale factors")
    C1s, C2s, reps = [], [], {}
    for eta in etas:
        axes, origin = box_axes(np.asarray(base_lengths, float) * eta)
        r = ensemble_reports(ensemble, axes, origin, resolution, p, eta, seed)
        c1, c2 = estimate_constants(r, objective)
        C1s.append(c1)
        C2s.append(c2)
        reps[eta] = r
    x = np.log(np.asarray(etas, float))
    s1 = float(np.polyfit(x, np.log(C1s), 1)[0])
    s2 = float(np.polyfit(x, np.log(C2s), 1)[0])
    return ScalingResult(list(etas), C1s, C2s, s1, s2, reps)


@dataclass
class SharpnessRow:
    eta: float
    lhs: float
    rhs1: float
    rhs2: float

    @property
    def implied_C2(self) -> float:
        return self.lhs / self.rhs2 if self.rhs2 > 0 else math.inf


def sharpness_experiment(etas=(2, 4, 8), p: float = 2.0, resolution: float = 64, amplitude: float = 1.0,
                         rotation=None) -> list:
    """The same rotation-valued bump field on growing boxes eta M, M = [-1/2, 1/2]^2."""
    rows = []
    for eta in etas:
        axes, origin = box_axes((eta, eta))
        prm = {"amplitude": amplitude, "radius": 1.0}
        if rotation is not None:
            prm["rotation"] = rotation
        fld = make_field("counterexample", axes, origin, resolution, prm)
        g = rigidity_gap(fld, p)
        rows.append(SharpnessRow(float(eta), g.lhs, g.rhs1, g.rhs2))
    return rows


# extension into defects ----------------------------------------------------------------------


@dataclass
class ExtensionResult:
    field: RasterField
    distance: np.ndarray  # distance of each cell centre to the union of tiles (0 inside)
    inside: np.ndarray
    tube: np.ndarray
    far: np.ndarray
    far_rotation: np.ndarray


def _tile_simplices(cx, tess, field_entries):
    """Unwrapped simplex corners and their gradients."""
    simp, grads = [], []
    for e in field_entries:
        tile = cx.tiles[e.tile]
        proto = tess.prototiles[tile.type_id]
        local = tile.coords[np.argsort(tile.correspondence)]
        simp.append(local[list(proto.simplices[e.simplex])])
        grads.append(e.gradient)
    return np.array(simp), np.array(grads)


def _point_simplex_distance_2d(X, T):
    """Distances from points X (n,2) to one triangle T (3,2), and an inside mask."""
    a, b, c = T
    M = np.column_stack([b - a, c - a])
    lam = np.linalg.solve(M, (X - a).T).T
    inside = (lam[:, 0] >= -1e-12) & (lam[:, 1] >= -1e-12) & (lam.sum(axis=1) <= 1 + 1e-12)
    best = np.full(len(X), np.inf)
    for p, q in ((a, b), (b, c), (c, a)):
        D = q - p
        t = np.clip((X - p) @ D / (D @ D), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(X - p - t[:, None] * D, axis=1))
    return np.where(inside, 0.0, best), inside


def extend_into_defects(cx, tess, dfield, rho: float, resolution: float,
                        rng: np.random.Generator, dom=None) -> ExtensionResult:
    """Raster V over the torus: V on tiles, a random rotation beyond distance rho, a blend in between."""
    d = tess.d
    if d != 2:
        raise ValueError("defect extension is implemented for two-dimensional crystals")
    if rho * resolution < 4:
        raise ValueError("resolution too coarse: need at least 4 cells across rho")
    if dom is None:
        raise ValueError("torus domain required")
    axes = dom.period
    origin = np.zeros(d)
    shape = grid_shape(axes, resolution)
    X = _cell_centres(axes, origin, shape).reshape(-1, d)
    R_far = haar_rotation(d, rng)
    dist = np.full(len(X), np.inf)
    owner = np.full(len(X), -1)
    if dfield.entries:
        simp, grads = _tile_simplices(cx, tess, dfield.entries)
        reach = rho + float(np.max(np.linalg.norm(simp - simp.mean(axis=1, keepdims=True), axis=-1)))
        # nearest periodic image by rounding fractional coordinates; exact while reach is far below the period
        if reach >= 0.25 * dom.shortest_period:
            raise ValueError("torus too small for the extension search radius")
        inv = np.linalg.inv(axes)
        Xf = X @ inv.T
        for s, T in enumerate(simp):
            cen = T.mean(axis=0)
            rf = Xf - inv @ cen
            rf -= np.round(rf)
            rel = rf @ axes.T
            near = np.flatnonzero(np.einsum("ij,ij->i", rel, rel) <= reach * reach)
            if not len(near):
                continue
            dd, _ = _point_simplex_distance_2d(rel[near], T - cen)
            better = dd < dist[near]
            dist[near[better]] = dd[better]
            owner[near[better]] = s
    else:
        grads = np.zeros((0, d, d))
    inside = dist <= 0.0
    g = np.clip(dist / rho, 0.0, 1.0)
    vals = np.broadcast_to(R_far, (len(X), d, d)).copy()
    has = owner >= 0
    Vb = grads[owner[has]]
    vals[has] = (1 - g[has])[:, None, None] * Vb + g[has][:, None, None] * R_far
    tube = has & ~inside & (dist < rho)
    far = ~inside & ~tube
    vals[far] = R_far
    fld = RasterField(axes, origin, True, float(resolution), vals.reshape(shape + (d, d)),
                      {"kind": "defect_extension", "rho": rho})
    return ExtensionResult(fld, dist.reshape(shape), inside.reshape(shape), tube.reshape(shape),
                           far.reshape(shape), R_far)


# io ---------------------------------------------------------------------------------------------


def write_field(fld: RasterField, path) -> None:
    """Flat binary: magic, int64 d, int64 shape[d], float64 resolution, then row-major float64 values."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.array([fld.d, *fld.shape], dtype="<i8").tobytes())
        fh.write(np.array([fld.resolution], dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())
    side = {
        "axes": fld.axes.tolist(),
        "origin": fld.origin.tolist(),
        "periodic": fld.periodic,
        "resolution": fld.resolution,
        "shape": list(fld.shape),
        "meta": fld.meta,
    }
    with open(os.fspath(path) + ".json", "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True, default=float)


def read_field(path) -> RasterField:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a raster field file")
        d = int(np.frombuffer(fh.read(8), "<i8")[0])
        shape = tuple(int(v) for v in np.frombuffer(fh.read(8 * d), "<i8"))
        res = float(np.frombuffer(fh.read(8), "<f8")[0])
        vals = np.frombuffer(fh.read(), "<f8").reshape(shape + (d, d)).copy()
    with open(os.fspath(path) + ".json") as fh:
        side = json.load(fh)
    return RasterField(np.array(side["axes"], float), np.array(side["origin"], float), bool(side["periodic"]),
                       res, vals, side.get("meta", {}))


def append_gap_csv(path, reports: list, C1: float, C2: float) -> None:
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(GAP_HEADER)
        for r in reports:
            w.writerow([r.kind, "%.17g" % r.p, "%.17g" % r.eta, "%.17g" % r.lhs, "%.17g" % r.rhs1,
                        "%.17g" % r.rhs2, "%.17g" % C1, "%.17g" % C2])
