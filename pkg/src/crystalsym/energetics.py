"""Local energies, the total Hamiltonian, reference configurations and the local lower bound."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import linprog

from .extraction import PointConfig, TileComplex, hull_volume, tile_gradients
from .geometry import nearest_rotation
from .tessellation import Tessellation, TessellationConstants, build_patch, compute_constants


@dataclass(frozen=True)
class PotentialSpec:
    """Pair potential on ``[1 - alpha, 1 + alpha]`` with its second derivative."""

    alpha: float
    func: Callable[[float], float]
    d2: Callable[[float], float]
    d1: Callable[[float], float]
    name: str = "custom"

    def __call__(self, r: float) -> float:
        if not (1 - self.alpha - 1e-12 <= r <= 1 + self.alpha + 1e-12):
            raise ValueError(f"length {r:.6g} outside potential domain [1-{self.alpha}, 1+{self.alpha}]")
        return self.func(r)

    def validate(self) -> None:
        xs = np.linspace(1 - self.alpha, 1 + self.alpha, 64)
        if min(self.d2(float(x)) for x in xs) <= 0:
            raise ValueError("potential is not strictly convex on its domain")
        if abs(self.d1(1.0)) > 1e-9:
            raise ValueError("potential derivative at 1 is not zero")

    def sup_abs(self) -> float:
        xs = np.linspace(1 - self.alpha, 1 + self.alpha, 2001)
        return float(max(abs(self.func(float(x))) for x in xs))


def quadratic_potential(alpha: float = 0.25) -> PotentialSpec:
    return PotentialSpec(alpha, lambda r: (r - 1.0) ** 2, lambda r: 2.0, lambda r: 2.0 * (r - 1.0), "quadratic")


def tabulated_potential(path, alpha: float) -> PotentialSpec:
    """Potential from a two-column CSV ``r,phi`` interpolated by a cubic spline."""
    rs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                r, v = float(row[0]), float(row[1])
            except ValueError:
                continue
            rs.append(r)
            vs.append(v)
    spline = CubicSpline(np.array(rs), np.array(vs))
    d1, d2 = spline.derivative(1), spline.derivative(2)
    return PotentialSpec(alpha, lambda r: float(spline(r)), lambda r: float(d2(r)), lambda r: float(d1(r)),
                         f"table:{path}")


def potential_from_name(name: str, alpha: float) -> PotentialSpec:
    if name == "quadratic":
        return quadratic_potential(alpha)
    if name.startswith("table:"):
        return tabulated_potential(name[len("table:"):], alpha)
    raise ValueError(f"unknown potential {name!r}")


@dataclass
class ModelParams:
    eps: float = 0.05
    rho: float = 0.1
    c0: float = 0.5
    ell: float = 1.0
    alpha: float = 0.25
    sigma: float = 10.0
    m: float = 2.0
    beta: float = 10.0
    potential: str = "quadratic"
    c1: Optional[float] = None
    c2: Optional[float] = None
    tilde_multiplicity: str = "pair"
    phi: PotentialSpec = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.phi is None:
            self.phi = potential_from_name(self.potential, self.alpha)

    def validate(self, tess: Tessellation, consts: Optional[TessellationConstants] = None) -> None:
        consts = consts or compute_constants(tess)
        if not self.eps > 0 or not self.eps < self.alpha / 4:
            raise ValueError("need 0 < eps < alpha/4")
        if not 0 < self.rho < consts.rho_max:
            raise ValueError(f"need 0 < rho < rho_max = {consts.rho_max:.6g}")
        if tess.name == "triangular" and not self.rho < self.ell / 3:
            raise ValueError("need rho < ell/3")
        if not (1 - self.alpha / 2 < self.ell < 1 + self.alpha / 2):
            raise ValueError("need ell in (1 - alpha/2, 1 + alpha/2)")
        if self.sigma < 0:
            raise ValueError("need sigma >= 0")
        if not self.beta > 0:
            raise ValueError("need beta > 0")
        if not 0 <= self.c0:
            raise ValueError("need c0 >= 0")
        if self.tilde_multiplicity not in ("pair", "tile"):
            raise ValueError("tilde multiplicity must be 'pair' or 'tile'")
        self.phi.validate()

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("phi")
        return d


# local energies ---------------------------------------------------------------------


def local_energy_triangular(coords: np.ndarray, phi: PotentialSpec, ell: float = 1.0) -> float:
    x = np.asarray(coords, float)
    r01 = float(np.linalg.norm(x[0] - x[1]))
    r12 = float(np.linalg.norm(x[1] - x[2]))
    r20 = float(np.linalg.norm(x[2] - x[0]))
    return 0.5 * (phi(r01) + phi(r12) + phi(r20))


def local_energy_cubic(coords: np.ndarray, correspondence, proto, phi, ell: float = 1.0) -> float:
    """Sum over all corner pairs of ``phi(|x_k - x_j| / (|s_k - s_j| / ell))``.

    ``phi`` may be a single potential or a mapping from prototile pair to potential.
    """
    x = np.asarray(coords, float)
    inv = {p: k for k, p in enumerate(correspondence)}
    total = 0.0
    for a, b in proto.edge_pairs + proto.diagonal_pairs:
        ratio = float(np.linalg.norm(x[inv[a]] - x[inv[b]])) / (float(np.linalg.norm(proto.corners[a] - proto.corners[b])) / ell)
        pot = phi[(a, b)] if isinstance(phi, dict) else phi
        total += pot(ratio)
    return total


def local_energy(tile, tess: Tessellation, phi: PotentialSpec, ell: float) -> float:
    if tess.name == "triangular":
        return local_energy_triangular(tile.coords, phi, ell)
    return local_energy_cubic(tile.coords, tile.correspondence, tess.prototiles[tile.type_id], phi, ell)


def reference_local_energy(tess: Tessellation, type_id: int, phi: PotentialSpec, ell: float) -> float:
    proto = tess.prototiles[type_id]
    if tess.name == "triangular":
        return local_energy_triangular(proto.corners, phi, ell)
    return local_energy_cubic(proto.corners, tuple(range(proto.n_corners)), proto, phi, ell)


# Hamiltonian ------------------------------------------------------------------------------


def surface_measure(cx: TileComplex) -> float:
    return float(len(cx.surface_points))


def total_hamiltonian(cx: TileComplex, tess: Tessellation, params: ModelParams, variant: str = "plain") -> float:
    n = cx.n_points
    S = surface_measure(cx)
    if variant == "plain":
        loc = 0.0
        for t in cx.tiles:
            loc += local_energy(t, tess, params.phi, params.ell)
        return loc + params.sigma * S - params.m * n
    if variant == "tilde":
        if tess.name != "triangular":
            raise ValueError("the pair-sum Hamiltonian is defined for the triangular model")
        seen = {}
        for t in cx.tiles:
            for i in range(3):
                for j in range(i + 1, 3):
                    pair = (min(t.key[i], t.key[j]), max(t.key[i], t.key[j]))
                    r = float(np.linalg.norm(t.coords[i] - t.coords[j]))
                    if params.tilde_multiplicity == "pair":
                        seen.setdefault(pair, params.phi(r))
                    else:
                        seen[(pair, t.key)] = params.phi(r)
        return sum(seen.values()) + params.sigma * S - params.m * n
    raise ValueError(f"unknown variant {variant!r}")


def compute_m0(tess: Tessellation, c2: float, phi: PotentialSpec, ell: float,
               consts: Optional[TessellationConstants] = None) -> float:
    consts = consts or compute_constants(tess)
    best = -math.inf
    for proto in tess.prototiles:
        i = proto.type_id
        h = reference_local_energy(tess, i, phi, ell)
        g = float(consts.gamma[i])
        if g <= 0:
            raise RuntimeError("gamma must be positive")
        best = max(best, (h - (c2 - abs(c2)) * proto.volume) / g)
    return best


# reference configurations ----------------------------------------------------------------


def standard_configuration(tess: Tessellation, N: int) -> PointConfig:
    if N < 1:
        raise ValueError("N must be positive")
    patch = build_patch(tess, N)
    return PointConfig(tess.domain(N), patch.points)


def blurred_min_N(r: float, eps: float) -> int:
    n0 = math.ceil(4.0 / eps - 1e-9)
    N = math.ceil(n0 * (1 + r) - 1e-9)
    while math.floor(N / (1 + r)) < n0:
        N += 1
    return N


def blurred_configuration(tess: Tessellation, N: int, r: float, rng: np.random.Generator,
                          eps: float = 0.05) -> PointConfig:
    """Bulk boxes scaled by ``1 + r``, the last ``n0`` boxes per axis absorb the remainder, then an ``r/2`` blur."""
    if not (0 < r < eps / 4 and r < 0.5):
        raise ValueError("need 0 < r < min(eps/4, 1/2)")
    n0 = math.ceil(4.0 / eps - 1e-9)
    n_box = math.floor(N / (1 + r))
    if n_box < n0:
        raise ValueError(f"N={N} too small for r={r}, eps={eps}; minimal N is {blurred_min_N(r, eps)}")
    bulk = n_box - n0
    rest = N - (1 + r) * bulk
    lengths = np.array([1 + r] * bulk + [rest / n0] * n0)
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    d = tess.d
    inv = np.linalg.inv(tess.basis)
    offs = [inv @ o for o in tess.vertex_offsets]
    pts = []
    for idx in np.ndindex(*([n_box] * d)):
        c = starts[list(idx)]
        l = lengths[list(idx)]
        for o in offs:
            pts.append(tess.basis @ (c + l * o))
    pts = np.array(pts)
    u = rng.standard_normal(pts.shape)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    rad = (r / 2) * rng.uniform(0, 1, size=(len(pts), 1)) ** (1.0 / d)
    return PointConfig(tess.domain(N), pts + u * rad)


# local lower bound ----------------------------------------------------------------------


@dataclass
class LocalBoundFit:
    c1: float
    c2: float
    violations: int
    n_samples: int
    n_equal_volume: int


def sample_local_terms(tess: Tessellation, phi: PotentialSpec, ell: float, eps: float, samples: int,
                       rng: np.random.Generator, type_id: int = 0) -> np.ndarray:
    """Rows ``(energy excess, distortion, volume excess)`` of random tiles in the ε-class.

    Corners are drawn uniformly in ε-balls around the reference corners.  Draws
    with volume below the reference are rescaled about their centroid to the
    reference volume and kept if every corner stays within ε.
    """
    proto = tess.prototiles[type_id]
    s = proto.corners
    n, d = s.shape
    h_ref = reference_local_energy(tess, type_id, phi, ell)
    corr = tuple(range(n))
    rows = []
    while len(rows) < samples:
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        x = s + u * eps * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / d)
        vol = hull_volume(x)
        if vol < proto.volume:
            if vol <= 0:
                continue
            c = x.mean(axis=0)
            x = c + (x - c) * (proto.volume / vol) ** (1.0 / d)
            if np.max(np.linalg.norm(x - s, axis=1)) > eps:
                continue
            excess = 0.0
        else:
            excess = vol - proto.volume
        grads, vols = tile_gradients(x, proto, corr, np.eye(d))
        dist = sum(w * nearest_rotation(G).dist ** 2 for G, w in zip(grads, vols))
        if tess.name == "triangular":
            h = local_energy_triangular(x, phi, ell)
        else:
            h = local_energy_cubic(x, corr, proto, phi, ell)
        rows.append((h - h_ref, dist, excess))
    return np.array(rows)


def count_violations(terms: np.ndarray, c1: float, c2: float, tol: float = 1e-12) -> int:
    E, D, A = terms[:, 0], terms[:, 1], terms[:, 2]
    return int(np.sum(E < c1 * D + c2 * A - tol * (1 + np.abs(E))))


def fit_local_bound(terms: np.ndarray) -> tuple:
    """Largest ``c1``, then largest ``c2``, with ``E >= c1 D + c2 A`` on every row."""
    E, D, A = terms[:, 0], terms[:, 1], terms[:, 2]
    A_ub = np.column_stack([D, A])
    res = linprog([-1.0, 0.0], A_ub=A_ub, b_ub=E, bounds=[(None, None), (None, None)], method="highs")
    if res.status != 0:
        raise RuntimeError(f"local bound LP failed: {res.message}")
    c1 = float(res.x[0])
    c2 = float(res.x[1])
    # the solver works to ~1e-9 feasibility; tighten exactly on the rows
    pos_d = D > 0
    c1 = min(c1, float(np.min((E[pos_d] - c2 * A[pos_d]) / D[pos_d])))
    c1 -= 1e-12 * max(1.0, abs(c1))
    pos_a = A > 0
    if np.any(pos_a):
        c2 = float(np.min((E[pos_a] - c1 * D[pos_a]) / A[pos_a]))
        c2 -= 1e-12 * max(1.0, abs(c2))
    return c1, c2


def verify_local_bound(tess: Tessellation, phi: PotentialSpec, ell: float, eps: float, samples: int,
                       rng: np.random.Generator, constants: Optional[tuple] = None) -> LocalBoundFit:
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    terms = sample_local_terms(tess, phi, ell, eps, samples, rng)
    c1, c2 = fit_local_bound(terms)
    if constants is not None:
        c1, c2 = constants
    return LocalBoundFit(c1, c2, count_violations(terms, c1, c2), len(terms), int(np.sum(terms[:, 2] == 0)))
