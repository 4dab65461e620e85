"""Torus geometry, projections onto SO(d) and simplex measures."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class AmbiguousProjectionWarning(UserWarning):
    """The nearest rotation is not unique; one minimizer was returned."""


@dataclass(frozen=True)
class TorusDomain:
    """Periodic box ``R^d / (N L Z^d)``.

    ``basis`` holds the cell vectors ``L e_1 .. L e_d`` as columns.
    """

    d: int
    N: int
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float).reshape(self.d, self.d)
        if self.d < 2:
            raise ValueError("dimension must be at least 2")
        if self.N < 1:
            raise ValueError("N must be positive")
        if abs(np.linalg.det(basis)) <= 1e-14:
            raise ValueError("cell basis is singular")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        period = self.N * basis
        period.setflags(write=False)
        object.__setattr__(self, "_period", period)
        inv = np.linalg.inv(period)
        inv.setflags(write=False)
        object.__setattr__(self, "_inv_period", inv)
        shifts = np.array(list(itertools.product((-1, 0, 1), repeat=self.d)), dtype=float)
        object.__setattr__(self, "_shifts", shifts @ period.T)

    @property
    def period(self) -> np.ndarray:
        """Columns are the torus period vectors ``N L e_j``."""
        return self._period

    @property
    def volume(self) -> float:
        return float(abs(np.linalg.det(self._period)))

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    @property
    def shortest_period(self) -> float:
        """Length of the shortest nonzero lattice vector of the torus."""
        best = math.inf
        for k in itertools.product(range(-2, 3), repeat=self.d):
            if any(k):
                best = min(best, float(np.linalg.norm(self._period @ np.array(k, float))))
        return best

    def to_fractional(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, float) @ self._inv_period.T

    def from_fractional(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f, float) @ self._period.T

    def wrap(self, x: np.ndarray) -> np.ndarray:
        f = self.to_fractional(x)
        f = f - np.floor(f)
        # floor can round up to exactly 1.0
        f[f >= 1.0] = 0.0
        return self.from_fractional(f)

    def to_json(self) -> dict:
        return {"d": self.d, "N": self.N, "basis": self.basis.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "TorusDomain":
        return cls(int(doc["d"]), int(doc["N"]), np.array(doc["basis"], float))


class Alignment(NamedTuple):
    """Rigid placement ``corners[k] ~ translation + rotation @ proto[correspondence[k]]``."""

    translation: np.ndarray
    rotation: np.ndarray
    deviation: float
    correspondence: tuple = ()


class RotationProjection(NamedTuple):
    rotation: np.ndarray
    dist: float


def minimal_image_many(delta: np.ndarray, dom: TorusDomain) -> np.ndarray:
    """Shortest periodic representatives of displacement rows."""
    delta = np.atleast_2d(np.asarray(delta, float))
    f = delta @ dom._inv_period.T
    f -= np.round(f)
    base = f @ dom._period.T
    cand = base[:, None, :] + dom._shifts[None, :, :]
    norms = np.einsum("nkd,nkd->nk", cand, cand)
    best = np.argmin(norms, axis=1)
    rows = np.arange(len(base))
    out = cand[rows, best]
    m = norms[rows, best]
    ties = np.count_nonzero(norms <= (m * (1 + 1e-12) + 1e-24)[:, None], axis=1) > 1
    for n in np.flatnonzero(ties):
        # antipodal tie: lexicographically largest displacement
        idx = np.flatnonzero(norms[n] <= m[n] * (1 + 1e-12) + 1e-24)
        opts = [tuple(np.round(cand[n, t], 12)) for t in idx]
        out[n] = cand[n, idx[max(range(len(idx)), key=lambda i: opts[i])]]
    return out


def minimal_image_one(delta: np.ndarray, dom: TorusDomain) -> np.ndarray:
    """Single-row ``minimal_image_many`` without the batch overhead."""
    f = dom._inv_period @ delta
    f -= np.round(f)
    base = dom._period @ f
    cand = base + dom._shifts
    norms = (cand * cand).sum(axis=1)
    k = int(np.argmin(norms))
    m = norms[k]
    idx = np.flatnonzero(norms <= m * (1 + 1e-12) + 1e-24)
    if len(idx) > 1:
        opts = [tuple(np.round(cand[t], 12)) for t in idx]
        k = idx[max(range(len(idx)), key=lambda i: opts[i])]
    return cand[k]


def minimal_image(p: np.ndarray, q: np.ndarray, dom: TorusDomain) -> np.ndarray:
    """Shortest displacement ``q - p`` over all periodic images."""
    delta = np.asarray(q, float) - np.asarray(p, float)
    return minimal_image_one(delta, dom)


def rotation_2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _polar_newton(A: np.ndarray, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray | None:
    X = A.copy()
    for _ in range(max_iter):
        try:
            Xn = 0.5 * (X + np.linalg.inv(X).T)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(Xn - X) <= tol * max(1.0, np.linalg.norm(Xn)):
            return Xn
        X = Xn
    return X


def nearest_rotation(A: np.ndarray) -> RotationProjection:
    """Frobenius-nearest element of SO(d) and the distance to it."""
    A = np.asarray(A, float)
    d = A.shape[0]
    if d == 2:
        a, b, c, e = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
        x, y = a + e, c - b
        if abs(x) + abs(y) <= 1e-300:
            warnings.warn("ambiguous projection onto SO(2)", AmbiguousProjectionWarning, stacklevel=2)
            R = np.eye(2)
        else:
            R = rotation_2d(math.atan2(y, x))
        return RotationProjection(R, float(np.linalg.norm(A - R)))
    R = None
    if d > 3 and np.linalg.det(A) > 0:
        R = _polar_newton(A)
    if R is None:
        U, s, Vt = np.linalg.svd(A)
        if np.linalg.det(U) * np.linalg.det(Vt) < 0:
            if d >= 2 and abs(s[-1] - s[-2]) <= 1e-12 * max(1.0, s[0]):
                warnings.warn("ambiguous projection onto SO(d)", AmbiguousProjectionWarning, stacklevel=2)
            U = U.copy()
            U[:, -1] *= -1
        R = U @ Vt
    return RotationProjection(R, float(np.linalg.norm(A - R)))


def dist_to_so(A: np.ndarray) -> float:
    return nearest_rotation(A).dist


def weighted_best_rotation(terms: Iterable[tuple[float, np.ndarray]]) -> np.ndarray:
    """Minimizer of ``sum w_k |A_k - R|^2`` over SO(d)."""
    total = None
    wsum = 0.0
    for w, A in terms:
        if w < 0:
            raise ValueError("weights must be non-negative")
        term = w * np.asarray(A, float)
        total = term if total is None else total + term
        wsum += w
    if total is None or wsum <= 0:
        raise ValueError("weights sum to zero")
    return nearest_rotation(total / wsum).rotation


def simplex_volume(vertices: Sequence[Sequence[float]]) -> float:
    v = np.asarray(vertices, float)
    d = v.shape[1]
    if v.shape[0] != d + 1:
        raise ValueError("need d+1 vertices")
    return abs(float(np.linalg.det(v[1:] - v[0]))) / math.factorial(d)


def signed_simplex_volume(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, float)
    d = v.shape[1]
    return float(np.linalg.det(v[1:] - v[0])) / math.factorial(d)


def haar_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation."""
    if d == 2:
        return rotation_2d(rng.uniform(0.0, 2 * math.pi))
    Z = rng.standard_normal((d, d))
    Q, Rr = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(Rr))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q
