"""Candidate tiles, crystal extraction and point classification.

Extraction is a deterministic greedy breadth-first growth over facet
adjacency.  Pairwise tile relations (conflict, facet adjacency) are cached per
pair of candidates, which lets the sampler update the candidate set locally
after a point move and replay the greedy growth cheaply.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import networkx as nx
import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .geometry import (
    Alignment,
    AmbiguousProjectionWarning,
    TorusDomain,
    minimal_image_many,
    minimal_image_one,
    nearest_rotation,
    rotation_2d,
    simplex_volume,
)
from .polytope import ccw_order, convex_distance
from .tessellation import StandardTile, Tessellation

TOUCH_TOL = 1e-9
_NOFREE = np.zeros(0, np.int8)


@dataclass
class PointConfig:
    dom: TorusDomain
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, float).reshape(-1, self.dom.d)
        self.points = self.dom.wrap(pts) if len(pts) else pts

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class CandidateTile:
    corner_indices: tuple
    type_id: int
    alignment: Alignment
    coords: np.ndarray  # unwrapped corner positions, same order as corner_indices
    volume: float
    per_simplex_gradients: list = field(default_factory=list)
    simplex_volumes: list = field(default_factory=list)
    placement: np.ndarray = None  # rotation of the reference tile the chart maps onto

    @property
    def key(self) -> tuple:
        return self.corner_indices

    @property
    def correspondence(self) -> tuple:
        return self.alignment.correspondence

    @property
    def deviation(self) -> float:
        return self.alignment.deviation


@dataclass
class TileComplex:
    tiles: list
    adjacency: list
    boundary_tiles: frozenset
    surface_points: frozenset
    exterior_points: frozenset
    vertex_map: dict
    n_points: int
    facet_adjacency: list = field(default_factory=list)
    debug: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tiles)

    def counts_by_type(self) -> dict:
        out: dict = {}
        for t in self.tiles:
            out[t.type_id] = out.get(t.type_id, 0) + 1
        return out

    def signature(self) -> tuple:
        """Hashable summary used to compare two extractions."""
        return (
            tuple((t.key, t.type_id, tuple(t.correspondence)) for t in self.tiles),
            tuple(sorted(self.surface_points)),
            tuple(sorted(self.exterior_points)),
            tuple(sorted(self.boundary_tiles)),
        )

    def to_json(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_tiles": len(self.tiles),
            "tiles": [
                {
                    "corners": list(map(int, t.key)),
                    "type": int(t.type_id),
                    "correspondence": list(map(int, t.correspondence)),
                    "deviation": float(t.deviation),
                    "volume": float(t.volume),
                    "boundary": k in self.boundary_tiles,
                }
                for k, t in enumerate(self.tiles)
            ],
            "surface_points": sorted(map(int, self.surface_points)),
            "exterior_points": sorted(map(int, self.exterior_points)),
            "boundary_tiles": sorted(map(int, self.boundary_tiles)),
        }


# matching ---------------------------------------------------------------------


def hull_volume(coords: np.ndarray) -> float:
    n, d = coords.shape
    if n == d + 1:
        return simplex_volume(coords)
    if d == 2:
        P = coords[ccw_order(coords)]
        x, y = P[:, 0], P[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
    try:
        return float(ConvexHull(coords).volume)
    except QhullError:
        return 0.0


def _consistent_perms(coords: np.ndarray, proto: StandardTile, slack: float) -> list:
    """Bijections corner -> prototile corner preserving all pair distances within ``slack``."""
    n = len(coords)
    D = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    S = np.linalg.norm(proto.corners[:, None] - proto.corners[None], axis=-1)
    out = []
    perm = [0] * n
    used = [False] * n

    def extend(k):
        if k == n:
            out.append(tuple(perm))
            return
        for j in range(n):
            if used[j]:
                continue
            ok = True
            for i in range(k):
                if abs(D[k, i] - S[j, perm[i]]) > slack:
                    ok = False
                    break
            if ok:
                perm[k] = j
                used[j] = True
                extend(k + 1)
                used[j] = False

    extend(0)
    return out


def _kabsch(coords: np.ndarray, target: np.ndarray):
    mx = coords.mean(axis=0)
    ms = target.mean(axis=0)
    H = (coords - mx).T @ (target - ms)
    d = coords.shape[1]
    if d == 2:
        th = math.atan2(H[1, 0] - H[0, 1], H[0, 0] + H[1, 1])
        R = rotation_2d(th)
    else:
        # mirrored correspondences give ties; they are rejected by the deviation check anyway
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AmbiguousProjectionWarning)
            R = nearest_rotation(H).rotation
    a = mx - R @ ms
    dev = float(np.max(np.linalg.norm(coords - (a + target @ R.T), axis=1)))
    return R, a, dev


def _align_2d(coords, proto, perms):
    S = np.ascontiguousarray(proto.corners, float)
    k, dev, th = kernels.match_2d(np.ascontiguousarray(coords, float), S, np.asarray(perms, np.int64))
    R = rotation_2d(th)
    perm = perms[k]
    target = S[list(perm)]
    a = coords.mean(axis=0) - R @ target.mean(axis=0)
    return perm, R, a, dev


def match_tile(corners: Sequence, proto: StandardTile, eps: float) -> Optional[Alignment]:
    """Rigid alignment of ``corners`` onto the prototile if they form a tile of its ε-class."""
    coords = np.asarray(corners, float)
    if len(coords) != proto.n_corners:
        return None
    vol = hull_volume(coords)
    if vol <= 0.0 or vol < proto.volume * (1 - 1e-12):
        return None
    perms = _consistent_perms(coords, proto, 2 * eps + 1e-12)
    if not perms:
        return None
    if coords.shape[1] == 2:
        perm, R, a, dev = _align_2d(coords, proto, perms)
    else:
        best = None
        for perm in perms:
            R, a, dev = _kabsch(coords, proto.corners[list(perm)])
            if best is None or dev < best[3]:
                best = (perm, R, a, dev)
        perm, R, a, dev = best
    if dev > eps:
        return None
    return Alignment(a, R, dev, tuple(int(p) for p in perm))


def proper_correspondences(tile: CandidateTile, proto: StandardTile, eps: float) -> list:
    """All correspondences realizing the tile's class with deviation within ``eps``."""
    out = []
    for perm in _consistent_perms(tile.coords, proto, 2 * eps + 1e-12):
        _, _, dev = _kabsch(tile.coords, proto.corners[list(perm)])
        if dev <= eps + 1e-12:
            out.append(perm)
    return out


# per-simplex gradients ---------------------------------------------------------


def tile_gradients(coords: np.ndarray, proto: StandardTile, corr: Sequence[int], placement: np.ndarray,
                   name: str = "") -> tuple:
    """Gradients of the affine maps sending each simplex of the tile onto the reference tile."""
    inv = np.empty(len(corr), int)
    for k, p in enumerate(corr):
        inv[p] = k
    target = proto.corners @ placement.T
    grads, vols = [], []
    for simplex in proto.simplices:
        X = coords[inv[list(simplex)]]
        S = target[list(simplex)]
        vol = simplex_volume(X)
        if vol < 1e-14 * proto.volume:
            raise ValueError(f"degenerate simplex {simplex} in tile {name}")
        Xe = (X[1:] - X[0]).T
        Se = (S[1:] - S[0]).T
        grads.append(np.linalg.solve(Xe.T, Se.T).T)
        vols.append(vol)
    return grads, vols


# face quadrature points --------------------------------------------------------


def _face_quadrature(proto: StandardTile) -> tuple:
    """Quadrature points of every face as rows of an averaging matrix over prototile corners.

    Returns (faces, W, bounds) with face ``i`` owning rows ``bounds[i][0]:bounds[i][1]``.
    """
    edge_set = {frozenset(e) for e in proto.faces[1]} if proto.d >= 2 else set()
    faces, rows, bounds = [], [], []
    for face in proto.all_faces():
        recipes = [(c,) for c in sorted(face)]
        if len(face) > 1:
            recipes.append(tuple(sorted(face)))
            for a, b in itertools.combinations(sorted(face), 2):
                if frozenset((a, b)) in edge_set and len(face) > 2:
                    recipes.append((a, b))
        start = len(rows)
        for r in recipes:
            w = np.zeros(proto.n_corners)
            w[list(r)] = 1.0 / len(r)
            rows.append(w)
        faces.append(face)
        bounds.append((start, len(rows)))
    return faces, np.array(rows), bounds


# spatial index -------------------------------------------------------------------


class _CellIndex:
    """Cell list over fractional coordinates of the torus."""

    def __init__(self, dom: TorusDomain, cutoff: float):
        self.dom = dom
        P = dom.period
        vol = abs(np.linalg.det(P))
        widths = []
        for j in range(dom.d):
            others = np.delete(P, j, axis=1)
            if dom.d == 2:
                area = float(np.linalg.norm(others[:, 0]))
            else:
                G = others.T @ others
                area = math.sqrt(abs(np.linalg.det(G)))
            widths.append(vol / area)
        self.n = [max(1, int(w // cutoff)) for w in widths]
        self.cells: dict = {}
        self.where: dict = {}
        offs = set()
        for o in itertools.product((-1, 0, 1), repeat=dom.d):
            offs.add(tuple(o[j] % self.n[j] for j in range(dom.d)))
        self._offsets = sorted(offs)

    def cell_of(self, x) -> tuple:
        f = self.dom.to_fractional(x)
        return tuple(int(math.floor(f[j] * self.n[j])) % self.n[j] for j in range(self.dom.d))

    def add(self, pid, x):
        c = self.cell_of(x)
        self.cells.setdefault(c, set()).add(pid)
        self.where[pid] = c

    def remove(self, pid):
        c = self.where.pop(pid)
        s = self.cells[c]
        s.discard(pid)
        if not s:
            del self.cells[c]

    def near(self, x) -> list:
        c = self.cell_of(x)
        seen = set()
        out = []
        for o in self._offsets:
            cc = tuple((c[j] + o[j]) % self.n[j] for j in range(self.dom.d))
            if cc in seen:
                continue
            seen.add(cc)
            out.extend(self.cells.get(cc, ()))
        return out


# extraction state --------------------------------------------------------------


@dataclass
class _Info:
    conflict: bool
    facet: bool


class ExtractionState:
    """Candidate set with cached pair relations over points carrying stable ids."""

    def __init__(self, dom: TorusDomain, tess: Tessellation, eps: float, rho: float):
        if dom.d != tess.d:
            raise ValueError("domain and tessellation dimensions differ")
        if dom.d > 3:
            raise ValueError("extraction supports d <= 3")
        self.dom = dom
        self.tess = tess
        self.eps = float(eps)
        self.rho = float(rho)
        self.reach = tess.max_diameter + 2 * self.eps
        if self.reach >= 0.5 * dom.shortest_period:
            raise ValueError("torus too small for the tile search radius; increase N")
        self.index = _CellIndex(dom, self.reach)
        self._pair_reach = 2 * (max(_circumradius(p) for p in tess.prototiles) + self.eps) + 3 * self.rho
        self.scan = _CellIndex(dom, self._pair_reach / 2 + self.reach)
        self.points: dict = {}
        self.cands: dict = {}
        self.by_point: dict = {}
        self.rel: dict = {}
        self.partners: dict = {}
        self.centroid: dict = {}
        self.radius: dict = {}
        self.poly: dict = {}
        self.tets: dict = {}
        self.conf: dict = {}
        self.fnb: dict = {}
        self._unlinked: set = set()
        self._quad = [_face_quadrature(p) for p in tess.prototiles]
        self._facets = [set(p.facets) for p in tess.prototiles]
        self._faces = [set(p.all_faces()) for p in tess.prototiles]
        self._orbit_reps = [_orbit_representatives(p) for p in tess.prototiles]
        self.relation_evaluations = 0
        self._minv = np.linalg.inv(dom.period)
        self._star_cache: dict = {}

    # geometry helpers
    def disp(self, a, b) -> np.ndarray:
        """Minimal-image displacement between two positions."""
        return minimal_image_one(np.asarray(b, float) - np.asarray(a, float), self.dom)

    def tile_coords(self, key: tuple) -> np.ndarray:
        anchor = self.points[key[0]]
        rest = np.array([self.points[q] for q in key[1:]]) - anchor
        rel = minimal_image_many(rest, self.dom)
        return np.vstack([anchor, anchor + rel])

    # point updates
    def add_point(self, pid, x) -> list:
        x = np.asarray(x, float)
        self.points[pid] = x
        self.index.add(pid, x)
        self.scan.add(pid, x)
        self.by_point[pid] = set()
        new = self._candidates_with(pid)
        for c in new:
            self._insert(c)
        return [c.key for c in new]

    def remove_point(self, pid) -> list:
        keys = sorted(self.by_point.get(pid, ()))
        removed = [self.cands[k] for k in keys]
        for k in keys:
            self._drop(k)
        self.index.remove(pid)
        self.scan.remove(pid)
        del self.points[pid]
        del self.by_point[pid]
        return removed

    def snapshot_point(self, pid):
        """State needed to undo a removal of ``pid`` exactly."""
        keys = sorted(self.by_point.get(pid, ()))
        rels = {}
        for k in keys:
            for q in self.partners.get(k, ()):
                pair = (k, q) if k < q else (q, k)
                rels[pair] = self.rel[pair]
        return (pid, self.points[pid], [self.cands[k] for k in keys], rels)

    def restore_point(self, snap):
        pid, x, cands, rels = snap
        self.points[pid] = x
        self.index.add(pid, x)
        self.scan.add(pid, x)
        self.by_point[pid] = set()
        for c in cands:
            self._insert(c)
        for (a, b), info in rels.items():
            if a in self.cands and b in self.cands:
                self._store(a, b, info)

    def _insert(self, c: CandidateTile):
        k = c.key
        self.cands[k] = c
        if self.dom.d == 2:
            order = ccw_order(c.coords)
            self.poly[k] = (np.ascontiguousarray(c.coords[order]), order)
        cen = c.coords.mean(axis=0)
        self.centroid[k] = cen
        self.radius[k] = float(np.max(np.linalg.norm(c.coords - cen, axis=1)))
        self.partners[k] = set()
        self.conf[k] = set()
        self.fnb[k] = set()
        self._unlinked.add(k)
        for q in k:
            self.by_point[q].add(k)

    def _drop(self, k):
        for q in self.partners.pop(k, ()):
            pair = (k, q) if k < q else (q, k)
            self.rel.pop(pair, None)
            self.partners[q].discard(k)
        for q in k:
            self.by_point[q].discard(k)
        del self.cands[k]
        del self.centroid[k]
        del self.radius[k]
        self.poly.pop(k, None)
        self.tets.pop(k, None)
        for o in self.conf.pop(k):
            self.conf[o].discard(k)
        for o in self.fnb.pop(k):
            self.fnb[o].discard(k)
        self._unlinked.discard(k)

    def _store(self, a, b, info):
        pair = (a, b) if a < b else (b, a)
        self.rel[pair] = info
        self.partners[a].add(b)
        self.partners[b].add(a)

    # candidate search
    def _neighbours(self, pid) -> list:
        x = self.points[pid]
        out = []
        ids = [q for q in self.index.near(x) if q != pid]
        if not ids:
            return out
        rel = minimal_image_many(np.array([self.points[q] for q in ids]) - x, self.dom)
        r2 = self.reach * self.reach
        for q, v in zip(ids, rel):
            if float(v @ v) <= r2:
                out.append((q, v))
        return out

    def _candidates_with(self, pid, only_larger: bool = False) -> list:
        nbrs = self._neighbours(pid)
        if only_larger:
            nbrs = [(q, v) for q, v in nbrs if q > pid]
        found = {}
        slack = 2 * self.eps + 1e-12
        for proto in self.tess.prototiles:
            n = proto.n_corners
            S = np.linalg.norm(proto.corners[:, None] - proto.corners[None], axis=-1)
            for c0 in self._orbit_reps[proto.type_id]:
                order = [c0] + [c for c in range(n) if c != c0]
                chosen = [(pid, np.zeros(self.dom.d))]
                self._grow(proto, S, order, chosen, nbrs, slack, found)
        out = []
        for key in sorted(found):
            c = self._make_candidate(key)
            if c is not None:
                out.append(c)
        return out

    def _grow(self, proto, S, order, chosen, nbrs, slack, found):
        k = len(chosen)
        if k == len(order):
            key = tuple(sorted(q for q, _ in chosen))
            found[key] = True
            return
        target = order[k]
        used = {q for q, _ in chosen}
        for q, v in nbrs:
            if q in used:
                continue
            ok = True
            for i, (_, w) in enumerate(chosen):
                dv = v - w
                if abs(math.sqrt(float(dv @ dv)) - S[target, order[i]]) > slack:
                    ok = False
                    break
            if ok:
                chosen.append((q, v))
                self._grow(proto, S, order, chosen, nbrs, slack, found)
                chosen.pop()

    def _make_candidate(self, key) -> Optional[CandidateTile]:
        if key in self.cands:
            return None
        coords = self.tile_coords(key)
        best = None
        for proto in self.tess.prototiles:
            if proto.n_corners != len(key):
                continue
            al = match_tile(coords, proto, self.eps)
            if al is not None and (best is None or al.deviation < best[1].deviation):
                best = (proto, al)
        if best is None:
            return None
        proto, al = best
        try:
            grads, vols = tile_gradients(coords, proto, al.correspondence, np.eye(self.dom.d), str(key))
        except ValueError:
            return None
        return CandidateTile(key, proto.type_id, al, coords, hull_volume(coords), grads, vols,
                             np.eye(self.dom.d))

    def build_all(self, ids_positions):
        """Fresh construction: insert every point, then enumerate each tile once from its smallest id."""
        for pid, x in ids_positions:
            x = np.asarray(x, float)
            self.points[pid] = x
            self.index.add(pid, x)
            self.scan.add(pid, x)
            self.by_point[pid] = set()
        for pid in sorted(self.points):
            for c in self._candidates_with(pid, only_larger=True):
                self._insert(c)

    def insert_candidates(self, cands):
        for c in cands:
            self._insert(c)

    # pair relations
    def relation(self, a, b) -> _Info:
        pair = (a, b) if a < b else (b, a)
        info = self.rel.get(pair)
        if info is None:
            info = self._compute_relation(pair[0], pair[1])
            self._store(pair[0], pair[1], info)
        return info

    def may_interact(self, a, b) -> bool:
        v = self.disp(self.centroid[a], self.centroid[b])
        return float(np.linalg.norm(v)) <= self.radius[a] + self.radius[b] + 3 * self.rho + 1e-9

    def nearby_candidates(self, k) -> list:
        """Candidates whose relation with ``k`` may be nontrivial."""
        cen = self.centroid[k]
        seen = {k}
        pool = []
        for q in self.scan.near(cen):
            for other in self.by_point[q]:
                if other not in seen:
                    seen.add(other)
                    pool.append(other)
        out = []
        if pool:
            diff = np.array([self.centroid[o] for o in pool]) - cen
            dist = np.linalg.norm(minimal_image_many(diff, self.dom), axis=1)
            lim = self._pair_reach
            out = [o for o, r in zip(pool, dist) if r <= lim]
        # far corners of a neighbour may sit outside the scanned cells
        for q in k:
            for other in self.by_point[q]:
                if other not in seen:
                    seen.add(other)
                    out.append(other)
        out.sort()
        return out

    def _compute_relation(self, a, b) -> _Info:
        self.relation_evaluations += 1
        ta, tb = self.cands[a], self.cands[b]
        shift = self.disp(self.centroid[a], self.centroid[b]) + self.centroid[a] - self.centroid[b]
        A = ta.coords
        B = tb.coords + shift
        shared = set(a) & set(b)
        reach = self.radius[a] + self.radius[b] + 3 * self.rho
        if not shared and float(np.linalg.norm(self.centroid[b] + shift - self.centroid[a])) > reach:
            return _Info(False, False)
        three_rho = 3 * self.rho
        if self.dom.d == 2:
            return self._relation_2d(a, b, shift, shared, three_rho)
        if not shared:
            return _Info(convex_distance(A, B) <= three_rho, False)
        la = frozenset(ta.correspondence[a.index(q)] for q in shared)
        lb = frozenset(tb.correspondence[b.index(q)] for q in shared)
        if la not in self._faces[ta.type_id] or lb not in self._faces[tb.type_id]:
            return _Info(True, False)
        # shared corners must coincide after unwrapping
        for q in shared:
            if np.linalg.norm(A[a.index(q)] - B[b.index(q)]) > 1e-9:
                return _Info(True, False)
        # tiles as unions of their simplices: hulls of face-sharing tiles overlap on warped facets
        SA, SB = self._tets(a), self._tets(b) + shift
        if kernels.tetra_overlap(SA, SB) > TOUCH_TOL:
            return _Info(True, False)
        for X, key, SY in ((B, b, SA), (A, a, SB)):
            free = [i for i, q in enumerate(key) if q not in shared]
            if free and float(kernels.points_tetra_distance(X[free], SY).min()) <= TOUCH_TOL:
                return _Info(True, False)
        if not self._quadrature_ok(ta, A, la, SB) or not self._quadrature_ok(tb, B, lb, SA):
            return _Info(True, False)
        facet = la in self._facets[ta.type_id] and lb in self._facets[tb.type_id]
        return _Info(False, facet)

    def _tets(self, k) -> np.ndarray:
        T = self.tets.get(k)
        if T is None:
            c = self.cands[k]
            local = c.coords[np.argsort(c.correspondence)]
            T = self.tets[k] = local[np.array(self.tess.prototiles[c.type_id].simplices)]
        return T

    def _relation_2d(self, a, b, shift, shared, three_rho) -> _Info:
        # in the plane the face-point test on edges reduces to the free corners
        ta, tb = self.cands[a], self.cands[b]
        pa, oa = self.poly[a]
        pb, ob = self.poly[b]
        B = pb + shift
        if not shared:
            return _Info(bool(kernels.pair_conflict_2d(pa, B, _NOFREE, _NOFREE, False, three_rho, TOUCH_TOL)), False)
        la = frozenset(ta.correspondence[a.index(q)] for q in shared)
        lb = frozenset(tb.correspondence[b.index(q)] for q in shared)
        if la not in self._faces[ta.type_id] or lb not in self._faces[tb.type_id]:
            return _Info(True, False)
        for q in shared:
            d = ta.coords[a.index(q)] - tb.coords[b.index(q)] - shift
            if abs(d[0]) + abs(d[1]) > 1e-9:
                return _Info(True, False)
        fa = np.array([a[i] not in shared for i in oa], np.int8)
        fb = np.array([b[i] not in shared for i in ob], np.int8)
        if kernels.pair_conflict_2d(pa, B, fa, fb, True, three_rho, TOUCH_TOL):
            return _Info(True, False)
        facet = la in self._facets[ta.type_id] and lb in self._facets[tb.type_id]
        return _Info(False, facet)

    def _quadrature_ok(self, tile, X, shared_local, Y) -> bool:
        """Every face outside the shared set keeps a quadrature point farther than 3 rho from Y.

        Y is the other tile: CCW polygon in 2D, stacked simplices in 3D.
        """
        faces, W, bounds = self._quad[tile.type_id]
        keep = [i for i, f in enumerate(faces) if not f <= shared_local]
        if not keep:
            return True
        # rows of X follow the tile's corner order; W expects prototile order
        Xl = X[np.argsort(tile.correspondence)]
        rows = np.concatenate([np.arange(*bounds[i]) for i in keep])
        P = np.ascontiguousarray(W[rows] @ Xl)
        if X.shape[1] == 2:
            dist = kernels.points_polygon_distance(P, Y)
        else:
            dist = kernels.points_tetra_distance(P, Y)
        three_rho = 3 * self.rho
        pos = 0
        for i in keep:
            n = bounds[i][1] - bounds[i][0]
            if float(np.max(dist[pos:pos + n])) <= three_rho:
                return False
            pos += n
        return True

    # greedy growth
    def link_pending(self):
        """Evaluate relations of newly inserted candidates with everything nearby."""
        for k in sorted(self._unlinked):
            for o in self.nearby_candidates(k):
                info = self.relation(k, o)
                if info.conflict:
                    self.conf[k].add(o)
                    self.conf[o].add(k)
                elif info.facet:
                    self.fnb[k].add(o)
                    self.fnb[o].add(k)
        self._unlinked.clear()

    def extract(self) -> tuple:
        """Greedy extraction; returns (admitted keys in admission order, facet adjacency dict)."""
        keys = sorted(self.cands)
        if not keys:
            return [], {}
        self.link_pending()
        facet_nb = self.fnb
        conflicts = self.conf
        rank = {k: (-len(facet_nb[k]), self.cands[k].deviation, k) for k in keys}
        seed = min(keys, key=rank.__getitem__)
        admitted = [seed]
        status = {seed: True}
        star: dict = {}
        self._star_add(star, seed, facet_nb)
        queue = deque([seed])
        while queue:
            t = queue.popleft()
            for u in sorted(facet_nb[t], key=rank.__getitem__):
                if u in status:
                    continue
                ok = not any(status.get(c) for c in conflicts[u]) and self._star_ok(star, u, facet_nb)
                status[u] = ok
                if ok:
                    admitted.append(u)
                    self._star_add(star, u, facet_nb)
                    queue.append(u)
        adm = set(admitted)
        adjacency = {k: sorted(o for o in facet_nb[k] if o in adm) for k in admitted}
        return admitted, adjacency

    def _star_add(self, star, k, facet_nb):
        for q in k:
            star.setdefault(q, []).append(k)

    def _star_ok(self, star, u, facet_nb) -> bool:
        for q in u:
            tiles = star.get(q, [])
            if not tiles:
                continue
            members = tiles + [u]
            if not self._star_embeds(q, members, facet_nb):
                return False
        return True

    def _star_embeds(self, q, members, facet_nb) -> bool:
        types = [self.cands[m].type_id for m in members]
        n = len(members)
        edges = []
        for i in range(n):
            fi = set(facet_nb[members[i]])
            for j in range(i + 1, n):
                if members[j] in fi:
                    # facet must contain q
                    if q in members[i] and q in members[j]:
                        edges.append((i, j))
        for vt in self.tess.vertex_types:
            if self._embeds_in(vt, types, n, edges):
                return True
        return False

    def _embeds_in(self, vt, types, n, edges) -> bool:
        f = len(vt["tile_types"])
        if n > f:
            return False
        if self.dom.d == 2 and len(set(vt["tile_types"])) == 1 and types.count(vt["tile_types"][0]) == n \
                and len(vt["star_edges"]) == f:
            # star is the cycle C_f
            parent = list(range(n))

            def find(i):
                while parent[i] != i:
                    parent[i] = parent[parent[i]]
                    i = parent[i]
                return i

            deg = [0] * n
            for i, j in edges:
                deg[i] += 1
                deg[j] += 1
                parent[find(i)] = find(j)
            if max(deg) > 2:
                return False
            comps = len({find(i) for i in range(n)})
            cycles = len(edges) - (n - comps)
            if cycles == 0:
                return n + comps <= f
            return cycles == 1 and comps == 1 and n == f
        key = (id(vt), tuple(types), tuple(edges))
        hit = self._star_cache.get(key)
        if hit is None:
            G = nx.Graph()
            G.add_nodes_from((i, {"t": t}) for i, t in enumerate(types))
            G.add_edges_from(edges)
            H = nx.Graph()
            H.add_nodes_from((i, {"t": t}) for i, t in enumerate(vt["tile_types"]))
            H.add_edges_from(vt["star_edges"])
            gm = nx.algorithms.isomorphism.GraphMatcher(H, G, node_match=lambda a, b: a["t"] == b["t"])
            hit = gm.subgraph_is_isomorphic()
            self._star_cache[key] = hit
        return hit

    # final complex
    def complex(self, id_to_index: Optional[dict] = None, charts: bool = True) -> TileComplex:
        admitted, adjacency = self.extract()
        return assemble_complex(self, admitted, adjacency, id_to_index, charts)



def _circumradius(proto: StandardTile) -> float:
    c = proto.corners.mean(axis=0)
    return float(np.max(np.linalg.norm(proto.corners - c, axis=1)))


def _orbit_representatives(proto: StandardTile) -> list:
    seen = set()
    reps = []
    for c in range(proto.n_corners):
        if c in seen:
            continue
        reps.append(c)
        for g in proto.symmetry_group:
            seen.add(g[c])
    return reps


# charts ---------------------------------------------------------------------------


def _placements(tess: Tessellation, type_id: int) -> list:
    out = []
    for t, R, _ in tess.tiles_per_cell:
        if t == type_id and not any(np.allclose(R, Q) for Q in out):
            out.append(R)
    return out


def _image_vectors(proto: StandardTile, corr, R) -> np.ndarray:
    return proto.corners[list(corr)] @ R.T


def _chart_variants(state: ExtractionState, tile: CandidateTile) -> list:
    proto = state.tess.prototiles[tile.type_id]
    perms = proper_correspondences(tile, proto, state.eps)
    if tuple(tile.correspondence) not in perms:
        perms.insert(0, tuple(tile.correspondence))
    out = []
    for R in _placements(state.tess, tile.type_id):
        for p in perms:
            out.append((tuple(p), R))
    return out


def _assign_charts(state: ExtractionState, admitted: list, adjacency: dict) -> dict:
    """Correspondence and placement per tile so that images agree across shared facets."""
    d = state.dom.d
    charts = {}
    cands = state.cands
    for root in admitted:
        if root in charts:
            continue
        tile = cands[root]
        best = None
        ref = np.eye(d)
        for corr, R in _chart_variants(state, tile):
            proto = state.tess.prototiles[tile.type_id]
            grads, vols = tile_gradients(tile.coords, proto, corr, R, str(root))
            V = sum(w * G for w, G in zip(vols, grads)) / sum(vols)
            score = float(np.linalg.norm(V - ref))
            if best is None or score < best[0] - 1e-12:
                best = (score, corr, R)
        charts[root] = (best[1], best[2])
        queue = deque([root])
        while queue:
            t = queue.popleft()
            corr_t, R_t = charts[t]
            proto_t = state.tess.prototiles[cands[t].type_id]
            img_t = _image_vectors(proto_t, corr_t, R_t)
            for u in adjacency[t]:
                if u in charts:
                    continue
                tu = cands[u]
                shared = [q for q in u if q in t]
                ia = [t.index(q) for q in shared]
                want = img_t[ia] - img_t[ia[0]]
                proto_u = state.tess.prototiles[tu.type_id]
                chosen = None
                for corr, R in _chart_variants(state, tu):
                    img = _image_vectors(proto_u, corr, R)
                    ib = [u.index(q) for q in shared]
                    got = img[ib] - img[ib[0]]
                    if np.max(np.abs(got - want)) < 1e-6:
                        chosen = (corr, R)
                        break
                if chosen is None:
                    chosen = (tuple(tu.correspondence), np.eye(d))
                charts[u] = chosen
                queue.append(u)
    return charts


def assemble_complex(state: ExtractionState, admitted: list, adjacency: dict,
                     id_to_index: Optional[dict] = None, charts: bool = True) -> TileComplex:
    if id_to_index is None:
        id_to_index = {pid: k for k, pid in enumerate(sorted(state.points))}
    chart = _assign_charts(state, admitted, adjacency) if charts else {}
    # tiles ordered by their (re-indexed) keys
    mapped = []
    for k in admitted:
        nk = tuple(id_to_index[q] for q in k)
        mapped.append((nk, k))
    mapped.sort()
    pos = {k: i for i, (_, k) in enumerate(mapped)}
    tiles = []
    for nk, k in mapped:
        c = state.cands[k]
        if k in chart:
            corr, R = chart[k]
            proto = state.tess.prototiles[c.type_id]
            grads, vols = tile_gradients(c.coords, proto, corr, R, str(nk))
            al = c.alignment
            if tuple(corr) != tuple(al.correspondence):
                Rk, a, dev = _kabsch(c.coords, proto.corners[list(corr)])
                al = Alignment(a, Rk, dev, tuple(corr))
            tiles.append(replace(c, corner_indices=nk, alignment=al, per_simplex_gradients=grads,
                                 simplex_volumes=vols, placement=R))
        else:
            tiles.append(replace(c, corner_indices=nk))
    n_points = len(state.points)
    vertex_map: dict = {}
    for i, t in enumerate(tiles):
        for q in t.key:
            vertex_map.setdefault(q, []).append(i)
    facet_adj = sorted({(min(pos[a], pos[b]), max(pos[a], pos[b])) for a in adjacency for b in adjacency[a]})
    adjacency_pairs = set()
    for q, lst in vertex_map.items():
        for i, j in itertools.combinations(sorted(lst), 2):
            adjacency_pairs.add((i, j))
    surface, exterior, boundary = classify_tiles(tiles, state.tess, n_points)
    return TileComplex(tiles, sorted(adjacency_pairs), frozenset(boundary), frozenset(surface),
                       frozenset(exterior), vertex_map, n_points, facet_adj)


def classify_tiles(tiles: list, tess: Tessellation, points):
    """(surface ids, exterior ids, boundary tile positions); ``points`` is a count or an id collection."""
    count: dict = {}
    for t in tiles:
        proto = tess.prototiles[t.type_id]
        inv = {p: k for k, p in enumerate(t.correspondence)}
        for facet in proto.facets:
            key = frozenset(t.key[inv[c]] for c in facet)
            count[key] = count.get(key, 0) + 1
    on_boundary = set()
    for key, n in count.items():
        if n == 1:
            on_boundary |= key
    covered = {q for t in tiles for q in t.key}
    ids = range(points) if isinstance(points, int) else points
    exterior = set(ids) - covered
    surface = on_boundary | exterior
    boundary = {i for i, t in enumerate(tiles) if any(q in on_boundary for q in t.key)}
    return surface, exterior, boundary


# public operations --------------------------------------------------------------------


def _fresh_state(P: PointConfig, tess: Tessellation, eps: float, rho: float) -> ExtractionState:
    st = ExtractionState(P.dom, tess, eps, rho)
    st.build_all(enumerate(P.points))
    return st


def enumerate_candidates(P: PointConfig, tess: Tessellation, eps: float, rho: float = 0.1) -> list:
    if len(P) == 0:
        return []
    st = _fresh_state(P, tess, eps, rho)
    return [st.cands[k] for k in sorted(st.cands)]


def extract_crystal(candidates: list, P: PointConfig, tess: Tessellation, eps: float, rho: float,
                    c0: float = 0.0, verify: bool = True) -> TileComplex:
    st = ExtractionState(P.dom, tess, eps, rho)
    for pid, x in enumerate(P.points):
        st.points[pid] = np.asarray(x, float)
        st.index.add(pid, st.points[pid])
        st.scan.add(pid, st.points[pid])
        st.by_point[pid] = set()
    st.insert_candidates(candidates)
    cx = st.complex()
    if verify:
        problems = verify_complex(cx, P, tess, eps, rho)
        if problems:
            raise RuntimeError("extracted complex violates conditions: " + "; ".join(problems[:5]))
    cx.debug["admissible"] = check_admissible(cx, c0, P.dom.N, P.dom.d)
    return cx


def extract(P: PointConfig, tess: Tessellation, eps: float, rho: float, c0: float = 0.0,
            verify: bool = True) -> TileComplex:
    """Enumerate candidates and extract in one call."""
    return extract_crystal(enumerate_candidates(P, tess, eps, rho), P, tess, eps, rho, c0, verify)


def classify_points(P: PointConfig, cx: TileComplex, tess: Tessellation):
    surface, exterior, _ = classify_tiles(cx.tiles, tess, len(P))
    return frozenset(surface), frozenset(exterior)


def check_admissible(cx: TileComplex, c0: float, N: int, d: int) -> bool:
    return len(cx.tiles) >= c0 * N ** d


def verify_complex(cx: TileComplex, P: PointConfig, tess: Tessellation, eps: float, rho: float) -> list:
    """Exhaustive re-check of pairwise compatibility, vertex stars and connectivity; returns violations."""
    problems = []
    if not cx.tiles:
        return problems
    st = ExtractionState(P.dom, tess, eps, rho)
    for pid, x in enumerate(P.points):
        st.points[pid] = np.asarray(x, float)
        st.index.add(pid, st.points[pid])
        st.scan.add(pid, st.points[pid])
        st.by_point[pid] = set()
    st.insert_candidates(cx.tiles)
    keys = [t.key for t in cx.tiles]
    facet_nb = {k: [] for k in keys}
    for a in keys:
        for b in st.nearby_candidates(a):
            if b < a:
                continue
            info = st.relation(a, b)
            if info.conflict:
                problems.append(f"conflict {a} {b}")
            elif info.facet:
                facet_nb[a].append(b)
                facet_nb[b].append(a)
    star: dict = {}
    for k in keys:
        for q in k:
            star.setdefault(q, []).append(k)
    for q, members in star.items():
        if not st._star_embeds(q, members, facet_nb):
            problems.append(f"vertex star at {q}")
    G = nx.Graph()
    G.add_nodes_from(range(len(keys)))
    for i, j in cx.adjacency:
        G.add_edge(i, j)
    if not nx.is_connected(G):
        problems.append("union of tiles is disconnected")
    return problems


# IO ---------------------------------------------------------------------------------------


def read_points_csv(path, dom: TorusDomain) -> PointConfig:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        want = [f"x{j + 1}" for j in range(dom.d)]
        if [h.strip() for h in header] != want:
            raise ValueError(f"expected header {','.join(want)}")
        rows = [[float(v) for v in row] for row in reader if row]
    return PointConfig(dom, np.array(rows, float).reshape(-1, dom.d))


def write_points_csv(path, P: PointConfig):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(P.dom.d)])
        for p in P.points:
            w.writerow([f"{v:.17g}" for v in p])


def complex_to_json(cx: TileComplex) -> str:
    return json.dumps(cx.to_json(), indent=2)
