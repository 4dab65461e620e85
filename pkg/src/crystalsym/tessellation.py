"""Periodic reference tessellations and their combinatorial constants."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import ConvexHull

from .geometry import TorusDomain, rotation_2d, simplex_volume
from .polytope import convex_distance


@dataclass(frozen=True)
class StandardTile:
    type_id: int
    corners: np.ndarray
    simplices: tuple
    volume: float
    edge_pairs: tuple
    diagonal_pairs: tuple
    symmetry_group: tuple
    faces: tuple  # faces[k] = tuple of frozensets of corner indices, k = face dimension

    @property
    def n_corners(self) -> int:
        return len(self.corners)

    @property
    def d(self) -> int:
        return self.corners.shape[1]

    @property
    def facets(self) -> tuple:
        return self.faces[self.d - 1]

    @property
    def diameter(self) -> float:
        c = self.corners
        return float(max(np.linalg.norm(c[i] - c[j]) for i, j in itertools.combinations(range(len(c)), 2)))

    def all_faces(self):
        for k in range(len(self.faces)):
            yield from self.faces[k]


@dataclass
class Tessellation:
    name: str
    d: int
    ell: float
    prototiles: list
    basis: np.ndarray
    tiles_per_cell: list  # (type_id, rotation, offset)
    vertex_offsets: np.ndarray
    label_set: np.ndarray = field(default=None)
    vertex_types: list = field(default=None)  # list of dicts: star graph description

    def __post_init__(self):
        if self.label_set is None:
            self.label_set = _label_set(self)
        if self.vertex_types is None:
            self.vertex_types = _vertex_types(self)

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    def domain(self, N: int) -> TorusDomain:
        return TorusDomain(self.d, N, self.basis)

    def placed_corners(self, entry: int, cell=None) -> np.ndarray:
        type_id, R, off = self.tiles_per_cell[entry]
        proto = self.prototiles[type_id]
        base = np.zeros(self.d) if cell is None else self.basis @ np.asarray(cell, float)
        return base + off + proto.corners @ R.T

    @property
    def max_diameter(self) -> float:
        return max(p.diameter for p in self.prototiles)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "ell": self.ell,
            "basis": self.basis.tolist(),
            "prototiles": [
                {
                    "type_id": p.type_id,
                    "corners": p.corners.tolist(),
                    "simplices": [list(s) for s in p.simplices],
                    "volume": p.volume,
                    "edge_pairs": [list(e) for e in p.edge_pairs],
                    "diagonal_pairs": [list(e) for e in p.diagonal_pairs],
                }
                for p in self.prototiles
            ],
            "tiles_per_cell": [
                {"type_id": t, "rotation": R.tolist(), "offset": list(map(float, o))}
                for t, R, o in self.tiles_per_cell
            ],
            "vertex_offsets": self.vertex_offsets.tolist(),
            "label_set": self.label_set.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Tessellation":
        protos = [
            make_prototile(p["type_id"], np.array(p["corners"], float), [tuple(s) for s in p["simplices"]],
                           [tuple(e) for e in p["edge_pairs"]])
            for p in doc["prototiles"]
        ]
        tpc = [(t["type_id"], np.array(t["rotation"], float), np.array(t["offset"], float))
               for t in doc["tiles_per_cell"]]
        return cls(doc["name"], int(doc["d"]), float(doc["ell"]), protos, np.array(doc["basis"], float),
                   tpc, np.array(doc["vertex_offsets"], float))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


@dataclass(frozen=True)
class TessellationConstants:
    b: dict
    e: dict
    f: dict
    gamma: dict
    rho_max: float

    def to_json(self) -> dict:
        key = lambda k: ",".join(map(str, k))
        return {
            "b": {key(k): v for k, v in self.b.items()},
            "e": {key(k): v for k, v in self.e.items()},
            "f": {key(k): v for k, v in self.f.items()},
            "gamma": {str(k): str(v) for k, v in self.gamma.items()},
            "gamma_float": {str(k): float(v) for k, v in self.gamma.items()},
            "rho_max": self.rho_max,
        }


def _faces_of(corners: np.ndarray, tol: float = 1e-9) -> tuple:
    d = corners.shape[1]
    n = len(corners)
    hull = ConvexHull(corners)
    facets = set()
    for eq in hull.equations:
        on = frozenset(int(k) for k in range(n) if abs(eq[:d] @ corners[k] + eq[d]) < tol)
        facets.add(on)
    faces = set(facets)
    frontier = set(facets)
    while frontier:
        new = set()
        for a in frontier:
            for b in facets:
                c = a & b
                if c and c not in faces:
                    new.add(c)
        faces |= new
        frontier = new

    def dim(s):
        pts = corners[sorted(s)]
        if len(pts) == 1:
            return 0
        return int(np.linalg.matrix_rank(pts[1:] - pts[0], tol=1e-9))

    by_dim = [[] for _ in range(d)]
    for s in faces:
        k = dim(s)
        if k < d:
            by_dim[k].append(s)
    for k in range(d):
        by_dim[k] = tuple(sorted(by_dim[k], key=lambda s: sorted(s)))
    return tuple(by_dim)


def _isometric_permutations(corners: np.ndarray, tol: float = 1e-9) -> tuple:
    n = len(corners)
    D = np.linalg.norm(corners[:, None] - corners[None], axis=-1)
    out = []

    def extend(perm, used):
        k = len(perm)
        if k == n:
            out.append(tuple(perm))
            return
        for j in range(n):
            if j in used:
                continue
            if all(abs(D[k, i] - D[j, perm[i]]) < tol for i in range(k)):
                perm.append(j)
                used.add(j)
                extend(perm, used)
                perm.pop()
                used.discard(j)

    extend([], set())
    return tuple(sorted(out))


def make_prototile(type_id: int, corners: np.ndarray, simplices, edge_pairs) -> StandardTile:
    corners = np.asarray(corners, float)
    n = len(corners)
    edge_pairs = tuple(sorted(tuple(sorted(e)) for e in edge_pairs))
    diag = tuple(p for p in itertools.combinations(range(n), 2) if p not in edge_pairs)
    vol = float(sum(simplex_volume(corners[list(s)]) for s in simplices))
    hull_vol = float(ConvexHull(corners).volume)
    if abs(vol - hull_vol) > 1e-10 * max(1.0, hull_vol):
        raise ValueError("simplices do not partition the tile")
    corners.setflags(write=False)
    return StandardTile(
        type_id=type_id,
        corners=corners,
        simplices=tuple(tuple(int(i) for i in s) for s in simplices),
        volume=vol,
        edge_pairs=edge_pairs,
        diagonal_pairs=diag,
        symmetry_group=_isometric_permutations(corners),
        faces=_faces_of(corners),
    )


def build_triangular(ell: float = 1.0) -> Tessellation:
    if ell <= 0:
        raise ValueError("ell must be positive")
    tau = np.array([0.5, math.sqrt(3) / 2])
    corners = ell * np.array([[0.0, 0.0], [1.0, 0.0], tau])
    proto = make_prototile(0, corners, [(0, 1, 2)], [(0, 1), (1, 2), (0, 2)])
    basis = ell * np.column_stack([[1.0, 0.0], tau])
    tiles = [(0, np.eye(2), np.zeros(2)), (0, rotation_2d(math.pi / 3), np.zeros(2))]
    return Tessellation("triangular", 2, float(ell), [proto], basis, tiles, np.zeros((1, 2)))


def kuhn_simplices(d: int) -> list:
    out = []
    for perm in itertools.permutations(range(d)):
        idx = 0
        simplex = [0]
        for axis in perm:
            idx |= 1 << axis
            simplex.append(idx)
        out.append(tuple(simplex))
    return out


def build_cubic(d: int, ell: float = 1.0) -> Tessellation:
    if d < 2 or ell <= 0:
        raise ValueError("need d >= 2 and ell > 0")
    n = 1 << d
    corners = ell * np.array([[(k >> j) & 1 for j in range(d)] for k in range(n)], float)
    edges = [(a, b) for a, b in itertools.combinations(range(n), 2) if bin(a ^ b).count("1") == 1]
    proto = make_prototile(0, corners, kuhn_simplices(d), edges)
    basis = ell * np.eye(d)
    return Tessellation("cubic", d, float(ell), [proto], basis, [(0, np.eye(d), np.zeros(d))], np.zeros((1, d)))


def build(name: str, d: int = 2, ell: float = 1.0) -> Tessellation:
    if name == "triangular":
        if d != 2:
            raise ValueError("triangular tessellation is two-dimensional")
        return build_triangular(ell)
    if name == "cubic":
        return build_cubic(d, ell)
    raise ValueError(f"unknown tessellation {name!r}")


# periodic patch -------------------------------------------------------------


@dataclass
class Patch:
    """Tessellation restricted to the torus ``N`` cells per axis."""

    N: int
    points: np.ndarray  # wrapped vertex positions
    tiles: list  # (type_id, tuple of point ids in prototile corner order)
    tile_origin: np.ndarray  # unwrapped position of corner 0 of each tile


def _vertex_lookup(tess: Tessellation, N: int):
    inv = np.linalg.inv(tess.basis)

    def find(p):
        for m, o in enumerate(tess.vertex_offsets):
            f = inv @ (p - o)
            r = np.round(f)
            if np.max(np.abs(f - r)) < 1e-7:
                cell = tuple(int(c) % N for c in r)
                return cell, m
        raise RuntimeError("tile corner is not a tessellation vertex")

    return find


def build_patch(tess: Tessellation, N: int) -> Patch:
    d = tess.d
    nv = len(tess.vertex_offsets)
    cells = list(itertools.product(range(N), repeat=d))
    index = {}
    pts = []
    for cell in cells:
        for m, o in enumerate(tess.vertex_offsets):
            index[(cell, m)] = len(pts)
            pts.append(tess.basis @ np.array(cell, float) + o)
    dom = tess.domain(N)
    points = dom.wrap(np.array(pts)) if pts else np.zeros((0, d))
    find = _vertex_lookup(tess, N)
    tiles = []
    origins = []
    for cell in cells:
        for entry in range(len(tess.tiles_per_cell)):
            cs = tess.placed_corners(entry, cell)
            ids = []
            for p in cs:
                c, m = find(p)
                ids.append(index[(c, m)])
            if len(set(ids)) != len(ids):
                raise ValueError(f"N={N} too small: tile wraps onto itself")
            tiles.append((tess.tiles_per_cell[entry][0], tuple(ids)))
            origins.append(cs[0])
    assert len(points) == len(cells) * nv
    return Patch(N, points, tiles, np.array(origins))


# derived data ---------------------------------------------------------------


def _label_set(tess: Tessellation) -> np.ndarray:
    labels = set()
    for entry, (t, R, off) in enumerate(tess.tiles_per_cell):
        cs = tess.placed_corners(entry)
        for a, b in tess.prototiles[t].edge_pairs:
            v = cs[b] - cs[a]
            labels.add(tuple(np.round(v, 9) + 0.0))
            labels.add(tuple(np.round(-v, 9) + 0.0))
    return np.array(sorted(labels))


def _shares_facet(tess, ta, ids_a, tb, ids_b) -> bool:
    shared = set(ids_a) & set(ids_b)
    fa = frozenset(k for k, v in enumerate(ids_a) if v in shared)
    return fa in set(tess.prototiles[ta].facets)


def _vertex_types(tess: Tessellation) -> list:
    patch = build_patch(tess, 3)
    nv = len(tess.vertex_offsets)
    # vertex ids of cell (0,..,0) are 0..nv-1 by construction
    types = []
    seen = {}
    for m in range(nv):
        star = [(k, t, ids) for k, (t, ids) in enumerate(patch.tiles) if m in ids]
        desc = []
        for k, t, ids in star:
            corner = ids.index(m)
            rel = patch.tile_origin[k] - patch.points[m]
            desc.append((t, corner, tuple(np.round(rel, 9) + 0.0)))
        key = tuple(sorted(desc))
        edges = set()
        for a in range(len(star)):
            for b in range(a + 1, len(star)):
                if _shares_facet(tess, star[a][1], star[a][2], star[b][1], star[b][2]):
                    edges.add((a, b))
        if key not in seen:
            seen[key] = len(types)
            types.append({
                "offsets": [m],
                "tile_types": [t for _, t, _ in star],
                "star_edges": sorted(edges),
            })
        else:
            types[seen[key]]["offsets"].append(m)
    return types


def vertex_type_of_offset(tess: Tessellation, m: int) -> int:
    for j, vt in enumerate(tess.vertex_types):
        if m in vt["offsets"]:
            return j
    raise KeyError(m)


def compute_constants(tess: Tessellation) -> TessellationConstants:
    """Count ``b``, ``e``, ``f``, ``gamma`` and ``rho_max`` on a 3-periodic patch."""
    patch = build_patch(tess, 3)
    nv = len(tess.vertex_offsets)
    I = range(len(tess.prototiles))
    J = range(len(tess.vertex_types))
    vtype = np.empty(len(patch.points), int)
    for pid in range(len(patch.points)):
        vtype[pid] = vertex_type_of_offset(tess, pid % nv)
    tiles_at = [[] for _ in range(len(patch.points))]
    for k, (t, ids) in enumerate(patch.tiles):
        for v in ids:
            tiles_at[v].append(k)

    def consistent(name, values):
        vals = set(values)
        if len(vals) > 1:
            raise RuntimeError(f"inconsistent {name} counts across representatives: {sorted(vals)}")
        return vals.pop() if vals else 0

    b, e, f = {}, {}, {}
    for i in I:
        reps = [k for k, (t, _) in enumerate(patch.tiles) if t == i]
        for l in I:
            counts = []
            for k in reps:
                nb = {q for v in patch.tiles[k][1] for q in tiles_at[v]} - {k}
                counts.append(sum(1 for q in nb if patch.tiles[q][0] == l))
            b[(i, l)] = consistent("b", counts)
        for j in J:
            e[(i, j)] = consistent("e", [sum(1 for v in patch.tiles[k][1] if vtype[v] == j) for k in reps])
            vreps = [v for v in range(len(patch.points)) if vtype[v] == j]
            f[(i, j)] = consistent("f", [sum(1 for q in tiles_at[v] if patch.tiles[q][0] == i) for v in vreps])
    gamma = {}
    for i in I:
        g = Fraction(0)
        for j in J:
            if f[(i, j)]:
                Ij = sum(1 for ii in I if f[(ii, j)])
                g += Fraction(e[(i, j)], f[(i, j)] * Ij)
        gamma[i] = g
    return TessellationConstants(b, e, f, gamma, _rho_max(tess))


def _rho_max(tess: Tessellation) -> float:
    # unwrapped neighbourhood of the origin cell
    d = tess.d
    tiles = []
    centre = []
    for cell in itertools.product(range(-2, 3), repeat=d):
        for entry in range(len(tess.tiles_per_cell)):
            if not any(cell):
                centre.append(len(tiles))
            tiles.append(tess.placed_corners(entry, cell))
    best = math.inf
    for a in centre:
        ta = tiles[a]
        for b, tb in enumerate(tiles):
            if a == b:
                continue
            if np.min(np.linalg.norm(ta[:, None] - tb[None], axis=-1)) < 1e-9:
                continue
            best = min(best, convex_distance(ta, tb))
    return min(1.0, best / 3.0)


def gamma_sum(tess: Tessellation, consts: TessellationConstants, counts: dict) -> Fraction:
    return sum((consts.gamma[i] * counts.get(i, 0) for i in consts.gamma), Fraction(0))
