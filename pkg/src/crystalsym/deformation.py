"""Piecewise-constant deformation field, order parameter and labelled spanning trees."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .extraction import PointConfig, TileComplex, tile_gradients
from .geometry import minimal_image_many, nearest_rotation, weighted_best_rotation
from .tessellation import Tessellation


class FieldEntry(NamedTuple):
    weight: float
    gradient: np.ndarray
    tile: int
    simplex: int


@dataclass
class DeformationField:
    entries: list
    n_tiles: int
    d: int

    def tile_entries(self, tile: int) -> list:
        return [e for e in self.entries if e.tile == tile]


@dataclass
class LabelledTree:
    root: int
    order: list  # vertices in BFS order
    parent: dict  # child -> parent
    labels: dict  # child -> image of (child - parent) under the chart of a shared tile
    edge_tile: dict  # child -> tile index used for the label

    @property
    def n_edges(self) -> int:
        return len(self.parent)


def _tile_images(tile, tess: Tessellation) -> np.ndarray:
    proto = tess.prototiles[tile.type_id]
    R = tile.placement if tile.placement is not None else np.eye(proto.d)
    return proto.corners[list(tile.correspondence)] @ R.T


def build_deformation(cx: TileComplex, tess: Tessellation) -> DeformationField:
    """Per-simplex gradients of the maps sending each perturbed tile to its reference tile."""
    entries = []
    for ti, tile in enumerate(cx.tiles):
        proto = tess.prototiles[tile.type_id]
        R = tile.placement if tile.placement is not None else np.eye(proto.d)
        grads, vols = tile_gradients(tile.coords, proto, tile.correspondence, R, f"#{ti} {tile.key}")
        for si, (G, w) in enumerate(zip(grads, vols)):
            entries.append(FieldEntry(w, G, ti, si))
    return DeformationField(entries, len(cx.tiles), tess.d)


def local_distortion(field: DeformationField, tile: int) -> float:
    return float(sum(e.weight * nearest_rotation(e.gradient).dist ** 2 for e in field.tile_entries(tile)))


def order_parameter(field: DeformationField) -> tuple:
    """``(min_R sum lambda |V - R|^2 / |T|, argmin R)``."""
    if not field.entries or field.n_tiles == 0:
        raise ValueError("empty deformation field")
    R = weighted_best_rotation((e.weight, e.gradient) for e in field.entries)
    total = 0.0
    for e in field.entries:
        diff = e.gradient - R
        total += e.weight * float(np.sum(diff * diff))
    return total / field.n_tiles, R


def field_distance(field: DeformationField, R: np.ndarray) -> float:
    """``sum lambda |V - R|^2`` over the crystal."""
    return float(sum(e.weight * float(np.sum((e.gradient - R) ** 2)) for e in field.entries))


def labelled_spanning_tree(cx: TileComplex, field: DeformationField, tess: Tessellation) -> LabelledTree:
    """BFS tree over tile edges rooted at the smallest vertex index, neighbours in ascending order."""
    edges: dict = {}
    for ti, tile in enumerate(cx.tiles):
        proto = tess.prototiles[tile.type_id]
        inv = {p: k for k, p in enumerate(tile.correspondence)}
        for a, b in proto.edge_pairs:
            x, y = tile.key[inv[a]], tile.key[inv[b]]
            edges.setdefault(x, {}).setdefault(y, ti)
            edges.setdefault(y, {}).setdefault(x, ti)
    vertices = sorted(cx.vertex_map)
    if not vertices:
        raise ValueError("no crystal vertices")
    root = vertices[0]
    parent, labels, edge_tile = {}, {}, {}
    seen = {root}
    order = [root]
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in sorted(edges.get(x, {})):
            if y in seen:
                continue
            seen.add(y)
            ti = edges[x][y]
            tile = cx.tiles[ti]
            img = _tile_images(tile, tess)
            labels[y] = img[tile.key.index(y)] - img[tile.key.index(x)]
            parent[y] = x
            edge_tile[y] = ti
            order.append(y)
            queue.append(y)
    if len(seen) != len(vertices):
        raise ValueError("tile-edge graph is disconnected")
    return LabelledTree(root, order, parent, labels, edge_tile)


def labels_in_set(tree: LabelledTree, tess: Tessellation, tol: float = 1e-9) -> bool:
    S = tess.label_set
    return all(np.min(np.linalg.norm(S - v, axis=1)) <= tol for v in tree.labels.values())


def tree_edge_terms(tree: LabelledTree, P: PointConfig, R: np.ndarray) -> np.ndarray:
    """Per-edge ``|(X_child - X_parent) - R^T xi|^2`` in BFS order."""
    if not tree.parent:
        return np.zeros(0)
    kids = list(tree.order[1:])
    disp = minimal_image_many(np.array([P.points[c] - P.points[tree.parent[c]] for c in kids]), P.dom)
    xi = np.array([tree.labels[c] for c in kids])
    r = disp - xi @ R
    return np.einsum("ij,ij->i", r, r)


def tree_lower_bound(tree: LabelledTree, P: PointConfig, R: np.ndarray) -> float:
    """``sum_l |(X_child - X_parent) - R^T xi_l|^2`` with minimal-image displacements."""
    return float(np.sum(tree_edge_terms(tree, P, R)))


def tile_tree_ratios(field: DeformationField, tree: LabelledTree, P: PointConfig, R: np.ndarray) -> dict:
    """Per tile owning tree edges: ``int_t |V - R|^2`` over the tree terms of its edges.

    The global ratio is a mediant of these, so their minimum bounds it from below.
    """
    terms = tree_edge_terms(tree, P, R)
    owned: dict = {}
    for c, v in zip(tree.order[1:], terms):
        t = tree.edge_tile[c]
        owned[t] = owned.get(t, 0.0) + float(v)
    mass: dict = {}
    for e in field.entries:
        diff = e.gradient - R
        mass[e.tile] = mass.get(e.tile, 0.0) + e.weight * float(np.sum(diff * diff))
    return {t: (mass.get(t, 0.0) / b if b > 0 else np.inf) for t, b in owned.items()}
