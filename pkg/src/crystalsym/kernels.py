"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``CRYSTALSYM_PURE=1`` to force the fallback.
"""

import os

if os.environ.get("CRYSTALSYM_PURE", "") not in ("", "0"):
    from . import _kernels_py as impl
    COMPILED = False
else:
    try:
        from . import _kernels as impl
        COMPILED = True
    except ImportError:
        from . import _kernels_py as impl
        COMPILED = False

polygon_gap = impl.polygon_gap
polygon_distance = impl.polygon_distance
point_polygon_distance = impl.point_polygon_distance
points_polygon_distance = impl.points_polygon_distance
match_2d = impl.match_2d
pair_conflict_2d = impl.pair_conflict_2d
points_tetra_distance = impl.points_tetra_distance
tetra_overlap = impl.tetra_overlap

__all__ = ["COMPILED", "polygon_gap", "polygon_distance", "point_polygon_distance",
           "points_polygon_distance", "match_2d", "pair_conflict_2d",
           "points_tetra_distance", "tetra_overlap"]
