"""Shoebox scenes with box furniture, receiver grids and distances."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ELEVATIONS_M = (0.5, 1.0, 1.5)
_EPS = 1e-9


class GeometryError(ValueError):
    pass


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise GeometryError(f"expected a finite 3-vector, got {p!r}")
    return arr


def distance(a, b) -> float:
    """Euclidean distance in meters."""
    return float(np.linalg.norm(as_point(a) - as_point(b)))


@dataclass(frozen=True)
class Box:
    min_m: tuple
    max_m: tuple

    def __post_init__(self):
        lo, hi = as_point(self.min_m), as_point(self.max_m)
        if np.any(hi < lo):
            raise GeometryError(f"box max {hi.tolist()} below min {lo.tolist()}")
        object.__setattr__(self, "min_m", tuple(lo.tolist()))
        object.__setattr__(self, "max_m", tuple(hi.tolist()))

    def distance_to(self, p) -> float:
        """Distance from ``p`` to the box; zero inside or on the surface."""
        p = as_point(p)
        lo, hi = np.asarray(self.min_m), np.asarray(self.max_m)
        gap = np.maximum(np.maximum(lo - p, p - hi), 0.0)
        return float(np.linalg.norm(gap))


@dataclass(frozen=True)
class ShoeboxScene:
    """Rectangular room with per-wall absorption and box furniture.

    ``wall_absorption`` is ordered (-x, +x, -y, +y, -z, +z).
    """

    dims_m: tuple
    wall_absorption: tuple = (0.3,) * 6
    furniture: tuple = ()
    label: str = "room"
    sources: tuple = ()
    receivers: tuple = ()

    def __post_init__(self):
        dims = as_point(self.dims_m)
        if np.any(dims <= 0):
            raise GeometryError(f"room dimensions must be positive, got {dims.tolist()}")
        alpha = np.asarray(self.wall_absorption, dtype=np.float64).ravel()
        if alpha.size == 1:
            alpha = np.repeat(alpha, 6)
        if alpha.size != 6 or np.any(alpha < 0) or np.any(alpha > 1):
            raise GeometryError("wall_absorption needs six coefficients in [0, 1]")
        boxes = tuple(b if isinstance(b, Box) else Box(*b) for b in self.furniture)
        for b in boxes:
            if np.any(np.asarray(b.min_m) < -_EPS) or np.any(np.asarray(b.max_m) > dims + _EPS):
                raise GeometryError(f"furniture box {b} lies outside the room")
        object.__setattr__(self, "dims_m", tuple(dims.tolist()))
        object.__setattr__(self, "wall_absorption", tuple(alpha.tolist()))
        object.__setattr__(self, "furniture", boxes)
        object.__setattr__(self, "sources", tuple(tuple(as_point(s).tolist()) for s in self.sources))
        object.__setattr__(self, "receivers", tuple(tuple(as_point(r).tolist()) for r in self.receivers))

    @property
    def volume_m3(self) -> float:
        x, y, z = self.dims_m
        return x * y * z

    @property
    def surface_m2(self) -> float:
        x, y, z = self.dims_m
        return 2 * (x * y + x * z + y * z)

    def contains(self, p, margin: float = 0.0) -> bool:
        p = as_point(p)
        dims = np.asarray(self.dims_m)
        return bool(np.all(p > margin - _EPS) and np.all(p < dims - margin + _EPS)
                    and np.all(p > 0) and np.all(p < dims))

    def sabine_t60(self) -> float:
        x, y, z = self.dims_m
        areas = np.array([y * z, y * z, x * z, x * z, x * y, x * y])
        return 0.161 * self.volume_m3 / float(np.dot(areas, self.wall_absorption))

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "dims_m": list(self.dims_m),
            "wall_absorption": list(self.wall_absorption),
            "furniture": [{"min": list(b.min_m), "max": list(b.max_m)} for b in self.furniture],
            "sources": [list(s) for s in self.sources],
        }
        if self.receivers:
            d["receivers"] = [list(r) for r in self.receivers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ShoeboxScene":
        try:
            return cls(
                dims_m=tuple(d["dims_m"]),
                wall_absorption=tuple(np.atleast_1d(d.get("wall_absorption", [0.3] * 6))),
                furniture=tuple(Box(f["min"], f["max"]) for f in d.get("furniture", [])),
                label=str(d.get("label", "room")),
                sources=tuple(tuple(s) for s in d.get("sources", [])),
                receivers=tuple(tuple(r) for r in d.get("receivers", [])),
            )
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"invalid scene description: {exc}") from exc


def load_scene(path) -> ShoeboxScene:
    with open(path, encoding="utf-8") as fh:
        return ShoeboxScene.from_dict(json.load(fh))


def _axis_positions(length, spacing, clearance):
    n = int(math.floor((length - 2 * clearance) / spacing + _EPS)) + 1
    return [clearance + k * spacing for k in range(max(n, 0))]


def generate_receiver_grid(scene: ShoeboxScene, spacing_m: float = 0.5,
                           elevations_m=DEFAULT_ELEVATIONS_M, clearance_m: float = 0.25,
                           furniture_clearance_m: float = 0.25) -> list:
    """Receiver positions on a horizontal grid at fixed elevations.

    The grid starts ``clearance_m`` from the min corner and steps by
    ``spacing_m`` while staying ``clearance_m`` from the far walls. Points
    inside a furniture box or closer than ``furniture_clearance_m`` to one
    are dropped. Order is x-major, then y, then z.
    """
    if spacing_m <= 0:
        raise GeometryError("spacing must be positive")
    if clearance_m < 0 or furniture_clearance_m < 0:
        raise GeometryError("clearance must be non-negative")
    lx, ly, lz = scene.dims_m
    xs = _axis_positions(lx, spacing_m, clearance_m)
    ys = _axis_positions(ly, spacing_m, clearance_m)
    zs = [z for z in elevations_m
          if z >= clearance_m - _EPS and z <= lz - clearance_m + _EPS and 0 < z < lz]
    grid = np.array([(x, y, float(z)) for x in xs for y in ys for z in zs
                     if 0 < x < lx and 0 < y < ly]).reshape(-1, 3)
    keep = np.ones(len(grid), dtype=bool)
    for b in scene.furniture:
        gap = np.maximum(np.maximum(np.asarray(b.min_m) - grid, grid - np.asarray(b.max_m)), 0.0)
        keep &= np.linalg.norm(gap, axis=1) > furniture_clearance_m
    points = [tuple(p) for p in grid[keep].tolist()]
    if not points:
        raise GeometryError("no valid points: room too small for the requested clearance")
    return points
