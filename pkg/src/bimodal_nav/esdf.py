"""Occupancy grids and Euclidean distance fields with interpolated gradients.

Grids are cell-centered: cell (i, j[, k]) covers
origin + [i, i+1) * resolution per axis, and samples/queries refer to cell
centers.  2D grids serve ground clearance, 3D grids aerial clearance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _kernels


class MapError(ValueError):
    pass


@dataclass
class OccupancyGrid:
    """Boolean occupancy, C-order cells[ix, iy(, iz)]."""

    resolution: float
    origin: np.ndarray
    cells: np.ndarray

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=float)
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.resolution <= 0:
            raise MapError("resolution must be positive")
        if self.cells.ndim not in (2, 3):
            raise MapError("grid must be 2D or 3D")
        if len(self.origin) != self.cells.ndim:
            raise MapError("origin dimensionality must match the grid")
        if min(self.cells.shape) < 1:
            raise MapError("need at least one cell per axis")

    @property
    def ndim(self) -> int:
        return self.cells.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.cells.shape

    @property
    def extent(self) -> np.ndarray:
        """(D, 2) world-coordinate [min, max] per axis (cell edges)."""
        hi = self.origin + np.array(self.dims) * self.resolution
        return np.stack([self.origin, hi], axis=1)

    def cell_center(self, idx: np.ndarray) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def world_to_cell(self, p: np.ndarray) -> np.ndarray:
        idx = np.floor((np.asarray(p, dtype=float) - self.origin) / self.resolution)
        return np.clip(idx, 0, np.array(self.dims) - 1).astype(int)

    def is_occupied(self, p: np.ndarray) -> bool:
        idx = self.world_to_cell(p)
        return bool(self.cells[tuple(idx)])

    def save(self, path: str | Path) -> None:
        """ASCII format: header lines, then 0/1 rows (3D: one block per z)."""
        path = Path(path)
        with path.open("w") as f:
            f.write(f"resolution {float(self.resolution)!r}\n")
            f.write("origin " + " ".join(repr(float(v)) for v in self.origin) + "\n")
            f.write("dims " + " ".join(str(d) for d in self.dims) + "\n")
            body = self.cells.astype(np.uint8)
            if self.ndim == 2:
                blocks = [body]
            else:
                blocks = [body[:, :, k] for k in range(self.dims[2])]
            for b, block in enumerate(blocks):
                if b:
                    f.write("\n")
                for row in block:
                    f.write(" ".join(str(int(c)) for c in row) + "\n")
        meta = {
            "resolution": self.resolution,
            "origin": list(self.origin),
            "dims": list(self.dims),
            "occupied_cells": int(self.cells.sum()),
        }
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "OccupancyGrid":
        lines = Path(path).read_text().splitlines()
        if len(lines) < 3 or not lines[0].startswith("resolution"):
            raise MapError(f"{path}: not a grid file")
        resolution = float(lines[0].split()[1])
        origin = np.array([float(v) for v in lines[1].split()[1:]])
        dims = tuple(int(v) for v in lines[2].split()[1:])
        rows = [ln for ln in lines[3:] if ln.strip()]
        flat = np.array([[int(v) for v in ln.split()] for ln in rows], dtype=bool)
        if len(dims) == 2:
            cells = flat.reshape(dims)
        else:
            cells = np.stack(
                [flat[k * dims[0] : (k + 1) * dims[0]] for k in range(dims[2])], axis=2
            )
        return cls(resolution=resolution, origin=origin, cells=cells)


@dataclass
class EsdfGrid:
    """Distance to the nearest occupied cell, meters, per cell center."""

    resolution: float
    origin: np.ndarray
    dist: np.ndarray

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=float)
        self.dist = np.asarray(self.dist, dtype=float)

    @property
    def ndim(self) -> int:
        return self.dist.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.dist.shape

    def query(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Interpolated (distance, gradient, inside) at world points (B, D).

        Outside points are clamped to the sampling hull and flagged; their
        gradient is the boundary interpolant's.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.ndim == 2:
            return _kernels.grid_sample_2d(self.dist, self.origin, self.resolution, pts)
        return _kernels.grid_sample_3d(self.dist, self.origin, self.resolution, pts)

    def query_one(self, p: np.ndarray) -> tuple[float, np.ndarray, bool]:
        d, g, inside = self.query(np.asarray(p, dtype=float)[None])
        return float(d[0]), g[0], bool(inside[0])


def build_esdf(grid: OccupancyGrid) -> EsdfGrid:
    """Exact Euclidean distance transform of the free space.

    Empty grids get the domain diagonal as a finite "no obstacle" sentinel.
    """
    occ = grid.cells
    if occ.all():
        raise MapError("all cells occupied; no free space to plan in")
    diag = float(np.linalg.norm(np.array(grid.dims) * grid.resolution))
    if not occ.any():
        dist = np.full(grid.dims, diag)
    else:
        dist = ndimage.distance_transform_edt(~occ, sampling=grid.resolution)
        np.minimum(dist, diag, out=dist)
    return EsdfGrid(resolution=grid.resolution, origin=grid.origin.copy(), dist=dist)


def brute_force_esdf(grid: OccupancyGrid) -> EsdfGrid:
    """O(n^2) nearest-occupied scan; the oracle the fast transform must match."""
    occ_idx = np.argwhere(grid.cells)
    diag = float(np.linalg.norm(np.array(grid.dims) * grid.resolution))
    if occ_idx.size == 0:
        return EsdfGrid(grid.resolution, grid.origin.copy(), np.full(grid.dims, diag))
    all_idx = np.indices(grid.dims).reshape(grid.ndim, -1).T
    d2 = ((all_idx[:, None, :] - occ_idx[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    dist = np.sqrt(d2.astype(float)).reshape(grid.dims) * grid.resolution
    return EsdfGrid(grid.resolution, grid.origin.copy(), np.minimum(dist, diag))
