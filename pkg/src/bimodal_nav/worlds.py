"""Synthetic world generators: obstacle layouts rasterized into per-mode grids.

Each world carries a 2D ground grid (anything a rolling vehicle can hit) and
a 3D air grid (the same obstacles up to their heights), plus the two distance
fields.  A wall of finite height therefore blocks driving but not flying.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .esdf import EsdfGrid, OccupancyGrid, build_esdf


@dataclass
class CylinderObstacle:
    x: float
    y: float
    radius: float
    height: float


@dataclass
class BoxObstacle:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    height: float


@dataclass
class World:
    ground: OccupancyGrid
    air: OccupancyGrid
    ground_esdf: EsdfGrid = field(init=False)
    air_esdf: EsdfGrid = field(init=False)

    def __post_init__(self) -> None:
        self.ground_esdf = build_esdf(self.ground)
        self.air_esdf = build_esdf(self.air)

    @property
    def bounds_xy(self) -> np.ndarray:
        return self.ground.extent

    @property
    def z_max(self) -> float:
        return float(self.air.extent[2, 1])

    def esdf_for_mode(self, terrestrial: bool) -> EsdfGrid:
        return self.ground_esdf if terrestrial else self.air_esdf


def _rasterize(
    extent_xy: tuple[float, float],
    height: float,
    res_ground: float,
    res_air: float,
    obstacles: list,
) -> tuple[OccupancyGrid, OccupancyGrid]:
    ex, ey = extent_xy
    ngx, ngy = int(round(ex / res_ground)), int(round(ey / res_ground))
    nax, nay = int(round(ex / res_air)), int(round(ey / res_air))
    naz = int(round(height / res_air))
    ground = np.zeros((ngx, ngy), dtype=bool)
    air = np.zeros((nax, nay, naz), dtype=bool)

    gx = (np.arange(ngx) + 0.5) * res_ground
    gy = (np.arange(ngy) + 0.5) * res_ground
    ax = (np.arange(nax) + 0.5) * res_air
    ay = (np.arange(nay) + 0.5) * res_air
    az = (np.arange(naz) + 0.5) * res_air

    for ob in obstacles:
        if isinstance(ob, CylinderObstacle):
            gmask = (gx[:, None] - ob.x) ** 2 + (gy[None, :] - ob.y) ** 2 <= ob.radius**2
            amask = (ax[:, None] - ob.x) ** 2 + (ay[None, :] - ob.y) ** 2 <= ob.radius**2
        else:
            gmask = (
                (gx[:, None] >= ob.xmin)
                & (gx[:, None] <= ob.xmax)
                & (gy[None, :] >= ob.ymin)
                & (gy[None, :] <= ob.ymax)
            )
            amask = (
                (ax[:, None] >= ob.xmin)
                & (ax[:, None] <= ob.xmax)
                & (ay[None, :] >= ob.ymin)
                & (ay[None, :] <= ob.ymax)
            )
        ground |= gmask
        air |= amask[:, :, None] & (az[None, None, :] <= ob.height)

    g = OccupancyGrid(resolution=res_ground, origin=np.zeros(2), cells=ground)
    a = OccupancyGrid(resolution=res_air, origin=np.zeros(3), cells=air)
    return g, a


def make_empty_world(
    extent_xy: tuple[float, float] = (20.0, 20.0),
    height: float = 4.0,
    res_ground: float = 0.15,
    res_air: float = 0.4,
) -> World:
    g, a = _rasterize(extent_xy, height, res_ground, res_air, [])
    return World(ground=g, air=a)


def make_forest_world(
    extent_xy: tuple[float, float] = (50.0, 50.0),
    height: float = 4.0,
    n_obstacles: int = 80,
    radius_range: tuple[float, float] = (0.3, 0.8),
    height_range: tuple[float, float] = (1.5, 3.2),
    seed: int = 0,
    keep_clear: list[tuple[float, float, float]] | None = None,
    res_ground: float = 0.15,
    res_air: float = 0.4,
) -> World:
    """Random cylinder forest. keep_clear entries (x, y, r) suppress obstacles
    whose footprint would intrude (start/goal pads)."""
    rng = np.random.default_rng(seed)
    obstacles: list[CylinderObstacle] = []
    ex, ey = extent_xy
    attempts = 0
    while len(obstacles) < n_obstacles and attempts < 20 * n_obstacles:
        attempts += 1
        r = rng.uniform(*radius_range)
        x = rng.uniform(r + 0.5, ex - r - 0.5)
        y = rng.uniform(r + 0.5, ey - r - 0.5)
        if keep_clear and any(
            np.hypot(x - cx, y - cy) < r + cr for cx, cy, cr in keep_clear
        ):
            continue
        obstacles.append(
            CylinderObstacle(x=x, y=y, radius=r, height=rng.uniform(*height_range))
        )
    g, a = _rasterize(extent_xy, height, res_ground, res_air, obstacles)
    return World(ground=g, air=a)


def make_fence_world(
    extent_xy: tuple[float, float] = (20.0, 10.0),
    height: float = 4.0,
    fence_x: float = 10.0,
    fence_height: float = 1.2,
    fence_thickness: float = 0.3,
    res_ground: float = 0.15,
    res_air: float = 0.4,
) -> World:
    """A full-width wall of finite height: the ground route is blocked, the
    air above the wall is free."""
    wall = BoxObstacle(
        xmin=fence_x - fence_thickness / 2,
        xmax=fence_x + fence_thickness / 2,
        ymin=-1.0,
        ymax=extent_xy[1] + 1.0,
        height=fence_height,
    )
    g, a = _rasterize(extent_xy, height, res_ground, res_air, [wall])
    return World(ground=g, air=a)
