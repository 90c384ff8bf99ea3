"""Hybrid-state A* front-end over ground and flight motion primitives.

Terrestrial nodes live in (x, y, phi, v) and expand constant-(a, omega)
unicycle arcs; aerial nodes live in (p, v) and expand constant-acceleration
flights weighted by an energy factor rho_air > 1.  Any terrestrial node may
spawn flight successors (takeoff) and slow low aerial nodes may drop back to
the ground (landing), so mode switching falls out of ordinary best-first
search.  The result is a waypoint/duration/mode-label skeleton sized for the
trajectory optimizer.
"""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .dynamics import AERIAL, TERRESTRIAL
from .esdf import EsdfGrid
from .worlds import World


class SearchError(RuntimeError):
    """No path found; carries the number of explored nodes."""

    def __init__(self, message: str, explored: int = 0):
        super().__init__(message)
        self.explored = explored


@dataclass
class SearchConfig:
    v_max: float = 3.0
    a_max: float = 2.5
    omega_max: float = 2.5
    d_s: float = 0.4
    tau_p: float = 0.5
    n_omega: int = 5
    rho_air: float = 3.0
    n_substeps: int = 5
    v_bin: float = 0.5
    phi_bin: float = np.pi / 8
    prune_xy_factor: float = 2.0  # position cell = factor * map resolution
    analytic_period: int = 10
    goal_tol_pos: float = 0.5
    goal_tol_heading: float = np.pi / 6
    max_expansions: int = 60000
    allow_flight: bool = True
    # 1.0 keeps the admissible heuristic; >1 trades path cost for speed
    heuristic_inflation: float = 1.0
    # stop once the incumbent is within this factor of the best open f-value
    suboptimality_bound: float = 1.0
    takeoff_clearance: float = 0.5
    land_z: float = 0.15
    land_vz: float = 0.5
    z_margin: float = 0.2
    piece_time: float = 1.0


@dataclass
class SearchNode:
    """One search state.

    state is [x, y, phi, v] for terrestrial nodes and [x, y, z, vx, vy, vz]
    for aerial ones.  samples holds the world-frame points of the primitive
    that reached this node (None for the root and for mode relabels).
    """

    mode: int
    state: np.ndarray
    g: float = 0.0
    parent: int = -1
    samples: np.ndarray | None = None
    duration: float = 0.0

    def __post_init__(self) -> None:
        self.state = np.asarray(self.state, dtype=float)

    @property
    def position(self) -> np.ndarray:
        if self.mode == TERRESTRIAL:
            return np.array([self.state[0], self.state[1], 0.0])
        return self.state[:3].copy()

    @property
    def velocity(self) -> np.ndarray:
        if self.mode == TERRESTRIAL:
            phi, v = self.state[2], self.state[3]
            return np.array([v * np.cos(phi), v * np.sin(phi), 0.0])
        return self.state[3:].copy()


@dataclass
class SearchGoal:
    mode: int
    position: np.ndarray
    heading: float | None = None

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        if self.mode == TERRESTRIAL:
            self.position = np.array([self.position[0], self.position[1], 0.0])


@dataclass
class SearchResult:
    waypoints: np.ndarray  # (M+1, 3) including both endpoints
    durations: np.ndarray  # (M,)
    modes: np.ndarray  # (M,) piece labels
    path: np.ndarray  # sampled primitive states for plotting, (S, 3)
    explored: int = 0
    wall_time: float = 0.0
    via_shot: bool = False

    @property
    def n_pieces(self) -> int:
        return len(self.durations)

    def to_json(self, path: str | Path) -> None:
        doc = {
            "waypoints": self.waypoints.tolist(),
            "durations": self.durations.tolist(),
            "modes": self.modes.tolist(),
            "path": self.path.tolist(),
            "explored": self.explored,
            "wall_time": self.wall_time,
            "via_shot": self.via_shot,
        }
        Path(path).write_text(json.dumps(doc) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "SearchResult":
        doc = json.loads(Path(path).read_text())
        return cls(
            waypoints=np.array(doc["waypoints"], dtype=float).reshape(-1, 3),
            durations=np.array(doc["durations"], dtype=float),
            modes=np.array(doc["modes"], dtype=int),
            path=np.array(doc["path"], dtype=float).reshape(-1, 3),
            explored=int(doc["explored"]),
            wall_time=float(doc["wall_time"]),
            via_shot=bool(doc["via_shot"]),
        )


def expand_terrestrial(
    node: SearchNode,
    a_samples: np.ndarray,
    omega_samples: np.ndarray,
    tau_p: float,
    esdf: EsdfGrid,
    v_max: float,
    d_s: float,
    n_substeps: int = 5,
) -> list[SearchNode]:
    """Constant-(a, omega) unicycle arcs, collision-checked at substeps.

    Successors violating v in [0, v_max], the distance margin, or the map
    bounds are dropped; g already includes this primitive's time cost.
    """
    x, y, phi, v = node.state
    aa, ww = np.meshgrid(np.asarray(a_samples, dtype=float),
                         np.asarray(omega_samples, dtype=float), indexing="ij")
    aa, ww = aa.ravel(), ww.ravel()
    v_end = v + aa * tau_p
    ok = (v_end >= -1e-9) & (v_end <= v_max + 1e-9)
    if not ok.any():
        return []
    aa, ww = aa[ok], ww[ok]
    states = _kernels.unicycle_rollout(
        np.array([x, y, phi, v]), aa, ww, tau_p, n_substeps
    )  # (P, nsub+1, 4)
    pts = states[:, :, :2].reshape(-1, 2)
    dist, _, inside = esdf.query(pts)
    S = n_substeps + 1
    feas = (dist.reshape(-1, S) >= d_s).all(axis=1) & inside.reshape(-1, S).all(axis=1)
    out = []
    for i in np.flatnonzero(feas):
        end = states[i, -1].copy()
        end[3] = min(max(end[3], 0.0), v_max)
        samples = np.zeros((S, 3))
        samples[:, :2] = states[i, :, :2]
        out.append(
            SearchNode(
                mode=TERRESTRIAL,
                state=end,
                g=node.g + tau_p,
                samples=samples,
                duration=tau_p,
            )
        )
    return out


def expand_aerial(
    node: SearchNode,
    accel_samples: np.ndarray,
    tau_p: float,
    esdf: EsdfGrid,
    v_max: float,
    a_max: float,
    d_s: float,
    rho_air: float,
    z_range: tuple[float, float],
    n_substeps: int = 5,
) -> list[SearchNode]:
    """Constant-acceleration flight segments; terrestrial nodes take off here.

    Primitive g-cost is rho_air * tau_p.  The per-axis acceleration grid is
    bounded by a_max per component; speed is limited in norm at the segment
    ends (it is extremal there for constant acceleration).
    """
    if node.mode == TERRESTRIAL:
        p0 = node.position
        v0 = node.velocity
    else:
        p0, v0 = node.state[:3], node.state[3:]
    accels = np.asarray(accel_samples, dtype=float)
    accels = accels[(np.abs(accels) <= a_max + 1e-9).all(axis=1)]
    if len(accels) == 0:
        return []
    states = _kernels.point_mass_rollout(p0, v0, accels, tau_p, n_substeps)  # (P, S, 6)
    S = n_substeps + 1
    v_end = np.linalg.norm(states[:, -1, 3:], axis=1)
    z = states[:, :, 2]
    ok = (v_end <= v_max + 1e-9) & (z >= z_range[0] - 1e-9).all(axis=1) & (
        z <= z_range[1]
    ).all(axis=1)
    if not ok.any():
        return []
    states = states[ok]
    pts = states[:, :, :3].reshape(-1, 3)
    dist, _, _ = esdf.query(pts)
    # z=0 samples sit below the lowest air-cell centers; the clamped column
    # distance is the right surrogate there, so only the XY hull is enforced
    lo = esdf.origin[:2] + 0.5 * esdf.resolution
    hi = esdf.origin[:2] + (np.array(esdf.dist.shape[:2]) - 0.5) * esdf.resolution
    in_xy = ((pts[:, :2] >= lo) & (pts[:, :2] <= hi)).all(axis=1)
    feas = (dist.reshape(-1, S) >= d_s).all(axis=1) & in_xy.reshape(-1, S).all(axis=1)
    out = []
    for i in np.flatnonzero(feas):
        out.append(
            SearchNode(
                mode=AERIAL,
                state=states[i, -1].copy(),
                g=node.g + rho_air * tau_p,
                samples=states[i, :, :3].copy(),
                duration=tau_p,
            )
        )
    return out


def default_accel_samples(a_max: float) -> np.ndarray:
    g = np.array([-a_max, 0.0, a_max])
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)


def _wrap(a: float) -> float:
    return float(np.mod(a + np.pi, 2.0 * np.pi) - np.pi)


def _node_key(node: SearchNode, cfg: SearchConfig, res_xy: float, res_air: float):
    if node.mode == TERRESTRIAL:
        cell = cfg.prune_xy_factor * res_xy
        x, y, phi, v = node.state
        return (
            1,
            int(np.floor(x / cell)),
            int(np.floor(y / cell)),
            int(np.floor(v / cfg.v_bin)),
            int(np.floor(np.mod(phi, 2.0 * np.pi) / cfg.phi_bin)),
        )
    cell = cfg.prune_xy_factor * res_air
    p, v = node.state[:3], node.state[3:]
    return (
        0,
        int(np.floor(p[0] / cell)),
        int(np.floor(p[1] / cell)),
        int(np.floor(p[2] / cell)),
        int(np.floor(v[0] / cfg.v_bin)),
        int(np.floor(v[1] / cfg.v_bin)),
        int(np.floor(v[2] / cfg.v_bin)),
    )


def _at_goal(node: SearchNode, goal: SearchGoal, cfg: SearchConfig) -> bool:
    if node.mode != goal.mode:
        return False
    if np.linalg.norm(node.position - goal.position) > cfg.goal_tol_pos:
        return False
    if goal.mode == TERRESTRIAL and goal.heading is not None:
        return abs(_wrap(node.state[2] - goal.heading)) <= cfg.goal_tol_heading
    return True


def _hermite(p0, v0, p1, v1, tau, n):
    s = np.linspace(0.0, 1.0, n)[:, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    p = h00 * p0 + h10 * tau * v0 + h01 * p1 + h11 * tau * v1
    d00 = 6 * s**2 - 6 * s
    d10 = 3 * s**2 - 4 * s + 1
    d01 = -6 * s**2 + 6 * s
    d11 = 3 * s**2 - 2 * s
    v = (d00 * p0 + d10 * tau * v0 + d01 * p1 + d11 * tau * v1) / tau
    g00 = 12 * s - 6
    g10 = 6 * s - 4
    g01 = -12 * s + 6
    g11 = 6 * s - 2
    a = (g00 * p0 + g10 * tau * v0 + g01 * p1 + g11 * tau * v1) / tau**2
    return p, v, a


def _analytic_shot(
    node: SearchNode, goal: SearchGoal, esdf: EsdfGrid, cfg: SearchConfig,
    z_range: tuple[float, float],
) -> tuple[np.ndarray, float] | None:
    """One-segment cubic connection to the goal; None when infeasible."""
    if node.mode != goal.mode:
        return None
    p0 = node.position
    v0 = node.velocity
    p1 = goal.position
    dist = float(np.linalg.norm(p1 - p0))
    if dist < 1e-9:
        return None
    if goal.mode == TERRESTRIAL:
        if goal.heading is not None:
            head = np.array([np.cos(goal.heading), np.sin(goal.heading), 0.0])
        else:
            head = (p1 - p0) / dist
        v1 = float(np.clip(node.state[3], 0.3, 1.0)) * head
    else:
        v1 = np.zeros(3)
    tau = float(np.clip(dist / cfg.v_max, 0.4, 60.0))
    for _ in range(6):
        n = int(np.clip(np.ceil(dist / 0.25) + 1, 8, 400))
        p, v, a = _hermite(p0, v0, p1, v1, tau, n)
        sp = np.linalg.norm(v, axis=1)
        feasible = (
            sp.max() <= cfg.v_max * 1.02
            and np.linalg.norm(a, axis=1).max() <= cfg.a_max * 1.2
        )
        if feasible and goal.mode == TERRESTRIAL:
            w = np.abs(v[:, 0] * a[:, 1] - v[:, 1] * a[:, 0]) / (sp**2 + 1e-6)
            feasible = w.max() <= cfg.omega_max * 1.5
            qpts = p[:, :2]
        elif feasible:
            feasible = not (
                (p[:, 2] < z_range[0] - 1e-9).any() or (p[:, 2] > z_range[1]).any()
            )
            qpts = p
        if feasible:
            d, _, inside = esdf.query(qpts)
            feasible = (d >= cfg.d_s).all() and (
                goal.mode != TERRESTRIAL or inside.all()
            )
        if feasible:
            return p, tau
        tau *= 1.35  # slower shots relax speed/curvature until they fit
    return None


@dataclass
class _Link:
    mode: int
    duration: float
    end: np.ndarray  # (3,)
    samples: np.ndarray | None


def _collect_links(nodes: list[SearchNode], idx: int) -> list[_Link]:
    links: list[_Link] = []
    while idx >= 0:
        n = nodes[idx]
        if n.duration > 0.0:
            links.append(_Link(n.mode, n.duration, n.position, n.samples))
        idx = n.parent
    links.reverse()
    return links


def _links_to_pieces(
    start_pos: np.ndarray,
    links: list[_Link],
    goal: SearchGoal,
    piece_time: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge primitive links into optimizer pieces of roughly piece_time."""
    # split long links (analytic shots) at their sample grid
    split: list[_Link] = []
    for ln in links:
        if ln.duration <= 1.5 * piece_time or ln.samples is None or len(ln.samples) < 3:
            split.append(ln)
            continue
        n_cut = int(np.ceil(ln.duration / piece_time))
        bounds = np.linspace(0, len(ln.samples) - 1, n_cut + 1).round().astype(int)
        for a, b in zip(bounds[:-1], bounds[1:]):
            frac = (b - a) / (len(ln.samples) - 1)
            split.append(_Link(ln.mode, ln.duration * frac, ln.samples[b].copy(), ln.samples[a : b + 1]))
    waypoints = [np.asarray(start_pos, dtype=float)]
    durations: list[float] = []
    modes: list[int] = []
    acc = 0.0
    for k, ln in enumerate(split):
        acc += ln.duration
        last = k + 1 == len(split)
        group_end = last or split[k + 1].mode != ln.mode
        if acc >= piece_time - 1e-9 or group_end:
            wp = ln.end.copy()
            if ln.mode == TERRESTRIAL:
                wp[2] = 0.0
            waypoints.append(wp)
            durations.append(acc)
            modes.append(ln.mode)
            acc = 0.0
    waypoints[-1] = goal.position.copy()
    return (
        np.asarray(waypoints),
        np.asarray(durations, dtype=float),
        np.asarray(modes, dtype=int),
    )


def hybrid_astar(
    start: SearchNode,
    goal: SearchGoal,
    world: World,
    config: SearchConfig | None = None,
) -> SearchResult:
    """Best-first search over both primitive families.

    Heuristic is straight-line distance over v_max (admissible); ties break
    on lower heuristic, then insertion order.  Raises SearchError with the
    explored count when the open set or the expansion budget runs out.
    """
    cfg = config or SearchConfig()
    t0 = time.perf_counter()
    ground = world.ground_esdf
    air = world.air_esdf
    z_range = (0.0, world.z_max - cfg.z_margin)
    w_grid = np.linspace(-cfg.omega_max, cfg.omega_max, cfg.n_omega)
    air_grid = default_accel_samples(cfg.a_max)
    eps = cfg.heuristic_inflation

    def h_of(node: SearchNode) -> float:
        return float(np.linalg.norm(node.position - goal.position)) / cfg.v_max

    def a_grid_for(v: float) -> np.ndarray:
        # base grid plus reach-v_max and full-stop accelerations (clipped)
        extra = np.clip(
            [(cfg.v_max - v) / cfg.tau_p, -v / cfg.tau_p], -cfg.a_max, cfg.a_max
        )
        return np.unique(np.round(np.concatenate(
            [[-cfg.a_max, 0.0, cfg.a_max], extra]
        ), 9))

    nodes: list[SearchNode] = [start]
    best_g: dict = {_node_key(start, cfg, ground.resolution, air.resolution): 0.0}
    seq = 0
    heap: list[tuple[float, float, int, int]] = [(eps * h_of(start), h_of(start), seq, 0)]
    expansions = 0
    incumbent_cost = np.inf
    incumbent: tuple[int, tuple[np.ndarray, float] | None] | None = None

    while heap:
        f, h_pop, _, idx = heapq.heappop(heap)
        if f >= incumbent_cost - 1e-9:
            break  # nothing left can beat the incumbent
        node = nodes[idx]
        if incumbent_cost <= cfg.suboptimality_bound * (node.g + h_pop):
            break  # incumbent provably close enough to the remaining optimum
        key = _node_key(node, cfg, ground.resolution, air.resolution)
        if node.g > best_g.get(key, np.inf) + 1e-12:
            continue  # stale entry
        if _at_goal(node, goal, cfg):
            if node.g < incumbent_cost:
                incumbent_cost = node.g
                incumbent = (idx, None)
            break  # with admissible h the first goal pop is optimal
        expansions += 1
        if expansions > cfg.max_expansions:
            if incumbent is not None:
                break
            raise SearchError(
                f"no path within {cfg.max_expansions} expansions", explored=expansions
            )
        if expansions % cfg.analytic_period == 0:
            esdf = ground if goal.mode == TERRESTRIAL else air
            hit = _analytic_shot(node, goal, esdf, cfg, z_range)
            if hit is not None and node.g + hit[1] < incumbent_cost:
                incumbent_cost = node.g + hit[1]
                incumbent = (idx, hit)

        succs: list[SearchNode] = []
        if node.mode == TERRESTRIAL:
            succs += expand_terrestrial(
                node, a_grid_for(node.state[3]), w_grid, cfg.tau_p, ground,
                cfg.v_max, cfg.d_s, cfg.n_substeps,
            )
            if cfg.allow_flight:
                clear, _, _ = air.query_one(
                    np.array([node.state[0], node.state[1], cfg.takeoff_clearance])
                )
                if clear >= cfg.d_s:
                    succs += expand_aerial(
                        node, air_grid, cfg.tau_p, air, cfg.v_max, cfg.a_max,
                        cfg.d_s, cfg.rho_air, z_range, cfg.n_substeps,
                    )
        else:
            succs += expand_aerial(
                node, air_grid, cfg.tau_p, air, cfg.v_max, cfg.a_max,
                cfg.d_s, cfg.rho_air, z_range, cfg.n_substeps,
            )
            p, v = node.state[:3], node.state[3:]
            if p[2] <= cfg.land_z and abs(v[2]) <= cfg.land_vz:
                d, _, inside = ground.query_one(p[:2])
                if inside and d >= cfg.d_s:
                    sp = float(np.hypot(v[0], v[1]))
                    phi = float(np.arctan2(v[1], v[0])) if sp > 1e-6 else 0.0
                    succs.append(
                        SearchNode(
                            mode=TERRESTRIAL,
                            state=np.array([p[0], p[1], phi, min(sp, cfg.v_max)]),
                            g=node.g,
                            samples=None,
                            duration=0.0,
                        )
                    )

        for s in succs:
            k = _node_key(s, cfg, ground.resolution, air.resolution)
            if s.g >= best_g.get(k, np.inf) - 1e-12:
                continue
            hs = h_of(s)
            if s.g + hs >= incumbent_cost - 1e-9:
                continue
            best_g[k] = s.g
            s.parent = idx
            nodes.append(s)
            seq += 1
            heapq.heappush(heap, (s.g + eps * hs, hs, seq, len(nodes) - 1))

    if incumbent is None:
        raise SearchError(f"open set exhausted after {expansions} expansions",
                          explored=expansions)
    goal_idx, shot = incumbent

    links = _collect_links(nodes, goal_idx)
    if shot is not None:
        samples, tau = shot
        links.append(_Link(goal.mode, tau, samples[-1].copy(), samples))
    if not links:
        # already at the goal: zero-piece result
        return SearchResult(
            waypoints=start.position[None, :].copy(),
            durations=np.zeros(0),
            modes=np.zeros(0, dtype=int),
            path=start.position[None, :].copy(),
            explored=expansions,
            wall_time=time.perf_counter() - t0,
        )
    waypoints, durations, modes = _links_to_pieces(
        start.position, links, goal, cfg.piece_time
    )
    path = np.concatenate(
        [ln.samples for ln in links if ln.samples is not None]
        or [start.position[None, :]]
    )
    return SearchResult(
        waypoints=waypoints,
        durations=np.maximum(durations, 0.02),
        modes=modes,
        path=path,
        explored=expansions,
        wall_time=time.perf_counter() - t0,
        via_shot=shot is not None,
    )
