"""Scenario files: schema validation, world/task construction, mission planning.

A scenario is one JSON document with a ``task`` section plus optional
``world``, ``limits``, and per-subsystem override sections.  Validation is
strict: any key outside the schema fails with a message naming the offending
key, so a typo cannot silently fall back to a default.

Goal tasks run the full pipeline: per-leg kinodynamic search, spatio-temporal
refinement, and a single flat-output resampling pass over the stitched legs
so heading continuity is handled globally.  Goals with a desired heading are
passed through at ``pass_speed`` with the velocity aligned to that heading;
goals without one are rest points.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quat
from .dynamics import TERRESTRIAL, PhysicalParams
from .esdf import OccupancyGrid
from .flatness import FlatSample, ReferenceSequence, recover_references
from .indi import IndiConfig
from .minco import Boundary
from .nmpc import NmpcConfig
from .references import (
    LemniscateConfig,
    ground_rest_references,
    hover_references,
    lemniscate_references,
)
from .search import SearchConfig, SearchGoal, SearchNode, SearchResult, hybrid_astar
from .simulator import SimConfig
from .trajopt import OptimizeResult, OptimizerConfig, optimize
from .worlds import World, make_empty_world, make_fence_world, make_forest_world


class ConfigError(ValueError):
    """Malformed scenario; the message names the offending key."""


# a refined plan counts as dynamically feasible when every penalty residual
# (limit, collision, nonholonomy) has been driven essentially to zero
FEASIBLE_TOL = 1e-3


# ---------------------------------------------------------------- overrides


def _coerce(value, default, path: str):
    """Coerce a JSON value onto the type of a dataclass default."""
    if default is None:
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{path}' must be a number or null")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{path}' must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"'{path}' must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{path}' must be a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(f"'{path}' must be a list of {len(default)} entries")
        return tuple(
            _coerce(v, default[i], f"{path}[{i}]") for i, v in enumerate(value)
        )
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"'{path}' must be a string")
        return value
    raise ConfigError(f"'{path}' is not an overridable field")


def apply_overrides(cls, overrides: dict | None, path: str):
    """Build ``cls`` from its defaults plus a JSON override dict."""
    if overrides is None:
        overrides = {}
    if not isinstance(overrides, dict):
        raise ConfigError(f"'{path}' must be an object")
    defaults = cls()
    valid = {f.name for f in dataclasses.fields(cls)}
    kw = {}
    for key, value in overrides.items():
        if key not in valid:
            raise ConfigError(f"unknown key '{path}.{key}'")
        kw[key] = _coerce(value, getattr(defaults, key), f"{path}.{key}")
    try:
        return dataclasses.replace(defaults, **kw)
    except ValueError as exc:
        raise ConfigError(f"'{path}': {exc}") from exc


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'")


def _get_xy(section: dict, key: str, path: str, dim: int = 2) -> np.ndarray:
    if key not in section:
        raise ConfigError(f"missing key '{path}.{key}'")
    value = section[key]
    if (
        not isinstance(value, (list, tuple))
        or len(value) != dim
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(f"'{path}.{key}' must be a list of {dim} numbers")
    return np.asarray(value, dtype=float)


# ------------------------------------------------------------------- worlds

_WORLD_KEYS = {
    "empty": {"type", "extent", "height", "res_ground", "res_air"},
    "forest": {
        "type", "extent", "height", "n_obstacles", "radius_range",
        "height_range", "seed", "keep_clear", "res_ground", "res_air",
    },
    "fence": {
        "type", "extent", "height", "fence_x", "fence_height",
        "fence_thickness", "res_ground", "res_air",
    },
    "file": {"type", "ground", "air"},
}


def build_world(spec: dict | None, base_dir: Path) -> World | None:
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("'world' must be an object")
    wtype = spec.get("type")
    if wtype not in _WORLD_KEYS:
        raise ConfigError(
            "'world.type' must be one of " + ", ".join(sorted(_WORLD_KEYS))
        )
    _check_keys(spec, _WORLD_KEYS[wtype], "world")

    if wtype == "file":
        grids = {}
        for key in ("ground", "air"):
            if key not in spec:
                raise ConfigError(f"missing key 'world.{key}'")
            path = (base_dir / spec[key]).resolve()
            if not path.is_file():
                raise ConfigError(f"'world.{key}': no such file: {path}")
            grids[key] = OccupancyGrid.load(path)
        return World(ground=grids["ground"], air=grids["air"])

    kw: dict = {}
    if "extent" in spec:
        kw["extent_xy"] = tuple(_get_xy(spec, "extent", "world"))
    for key in ("height", "res_ground", "res_air"):
        if key in spec:
            kw[key] = _coerce(spec[key], 1.0, f"world.{key}")
    if wtype == "empty":
        return make_empty_world(**kw)
    if wtype == "fence":
        for key in ("fence_x", "fence_height", "fence_thickness"):
            if key in spec:
                kw[key] = _coerce(spec[key], 1.0, f"world.{key}")
        return make_fence_world(**kw)
    for key in ("n_obstacles", "seed"):
        if key in spec:
            kw[key] = _coerce(spec[key], 1, f"world.{key}")
    for key in ("radius_range", "height_range"):
        if key in spec:
            kw[key] = tuple(_get_xy(spec, key, "world"))
    if "keep_clear" in spec:
        pads = spec["keep_clear"]
        if not isinstance(pads, list):
            raise ConfigError("'world.keep_clear' must be a list of [x, y, r]")
        kw["keep_clear"] = [
            tuple(_get_xy({"pad": p}, "pad", f"world.keep_clear[{i}]", dim=3))
            for i, p in enumerate(pads)
        ]
    return make_forest_world(**kw)


# -------------------------------------------------------------------- tasks

_TASK_KEYS = {
    "goal": {"type", "start", "goals", "pass_speed", "stop_distance"},
    "hover": {"type", "position", "yaw", "duration"},
    "rest": {"type", "position", "yaw", "duration"},
    "lemniscate": {"type", "profile"} | {
        f.name for f in dataclasses.fields(LemniscateConfig)
    },
    "reference": {"type", "csv"},
}

LEMNISCATE_PROFILES = {
    "2d": LemniscateConfig(),
    "3d": LemniscateConfig(
        A=4.45, B=2.22, v_max=3.0, a_max=2.5, bump_height=0.8, bump_width=2.2
    ),
}


def validate_task(task: dict, base_dir: Path) -> None:
    if not isinstance(task, dict):
        raise ConfigError("'task' must be an object")
    ttype = task.get("type")
    if ttype not in _TASK_KEYS:
        raise ConfigError(
            "'task.type' must be one of " + ", ".join(sorted(_TASK_KEYS))
        )
    _check_keys(task, _TASK_KEYS[ttype], "task")

    if ttype == "goal":
        if "start" not in task:
            raise ConfigError("missing key 'task.start'")
        if not isinstance(task["start"], dict):
            raise ConfigError("'task.start' must be an object")
        _check_keys(task["start"], {"position", "heading"}, "task.start")
        _get_xy(task["start"], "position", "task.start")
        goals = task.get("goals")
        if not isinstance(goals, list) or not goals:
            raise ConfigError("'task.goals' must be a non-empty list")
        for i, goal in enumerate(goals):
            if not isinstance(goal, dict):
                raise ConfigError(f"'task.goals[{i}]' must be an object")
            _check_keys(goal, {"position", "heading"}, f"task.goals[{i}]")
            _get_xy(goal, "position", f"task.goals[{i}]")
            hdg = goal.get("heading")
            if hdg is not None and (isinstance(hdg, bool) or not isinstance(hdg, (int, float))):
                raise ConfigError(f"'task.goals[{i}].heading' must be a number or null")
    elif ttype == "lemniscate":
        profile = task.get("profile", "2d")
        if profile not in LEMNISCATE_PROFILES:
            raise ConfigError(
                "'task.profile' must be one of " + ", ".join(sorted(LEMNISCATE_PROFILES))
            )
        base = LEMNISCATE_PROFILES[profile]
        for key, value in task.items():
            if key in ("type", "profile"):
                continue
            _coerce(value, getattr(base, key), f"task.{key}")
    elif ttype == "reference":
        if "csv" not in task:
            raise ConfigError("missing key 'task.csv'")
        path = (base_dir / task["csv"]).resolve()
        if not path.is_file():
            raise ConfigError(f"'task.csv': no such file: {path}")
    else:  # hover / rest
        dim = 3 if ttype == "hover" else 2
        if "position" in task:
            _get_xy(task, "position", "task", dim=dim)


def task_lemniscate_config(task: dict) -> LemniscateConfig:
    base = LEMNISCATE_PROFILES[task.get("profile", "2d")]
    kw = {
        key: _coerce(value, getattr(base, key), f"task.{key}")
        for key, value in task.items()
        if key not in ("type", "profile")
    }
    return dataclasses.replace(base, **kw)


# ----------------------------------------------------------------- scenario

_TOP_KEYS = {
    "name", "world", "task", "limits", "params",
    "search", "optimizer", "nmpc", "sim", "indi",
}
_LIMIT_KEYS = {"v_max", "a_max", "omega_max", "alpha_max"}


@dataclass
class ScenarioConfig:
    """Validated scenario: resolved sub-configs plus the raw document."""

    name: str
    task: dict
    world_spec: dict | None
    params: PhysicalParams
    search: SearchConfig
    optimizer: OptimizerConfig
    nmpc: NmpcConfig
    sim: SimConfig
    indi: IndiConfig
    raw: dict
    base_dir: Path

    def build_world(self) -> World | None:
        return build_world(self.world_spec, self.base_dir)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(
            self, sim=dataclasses.replace(self.sim, seed=int(seed))
        )

    def resolved(self) -> dict:
        """Every effective setting, for the run-directory snapshot."""
        return {
            "name": self.name,
            "task": self.task,
            "world": self.world_spec,
            "params": dataclasses.asdict(self.params),
            "search": dataclasses.asdict(self.search),
            "optimizer": dataclasses.asdict(self.optimizer),
            "nmpc": dataclasses.asdict(self.nmpc),
            "sim": dataclasses.asdict(self.sim),
            "indi": dataclasses.asdict(self.indi),
        }


def parse_scenario(doc: dict, base_dir: Path, name: str = "scenario") -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("scenario root must be an object")
    _check_keys(doc, _TOP_KEYS, "scenario")
    if "task" not in doc:
        raise ConfigError("missing key 'task'")
    if "name" in doc:
        if not isinstance(doc["name"], str):
            raise ConfigError("'name' must be a string")
        name = doc["name"]

    validate_task(doc["task"], base_dir)
    world_spec = doc.get("world")
    if world_spec is not None and not isinstance(world_spec, dict):
        raise ConfigError("'world' must be an object")

    limits = doc.get("limits") or {}
    if not isinstance(limits, dict):
        raise ConfigError("'limits' must be an object")
    _check_keys(limits, _LIMIT_KEYS, "limits")
    search_over = dict(doc.get("search") or {})
    opt_over = dict(doc.get("optimizer") or {})
    for key, value in limits.items():
        if key != "alpha_max":
            search_over.setdefault(key, value)
        opt_over.setdefault(key, value)

    scenario = ScenarioConfig(
        name=name,
        task=doc["task"],
        world_spec=world_spec,
        params=apply_overrides(PhysicalParams, doc.get("params"), "params"),
        search=apply_overrides(SearchConfig, search_over, "search"),
        optimizer=apply_overrides(OptimizerConfig, opt_over, "optimizer"),
        nmpc=apply_overrides(NmpcConfig, doc.get("nmpc"), "nmpc"),
        sim=apply_overrides(SimConfig, doc.get("sim"), "sim"),
        indi=apply_overrides(IndiConfig, doc.get("indi"), "indi"),
        raw=doc,
        base_dir=base_dir,
    )
    if scenario.task["type"] == "goal" and world_spec is None:
        raise ConfigError("missing key 'world' (goal tasks need one)")
    if "rate_hz" not in (doc.get("indi") or {}):
        # torque filters run at the control rate unless pinned explicitly
        scenario = dataclasses.replace(
            scenario,
            indi=dataclasses.replace(scenario.indi, rate_hz=1.0 / scenario.sim.dt_ctrl),
        )
    return scenario


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_scenario(doc, path.parent.resolve(), name=path.stem)


# ----------------------------------------------------------- goal missions


@dataclass
class LegPlan:
    """Artifacts of one planned leg between consecutive goals."""

    search: SearchResult
    opt: OptimizeResult
    duration: float


@dataclass
class MissionPlan:
    """Stitched references plus per-leg artifacts and goal arrival ticks."""

    refs: ReferenceSequence | None
    legs: list[LegPlan]
    goal_ticks: list[int]
    goal_positions: np.ndarray
    goal_headings: list[float | None]

    @property
    def total_time(self) -> float:
        return float(sum(leg.duration for leg in self.legs))

    @property
    def length_m(self) -> float:
        total = 0.0
        for leg in self.legs:
            t = np.linspace(0.0, leg.opt.traj.total_time, 1000)
            P = leg.opt.traj.eval(t, 0)
            total += float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)))
        return total

    @property
    def feasible(self) -> bool:
        """All refinement penalty residuals essentially zero."""
        return all(
            leg.opt.success and float(np.max(leg.opt.cost[1:])) <= FEASIBLE_TOL
            for leg in self.legs
        )

    @property
    def front_end_ms(self) -> list[float]:
        return [leg.search.wall_time * 1e3 for leg in self.legs if leg.search is not None]

    @property
    def back_end_ms(self) -> list[float]:
        return [leg.opt.wall_time * 1e3 for leg in self.legs]

    def goal_errors(self, log_rows: np.ndarray) -> list[dict]:
        """Closed-loop position/heading error at each goal's arrival tick.

        Rows are simulator log rows at the reference rate; runs that ended
        early (divergence) report infinite error for unreached goals.
        """
        out = []
        for tick, p_goal, hdg in zip(
            self.goal_ticks, self.goal_positions, self.goal_headings
        ):
            if tick >= len(log_rows):
                out.append({"position_error": math.inf, "heading_error": math.inf,
                            "reached": False})
                continue
            row = log_rows[tick]
            pos_err = float(np.hypot(row[1] - p_goal[0], row[2] - p_goal[1]))
            if hdg is None:
                hdg_err = 0.0
            else:
                yaw = float(quat.yaw(row[4:8]))
                hdg_err = abs(math.remainder(yaw - hdg, 2.0 * math.pi))
            out.append({"position_error": pos_err, "heading_error": hdg_err,
                        "reached": True})
        return out


def _heading_velocity(heading: float | None, speed: float) -> np.ndarray:
    if heading is None or speed == 0.0:
        return np.zeros(3)
    return speed * np.array([math.cos(heading), math.sin(heading), 0.0])


def plan_mission(
    scenario: ScenarioConfig, world: World, references: bool = True
) -> MissionPlan:
    """Plan a goal task: search + refine each leg, then resample globally.

    Legs join with matched (p, v, a) boundaries, so one flat-output recovery
    over the whole mission keeps heading and quaternion sign continuous
    through the goals.  ``references=False`` skips that recovery for
    planning-only campaigns.
    """
    task = scenario.task
    pass_speed = float(task.get("pass_speed", 1.0))
    stop_distance = float(task.get("stop_distance", 1.2))
    start = task["start"]
    p_prev = _get_xy(start, "position", "task.start")
    yaw_prev = float(start.get("heading", 0.0))
    v_prev = 0.0

    goals = task["goals"]
    goal_positions = np.array(
        [_get_xy(g, "position", "task.goals") for g in goals]
    )
    goal_headings = [
        None if g.get("heading") is None else float(g["heading"]) for g in goals
    ]

    legs: list[LegPlan] = []
    boundaries: list[float] = []  # cumulative end time of each leg

    def add_leg(search_result, opt_result):
        legs.append(LegPlan(search=search_result, opt=opt_result,
                            duration=float(opt_result.traj.total_time)))
        prev = boundaries[-1] if boundaries else 0.0
        boundaries.append(prev + legs[-1].duration)

    for goal_p, heading in zip(goal_positions, goal_headings):
        speed_goal = pass_speed if heading is not None else 0.0
        node = SearchNode(
            mode=TERRESTRIAL,
            state=np.array([p_prev[0], p_prev[1], yaw_prev, v_prev]),
        )
        sgoal = SearchGoal(
            mode=TERRESTRIAL,
            position=np.array([goal_p[0], goal_p[1], 0.0]),
            heading=heading,
        )
        sr = hybrid_astar(node, sgoal, world, scenario.search)
        b0 = Boundary(
            p=np.array([p_prev[0], p_prev[1], 0.0]),
            v=_heading_velocity(yaw_prev, v_prev),
            a=np.zeros(3),
        )
        b1 = Boundary(
            p=np.array([goal_p[0], goal_p[1], 0.0]),
            v=_heading_velocity(heading, speed_goal),
            a=np.zeros(3),
        )
        opt = optimize(
            sr.waypoints, sr.durations, sr.modes, b0, b1,
            scenario.optimizer, world.ground_esdf, world.air_esdf,
        )
        add_leg(sr, opt)
        p_prev = goal_p
        if heading is None:
            # rest goal: next leg departs along the arrival tangent, read a
            # little before the endpoint where the speed still has direction
            t_probe = max(opt.traj.total_time - 0.2, opt.traj.total_time * 0.9)
            v_end = opt.traj.eval(np.array([t_probe]), 1)[0]
            if np.hypot(v_end[0], v_end[1]) > 1e-6:
                yaw_prev = math.atan2(v_end[1], v_end[0])
        else:
            yaw_prev = heading
        v_prev = speed_goal

    if goal_headings[-1] is not None and stop_distance > 0.0:
        # straight run-out so the mission ends at rest on the final heading
        p_stop = goal_positions[-1] + stop_distance * np.array(
            [math.cos(yaw_prev), math.sin(yaw_prev)]
        )
        b0 = Boundary(
            p=np.array([*goal_positions[-1], 0.0]),
            v=_heading_velocity(yaw_prev, pass_speed),
            a=np.zeros(3),
        )
        b1 = Boundary(p=np.array([*p_stop, 0.0]), v=np.zeros(3), a=np.zeros(3))
        waypoints = np.stack([b0.p, b1.p])
        T0 = np.array([2.0 * stop_distance / max(pass_speed, 0.1)])
        opt = optimize(
            waypoints, T0, np.array([TERRESTRIAL]), b0, b1,
            scenario.optimizer, world.ground_esdf, world.air_esdf,
        )
        legs.append(LegPlan(search=None, opt=opt,
                            duration=float(opt.traj.total_time)))
        boundaries.append(boundaries[-1] + legs[-1].duration)

    refs = (
        _stitch_references(legs, np.array(boundaries), scenario)
        if references
        else None
    )
    dt = scenario.sim.dt_ctrl
    # the closed loop logs floor(total/dt) ticks; a goal at the very end of
    # the mission is measured on the last logged tick
    last_tick = int(np.floor(boundaries[-1] / dt)) - 1
    goal_ticks = [
        min(int(round(boundaries[i] / dt)), last_tick) for i in range(len(goals))
    ]
    return MissionPlan(
        refs=refs,
        legs=legs,
        goal_ticks=goal_ticks,
        goal_positions=goal_positions,
        goal_headings=goal_headings,
    )


def _stitch_references(
    legs: list[LegPlan], boundaries: np.ndarray, scenario: ScenarioConfig
) -> ReferenceSequence:
    """Evaluate all legs on one uniform time grid and recover references."""
    dt = scenario.sim.dt_ctrl
    total = float(boundaries[-1])
    K = int(np.ceil(total / dt)) + 1
    t = np.minimum(np.arange(K) * dt, total)
    leg_idx = np.minimum(np.searchsorted(boundaries, t, side="right"),
                         len(legs) - 1)
    samples = []
    for k in range(K):
        li = int(leg_idx[k])
        traj = legs[li].opt.traj
        t_local = np.array([t[k] - (boundaries[li] - legs[li].duration)])
        t_local = np.clip(t_local, 0.0, traj.total_time)
        piece, _ = traj.piece_of(t_local)
        mode = int(legs[li].opt.modes[piece[0]])
        p = traj.eval(t_local, 0)[0]
        v = traj.eval(t_local, 1)[0]
        a = traj.eval(t_local, 2)[0]
        j = traj.eval(t_local, 3)[0]
        if mode == TERRESTRIAL:
            p[2] = v[2] = a[2] = j[2] = 0.0
        samples.append(FlatSample(p=p, v=v, a=a, j=j, mode=mode))
    task = scenario.task
    yaw0 = float(task["start"].get("heading", 0.0))
    return recover_references(samples, dt, scenario.params, initial_yaw=yaw0)


# ---------------------------------------------------------- task references


def task_references(scenario: ScenarioConfig) -> ReferenceSequence:
    """References for analytic (non-planned) tasks."""
    task = scenario.task
    ttype = task["type"]
    dt = scenario.sim.dt_ctrl
    if ttype == "lemniscate":
        return lemniscate_references(
            task_lemniscate_config(task), scenario.params, dt
        )
    if ttype == "hover":
        duration = float(task.get("duration", 10.0))
        n = int(round(duration / dt)) + 1
        return hover_references(
            n, dt, scenario.params,
            p=tuple(task.get("position", (0.0, 0.0, 1.0))),
            yaw=float(task.get("yaw", 0.0)),
        )
    if ttype == "rest":
        duration = float(task.get("duration", 10.0))
        n = int(round(duration / dt)) + 1
        return ground_rest_references(
            n, dt, scenario.params,
            p=tuple(task.get("position", (0.0, 0.0))),
            yaw=float(task.get("yaw", 0.0)),
        )
    if ttype == "reference":
        return ReferenceSequence.from_csv(
            (scenario.base_dir / task["csv"]).resolve()
        )
    raise ConfigError(f"task type '{ttype}' has no analytic references")
