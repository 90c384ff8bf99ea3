"""Benchmark suites: seeded planning campaigns and paired tracking studies.

Each suite is reproducible from its config document plus a base seed.  Seeds
fan out across worker threads; every run is independent, per-run failures are
recorded in the report and never abort the suite, and aggregation happens on
the main thread in seed order.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import quat
from .dynamics import TERRESTRIAL, PhysicalParams
from .scenario import (
    ConfigError,
    FEASIBLE_TOL,
    MissionPlan,
    ScenarioConfig,
    parse_scenario,
    plan_mission,
    task_references,
)
from .minco import Boundary
from .search import SearchError, SearchGoal, SearchNode, hybrid_astar
from .simulator import RunLog, SimDivergenceError, run_closed_loop, summarize_run
from .trajopt import OptimizationError, optimize

SUITES = (
    "forest-500",
    "goals-course",
    "lemniscate-2d",
    "lemniscate-3d",
    "indi-ab",
    "kernel-backends",
)

# paper-reported yardsticks for the planning campaign
FOREST_LENGTH_REF_M = 76.8
FRONT_END_BUDGET_MS = 146.0   # 10x the reported front-end mean
BACK_END_BUDGET_MS = 708.0    # 10x the reported back-end mean


def _percentiles(values: list[float]) -> dict:
    if not values:
        return {"mean": math.nan, "p50": math.nan, "p99": math.nan, "max": math.nan}
    arr = np.asarray(values, dtype=float)
    return {
        "mean": float(arr.mean()),
        "p50": float(np.percentile(arr, 50)),
        "p99": float(np.percentile(arr, 99)),
        "max": float(arr.max()),
    }


def _fan_out(fn, seeds: list[int], jobs: int) -> list:
    if jobs <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, seeds))


def lateral_violation(rows: np.ndarray, refs) -> tuple[float, float]:
    """Worst |lateral body-frame component of v_ref| over terrestrial ticks.

    Uses the vehicle's actual attitude: a planner that demands motion the
    wheels cannot produce shows up as reference velocity lateral to the body.
    """
    worst, t_worst = 0.0, 0.0
    n = min(len(rows), len(refs))
    for k in range(n):
        if refs.mode[k] != TERRESTRIAL:
            continue
        R = quat.to_rotation_matrix(rows[k, 4:8])
        lat = abs(float(R[:, 1] @ refs.X[k, 7:10]))
        if lat > worst:
            worst, t_worst = lat, float(rows[k, 0])
    return worst, t_worst


def _merge(base: dict, override: dict | None) -> dict:
    out = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _check_suite_keys(doc: dict, allowed: set[str]) -> None:
    for key in doc:
        if key not in allowed | {"suite"}:
            raise ConfigError(f"unknown key '{key}' for suite '{doc.get('suite')}'")


# --------------------------------------------------------------- forest-500

_FOREST_DEFAULTS = {
    "n_worlds": 500,
    "extent": [50.0, 50.0],
    "height": 4.0,
    "n_obstacles": 80,
    "radius_range": [0.3, 0.8],
    "height_range": [1.5, 3.2],
    "start": [2.0, 2.0],
    "start_heading": 0.7853981633974483,
    "goal": [48.0, 48.0],
    "clear_radius": 1.5,
    # campaign preset: greedier search and shorter refinement segments with
    # warm restarts keep per-world times an order of magnitude under budget
    "search": {"heuristic_inflation": 1.5, "suboptimality_bound": 1.2},
    "optimizer": {"maxiter": 150, "restart_attempts": 3},
}


def run_forest(doc: dict, out_dir: Path, base_seed: int, jobs: int) -> dict:
    cfg = _merge(_FOREST_DEFAULTS, {k: v for k, v in doc.items() if k != "suite"})
    _check_suite_keys(doc, set(_FOREST_DEFAULTS))
    n = int(cfg["n_worlds"])
    seeds = [base_seed + i for i in range(n)]
    sx, sy = cfg["start"]
    gx, gy = cfg["goal"]
    pad = float(cfg["clear_radius"])

    def one(seed: int) -> dict:
        scenario_doc = {
            "name": f"forest-{seed}",
            "world": {
                "type": "forest",
                "extent": cfg["extent"],
                "height": cfg["height"],
                "n_obstacles": cfg["n_obstacles"],
                "radius_range": cfg["radius_range"],
                "height_range": cfg["height_range"],
                "seed": seed,
                "keep_clear": [[sx, sy, pad], [gx, gy, pad]],
            },
            "task": {
                "type": "goal",
                "start": {"position": [sx, sy], "heading": cfg["start_heading"]},
                "goals": [{"position": [gx, gy], "heading": None}],
            },
            "search": cfg["search"],
            "optimizer": cfg["optimizer"],
        }
        rec = {"seed": seed, "success": False, "length_m": math.nan,
               "search_ms": math.nan, "opt_ms": math.nan, "explored": 0,
               "iterations": 0, "penalty_max": math.nan, "message": "ok"}
        try:
            sc = parse_scenario(scenario_doc, out_dir)
            world = sc.build_world()
            node = SearchNode(
                mode=TERRESTRIAL,
                state=np.array([sx, sy, cfg["start_heading"], 0.0]),
            )
            sgoal = SearchGoal(
                mode=TERRESTRIAL, position=np.array([gx, gy, 0.0]), heading=None
            )
            # per-stage compute time as thread CPU time: workers interleave
            # on shared cores, so wall clock would measure the queue instead
            c0 = time.thread_time()
            sr = hybrid_astar(node, sgoal, world, sc.search)
            c1 = time.thread_time()
            b0 = Boundary(p=np.array([sx, sy, 0.0]), v=np.zeros(3), a=np.zeros(3))
            b1 = Boundary(p=np.array([gx, gy, 0.0]), v=np.zeros(3), a=np.zeros(3))
            opt = optimize(
                sr.waypoints, sr.durations, sr.modes, b0, b1,
                sc.optimizer, world.ground_esdf, world.air_esdf,
            )
            c2 = time.thread_time()
            t_dense = np.linspace(0.0, opt.traj.total_time, 1000)
            P = opt.traj.eval(t_dense, 0)
            penalty_max = float(np.max(opt.cost[1:]))
            feasible = opt.success and penalty_max <= FEASIBLE_TOL
            rec.update(
                success=feasible,
                length_m=float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1))),
                search_ms=(c1 - c0) * 1e3,
                opt_ms=(c2 - c1) * 1e3,
                search_wall_ms=sr.wall_time * 1e3,
                opt_wall_ms=opt.wall_time * 1e3,
                explored=sr.explored,
                iterations=opt.iterations,
                penalty_max=penalty_max,
            )
            if not feasible:
                rec["message"] = "penalty residual above tolerance"
        except (SearchError, OptimizationError, ConfigError) as exc:
            rec["message"] = f"{type(exc).__name__}: {exc}"
        except Exception as exc:  # never abort the campaign
            rec["message"] = f"unexpected {type(exc).__name__}: {exc}"
        return rec

    t0 = time.perf_counter()
    records = _fan_out(one, seeds, jobs)
    wall = time.perf_counter() - t0

    ok = [r for r in records if r["success"]]
    lengths = [r["length_m"] for r in ok]
    front = _percentiles([r["search_ms"] for r in ok])
    back = _percentiles([r["opt_ms"] for r in ok])
    front_wall = _percentiles([r["search_wall_ms"] for r in ok])
    back_wall = _percentiles([r["opt_wall_ms"] for r in ok])
    mean_len = float(np.mean(lengths)) if lengths else math.nan
    report = {
        "suite": "forest-500",
        "n_worlds": n,
        "base_seed": base_seed,
        "jobs": jobs,
        "wall_s": wall,
        "success_rate": len(ok) / n if n else math.nan,
        "length_mean_m": mean_len,
        "length_reference_m": FOREST_LENGTH_REF_M,
        "length_within_30pct": bool(
            lengths and abs(mean_len - FOREST_LENGTH_REF_M) <= 0.3 * FOREST_LENGTH_REF_M
        ),
        "front_end_ms": front,
        "back_end_ms": back,
        "front_end_wall_ms": front_wall,
        "back_end_wall_ms": back_wall,
        "front_end_budget_ms": FRONT_END_BUDGET_MS,
        "back_end_budget_ms": BACK_END_BUDGET_MS,
        "front_end_within_budget": bool(ok) and front["mean"] <= FRONT_END_BUDGET_MS,
        "back_end_within_budget": bool(ok) and back["mean"] <= BACK_END_BUDGET_MS,
        "failed_seeds": [r["seed"] for r in records if not r["success"]],
    }

    header = ("seed,success,length_m,search_ms,opt_ms,search_wall_ms,"
              "opt_wall_ms,explored,iterations,penalty_max,message")
    lines = [header]
    for r in records:
        msg = str(r["message"]).replace(",", ";")
        lines.append(
            f"{r['seed']},{int(r['success'])},{r['length_m']:.3f},"
            f"{r['search_ms']:.3f},{r['opt_ms']:.3f},"
            f"{r.get('search_wall_ms', math.nan):.3f},"
            f"{r.get('opt_wall_ms', math.nan):.3f},{r['explored']},"
            f"{r['iterations']},{r['penalty_max']:.3e},{msg}"
        )
    (out_dir / "runs.csv").write_text("\n".join(lines) + "\n")

    text = (
        f"forest campaign: {len(ok)}/{n} feasible plans "
        f"({report['success_rate'] * 100:.1f}%)\n"
        f"  mean length {mean_len:.1f} m "
        f"(reference {FOREST_LENGTH_REF_M} m, within 30%: {report['length_within_30pct']})\n"
        f"  front end mean {front['mean']:.1f} ms, p99 {front['p99']:.1f} ms "
        f"compute (budget {FRONT_END_BUDGET_MS:.0f} ms)\n"
        f"  back end mean {back['mean']:.1f} ms, p99 {back['p99']:.1f} ms "
        f"compute (budget {BACK_END_BUDGET_MS:.0f} ms)\n"
        f"  wall {wall:.1f} s with {jobs} worker thread(s)\n"
    )
    return {"report": report, "text": text}


# ------------------------------------------------------------- goals-course

_COURSE_DEFAULTS = {
    "world": {"type": "empty", "extent": [12.0, 8.0], "height": 3.0},
    "task": {
        "type": "goal",
        "start": {"position": [1.0, 2.0], "heading": 0.0},
        "goals": [
            {"position": [7.0, 2.0], "heading": 0.0},
            {"position": [3.0, 4.0], "heading": 3.14159265358979},
            {"position": [7.0, 6.0], "heading": 0.0},
        ],
        "pass_speed": 1.0,
        "stop_distance": 1.2,
    },
    "search": {"allow_flight": False},
    "goal_tol_pos": 0.3,
    "goal_tol_heading": 0.3,
    "lateral_threshold": 0.1,
}


def _track_course(sc: ScenarioConfig, out_dir: Path, variant: str) -> dict:
    world = sc.build_world()
    plan = plan_mission(sc, world)
    run_dir = out_dir / variant
    run_dir.mkdir(parents=True, exist_ok=True)
    diverged = False
    try:
        metrics, log = run_closed_loop(plan.refs, sc.params, sc.nmpc, sc.sim, sc.indi)
    except SimDivergenceError as exc:
        log, metrics, diverged = exc.log, None, True
    log.to_csv(run_dir / "run_log.csv")
    plan.refs.to_csv(run_dir / "references.csv")
    lat, lat_t = lateral_violation(log.rows, plan.refs)
    goal_errors = plan.goal_errors(log.rows)
    result = {
        "variant": variant,
        "lam": list(sc.optimizer.lam),
        "diverged": diverged,
        "rmse_m": None if metrics is None else metrics.rmse_position,
        "goal_errors": goal_errors,
        "lateral_max": lat,
        "lateral_max_t": lat_t,
        "front_end_ms": plan.front_end_ms,
        "back_end_ms": plan.back_end_ms,
        "ref_peak_yaw_rate": float(np.abs(plan.refs.X[:, 12]).max()),
    }
    (run_dir / "metrics.json").write_text(json.dumps(result, indent=2) + "\n")
    return result


def run_goals_course(doc: dict, out_dir: Path, base_seed: int, jobs: int) -> dict:
    cfg = _merge(_COURSE_DEFAULTS, {k: v for k, v in doc.items() if k != "suite"})
    _check_suite_keys(doc, set(_COURSE_DEFAULTS) | {"optimizer", "nmpc", "sim"})
    tol_p = float(cfg.pop("goal_tol_pos"))
    tol_h = float(cfg.pop("goal_tol_heading"))
    lat_thr = float(cfg.pop("lateral_threshold"))

    t0 = time.perf_counter()
    results = []
    for variant in ("nominal", "no-nonholonomy"):
        scenario_doc = {k: v for k, v in cfg.items()}
        scenario_doc["name"] = f"goals-course-{variant}"
        if variant == "no-nonholonomy":
            opt = dict(scenario_doc.get("optimizer") or {})
            lam = list(opt.get("lam", [5.0, 6.0, 100.0, 5.0]))
            lam[3] = 0.0
            opt["lam"] = lam
            scenario_doc["optimizer"] = opt
        sc = parse_scenario(scenario_doc, out_dir).with_seed(base_seed)
        results.append(_track_course(sc, out_dir, variant))

    nominal, ablation = results
    nominal_ok = all(
        e["reached"] and e["position_error"] <= tol_p and e["heading_error"] <= tol_h
        for e in nominal["goal_errors"]
    )
    ablation_fails = ablation["diverged"] or not all(
        e["reached"] and e["position_error"] <= tol_p and e["heading_error"] <= tol_h
        for e in ablation["goal_errors"]
    )
    report = {
        "suite": "goals-course",
        "base_seed": base_seed,
        "wall_s": time.perf_counter() - t0,
        "goal_tol_pos_m": tol_p,
        "goal_tol_heading_rad": tol_h,
        "lateral_threshold_ms": lat_thr,
        "nominal": nominal,
        "no_nonholonomy": ablation,
        "nominal_success": bool(nominal_ok and not nominal["diverged"]),
        "ablation_lateral_violation": bool(ablation["lateral_max"] > lat_thr),
        "ablation_tracking_failure": bool(ablation_fails),
        "comparison_reproduced": bool(
            nominal_ok
            and not nominal["diverged"]
            and ablation["lateral_max"] > lat_thr
        ),
    }
    worst_pos = max(e["position_error"] for e in nominal["goal_errors"])
    worst_hdg = max(e["heading_error"] for e in nominal["goal_errors"])
    text = (
        f"goals course: nominal weights reach all goals: {report['nominal_success']} "
        f"(worst {worst_pos:.3f} m / {worst_hdg:.3f} rad, "
        f"lateral {nominal['lateral_max']:.3f} m/s)\n"
        f"  nonholonomy cost off: lateral demand {ablation['lateral_max']:.2f} m/s "
        f"(> {lat_thr} m/s: {report['ablation_lateral_violation']}), "
        f"tracking failure: {report['ablation_tracking_failure']}\n"
        f"  comparison reproduced: {report['comparison_reproduced']}\n"
    )
    return {"report": report, "text": text}


# -------------------------------------------------------------- lemniscates

_LEM_DEFAULTS = {"n_seeds": 5, "task": {}, "sim": {}, "nmpc": {}}


def run_lemniscate(doc: dict, out_dir: Path, base_seed: int, jobs: int,
                   profile: str) -> dict:
    cfg = _merge(_LEM_DEFAULTS, {k: v for k, v in doc.items() if k != "suite"})
    _check_suite_keys(doc, set(_LEM_DEFAULTS))
    n = int(cfg["n_seeds"])
    seeds = [base_seed + i for i in range(n)]

    task = _merge({"type": "lemniscate", "profile": profile}, cfg["task"])
    base_doc = {"task": task, "sim": cfg["sim"], "nmpc": cfg["nmpc"]}
    sc0 = parse_scenario(json.loads(json.dumps(base_doc)), out_dir)
    refs = task_references(sc0)

    def one(seed: int) -> dict:
        sc = sc0.with_seed(seed)
        run_dir = out_dir / "runs" / f"seed{seed:04d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        rec = {"seed": seed, "completed": False, "rmse_m": math.nan,
               "crosscheck_delta": math.nan, "message": "ok"}
        try:
            metrics, log = run_closed_loop(refs, sc.params, sc.nmpc, sc.sim, sc.indi)
            log.to_csv(run_dir / "run_log.csv")
            metrics.to_json(run_dir / "metrics.json")
            again = summarize_run(RunLog.from_csv(run_dir / "run_log.csv"), sc.sim)
            rec.update(
                completed=True,
                rmse_m=metrics.rmse_position,
                max_err_m=metrics.max_position_error,
                rmse_terrestrial=metrics.rmse_terrestrial,
                rmse_aerial=metrics.rmse_aerial,
                mode_switches=metrics.mode_switches,
                saturation=metrics.saturation_fraction,
                solve_p50_ms=metrics.solve_ms_p50,
                solve_p99_ms=metrics.solve_ms_p99,
                landing_violations=metrics.landing_violations,
                crosscheck_delta=abs(metrics.rmse_position - again.rmse_position),
            )
        except SimDivergenceError as exc:
            exc.log.to_csv(run_dir / "run_log.csv")
            rec["message"] = f"diverged: {exc}"
        except Exception as exc:
            rec["message"] = f"unexpected {type(exc).__name__}: {exc}"
        return rec

    t0 = time.perf_counter()
    records = _fan_out(one, seeds, jobs)
    wall = time.perf_counter() - t0
    ok = [r for r in records if r["completed"]]
    rmses = [r["rmse_m"] for r in ok]
    report = {
        "suite": f"lemniscate-{profile}",
        "n_seeds": n,
        "base_seed": base_seed,
        "jobs": jobs,
        "wall_s": wall,
        "completed": len(ok),
        "duration_s": float(refs.t[-1]),
        "rmse_m": _percentiles(rmses),
        "solve_ms_p50_mean": float(np.mean([r["solve_p50_ms"] for r in ok])) if ok else math.nan,
        "solve_ms_p99_max": float(np.max([r["solve_p99_ms"] for r in ok])) if ok else math.nan,
        "saturation_mean": float(np.mean([r["saturation"] for r in ok])) if ok else math.nan,
        "mode_switches": sorted({r["mode_switches"] for r in ok}) if ok else [],
        "landing_violations_total": int(np.sum([r["landing_violations"] for r in ok])) if ok else 0,
        "crosscheck_delta_max": float(np.max([r["crosscheck_delta"] for r in ok])) if ok else math.nan,
        "runs": records,
    }
    text = (
        f"lemniscate-{profile}: {len(ok)}/{n} runs completed, "
        f"reference duration {report['duration_s']:.1f} s\n"
        f"  rmse mean {report['rmse_m']['mean']:.4f} m, max {report['rmse_m']['max']:.4f} m\n"
        f"  solve p50 (mean over runs) {report['solve_ms_p50_mean']:.2f} ms, "
        f"worst p99 {report['solve_ms_p99_max']:.2f} ms\n"
        f"  rmse recomputed from logs, max deviation {report['crosscheck_delta_max']:.2e}\n"
    )
    return {"report": report, "text": text}


# ------------------------------------------------------------------ indi-ab

_INDI_DEFAULTS = {
    "n_pairs": 5,
    "tau_e": [0.05, 0.0, 0.0],
    "duration": 10.0,
    "position": [0.0, 0.0, 1.0],
    "estimate_window_s": 2.0,
}


def run_indi_ab(doc: dict, out_dir: Path, base_seed: int, jobs: int) -> dict:
    cfg = _merge(_INDI_DEFAULTS, {k: v for k, v in doc.items() if k != "suite"})
    _check_suite_keys(doc, set(_INDI_DEFAULTS))
    n = int(cfg["n_pairs"])
    tau_e = [float(v) for v in cfg["tau_e"]]
    seeds = [base_seed + i for i in range(n)]

    base_doc = {
        "task": {"type": "hover", "position": cfg["position"],
                 "duration": cfg["duration"]},
        "sim": {"tau_e": tau_e},
    }
    sc0 = parse_scenario(base_doc, out_dir)
    refs = task_references(sc0)
    win = max(1, int(round(cfg["estimate_window_s"] / sc0.sim.dt_ctrl)))
    tau_mag = float(np.linalg.norm(tau_e))

    def one(seed: int) -> dict:
        rec = {"seed": seed}
        for on in (True, False):
            sc = sc0.with_seed(seed)
            sc = replace(sc, sim=replace(sc.sim, indi_enabled=on))
            key = "on" if on else "off"
            try:
                metrics, log = run_closed_loop(refs, sc.params, sc.nmpc, sc.sim, sc.indi)
                rec[f"rmse_{key}"] = metrics.rmse_position
                if on:
                    d_est = log.rows[-win:, -3:].mean(axis=0)
                    rec["estimate"] = [float(v) for v in d_est]
                    rec["estimate_err_pct"] = (
                        float(np.linalg.norm(d_est - tau_e) / tau_mag * 100.0)
                        if tau_mag > 0
                        else math.nan
                    )
            except SimDivergenceError as exc:
                rec[f"rmse_{key}"] = math.inf
                rec[f"diverged_{key}"] = str(exc)
        rec["ratio"] = (
            rec["rmse_on"] / rec["rmse_off"] if rec.get("rmse_off") else math.nan
        )
        return rec

    t0 = time.perf_counter()
    records = _fan_out(one, seeds, jobs)
    wall = time.perf_counter() - t0
    ratios = [r["ratio"] for r in records]
    est_errs = [r.get("estimate_err_pct", math.nan) for r in records]
    report = {
        "suite": "indi-ab",
        "n_pairs": n,
        "base_seed": base_seed,
        "tau_e": tau_e,
        "wall_s": wall,
        "pairs": records,
        "rmse_ratio_max": float(np.max(ratios)),
        "rmse_ratio_threshold": 0.2,
        "indi_improves": bool(np.max(ratios) <= 0.2),
        "estimate_err_pct_max": float(np.max(est_errs)),
        "estimate_within_5pct": bool(np.max(est_errs) <= 5.0),
    }
    text = (
        f"indi a/b over {n} paired seeds, constant torque {tau_e} N m\n"
        f"  worst rmse ratio on/off {report['rmse_ratio_max']:.3f} "
        f"(threshold 0.2: {report['indi_improves']})\n"
        f"  worst disturbance-estimate error {report['estimate_err_pct_max']:.2f}% "
        f"(within 5%: {report['estimate_within_5pct']})\n"
    )
    return {"report": report, "text": text}


# ----------------------------------------------------------- kernel-backends

_KERNEL_DEFAULTS = {"batch": 512, "horizon": 50, "repeats": 7}


def run_kernel_backends(doc: dict, out_dir: Path, base_seed: int, jobs: int) -> dict:
    """Time both numeric-kernel implementations on identical seeded inputs.

    Checks agreement first (the pure NumPy backend is the reference), then
    reports best-of-N wall times per stage and the resulting speedups.
    """
    cfg = _merge(_KERNEL_DEFAULTS, {k: v for k, v in doc.items() if k != "suite"})
    _check_suite_keys(doc, set(_KERNEL_DEFAULTS))
    from ._kernels import pure as pure_impl

    impls = {"pure": pure_impl}
    try:
        from ._kernels import _core as core_impl  # type: ignore[attr-defined]

        impls["compiled"] = core_impl
    except ImportError:
        pass

    rng = np.random.default_rng(base_seed)
    batch = int(cfg["batch"])
    horizon = int(cfg["horizon"])
    repeats = int(cfg["repeats"])
    params = PhysicalParams()
    kp = params.kernel_params()
    dist = np.zeros(6)

    X = np.empty((batch, 13))
    X[:, 0:3] = rng.uniform(-5.0, 5.0, (batch, 3))
    q = rng.normal(size=(batch, 4))
    X[:, 3:7] = q / np.linalg.norm(q, axis=1, keepdims=True)
    X[:, 7:10] = rng.normal(0.0, 1.0, (batch, 3))
    X[:, 10:13] = rng.normal(0.0, 0.5, (batch, 3))
    U = np.column_stack([
        rng.uniform(0.5, 1.5, batch) * params.hover_thrust,
        rng.normal(0.0, 0.05, (batch, 3)),
    ])
    mu = (rng.random(batch) < 0.5).astype(float)
    x0 = X[0].copy()
    Uh = U[:horizon]
    muh = mu[:horizon]
    grid = rng.random((40, 40))
    pts2 = rng.uniform(0.0, 4.0, (batch, 2))
    Xh, _ = pure_impl.rollout(x0, Uh, 0.07, muh, kp, dist, True)

    stages = {
        "rk4_step_batch": lambda f: f.rk4_step_batch(X, U, 1e-3, mu, kp, dist, True),
        "rollout": lambda f: f.rollout(x0, Uh, 0.07, muh, kp, dist, True),
        "linearize_rollout": lambda f: f.linearize_rollout(
            Xh, Uh, 0.07, muh, kp, dist, True
        ),
        "grid_sample_2d": lambda f: f.grid_sample_2d(grid, np.zeros(2), 0.1, pts2),
    }

    # agreement gate before timing anything
    parity = {}
    if "compiled" in impls:
        for name, fn in stages.items():
            ref = fn(impls["pure"])
            got = fn(impls["compiled"])
            ref0 = ref[0] if isinstance(ref, tuple) else ref
            got0 = got[0] if isinstance(got, tuple) else got
            parity[name] = float(np.max(np.abs(np.asarray(got0) - np.asarray(ref0))))

    timings: dict[str, dict[str, float]] = {}
    for impl_name, impl in impls.items():
        for name, fn in stages.items():
            best = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn(impl)
                best = min(best, time.perf_counter() - t0)
            timings.setdefault(name, {})[impl_name] = best * 1e3

    speedups = {
        name: (t["pure"] / t["compiled"] if "compiled" in t else math.nan)
        for name, t in timings.items()
    }
    report = {
        "suite": "kernel-backends",
        "base_seed": base_seed,
        "batch": batch,
        "horizon": horizon,
        "repeats": repeats,
        "backends": sorted(impls),
        "parity_max_abs": parity,
        "timings_ms": timings,
        "speedup": speedups,
    }
    lines = [f"kernel backends: {', '.join(sorted(impls))} "
             f"(batch {batch}, horizon {horizon}, best of {repeats})"]
    for name, t in timings.items():
        row = f"  {name}: pure {t['pure']:.3f} ms"
        if "compiled" in t:
            row += (f", compiled {t['compiled']:.3f} ms "
                    f"({speedups[name]:.1f}x, max |diff| {parity[name]:.2e})")
        lines.append(row)
    return {"report": report, "text": "\n".join(lines) + "\n"}


# ----------------------------------------------------------------- dispatch


def run_suite(doc: dict, out_dir: Path, base_seed: int = 0, jobs: int = 1) -> dict:
    """Run one named suite; writes report.json/report.txt plus per-run files."""
    if not isinstance(doc, dict):
        raise ConfigError("benchmark config root must be an object")
    suite = doc.get("suite")
    if suite not in SUITES:
        raise ConfigError("'suite' must be one of " + ", ".join(SUITES))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(doc, indent=2) + "\n")

    if suite == "forest-500":
        result = run_forest(doc, out_dir, base_seed, jobs)
    elif suite == "goals-course":
        result = run_goals_course(doc, out_dir, base_seed, jobs)
    elif suite == "lemniscate-2d":
        result = run_lemniscate(doc, out_dir, base_seed, jobs, "2d")
    elif suite == "lemniscate-3d":
        result = run_lemniscate(doc, out_dir, base_seed, jobs, "3d")
    elif suite == "indi-ab":
        result = run_indi_ab(doc, out_dir, base_seed, jobs)
    else:
        result = run_kernel_backends(doc, out_dir, base_seed, jobs)

    (out_dir / "report.json").write_text(
        json.dumps(result["report"], indent=2) + "\n"
    )
    (out_dir / "report.txt").write_text(result["text"])
    return result
