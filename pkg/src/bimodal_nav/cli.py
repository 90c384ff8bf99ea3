"""Command-line entry point: plan, track, benchmark, genworld.

Every subcommand reads one JSON scenario/config file and writes a run
directory containing the config snapshot, logs, and metrics, so each result
is reproducible from config plus seed alone.  Exit codes: 0 success,
2 planning failure, 3 tracking divergence, 4 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmarks
from .scenario import (
    ConfigError,
    MissionPlan,
    ScenarioConfig,
    build_world,
    load_scenario,
    plan_mission,
    task_references,
)
from .search import SearchError
from .simulator import RunLog, SimDivergenceError, run_closed_loop, summarize_run
from .trajopt import OptimizationError, save_trajectory

EXIT_SUCCESS = 0
EXIT_PLANNING = 2
EXIT_TRACKING = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; here bad usage is a config error."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="bimodal-nav",
        description="Planning and tracking pipeline for a wheeled bimodal vehicle.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    specs = (
        ("plan", "kinodynamic search plus trajectory refinement"),
        ("track", "closed-loop tracking of a planned or analytic reference"),
        ("benchmark", "seeded benchmark suites with aggregate reports"),
        ("genworld", "rasterize a world section to grid files"),
    )
    for name, help_text in specs:
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", required=True, help="run directory (created)")
        s.add_argument("--seed", type=int, default=None, help="base seed override")
        s.add_argument("--jobs", type=int, default=1, help="worker threads")
    return parser


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _snapshot(scenario: ScenarioConfig, out_dir: Path) -> None:
    _write_json(out_dir / "config.json", scenario.raw)
    _write_json(out_dir / "resolved_config.json", scenario.resolved())


def _write_mission(plan: MissionPlan, out_dir: Path) -> dict:
    """Per-leg search/trajectory artifacts, cost log, and a plan summary."""
    for i, leg in enumerate(plan.legs):
        if leg.search is not None:
            leg.search.to_json(out_dir / f"search_leg{i:02d}.json")
        save_trajectory(
            out_dir / f"trajectory_leg{i:02d}.json", leg.opt.traj, leg.opt.modes
        )
    lines = ["leg,iteration,J_t,J_s,J_c,J_n,total"]
    for i, leg in enumerate(plan.legs):
        for row in leg.opt.iteration_log:
            lines.append(f"{i}," + ",".join(f"{v:.9g}" for v in row))
    (out_dir / "cost_log.csv").write_text("\n".join(lines) + "\n")
    if plan.refs is not None:
        plan.refs.to_csv(out_dir / "references.csv")
    summary = {
        "n_legs": len(plan.legs),
        "total_time_s": plan.total_time,
        "length_m": plan.length_m,
        "feasible": plan.feasible,
        "goal_ticks": plan.goal_ticks,
        "front_end_ms": plan.front_end_ms,
        "back_end_ms": plan.back_end_ms,
        "legs": [
            {
                "duration_s": leg.duration,
                "pieces": int(len(leg.opt.modes)),
                "aerial_pieces": int(np.sum(leg.opt.modes != 0)),
                "cost": [float(c) for c in leg.opt.cost],
                "iterations": leg.opt.iterations,
                "message": leg.opt.message,
            }
            for leg in plan.legs
        ],
    }
    _write_json(out_dir / "plan.json", summary)
    _write_json(
        out_dir / "timing.json",
        {
            "front_end_ms": plan.front_end_ms,
            "back_end_ms": plan.back_end_ms,
            "front_end_total_ms": float(sum(plan.front_end_ms)),
            "back_end_total_ms": float(sum(plan.back_end_ms)),
        },
    )
    return summary


def cmd_plan(scenario: ScenarioConfig, out_dir: Path) -> int:
    if scenario.task["type"] != "goal":
        raise ConfigError("'task.type' must be 'goal' for the plan command")
    _snapshot(scenario, out_dir)
    try:
        world = scenario.build_world()
        plan = plan_mission(scenario, world)
    except (SearchError, OptimizationError) as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        _write_json(out_dir / "plan.json", {"error": str(exc)})
        return EXIT_PLANNING
    summary = _write_mission(plan, out_dir)
    print(
        f"planned {summary['n_legs']} leg(s): {summary['length_m']:.1f} m in "
        f"{summary['total_time_s']:.1f} s, feasible: {summary['feasible']}"
    )
    if not summary["feasible"]:
        print("planning failed: refinement left penalty residuals", file=sys.stderr)
        return EXIT_PLANNING
    return EXIT_SUCCESS


def cmd_track(scenario: ScenarioConfig, out_dir: Path) -> int:
    _snapshot(scenario, out_dir)
    plan = None
    if scenario.task["type"] == "goal":
        try:
            world = scenario.build_world()
            plan = plan_mission(scenario, world)
            _write_mission(plan, out_dir)
        except (SearchError, OptimizationError) as exc:
            print(f"planning failed: {exc}", file=sys.stderr)
            return EXIT_PLANNING
        refs = plan.refs
    else:
        refs = task_references(scenario)
        refs.to_csv(out_dir / "references.csv")

    try:
        metrics, log = run_closed_loop(
            refs, scenario.params, scenario.nmpc, scenario.sim, scenario.indi
        )
    except SimDivergenceError as exc:
        exc.log.to_csv(out_dir / "run_log.csv")
        _write_json(out_dir / "events.json", exc.log.events)
        _write_json(out_dir / "metrics.json", {"error": str(exc)})
        print(f"tracking diverged: {exc}", file=sys.stderr)
        return EXIT_TRACKING

    log.to_csv(out_dir / "run_log.csv")
    _write_json(out_dir / "events.json", log.events)
    doc = metrics.to_dict()
    # report invariant: metrics must be recomputable from the raw log
    again = summarize_run(RunLog.from_csv(out_dir / "run_log.csv"), scenario.sim)
    doc["rmse_crosscheck_delta"] = abs(
        metrics.rmse_position - again.rmse_position
    )
    if plan is not None:
        doc["goal_errors"] = plan.goal_errors(log.rows)
    _write_json(out_dir / "metrics.json", doc)
    print(
        f"tracked {log.rows[-1, 0]:.1f} s: rmse {metrics.rmse_position:.4f} m, "
        f"solve p50 {metrics.solve_ms_p50:.2f} ms, p99 {metrics.solve_ms_p99:.2f} ms"
    )
    return EXIT_SUCCESS


def cmd_benchmark(config_path: Path, out_dir: Path, seed: int | None, jobs: int) -> int:
    try:
        doc = json.loads(config_path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {config_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON: {exc}") from exc
    result = benchmarks.run_suite(doc, out_dir, base_seed=seed or 0, jobs=max(1, jobs))
    print(result["text"], end="")
    return EXIT_SUCCESS


def cmd_genworld(config_path: Path, out_dir: Path, seed: int | None) -> int:
    try:
        doc = json.loads(config_path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {config_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "world" not in doc:
        raise ConfigError("missing key 'world'")
    spec = doc["world"]
    if seed is not None and isinstance(spec, dict) and spec.get("type") == "forest":
        spec = dict(spec)
        spec["seed"] = seed
    world = build_world(spec, config_path.parent.resolve())
    world.ground.save(out_dir / "ground.grid")
    world.air.save(out_dir / "air.grid")
    _write_json(out_dir / "world.json", {"world": spec})
    print(
        f"wrote {out_dir / 'ground.grid'} {world.ground.dims} and "
        f"{out_dir / 'air.grid'} {world.air.dims}"
    )
    return EXIT_SUCCESS


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "benchmark":
            return cmd_benchmark(Path(args.config), out_dir, args.seed, args.jobs)
        if args.command == "genworld":
            return cmd_genworld(Path(args.config), out_dir, args.seed)
        scenario = load_scenario(args.config)
        if args.seed is not None:
            scenario = scenario.with_seed(args.seed)
        if args.command == "plan":
            return cmd_plan(scenario, out_dir)
        return cmd_track(scenario, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
