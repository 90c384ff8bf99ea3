"""Deterministic closed-loop harness around the controller stack.

Fixed-timestep loop: gyro sample with seeded noise, receding-horizon solve at
the control rate, incremental torque correction, rotor allocation with
saturation, then true rigid-body integration at the simulation rate with
injectable constant force/torque disturbances.  Mode transitions follow the
commanded flag gated by physical conditions: takeoff when the rotors unload
the wheels, touchdown when height and sink rate are inside the envelope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (
    AERIAL,
    TERRESTRIAL,
    ControlInput,
    FullState,
    GroundContact,
    PhysicalParams,
    allocate_from_rotors,
    integrate_rk4,
    rotors_from_input,
)
from .flatness import ReferenceSequence
from .indi import IndiConfig, IndiLoop, disturbance_estimate
from .nmpc import NmpcConfig, NmpcController


class SimDivergenceError(RuntimeError):
    """Closed loop left the sane region; carries the partial log."""

    def __init__(self, message: str, log: "RunLog") -> None:
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class SimConfig:
    dt_sim: float = 1e-3
    dt_ctrl: float = 5e-3
    duration: float | None = None  # None tracks the full reference
    gyro_noise_std: float = 0.01
    seed: int = 0
    indi_enabled: bool = True
    tau_e: tuple[float, float, float] = (0.0, 0.0, 0.0)
    f_e: tuple[float, float, float] = (0.0, 0.0, 0.0)
    disturbance_t_start: float = 0.0
    divergence_bound: float = 100.0  # abort when any |p| component exceeds this
    touchdown_z: float = 0.01
    touchdown_vz: float = -0.5

    def __post_init__(self) -> None:
        if self.dt_sim <= 0 or self.dt_ctrl <= 0:
            raise ValueError("timesteps must be positive")
        ratio = self.dt_ctrl / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_ctrl must be an integer multiple of dt_sim")
        if self.gyro_noise_std < 0:
            raise ValueError("noise std must be nonnegative")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_ctrl / self.dt_sim))


@dataclass
class RunMetrics:
    rmse_position: float
    max_position_error: float
    rmse_terrestrial: float
    rmse_aerial: float
    mode_switches: int
    saturation_fraction: float
    solve_ms_p50: float
    solve_ms_p99: float
    degraded_ticks: int
    landing_violations: int
    max_mode_lag: float  # longest commanded-vs-contact disagreement, s

    def to_dict(self) -> dict:
        return {k: (v if isinstance(v, int) else float(v)) for k, v in self.__dict__.items()}

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


_LOG_COLUMNS = (
    ["t"]
    + [f"x_{n}" for n in ("px", "py", "pz", "qw", "qx", "qy", "qz",
                           "vx", "vy", "vz", "wx", "wy", "wz")]
    + [f"r_{n}" for n in ("px", "py", "pz")]
    + ["u_T", "u_taux", "u_tauy", "u_tauz",
       "mu_g", "cmd_mode", "saturated", "degraded", "solve_ms", "kkt",
       "d_taux", "d_tauy", "d_tauz"]
)


@dataclass
class RunLog:
    """One row per control tick; column order fixed by _LOG_COLUMNS."""

    rows: np.ndarray
    events: list[str] = field(default_factory=list)

    COLUMNS = _LOG_COLUMNS

    def to_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.rows, delimiter=",", header=",".join(self.COLUMNS),
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path) -> "RunLog":
        return cls(rows=np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.COLUMNS.index(name)]


def compute_rmse(actual: np.ndarray, reference: np.ndarray) -> float:
    """Root mean squared Euclidean distance between paired position samples."""
    actual = np.asarray(actual, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if actual.shape != reference.shape:
        raise ValueError("actual and reference sample counts differ")
    return float(np.sqrt(np.mean(np.sum((actual - reference) ** 2, axis=-1))))


def run_closed_loop(
    refs: ReferenceSequence,
    params: PhysicalParams,
    nmpc_config: NmpcConfig | None = None,
    sim_config: SimConfig | None = None,
    indi_config: IndiConfig | None = None,
    x0: FullState | None = None,
) -> tuple[RunMetrics, RunLog]:
    """Track a reference sequence; returns metrics and the per-tick log.

    The initial state defaults to the first reference state.  Raises
    SimDivergenceError (with the partial log attached) when position leaves
    the divergence bound.
    """
    nmpc_config = nmpc_config or NmpcConfig()
    cfg = sim_config or SimConfig()
    indi_config = indi_config or IndiConfig(rate_hz=1.0 / cfg.dt_ctrl)
    rng = np.random.default_rng(cfg.seed)

    duration = cfg.duration if cfg.duration is not None else float(refs.t[-1])
    n_ticks = int(np.floor(duration / cfg.dt_ctrl))
    ref_stride = cfg.dt_ctrl / refs.dt if refs.dt > 0 else 1.0

    x = FullState.from_vector(refs.X[0].copy()) if x0 is None else x0
    contact = GroundContact(mu_g=int(refs.mode[0]), f_n=0.0)
    controller = NmpcController(nmpc_config, params)
    indi = IndiLoop(params, indi_config)
    tau_applied = np.zeros(3)
    dist = np.concatenate([cfg.f_e, cfg.tau_e])
    no_dist = np.zeros(6)

    rows = np.empty((n_ticks, len(_LOG_COLUMNS)))
    events: list[str] = []

    for k in range(n_ticks):
        t = k * cfg.dt_ctrl
        tick = int(round(k * ref_stride))
        omega_meas = x.w + rng.normal(0.0, cfg.gyro_noise_std, 3)
        x_meas = FullState(p=x.p.copy(), q=x.q.copy(), v=x.v.copy(), w=omega_meas)

        u_nmpc, sol = controller.step(x_meas, refs, tick)
        if cfg.indi_enabled:
            tau_cmd = indi.step(u_nmpc.tau, omega_meas, tau_applied)
            d_tau = disturbance_estimate(indi.last_signals, params)
        else:
            tau_cmd = u_nmpc.tau
            d_tau = np.zeros(3)
        rotors, saturated = rotors_from_input(
            ControlInput(T=u_nmpc.T, tau=tau_cmd), params
        )
        u_true = allocate_from_rotors(rotors, params)
        tau_applied = u_true.tau.copy()

        cmd_mode = int(refs.mode[min(tick, len(refs) - 1)])
        d = dist if t >= cfg.disturbance_t_start else no_dist
        for _ in range(cfg.substeps):
            x, contact, liftoff = integrate_rk4(
                x, u_true, contact, cfg.dt_sim, params, disturbance=d
            )
            if contact.mu_g == TERRESTRIAL and cmd_mode == AERIAL and liftoff:
                contact = GroundContact(mu_g=AERIAL, f_n=0.0)
            elif contact.mu_g == AERIAL and cmd_mode == TERRESTRIAL:
                if x.p[2] <= cfg.touchdown_z:
                    if x.v[2] < cfg.touchdown_vz:
                        events.append(
                            f"t={t:.3f}: touchdown outside envelope, v_z={x.v[2]:.2f}"
                        )
                    xv = x.as_vector()
                    xv[2] = 0.0
                    xv[9] = 0.0
                    x = FullState.from_vector(xv)
                    contact = GroundContact(mu_g=TERRESTRIAL, f_n=0.0)

        ref_row = refs.X[min(tick, len(refs) - 1)]
        rows[k] = [
            t,
            *x.as_vector(),
            *ref_row[:3],
            *u_true.as_vector(),
            contact.mu_g,
            cmd_mode,
            float(saturated),
            float(sol.degraded),
            sol.solve_time * 1e3,
            sol.kkt_residual,
            *d_tau,
        ]
        if np.any(np.abs(x.p) > cfg.divergence_bound) or not np.all(np.isfinite(x.p)):
            log = RunLog(rows=rows[: k + 1], events=events)
            raise SimDivergenceError(f"position diverged at t={t:.3f} s", log)

    log = RunLog(rows=rows, events=events)
    metrics = summarize_run(log, cfg)
    return metrics, log


def summarize_run(log: RunLog, cfg: SimConfig) -> RunMetrics:
    """Recompute all metrics from the raw log (the report cross-check path)."""
    p = log.rows[:, 1:4]
    p_ref = log.rows[:, 14:17]
    err = np.linalg.norm(p - p_ref, axis=1)
    mu = log.column("mu_g").astype(int)
    terr = mu == TERRESTRIAL
    solve_ms = log.column("solve_ms")
    cmd = log.column("cmd_mode").astype(int)
    lag = 0
    max_lag = 0
    for agree in mu == cmd:
        lag = 0 if agree else lag + 1
        max_lag = max(max_lag, lag)
    return RunMetrics(
        rmse_position=compute_rmse(p, p_ref),
        max_position_error=float(err.max()) if len(err) else 0.0,
        rmse_terrestrial=compute_rmse(p[terr], p_ref[terr]) if terr.any() else 0.0,
        rmse_aerial=compute_rmse(p[~terr], p_ref[~terr]) if (~terr).any() else 0.0,
        mode_switches=int(np.count_nonzero(np.diff(mu))),
        saturation_fraction=float(log.column("saturated").mean()) if len(err) else 0.0,
        solve_ms_p50=float(np.percentile(solve_ms, 50)) if len(err) else 0.0,
        solve_ms_p99=float(np.percentile(solve_ms, 99)) if len(err) else 0.0,
        degraded_ticks=int(log.column("degraded").sum()),
        landing_violations=len([e for e in log.events if "touchdown" in e]),
        max_mode_lag=max_lag * cfg.dt_ctrl,
    )
