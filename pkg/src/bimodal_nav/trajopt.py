"""Spatio-temporal trajectory optimization over waypoints and piece durations.

Minimizes lambda . [J_t, J_s, J_c, J_n]: total time, state-limit penalties,
collision penalties against the per-mode distance fields, and nonholonomic
heading-rate penalties on terrestrial pieces.  Variables are the free
waypoint coordinates (terrestrial-adjacent waypoints keep z = 0) and
log-durations, so the problem stays smooth and unconstrained.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import minco
from .lbfgs import minimize_lbfgs
from .dynamics import TERRESTRIAL, PhysicalParams
from .esdf import EsdfGrid
from .flatness import FlatSample, ReferenceSequence, recover_references
from .minco import Boundary, MincoTrajectory


class OptimizationError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    lam: tuple[float, float, float, float] = (5.0, 6.0, 100.0, 5.0)
    v_max: float = 3.0
    a_max: float = 2.5
    omega_max: float = 2.5
    alpha_max: float = 8.0
    d_s: float = 0.4
    kappa: int = 8
    maxiter: int = 300
    gtol: float = 1e-5
    memory: int = 8
    smooth_eps: float = 1e-2
    speed_reg: float = 1e-3
    ground_weight: float = 100.0
    # numerical floor/ceiling on piece durations (log-chart safety box)
    t_piece_min: float = 0.02
    t_piece_max: float = 60.0
    # optional warm restarts: if any penalty term exceeds the tolerance after
    # a segment of maxiter iterations, rerun from the current point with the
    # quasi-Newton memory cleared (stale curvature pairs stall the descent
    # along the penalty walls).  0 keeps the single-segment behavior.
    restart_attempts: int = 0
    restart_penalty_tol: float = 1e-3

    def __post_init__(self) -> None:
        if self.kappa < 4:
            raise ValueError("kappa must be at least 4")
        if min(self.v_max, self.a_max, self.omega_max, self.alpha_max, self.d_s) <= 0:
            raise ValueError("limits must be positive")


def smooth_max0(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """C^2 hinge: 0 for x<=0, exactly x for x>=eps, quintic blend between.

    Returns (value, derivative).  The blend mu*g(x/mu) with
    g(r) = 6r^3 - 8r^4 + 3r^5 matches value/slope/curvature at both ends.
    """
    x = np.asarray(x, dtype=float)
    f = np.where(x >= eps, x, 0.0)
    df = np.where(x >= eps, 1.0, 0.0)
    mid = (x > 0.0) & (x < eps)
    if np.any(mid):
        r = x[mid] / eps
        f = f.copy()
        df = df.copy()
        f[mid] = eps * (6.0 * r**3 - 8.0 * r**4 + 3.0 * r**5)
        df[mid] = 18.0 * r**2 - 32.0 * r**3 + 15.0 * r**4
    return f, df


@dataclass
class CostReport:
    """Values and pullback gradients of the four cost groups."""

    J: np.ndarray  # (4,) [J_t, J_s, J_c, J_n]
    dC: list[np.ndarray]  # per cost: dJ/dcoeffs (M, 6, ndim)
    dT_direct: list[np.ndarray]  # per cost: direct dJ/dT (M,)


def evaluate_costs(
    traj: MincoTrajectory,
    modes: np.ndarray,
    config: OptimizerConfig,
    ground_esdf: EsdfGrid | None = None,
    air_esdf: EsdfGrid | None = None,
    which: tuple[bool, bool, bool, bool] = (True, True, True, True),
) -> CostReport:
    """Sample kappa constraint points per piece and accumulate all costs.

    Constraint points sit at tau_j = (j/kappa) T_i, j = 0..kappa-1; their
    motion with T_i enters the direct duration gradient.
    """
    M = traj.n_pieces
    nd = traj.ndim
    J = np.zeros(4)
    dC = [np.zeros((M, minco.NCOEF, nd)) for _ in range(4)]
    dTd = [np.zeros(M) for _ in range(4)]

    if which[0]:
        J[0] = traj.T.sum()
        dTd[0][:] = 1.0
    if not any(which[1:]):
        return CostReport(J=J, dC=dC, dT_direct=dTd)

    kappa = config.kappa
    jfrac = np.arange(kappa) / kappa
    eps = config.smooth_eps
    terr = np.asarray(modes, dtype=int) == TERRESTRIAL
    aerial = ~terr

    taus = jfrac[None, :] * traj.T[:, None]  # (M, kappa)
    B = [
        minco.beta_batch(taus.ravel(), d).reshape(M, kappa, minco.NCOEF)
        for d in range(5)
    ]
    D = [np.einsum("mkc,mcd->mkd", B[d], traj.coeffs) for d in range(5)]

    # per-order sample gradients for each cost group, (M, kappa, nd)
    acc: dict[int, list[np.ndarray]] = {}

    def add(ci: int, order: int, g: np.ndarray, rows=slice(None)) -> None:
        if ci not in acc:
            acc[ci] = [np.zeros((M, kappa, nd)) for _ in range(4)]
        acc[ci][order][rows] += g

    if which[1]:
        v2 = (D[1] ** 2).sum(axis=2)
        f, df = smooth_max0(v2 - config.v_max**2, eps)
        J[1] += f.sum()
        add(1, 1, 2.0 * df[..., None] * D[1])
        a2 = (D[2] ** 2).sum(axis=2)
        f, df = smooth_max0(a2 - config.a_max**2, eps)
        J[1] += f.sum()
        add(1, 2, 2.0 * df[..., None] * D[2])
        if terr.any() and nd >= 3:
            w = config.ground_weight
            z0 = D[0][terr, :, 2]
            z1 = D[1][terr, :, 2]
            J[1] += w * float((z0**2).sum() + (z1**2).sum())
            gz = np.zeros((int(terr.sum()), kappa, nd))
            gz[:, :, 2] = 2.0 * w * z0
            add(1, 0, gz, terr)
            gvz = np.zeros((int(terr.sum()), kappa, nd))
            gvz[:, :, 2] = 2.0 * w * z1
            add(1, 1, gvz, terr)

    if which[2]:
        gp = np.zeros((M, kappa, nd))
        for rows, fld, dim in ((terr, ground_esdf, 2), (aerial, air_esdf, 3)):
            if not rows.any():
                continue
            if fld is None:
                raise OptimizationError("collision cost requested without a distance field")
            pts = D[0][rows][:, :, :dim].reshape(-1, dim)
            dist, grad, inside = fld.query(pts)
            if not inside.all():
                # outside the sampling hull the distance keeps falling with
                # depth, so the penalty pushes strays back in and the value
                # stays consistent with its gradient
                out = ~inside
                lo = fld.origin + 0.5 * fld.resolution
                hi = fld.origin + (np.array(fld.dims) - 0.5) * fld.resolution
                b = pts[out] - np.clip(pts[out], lo, hi)
                depth = np.linalg.norm(b, axis=1, keepdims=True)
                dist = dist.copy()
                grad = grad.copy()
                dist[out] -= depth[:, 0]
                gout = grad[out]
                gout[b != 0.0] = 0.0  # clamp saturates the interpolant there
                grad[out] = gout - b / depth
            f, df = smooth_max0(config.d_s - dist, eps)
            J[2] += f.sum()
            block = np.zeros((len(pts), nd))
            block[:, :dim] = -df[:, None] * grad
            gp[rows] += block.reshape(-1, kappa, nd)
        add(2, 0, gp)

    if which[3] and terr.any():
        vx, vy = D[1][terr, :, 0], D[1][terr, :, 1]
        ax, ay = D[2][terr, :, 0], D[2][terr, :, 1]
        jx, jy = D[3][terr, :, 0], D[3][terr, :, 1]
        s = vx * vx + vy * vy + config.speed_reg**2
        n = vx * ay - vy * ax
        w_dot = n / s
        m = vx * jy - vy * jx
        wdotv = vx * ax + vy * ay
        w_ddot = m / s - 2.0 * n * wdotv / s**2

        f1, df1 = smooth_max0(w_dot**2 - config.omega_max**2, eps)
        f2, df2 = smooth_max0(w_ddot**2 - config.alpha_max**2, eps)
        J[3] += f1.sum() + f2.sum()

        # d(w_dot)/d(v, a)
        dwd_vx = ay / s - 2.0 * n * vx / s**2
        dwd_vy = -ax / s - 2.0 * n * vy / s**2
        dwd_ax = -vy / s
        dwd_ay = vx / s
        # d(w_ddot)/d(v, a, j)
        dwdd_vx = (jy / s - 2.0 * m * vx / s**2
                   - 2.0 * (ay * wdotv + n * ax) / s**2 + 8.0 * n * wdotv * vx / s**3)
        dwdd_vy = (-jx / s - 2.0 * m * vy / s**2
                   - 2.0 * (-ax * wdotv + n * ay) / s**2 + 8.0 * n * wdotv * vy / s**3)
        dwdd_ax = -2.0 * (-vy * wdotv + n * vx) / s**2
        dwdd_ay = -2.0 * (vx * wdotv + n * vy) / s**2
        dwdd_jx = -vy / s
        dwdd_jy = vx / s

        nt = int(terr.sum())
        c1 = 2.0 * df1 * w_dot
        c2 = 2.0 * df2 * w_ddot
        gv = np.zeros((nt, kappa, nd))
        gv[:, :, 0] = c1 * dwd_vx + c2 * dwdd_vx
        gv[:, :, 1] = c1 * dwd_vy + c2 * dwdd_vy
        ga = np.zeros((nt, kappa, nd))
        ga[:, :, 0] = c1 * dwd_ax + c2 * dwdd_ax
        ga[:, :, 1] = c1 * dwd_ay + c2 * dwdd_ay
        gj = np.zeros((nt, kappa, nd))
        gj[:, :, 0] = c2 * dwdd_jx
        gj[:, :, 1] = c2 * dwdd_jy
        add(3, 1, gv, terr)
        add(3, 2, ga, terr)
        add(3, 3, gj, terr)

    for ci, per_order in acc.items():
        for d, g in enumerate(per_order):
            if not g.any():
                continue
            dC[ci] += np.einsum("mkc,mkd->mcd", B[d], g)
            dTd[ci] += ((g * D[d + 1]).sum(axis=2) * jfrac[None, :]).sum(axis=1)

    return CostReport(J=J, dC=dC, dT_direct=dTd)


def cost_total_time(traj: MincoTrajectory) -> tuple[float, np.ndarray]:
    return float(traj.T.sum()), np.ones(traj.n_pieces)


def cost_state_limits(
    traj: MincoTrajectory, modes: np.ndarray, config: OptimizerConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    r = evaluate_costs(traj, modes, config, which=(False, True, False, False))
    return float(r.J[1]), r.dC[1], r.dT_direct[1]


def cost_collision(
    traj: MincoTrajectory,
    modes: np.ndarray,
    config: OptimizerConfig,
    ground_esdf: EsdfGrid,
    air_esdf: EsdfGrid,
) -> tuple[float, np.ndarray, np.ndarray]:
    r = evaluate_costs(
        traj, modes, config, ground_esdf, air_esdf, which=(False, False, True, False)
    )
    return float(r.J[2]), r.dC[2], r.dT_direct[2]


def cost_nonholonomic(
    traj: MincoTrajectory, modes: np.ndarray, config: OptimizerConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    r = evaluate_costs(traj, modes, config, which=(False, False, False, True))
    return float(r.J[3]), r.dC[3], r.dT_direct[3]


@dataclass
class OptimizeResult:
    traj: MincoTrajectory
    modes: np.ndarray
    cost: np.ndarray  # final (4,)
    total_cost: float
    iterations: int
    n_evals: int
    wall_time: float
    success: bool
    message: str
    iteration_log: list[tuple[int, float, float, float, float, float]] = field(
        default_factory=list
    )


def _variable_layout(modes: np.ndarray, n_waypoints: int) -> np.ndarray:
    """Free-coordinate mask over interior waypoints: z is pinned to 0 when
    either adjacent piece is terrestrial (transitions happen on the ground)."""
    free = np.ones((n_waypoints, 3), dtype=bool)
    for i in range(n_waypoints):
        if modes[i] == TERRESTRIAL or modes[i + 1] == TERRESTRIAL:
            free[i, 2] = False
    return free


def optimize(
    waypoints: np.ndarray,
    T0: np.ndarray,
    modes: np.ndarray,
    start: Boundary,
    end: Boundary,
    config: OptimizerConfig,
    ground_esdf: EsdfGrid | None = None,
    air_esdf: EsdfGrid | None = None,
) -> OptimizeResult:
    """Quasi-Newton descent on lambda . [J_t, J_s, J_c, J_n].

    waypoints: (M+1, 3) including both endpoints (interior rows are the
    initial q); T0: (M,) initial durations; modes: (M,) piece labels.
    """
    t_begin = time.perf_counter()
    waypoints = np.asarray(waypoints, dtype=float)
    T0 = np.asarray(T0, dtype=float)
    modes = np.asarray(modes, dtype=int)
    M = len(T0)
    if M < 1 or waypoints.shape != (M + 1, 3) or len(modes) != M:
        raise ValueError("inconsistent initial guess shapes")
    lam = np.asarray(config.lam, dtype=float)
    q0 = waypoints[1:-1].copy()
    free = _variable_layout(modes, M - 1)
    q0[~free] = 0.0
    tau0 = np.log(np.clip(T0, config.t_piece_min, config.t_piece_max))
    nq = int(free.sum())

    def unpack(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = q0.copy()
        q[free] = x[:nq]
        return q, np.exp(x[nq:])

    state = {"last": np.zeros(5), "log": [], "bad_term": None}
    names = ("J_t", "J_s", "J_c", "J_n")

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        q, T = unpack(x)
        if np.any(T < config.t_piece_min) or np.any(T > config.t_piece_max):
            return 1e30, np.zeros_like(x)
        try:
            traj = minco.solve_coefficients(q, T, start, end)
            rep = evaluate_costs(traj, modes, config, ground_esdf, air_esdf)
        except (np.linalg.LinAlgError, ValueError):
            return 1e30, np.zeros_like(x)
        if not np.all(np.isfinite(rep.J)):
            state["bad_term"] = names[int(np.argmax(~np.isfinite(rep.J)))]
            return 1e30, np.zeros_like(x)
        total = float(lam @ rep.J)
        dC = sum(lam[c] * rep.dC[c] for c in range(4))
        dTdir = sum(lam[c] * rep.dT_direct[c] for c in range(4))
        dq, dT = minco.backprop_gradients(traj, dC, dTdir)
        g = np.empty_like(x)
        g[:nq] = dq[free]
        g[nq:] = dT * T  # chain through T = exp(tau)
        state["last"] = np.concatenate([rep.J, [total]])
        return total, g

    def on_iteration(_xk: np.ndarray) -> None:
        it = len(state["log"])
        state["log"].append((it, *map(float, state["last"])))

    x0 = np.concatenate([q0[free], tau0])
    iterations = 0
    n_evals = 0
    for segment in range(config.restart_attempts + 1):
        res = minimize_lbfgs(
            objective,
            x0,
            memory=config.memory,
            gtol=config.gtol,
            maxiter=config.maxiter,
            callback=on_iteration,
        )
        if state["bad_term"] is not None and not np.isfinite(res.fun):
            raise OptimizationError(f"non-finite cost in term {state['bad_term']}")
        iterations += res.iterations
        n_evals += res.n_evals
        x0 = res.x
        q, T = unpack(res.x)
        traj = minco.solve_coefficients(q, T, start, end)
        rep = evaluate_costs(traj, modes, config, ground_esdf, air_esdf)
        if res.converged or np.max(rep.J[1:]) <= config.restart_penalty_tol:
            break

    return OptimizeResult(
        traj=traj,
        modes=modes,
        cost=rep.J,
        total_cost=float(lam @ rep.J),
        iterations=iterations,
        n_evals=n_evals,
        wall_time=time.perf_counter() - t_begin,
        success=res.converged or iterations > 0,
        message=res.message,
        iteration_log=state["log"],
    )


def sample_references(
    traj: MincoTrajectory,
    modes: np.ndarray,
    dt_ref: float,
    params: PhysicalParams,
    T_ref: float | None = None,
    initial_yaw: float = 0.0,
) -> ReferenceSequence:
    """Uniform-time flat samples -> full state/input references.

    Terrestrial samples are sanitized to the ground plane (z and its
    derivatives zeroed) before recovery so the references satisfy the
    on-ground invariants exactly.
    """
    modes = np.asarray(modes, dtype=int)
    total = traj.total_time
    K = int(np.ceil(total / dt_ref)) + 1
    t = np.arange(K) * dt_ref
    idx, _ = traj.piece_of(np.minimum(t, total))
    P = traj.eval(t, 0)
    V = traj.eval(t, 1)
    A = traj.eval(t, 2)
    Jk = traj.eval(t, 3)
    samples = []
    for k in range(K):
        mode_k = int(modes[idx[k]])
        p, v, a, j = P[k].copy(), V[k].copy(), A[k].copy(), Jk[k].copy()
        if mode_k == TERRESTRIAL:
            p[2] = 0.0
            v[2] = 0.0
            a[2] = 0.0
            j[2] = 0.0
        samples.append(FlatSample(p=p, v=v, a=a, j=j, mode=mode_k))
    return recover_references(samples, dt_ref, params, T_ref=T_ref, initial_yaw=initial_yaw)


def save_trajectory(path: str | Path, traj: MincoTrajectory, modes: np.ndarray) -> None:
    doc = {
        "T": traj.T.tolist(),
        "coeffs": traj.coeffs.tolist(),
        "q": traj.q.tolist(),
        "modes": np.asarray(modes, dtype=int).tolist(),
        "start": {"p": traj.start.p.tolist(), "v": traj.start.v.tolist(), "a": traj.start.a.tolist()},
        "end": {"p": traj.end.p.tolist(), "v": traj.end.v.tolist(), "a": traj.end.a.tolist()},
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_trajectory(path: str | Path) -> tuple[MincoTrajectory, np.ndarray]:
    doc = json.loads(Path(path).read_text())
    traj = MincoTrajectory(
        T=np.array(doc["T"]),
        coeffs=np.array(doc["coeffs"]),
        q=np.array(doc["q"]),
        start=Boundary(**{k: np.array(v) for k, v in doc["start"].items()}),
        end=Boundary(**{k: np.array(v) for k, v in doc["end"].items()}),
    )
    return traj, np.array(doc["modes"], dtype=int)
