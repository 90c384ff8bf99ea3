"""Receding-horizon tracking controller over the unified rigid-body model.

Each tick linearizes an RK4 rollout around the warm-started input sequence,
condenses the horizon onto the input increments, and solves a box-constrained
quadratic program with projected Newton steps.  Per-node mode flags add heavy
quadratic penalties on lateral body velocity and height for terrestrial nodes,
so one controller covers driving, flight and the transitions between them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .dynamics import (
    TERRESTRIAL,
    ControlInput,
    FullState,
    InvalidStateError,
    PhysicalParams,
    input_bounds,
)
from .flatness import ReferenceSequence

N_X = 13
N_U = 4


@dataclass(frozen=True)
class NmpcConfig:
    """Horizon, step, diagonal weights and solver knobs."""

    N: int = 20
    dt: float = 0.07
    w_pos: tuple[float, float, float] = (8000.0, 8000.0, 300.0)
    w_quat: float = 400.0
    w_vel: float = 100.0
    w_omega: tuple[float, float, float] = (10.0, 10.0, 50.0)
    w_thrust: float = 0.5
    w_tau_xy: float = 0.1
    w_tau_z: float = 0.2
    mode_penalty: float = 1e4
    sqp_iters: int = 2
    qp_iters: int = 30
    qp_tol: float = 1e-8
    reg: float = 1e-8

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("horizon must be at least 1 step")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        weights = (*self.w_pos, self.w_quat, self.w_vel, *self.w_omega,
                   self.w_thrust, self.w_tau_xy, self.w_tau_z)
        if any(w < 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        if self.sqp_iters < 1 or self.qp_iters < 1:
            raise ValueError("iteration counts must be positive")

    @property
    def state_weights(self) -> np.ndarray:
        """Diagonal of the 13x13 state weight in [p, q, v, omega] order."""
        return np.array([
            *self.w_pos,
            *(self.w_quat,) * 4,
            *(self.w_vel,) * 3,
            *self.w_omega,
        ])

    @property
    def input_weights(self) -> np.ndarray:
        return np.array([self.w_thrust, self.w_tau_xy, self.w_tau_xy, self.w_tau_z])


@dataclass
class OcpSolution:
    """Optimal inputs with the matching open-loop prediction."""

    U: np.ndarray  # (N, 4)
    X: np.ndarray  # (N + 1, 13) RK4 rollout under U
    cost: float
    kkt_residual: float
    solve_time: float
    degraded: bool = False
    sqp_iterations: int = 0


def lateral_body_velocity(x: np.ndarray) -> float:
    """Inertial velocity projected on the body y axis, (q^-1 v) . e2."""
    qw, qx, qy, qz = x[3:7]
    y_b = np.array([
        2.0 * (qx * qy - qw * qz),
        1.0 - 2.0 * (qx * qx + qz * qz),
        2.0 * (qy * qz + qw * qx),
    ])
    return float(y_b @ x[7:10])


def _mode_constraint_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and state Jacobian of the terrestrial constraints.

    Row 0: lateral body velocity (q^-1 v) . e2; row 1: height p . e3.
    """
    qw, qx, qy, qz = x[3:7]
    v = x[7:10]
    y_b = np.array([
        2.0 * (qx * qy - qw * qz),
        1.0 - 2.0 * (qx * qx + qz * qz),
        2.0 * (qy * qz + qw * qx),
    ])
    c = np.array([y_b @ v, x[2]])
    J = np.zeros((2, N_X))
    # d(y_b . v)/dq: each column is v . d(y_b)/dq_j
    dyb_dq = np.array([
        [-2.0 * qz, 2.0 * qy, 2.0 * qx, -2.0 * qw],
        [0.0, -4.0 * qx, 0.0, -4.0 * qz],
        [2.0 * qx, 2.0 * qw, 2.0 * qz, 2.0 * qy],
    ])
    J[0, 3:7] = v @ dyb_dq
    J[0, 7:10] = y_b
    J[1, 2] = 1.0
    return c, J


def solve_box_qp(
    H: np.ndarray,
    g: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    x0: np.ndarray,
    max_iters: int = 30,
    tol: float = 1e-8,
) -> tuple[np.ndarray, float, int]:
    """Minimize 0.5 x'Hx + g'x over a box by projected Newton.

    Free variables get a Newton step from the reduced Hessian; the step is
    backtracked along the projection arc.  Returns (x, kkt, iterations) where
    kkt is the infinity norm of the projected gradient.
    """
    x = np.clip(x0, lb, ub)
    kkt = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        grad = H @ x + g
        clamped = ((x <= lb + 1e-12) & (grad > 0.0)) | ((x >= ub - 1e-12) & (grad < 0.0))
        pg = np.where(clamped, 0.0, grad)
        kkt = float(np.max(np.abs(pg)))
        if kkt <= tol:
            break
        free = ~clamped
        d = np.zeros_like(x)
        Hf = H[np.ix_(free, free)]
        try:
            d[free] = -cho_solve(cho_factor(Hf, lower=True), grad[free])
        except np.linalg.LinAlgError:
            d[free] = -grad[free]
        f0 = 0.5 * x @ H @ x + g @ x
        slope = grad @ d
        alpha = 1.0
        for _ in range(25):
            xn = np.clip(x + alpha * d, lb, ub)
            fn = 0.5 * xn @ H @ xn + g @ xn
            if fn <= f0 + 1e-4 * alpha * slope or np.allclose(xn, x):
                break
            alpha *= 0.5
        if fn >= f0:
            break
        x = xn
    return x, kkt, it


def _aligned_state_residuals(X: np.ndarray, X_ref: np.ndarray) -> np.ndarray:
    """Component state errors with the reference quaternion sign-aligned."""
    R = X - X_ref
    flip = np.einsum("kj,kj->k", X[:, 3:7], X_ref[:, 3:7]) < 0.0
    if np.any(flip):
        R = R.copy()
        R[flip, 3:7] = X[flip, 3:7] + X_ref[flip, 3:7]
    return R


def solve_ocp(
    x0: FullState | np.ndarray,
    X_ref: np.ndarray,
    U_ref: np.ndarray,
    modes: np.ndarray,
    params: PhysicalParams,
    config: NmpcConfig,
    U_warm: np.ndarray | None = None,
) -> OcpSolution:
    """Gauss-Newton real-time iteration for one reference window.

    X_ref: (N+1, 13); U_ref: (N, 4) or (N+1, 4) with the last row unused;
    modes: (N+1,) per-node flags.  The rollout in the returned solution is the
    RK4 trajectory under the returned (clamped) inputs.
    """
    t_begin = time.perf_counter()
    x0 = x0.as_vector() if isinstance(x0, FullState) else np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise InvalidStateError("non-finite entries in controller state")
    N = config.N
    X_ref = np.asarray(X_ref, dtype=float)
    U_ref = np.asarray(U_ref, dtype=float)[:N]
    modes = np.asarray(modes, dtype=int)
    if X_ref.shape != (N + 1, N_X) or U_ref.shape != (N, N_U) or len(modes) != N + 1:
        raise ValueError("reference window does not match the horizon")

    u_min, u_max = input_bounds(params)
    U = np.clip(U_ref.copy() if U_warm is None else np.asarray(U_warm, dtype=float).copy(),
                u_min, u_max)
    kp = params.kernel_params()
    mu_seq = modes[:N].astype(float)
    nodist = np.zeros(6)
    wx = config.state_weights
    wu = config.input_weights
    pen = config.mode_penalty
    n = N_U * N
    lb = np.tile(u_min, N)
    ub = np.tile(u_max, N)

    kkt = np.inf
    degraded = False
    sqp_done = 0
    # prediction model = the plant's discrete step, including the terrestrial
    # velocity-heading projection; without it ground steering sits at a
    # bilinear saddle the Gauss-Newton model cannot see
    for _ in range(config.sqp_iters):
        X, _ = _kernels.rollout(x0, U, config.dt, mu_seq, kp, nodist, True)
        if not np.all(np.isfinite(X)):
            degraded = True
            break
        # far off track the residual squares overflow; the non-finite guards
        # below turn that into a degraded solve, so silence the FP warnings
        with np.errstate(over="ignore", invalid="ignore"):
            A, B = _kernels.linearize_rollout(X, U, config.dt, mu_seq, kp, nodist, True)
            R = _aligned_state_residuals(X, X_ref)

            H = config.reg * np.eye(n)
            g = np.zeros(n)
            S = np.zeros((N_X, n))
            for k in range(N):
                S = A[k] @ S
                S[:, N_U * k : N_U * (k + 1)] += B[k]
                H += S.T @ (wx[:, None] * S)
                g += S.T @ (wx * R[k + 1])
                if modes[k + 1] == TERRESTRIAL:
                    c, Jc = _mode_constraint_rows(X[k + 1])
                    JS = Jc @ S
                    H += pen * (JS.T @ JS)
                    g += pen * (JS.T @ c)
            du = U - U_ref
            for k in range(N):
                sl = slice(N_U * k, N_U * (k + 1))
                H[sl, sl] += np.diag(wu)
                g[sl] += wu * du[k]

            if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
                degraded = True
                break
            dU, kkt, _ = solve_box_qp(
                H, g, lb - U.ravel(), ub - U.ravel(), np.zeros(n),
                max_iters=config.qp_iters, tol=config.qp_tol,
            )
            U = np.clip(U + dU.reshape(N, N_U), u_min, u_max)
        sqp_done += 1

    X, _ = _kernels.rollout(x0, U, config.dt, mu_seq, kp, nodist, True)
    if not np.all(np.isfinite(X)):
        degraded = True
        X = np.where(np.isfinite(X), X, 0.0)
    R = _aligned_state_residuals(X, X_ref)
    # far-off-track residuals may overflow to inf; that is a valid "this
    # solve is useless" signal, not an error
    with np.errstate(over="ignore"):
        cost = float(np.sum(wx * R[1:] ** 2) + np.sum(wu * (U - U_ref) ** 2))
    for k in range(1, N + 1):
        if modes[k] == TERRESTRIAL:
            c, _ = _mode_constraint_rows(X[k])
            cost += pen * float(c @ c)
    return OcpSolution(
        U=U,
        X=X,
        cost=cost,
        kkt_residual=float(kkt),
        solve_time=time.perf_counter() - t_begin,
        degraded=degraded,
        sqp_iterations=sqp_done,
    )


@dataclass
class NmpcController:
    """Owns the warm-start sequence between receding-horizon calls.

    Exactly one caller may drive step(); reference sequences are treated as
    immutable snapshots and may be swapped between calls.
    """

    config: NmpcConfig
    params: PhysicalParams
    U: np.ndarray | None = None
    last_solution: OcpSolution | None = None
    _anchor: int = 0
    log: list[tuple] = field(default_factory=list)

    def reset(self) -> None:
        self.U = None
        self.last_solution = None
        self._anchor = 0
        self.log.clear()

    def step(
        self, x0: FullState | np.ndarray, refs: ReferenceSequence, tick: int
    ) -> tuple[ControlInput, OcpSolution]:
        """Extract the window at sample index `tick`, solve, return U*[0].

        The window is strided so horizon nodes sit config.dt apart even when
        the reference is sampled faster; windows past the end hold the final
        reference point.  A degraded solve falls back to the shifted previous
        sequence, flagged in the returned solution.
        """
        stride = max(1, int(round(self.config.dt / refs.dt))) if refs.dt > 0 else 1
        N = self.config.N
        Xr, Ur, mr = refs.window(tick, N + 1, stride)
        if self.U is None:
            self.U = np.asarray(Ur[:N], dtype=float).copy()
            self._anchor = tick
        shift = (tick - self._anchor) // stride
        if shift > 0:
            shift = min(shift, N - 1)
            self.U[:-shift] = self.U[shift:]
            self.U[-shift:] = self.U[-shift - 1]
            self._anchor += shift * stride
        sol = solve_ocp(x0, Xr, Ur[:N], mr, self.params, self.config, U_warm=self.U)
        if not sol.degraded:
            self.U = sol.U.copy()
        else:
            sol.U = self.U.copy()
        self.last_solution = sol
        return ControlInput.from_vector(self.U[0]), sol
