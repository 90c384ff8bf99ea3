"""Differential flatness: flat outputs and derivatives -> full state and input.

Terrestrial mode uses flat output [p_x, p_y, p_z, theta] with a constant
reference thrust: yaw follows the velocity direction, pitch carries the
longitudinal acceleration.  Aerial mode is the standard quadrotor map with
yaw also taken from the velocity direction so mode switches stay continuous.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import quat
from .dynamics import (
    AERIAL,
    TERRESTRIAL,
    ControlInput,
    FullState,
    GroundContact,
    PhysicalParams,
)

SPEED_EPS = 1e-3

E3 = np.array([0.0, 0.0, 1.0])


class FlatnessError(ValueError):
    """Flat sample cannot be mapped to a feasible state."""


class YawUndefinedError(FlatnessError):
    """Horizontal speed below threshold; heading must come from the caller."""


class InfeasiblePitchError(FlatnessError):
    """|m*a_l| exceeds the reference thrust; Eq. has no real pitch."""


class SingularThrustError(FlatnessError):
    """Thrust vector magnitude too close to free fall."""


@dataclass
class FlatSample:
    """Flat output with derivatives at one instant."""

    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray
    mode: int = AERIAL
    eta: int = 1
    psi: float | None = None
    dpsi: float | None = None

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.j = np.asarray(self.j, dtype=float)


@dataclass
class ReferencePoint:
    x_ref: FullState
    u_ref: ControlInput
    contact: GroundContact


def yaw_from_velocity(v: np.ndarray, eta: int = 1) -> float:
    """Heading parallel to the horizontal velocity; eta=-1 flips it."""
    v = np.asarray(v, dtype=float)
    if np.hypot(v[0], v[1]) < SPEED_EPS:
        raise YawUndefinedError(f"horizontal speed {np.hypot(v[0], v[1]):.2e} below threshold")
    return float(np.arctan2(eta * v[1], eta * v[0]))


def yaw_rate_from_velocity(v: np.ndarray, a: np.ndarray) -> float:
    """d/dt atan2(v_y, v_x); 0 below the speed threshold (held yaw)."""
    s2 = v[0] * v[0] + v[1] * v[1]
    if s2 < SPEED_EPS * SPEED_EPS:
        return 0.0
    return float((v[0] * a[1] - v[1] * a[0]) / s2)


def terrestrial_flat_to_state(
    s: FlatSample,
    T_ref: float,
    params: PhysicalParams,
    fallback_yaw: float | None = None,
    omega_dot: np.ndarray | None = None,
) -> ReferencePoint:
    """Recover the on-ground state: zero roll, pitch from a_l, yaw from v.

    omega_dot feeds the torque reconstruction (tau = M*wdot + w x M*w); the
    sequence-level recovery supplies it by finite differences, single-sample
    callers may leave it zero.
    """
    v, a, j = s.v, s.a, s.j
    try:
        psi = yaw_from_velocity(v, s.eta)
    except YawUndefinedError:
        if fallback_yaw is None:
            raise
        psi = fallback_yaw

    sp = float(np.hypot(v[0], v[1]))
    if sp >= SPEED_EPS:
        a_l = (v[0] * a[0] + v[1] * a[1]) / sp
        ah2 = a[0] * a[0] + a[1] * a[1]
        vj = v[0] * j[0] + v[1] * j[1]
        va = v[0] * a[0] + v[1] * a[1]
        dal = (ah2 + vj) / sp - va * va / sp**3
        dpsi = yaw_rate_from_velocity(v, a)
    else:
        # at rest the longitudinal direction is the held heading
        a_l = a[0] * np.cos(psi) + a[1] * np.sin(psi)
        dal = 0.0
        dpsi = 0.0

    st = params.m * a_l / T_ref
    if abs(st) > 1.0:
        raise InfeasiblePitchError(f"required sin(pitch) {st:.3f} outside [-1, 1]")
    theta = float(np.arcsin(st))
    ct = np.cos(theta)
    dtheta = params.m * dal / (T_ref * ct)

    q = quat.from_yaw_pitch(np.asarray(psi), np.asarray(theta))
    # body rates of R = Rz(psi) Ry(theta)
    w = np.array([-dpsi * st, dtheta, dpsi * ct])

    fn = max(params.m * params.g - T_ref * ct, 0.0)
    tau = _torque_from_rates(w, omega_dot, params)
    x_ref = FullState(p=s.p.copy(), q=q, v=v.copy(), w=w)
    return ReferencePoint(
        x_ref=x_ref,
        u_ref=ControlInput(T=T_ref, tau=tau),
        contact=GroundContact(mu_g=TERRESTRIAL, f_n=fn),
    )


def aerial_flat_to_state(
    s: FlatSample,
    params: PhysicalParams,
    fallback_yaw: float | None = None,
    omega_dot: np.ndarray | None = None,
) -> ReferencePoint:
    """Standard quadrotor flatness; yaw follows velocity unless s.psi is set."""
    f = s.a + params.g * E3
    fmag = float(np.linalg.norm(f))
    if fmag < 0.1 * params.g:
        raise SingularThrustError(f"thrust vector magnitude {fmag:.3f} near free fall")
    z_B = f / fmag
    T = params.m * fmag

    if s.psi is not None:
        psi = s.psi
        dpsi = 0.0 if s.dpsi is None else s.dpsi
    else:
        try:
            psi = yaw_from_velocity(s.v, s.eta)
        except YawUndefinedError:
            if fallback_yaw is None:
                raise
            psi = fallback_yaw
        dpsi = yaw_rate_from_velocity(s.v, s.a)

    x_C = np.array([np.cos(psi), np.sin(psi), 0.0])
    yb = np.cross(z_B, x_C)
    nyb = float(np.linalg.norm(yb))
    if nyb < 1e-6:
        raise InfeasiblePitchError("thrust axis parallel to heading; attitude undefined")
    y_B = yb / nyb
    x_B = np.cross(y_B, z_B)
    q = quat.from_rotation_matrix(np.stack([x_B, y_B, z_B], axis=1))

    Tdot = params.m * float(s.j @ z_B)
    h_w = (params.m * s.j - Tdot * z_B) / T
    w = np.array([-float(h_w @ y_B), float(h_w @ x_B), dpsi * float(z_B[2])])

    tau = _torque_from_rates(w, omega_dot, params)
    x_ref = FullState(p=s.p.copy(), q=q, v=s.v.copy(), w=w)
    return ReferencePoint(
        x_ref=x_ref,
        u_ref=ControlInput(T=T, tau=tau),
        contact=GroundContact(mu_g=AERIAL, f_n=0.0),
    )


def flat_to_state(
    s: FlatSample,
    params: PhysicalParams,
    T_ref: float,
    fallback_yaw: float | None = None,
    omega_dot: np.ndarray | None = None,
) -> ReferencePoint:
    if s.mode == TERRESTRIAL:
        return terrestrial_flat_to_state(s, T_ref, params, fallback_yaw, omega_dot)
    return aerial_flat_to_state(s, params, fallback_yaw, omega_dot)


def _torque_from_rates(
    w: np.ndarray, omega_dot: np.ndarray | None, params: PhysicalParams
) -> np.ndarray:
    wdot = np.zeros(3) if omega_dot is None else np.asarray(omega_dot, dtype=float)
    J = np.asarray(params.inertia_diag)
    return J * wdot + np.cross(w, J * w)


@dataclass
class ReferenceSequence:
    """Uniformly sampled reference states/inputs for the tracking controller."""

    t: np.ndarray
    X: np.ndarray
    U: np.ndarray
    mode: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        self.mode = np.asarray(self.mode, dtype=int)
        n = len(self.t)
        if not (self.X.shape == (n, 13) and self.U.shape == (n, 4) and len(self.mode) == n):
            raise ValueError("inconsistent reference sequence shapes")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def window(self, start: int, count: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(X, U, mode) at indices start, start+stride, ...; clamped at the end."""
        idx = np.minimum(start + stride * np.arange(count), len(self.t) - 1)
        return self.X[idx], self.U[idx], self.mode[idx]

    def point(self, i: int) -> ReferencePoint:
        i = min(max(i, 0), len(self.t) - 1)
        return ReferencePoint(
            x_ref=FullState.from_vector(self.X[i]),
            u_ref=ControlInput.from_vector(self.U[i]),
            contact=GroundContact(mu_g=int(self.mode[i]), f_n=0.0),
        )

    CSV_HEADER = (
        "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,T,taux,tauy,tauz,mode"
    )

    def to_csv(self, path: str | Path) -> None:
        rows = np.column_stack([self.t, self.X, self.U, self.mode.astype(float)])
        np.savetxt(path, rows, delimiter=",", header=self.CSV_HEADER, comments="")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ReferenceSequence":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(
            t=rows[:, 0],
            X=rows[:, 1:14],
            U=rows[:, 14:18],
            mode=rows[:, 18].astype(int),
        )


def recover_references(
    samples: list[FlatSample],
    dt: float,
    params: PhysicalParams,
    T_ref: float | None = None,
    initial_yaw: float = 0.0,
) -> ReferenceSequence:
    """Map a uniformly sampled flat trajectory to full references.

    Yaw holds its last defined value through zero-speed samples.  Torques use
    central finite differences of the recovered body-rate sequence.
    """
    if T_ref is None:
        T_ref = 0.45 * params.m * params.g
    K = len(samples)
    X = np.empty((K, 13))
    U = np.empty((K, 4))
    mode = np.empty(K, dtype=int)
    yaw = initial_yaw
    pts: list[ReferencePoint] = []
    for k, s in enumerate(samples):
        pt = flat_to_state(s, params, T_ref, fallback_yaw=yaw)
        yaw = float(quat.yaw(pt.x_ref.q))
        pts.append(pt)
        X[k] = pt.x_ref.as_vector()
        U[k] = pt.u_ref.as_vector()
        mode[k] = pt.contact.mu_g
    # quaternion sign continuity along the sequence
    for k in range(1, K):
        if X[k, 3:7] @ X[k - 1, 3:7] < 0.0:
            X[k, 3:7] = -X[k, 3:7]
    W = X[:, 10:13]
    Wdot = np.gradient(W, dt, axis=0) if K > 1 else np.zeros((K, 3))
    J = np.asarray(params.inertia_diag)
    U[:, 1:4] = J * Wdot + np.cross(W, J * W)
    t = dt * np.arange(K)
    return ReferenceSequence(t=t, X=X, U=U, mode=mode)


def flatness_roundtrip_check(
    flat_fn: Callable[[float], FlatSample],
    duration: float,
    dt: float,
    params: PhysicalParams,
    T_ref: float | None = None,
    initial_yaw: float = 0.0,
) -> float:
    """Integrate the model open loop with recovered inputs; return max |p error|.

    Inputs are evaluated at step midpoints (the torque from a step-dt central
    difference of the recovered rates), so the only error left is the RK4
    truncation and the flatness map itself.
    """
    from . import _kernels

    if T_ref is None:
        T_ref = 0.45 * params.m * params.g
    n = int(round(duration / dt))
    yaw = initial_yaw

    def recover(tq: float, fb: float) -> ReferencePoint:
        return flat_to_state(flat_fn(tq), params, T_ref, fallback_yaw=fb)

    p0 = recover(0.0, yaw)
    mode0 = p0.contact.mu_g
    x = p0.x_ref.as_vector()
    kp = params.kernel_params()
    dist = np.zeros(6)
    J = np.asarray(params.inertia_diag)
    err = 0.0
    for k in range(n):
        tk = k * dt
        pa = recover(tk, yaw)
        yaw = float(quat.yaw(pa.x_ref.q))
        pm = recover(tk + 0.5 * dt, yaw)
        pb = recover(tk + dt, yaw)
        wdot_mid = (pb.x_ref.w - pa.x_ref.w) / dt
        w_mid = pm.x_ref.w
        tau_mid = J * wdot_mid + np.cross(w_mid, J * w_mid)
        u = np.concatenate([[pm.u_ref.T], tau_mid])
        x, _ = _kernels.rk4_step(
            x, u, dt, float(mode0), kp, dist, mode0 == TERRESTRIAL
        )
        err = max(err, float(np.linalg.norm(x[0:3] - pb.x_ref.p)))
    return err
