"""Unified rigid-body model of the bimodal vehicle.

One set of equations covers both locomotion modes: rotor thrust along the
body z axis, gravity, and (on the ground) an algebraic normal force that
cancels vertical acceleration.  Mode is carried by the contact flag mu_g
(1 = terrestrial, 0 = aerial), matching the per-piece labels used by the
planner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels

TERRESTRIAL = 1
AERIAL = 0

QUAT_TOL = 1e-9


class InvalidStateError(ValueError):
    """State violates a hard invariant (e.g. non-unit quaternion)."""


@dataclass(frozen=True)
class PhysicalParams:
    """Vehicle constants in SI units. Inertia is the diagonal of M in kg*m^2."""

    m: float = 0.91
    inertia_diag: tuple[float, float, float] = (7.7e-3, 3.4e-3, 7.3e-3)
    L: float = 0.23
    c_t: float = 1.7e-8
    c_m: float = 3.7e-10
    g: float = 9.81
    t_min: float = 0.0
    t_max: float = 4.5

    def __post_init__(self) -> None:
        if self.m <= 0 or self.L <= 0 or self.c_t <= 0 or self.c_m <= 0:
            raise ValueError("m, L, c_t, c_m must be positive")
        if any(i <= 0 for i in self.inertia_diag):
            raise ValueError("inertia must be positive definite")
        if self.t_min < 0 or self.t_max <= self.t_min:
            raise ValueError("need 0 <= t_min < t_max")

    @property
    def inertia(self) -> np.ndarray:
        return np.diag(self.inertia_diag)

    @property
    def hover_thrust(self) -> float:
        return self.m * self.g

    def kernel_params(self) -> np.ndarray:
        """Packed (m, g, Ixx, Iyy, Izz) for the numeric kernels."""
        return np.array([self.m, self.g, *self.inertia_diag])

    def to_json(self, path: str | Path) -> None:
        doc = {
            "m": self.m,
            "inertia_diag": list(self.inertia_diag),
            "L": self.L,
            "c_t": self.c_t,
            "c_m": self.c_m,
            "g": self.g,
            "t_min": self.t_min,
            "t_max": self.t_max,
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "PhysicalParams":
        doc = json.loads(Path(path).read_text())
        doc["inertia_diag"] = tuple(doc["inertia_diag"])
        return cls(**doc)

    def with_overrides(self, **kwargs) -> "PhysicalParams":
        if "inertia_diag" in kwargs:
            kwargs["inertia_diag"] = tuple(kwargs["inertia_diag"])
        return replace(self, **kwargs)


@dataclass
class FullState:
    """p (inertial, m), q (w,x,y,z), v (inertial, m/s), w (body, rad/s)."""

    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.w = np.asarray(self.w, dtype=float)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v, self.w])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "FullState":
        x = np.asarray(x, dtype=float)
        return cls(p=x[0:3].copy(), q=x[3:7].copy(), v=x[7:10].copy(), w=x[10:13].copy())

    @classmethod
    def rest(cls, p=(0.0, 0.0, 0.0), yaw: float = 0.0) -> "FullState":
        half = 0.5 * yaw
        return cls(
            p=np.asarray(p, dtype=float),
            q=np.array([np.cos(half), 0.0, 0.0, np.sin(half)]),
            v=np.zeros(3),
            w=np.zeros(3),
        )

    def validate(self) -> None:
        if abs(np.linalg.norm(self.q) - 1.0) > QUAT_TOL:
            raise InvalidStateError(f"quaternion norm {np.linalg.norm(self.q)!r} off unit")
        if not np.all(np.isfinite(self.as_vector())):
            raise InvalidStateError("non-finite state component")


@dataclass
class ControlInput:
    """Collective thrust T (N) and body torque tau (N*m)."""

    T: float
    tau: np.ndarray

    def __post_init__(self) -> None:
        self.tau = np.asarray(self.tau, dtype=float)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.T], self.tau])

    @classmethod
    def from_vector(cls, u: np.ndarray) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return cls(T=float(u[0]), tau=u[1:4].copy())


@dataclass
class RotorThrusts:
    """Per-rotor thrusts (N), rotor order matching the allocation matrix."""

    t: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)


@dataclass(frozen=True)
class GroundContact:
    """mu_g: 1 terrestrial / 0 aerial.  f_n: normal force (N), 0 in the air."""

    mu_g: int
    f_n: float = 0.0

    def __post_init__(self) -> None:
        if self.mu_g not in (0, 1):
            raise ValueError("mu_g must be 0 or 1")
        if self.mu_g == 0 and self.f_n != 0.0:
            raise ValueError("aerial contact must carry zero normal force")
        if self.f_n < 0.0:
            raise ValueError("normal force must be non-negative")


def allocation_matrix(params: PhysicalParams) -> np.ndarray:
    """[T, tau] = A @ t for the X configuration (rotors at +-45 deg)."""
    a = params.L / np.sqrt(2.0)
    k = params.c_m / params.c_t
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [-a, a, a, -a],
            [-a, a, -a, a],
            [-k, -k, k, k],
        ]
    )


def allocate_from_rotors(t: RotorThrusts, params: PhysicalParams) -> ControlInput:
    u = allocation_matrix(params) @ t.t
    return ControlInput(T=float(u[0]), tau=u[1:4])


def rotors_from_input(
    u: ControlInput, params: PhysicalParams
) -> tuple[RotorThrusts, bool]:
    """Invert the allocation; clamp to rotor limits and report saturation."""
    t = np.linalg.solve(allocation_matrix(params), u.as_vector())
    clamped = np.clip(t, params.t_min, params.t_max)
    saturated = bool(np.any(np.abs(clamped - t) > 1e-12))
    return RotorThrusts(t=clamped), saturated


def input_bounds(params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
    """Box bounds on [T, tau] reachable without saturating any rotor."""
    tau_cap = np.sqrt(2.0) * params.L * params.t_max
    tau_zcap = 2.0 * (params.c_m / params.c_t) * params.t_max
    u_max = np.array([4.0 * params.t_max, tau_cap, tau_cap, tau_zcap])
    u_min = np.array([4.0 * params.t_min, -tau_cap, -tau_cap, -tau_zcap])
    return u_min, u_max


def continuous_dynamics(
    x: FullState,
    u: ControlInput,
    contact: GroundContact,
    params: PhysicalParams,
    disturbance: np.ndarray | None = None,
) -> tuple[np.ndarray, GroundContact, bool]:
    """Time derivative of the 13-state vector.

    Returns (xdot, contact with the computed normal force, liftoff flag).
    Liftoff means the rotors alone can carry the weight (raw F_n <= 0);
    the caller decides whether to switch mode.
    """
    x.validate()
    dist = np.zeros(6) if disturbance is None else np.asarray(disturbance, dtype=float)
    xdot, fn_raw = _kernels.dynamics_deriv(
        x.as_vector(), u.as_vector(), float(contact.mu_g), params.kernel_params(), dist
    )
    if contact.mu_g == TERRESTRIAL:
        liftoff = fn_raw <= 0.0
        contact_out = GroundContact(mu_g=TERRESTRIAL, f_n=max(fn_raw, 0.0))
    else:
        liftoff = False
        contact_out = GroundContact(mu_g=AERIAL, f_n=0.0)
    return xdot, contact_out, liftoff


def integrate_rk4(
    x: FullState,
    u: ControlInput,
    contact: GroundContact,
    dt: float,
    params: PhysicalParams,
    disturbance: np.ndarray | None = None,
    project: bool = True,
) -> tuple[FullState, GroundContact, bool]:
    """One RK4 step; renormalizes q. Terrestrial steps re-project onto the
    ground plane (z = 0, velocity along heading) when project=True.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x.validate()
    dist = np.zeros(6) if disturbance is None else np.asarray(disturbance, dtype=float)
    x1, fn0 = _kernels.rk4_step(
        x.as_vector(),
        u.as_vector(),
        dt,
        float(contact.mu_g),
        params.kernel_params(),
        dist,
        project,
    )
    if contact.mu_g == TERRESTRIAL:
        liftoff = fn0 <= 0.0
        contact_out = GroundContact(mu_g=TERRESTRIAL, f_n=max(fn0, 0.0))
    else:
        liftoff = False
        contact_out = GroundContact(mu_g=AERIAL, f_n=0.0)
    return FullState.from_vector(x1), contact_out, liftoff
