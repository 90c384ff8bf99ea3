"""Analytic tracking references: figure-eight courses and equilibria.

The planar course is a Gerono lemniscate x = A sin(theta), y = B sin(theta)
cos(theta) driven at constant phase rate after a smooth spin-up from rest.
The hybrid variant adds C^3 height bumps centered on the slow lobe ends, so
the vehicle takes off, clears an arc and touches down twice per lap.  The
phase rate is computed so the commanded speed or acceleration reaches its
configured bound exactly (whichever binds first).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import AERIAL, TERRESTRIAL, PhysicalParams
from .flatness import FlatSample, ReferenceSequence, recover_references

# quartic bump 256 u^4 (1-u)^4: unit peak, value/slope/curvature/jerk all
# vanish at both window edges
_BUMP = np.array([0.0, 0.0, 0.0, 0.0, 256.0, -1024.0, 1536.0, -1024.0, 256.0])
_BUMP_D1 = np.polynomial.polynomial.polyder(_BUMP)
_BUMP_D2 = np.polynomial.polynomial.polyder(_BUMP, 2)
_BUMP_D3 = np.polynomial.polynomial.polyder(_BUMP, 3)


@dataclass(frozen=True)
class LemniscateConfig:
    # default geometry makes a 2 m/s, 1.8 m/s^2 planar course hit both limits
    A: float = 2.22
    B: float = 1.11
    v_max: float = 2.0
    a_max: float = 1.8
    n_laps: int = 2
    t_ramp: float = 2.5
    bump_height: float = 0.0  # 0 keeps the whole course on the ground
    bump_width: float = 1.9  # phase window per bump, rad
    bump_centers: tuple[float, ...] = (0.5 * np.pi, 1.5 * np.pi)
    # commanded mode flips where the reference clears this height, so the
    # physical liftoff (thrust exceeding weight) tracks the flag closely
    mode_z_eps: float = 0.02

    def __post_init__(self) -> None:
        if min(self.A, self.B, self.v_max, self.a_max) <= 0:
            raise ValueError("geometry and limits must be positive")
        if self.n_laps < 1 or self.t_ramp < 0:
            raise ValueError("need n_laps >= 1 and t_ramp >= 0")
        if self.bump_height < 0 or not 0 < self.bump_width < np.pi:
            raise ValueError("bump height must be >= 0 and width in (0, pi)")


def _phase(t: np.ndarray, omega: float, t_ramp: float) -> tuple[np.ndarray, ...]:
    """Phase and three time derivatives under a quintic-smoothstep spin-up."""
    th = np.empty_like(t)
    d1 = np.empty_like(t)
    d2 = np.zeros_like(t)
    d3 = np.zeros_like(t)
    if t_ramp > 0.0:
        s = np.clip(t / t_ramp, 0.0, 1.0)
        ramp = t < t_ramp
        r = 6 * s**5 - 15 * s**4 + 10 * s**3
        th[:] = np.where(
            ramp,
            omega * t_ramp * (s**6 - 3 * s**5 + 2.5 * s**4),
            omega * t_ramp * 0.5 + omega * (t - t_ramp),
        )
        d1[:] = np.where(ramp, omega * r, omega)
        d2[ramp] = omega * (30 * s[ramp] ** 4 - 60 * s[ramp] ** 3 + 30 * s[ramp] ** 2) / t_ramp
        d3[ramp] = omega * (120 * s[ramp] ** 3 - 180 * s[ramp] ** 2 + 60 * s[ramp]) / t_ramp**2
    else:
        th[:] = omega * t
        d1[:] = omega
    return th, d1, d2, d3


def _xy_chain(th: np.ndarray, config: LemniscateConfig) -> list[np.ndarray]:
    """Planar curve and its first three phase derivatives, each (K, 2)."""
    A, B = config.A, config.B
    sin, cos = np.sin(th), np.cos(th)
    sin2, cos2 = np.sin(2 * th), np.cos(2 * th)
    p = np.stack([A * sin, 0.5 * B * sin2], axis=1)
    d1 = np.stack([A * cos, B * cos2], axis=1)
    d2 = np.stack([-A * sin, -2 * B * sin2], axis=1)
    d3 = np.stack([-A * cos, -4 * B * cos2], axis=1)
    return [p, d1, d2, d3]


def _z_chain(th: np.ndarray, config: LemniscateConfig) -> tuple[list[np.ndarray], np.ndarray]:
    """Height bumps and phase derivatives, plus the aerial sample mask."""
    z = [np.zeros_like(th) for _ in range(4)]
    if config.bump_height <= 0.0:
        return z, np.zeros(th.shape, dtype=bool)
    w = config.bump_width
    lap = np.mod(th, 2.0 * np.pi)
    pv = np.polynomial.polynomial.polyval
    for c in config.bump_centers:
        u = (lap - (c - 0.5 * w)) / w
        inside = (u > 0.0) & (u < 1.0)
        ui = u[inside]
        z[0][inside] += config.bump_height * pv(ui, _BUMP)
        z[1][inside] += config.bump_height * pv(ui, _BUMP_D1) / w
        z[2][inside] += config.bump_height * pv(ui, _BUMP_D2) / w**2
        z[3][inside] += config.bump_height * pv(ui, _BUMP_D3) / w**3
    return z, z[0] > config.mode_z_eps


def _phase_rate(config: LemniscateConfig) -> float:
    """Largest rate whose steady lap respects both limits (one binds)."""
    th = np.linspace(0.0, 2.0 * np.pi, 4001)
    xy = _xy_chain(th, config)
    zc, _ = _z_chain(th, config)
    dp = np.column_stack([xy[1], zc[1]])
    d2p = np.column_stack([xy[2], zc[2]])
    s1 = np.linalg.norm(dp, axis=1).max()
    s2 = np.linalg.norm(d2p, axis=1).max()
    return min(config.v_max / s1, np.sqrt(config.a_max / s2))


def lemniscate_flat_samples(
    config: LemniscateConfig, dt: float
) -> tuple[list[FlatSample], float]:
    """Uniform flat samples over spin-up plus n_laps; returns (samples, omega)."""
    omega = _phase_rate(config)
    duration = config.t_ramp + config.n_laps * 2.0 * np.pi / omega
    K = int(np.ceil(duration / dt)) + 1
    t = np.arange(K) * dt
    th, th1, th2, th3 = _phase(t, omega, config.t_ramp)
    xy = _xy_chain(th, config)
    zc, aerial = _z_chain(th, config)
    curve = [np.column_stack([xy[d], zc[d]]) for d in range(4)]
    # chain rule through theta(t)
    P = curve[0]
    V = curve[1] * th1[:, None]
    Acc = curve[2] * th1[:, None] ** 2 + curve[1] * th2[:, None]
    Jrk = (
        curve[3] * th1[:, None] ** 3
        + 3.0 * curve[2] * (th1 * th2)[:, None]
        + curve[1] * th3[:, None]
    )
    # ground samples drive the ground-projected curve, including the thin
    # skirt below mode_z_eps where the flag has not flipped yet
    ground = ~aerial
    for arr in (P, V, Acc, Jrk):
        arr[ground, 2] = 0.0
    samples = [
        FlatSample(
            p=P[k],
            v=V[k],
            a=Acc[k],
            j=Jrk[k],
            mode=AERIAL if aerial[k] else TERRESTRIAL,
        )
        for k in range(K)
    ]
    return samples, omega


def lemniscate_references(
    config: LemniscateConfig, params: PhysicalParams, dt: float
) -> ReferenceSequence:
    samples, _ = lemniscate_flat_samples(config, dt)
    # initial heading = curve tangent at the start (speed is zero there)
    tangent = _xy_chain(np.array([0.0]), config)[1][0]
    yaw0 = float(np.arctan2(tangent[1], tangent[0]))
    return recover_references(samples, dt, params, initial_yaw=yaw0)


def hover_references(
    n: int, dt: float, params: PhysicalParams, p=(0.0, 0.0, 1.0), yaw: float = 0.0
) -> ReferenceSequence:
    """Constant aerial hover at p."""
    X = np.zeros((n, 13))
    X[:, :3] = np.asarray(p, dtype=float)
    X[:, 3] = np.cos(0.5 * yaw)
    X[:, 6] = np.sin(0.5 * yaw)
    U = np.zeros((n, 4))
    U[:, 0] = params.hover_thrust
    return ReferenceSequence(
        t=np.arange(n) * dt, X=X, U=U, mode=np.full(n, AERIAL, dtype=int)
    )


def ground_rest_references(
    n: int, dt: float, params: PhysicalParams, p=(0.0, 0.0), yaw: float = 0.0
) -> ReferenceSequence:
    """Vehicle parked on the ground at (x, y) with the given heading."""
    X = np.zeros((n, 13))
    X[:, 0] = p[0]
    X[:, 1] = p[1]
    X[:, 3] = np.cos(0.5 * yaw)
    X[:, 6] = np.sin(0.5 * yaw)
    U = np.zeros((n, 4))
    return ReferenceSequence(
        t=np.arange(n) * dt, X=X, U=U, mode=np.full(n, TERRESTRIAL, dtype=int)
    )
