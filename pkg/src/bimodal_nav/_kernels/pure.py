"""NumPy reference implementation of the hot-loop kernels.

All functions operate on raw arrays so the compiled backend can mirror the
signatures exactly.  State layout (13): [p(3), q_wxyz(4), v(3), omega_body(3)].
Input layout (4): [T, tau_x, tau_y, tau_z].  params = (m, g, Ixx, Iyy, Izz),
dist = [F_ext_world(3), tau_ext_body(3)].  mu_g is 1.0 on the ground, 0.0 in
the air.
"""

from __future__ import annotations

import numpy as np

N_X = 13
N_U = 4


def _deriv_batch(
    X: np.ndarray,
    U: np.ndarray,
    mu_g: np.ndarray,
    params: np.ndarray,
    dist: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous dynamics for a batch of states. Returns (Xdot, fn_raw).

    fn_raw = m*g - T*z_Bz is the pre-clamp normal force; it only enters the
    acceleration when mu_g=1, but is always reported (<=0 means the rotors
    alone can hold the weight).
    """
    m, g, Ixx, Iyy, Izz = params
    q = X[:, 3:7]
    v = X[:, 7:10]
    w = X[:, 10:13]
    T = U[:, 0]
    qw, qx, qy, qz = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]

    zB = np.stack(
        [2.0 * (qx * qz + qw * qy), 2.0 * (qy * qz - qw * qx), 1.0 - 2.0 * (qx * qx + qy * qy)],
        axis=1,
    )
    fn_raw = m * g - T * zB[:, 2]
    fn = mu_g * np.maximum(fn_raw, 0.0)

    acc = (T[:, None] * zB + dist[None, 0:3]) / m
    acc[:, 2] += fn / m - g

    qdot = 0.5 * np.stack(
        [
            -qx * wx - qy * wy - qz * wz,
            qw * wx + qy * wz - qz * wy,
            qw * wy - qx * wz + qz * wx,
            qw * wz + qx * wy - qy * wx,
        ],
        axis=1,
    )
    wdot = np.stack(
        [
            (U[:, 1] + dist[3] - (Izz - Iyy) * wy * wz) / Ixx,
            (U[:, 2] + dist[4] - (Ixx - Izz) * wz * wx) / Iyy,
            (U[:, 3] + dist[5] - (Iyy - Ixx) * wx * wy) / Izz,
        ],
        axis=1,
    )
    return np.concatenate([v, qdot, acc, wdot], axis=1), fn_raw


def dynamics_deriv(
    x: np.ndarray,
    u: np.ndarray,
    mu_g: float,
    params: np.ndarray,
    dist: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Single-state continuous dynamics. Returns (xdot, fn_raw)."""
    Xd, fn = _deriv_batch(
        np.asarray(x, dtype=float)[None],
        np.asarray(u, dtype=float)[None],
        np.asarray([mu_g], dtype=float),
        np.asarray(params, dtype=float),
        np.asarray(dist, dtype=float),
    )
    return Xd[0], float(fn[0])


def _project_ground(X: np.ndarray, rows: np.ndarray) -> None:
    """Pin selected rows to the ground plane: z=0 and velocity along heading."""
    if not np.any(rows):
        return
    q = X[rows, 3:7]
    psi = np.arctan2(
        2.0 * (q[:, 0] * q[:, 3] + q[:, 1] * q[:, 2]),
        1.0 - 2.0 * (q[:, 2] ** 2 + q[:, 3] ** 2),
    )
    c, s = np.cos(psi), np.sin(psi)
    speed = X[rows, 7] * c + X[rows, 8] * s
    X[rows, 2] = 0.0
    X[rows, 7] = speed * c
    X[rows, 8] = speed * s
    X[rows, 9] = 0.0


def rk4_step_batch(
    X: np.ndarray,
    U: np.ndarray,
    dt: float,
    mu_g: np.ndarray,
    params: np.ndarray,
    dist: np.ndarray,
    project: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """One RK4 step for a batch. Quaternions renormalized after the step."""
    k1, fn0 = _deriv_batch(X, U, mu_g, params, dist)
    k2, _ = _deriv_batch(X + 0.5 * dt * k1, U, mu_g, params, dist)
    k3, _ = _deriv_batch(X + 0.5 * dt * k2, U, mu_g, params, dist)
    k4, _ = _deriv_batch(X + dt * k3, U, mu_g, params, dist)
    X1 = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    X1[:, 3:7] /= np.linalg.norm(X1[:, 3:7], axis=1, keepdims=True)
    if project:
        _project_ground(X1, mu_g > 0.5)
    return X1, fn0


def rk4_step(
    x: np.ndarray,
    u: np.ndarray,
    dt: float,
    mu_g: float,
    params: np.ndarray,
    dist: np.ndarray,
    project: bool,
) -> tuple[np.ndarray, float]:
    X1, fn0 = rk4_step_batch(
        np.asarray(x, dtype=float)[None],
        np.asarray(u, dtype=float)[None],
        dt,
        np.asarray([mu_g], dtype=float),
        np.asarray(params, dtype=float),
        np.asarray(dist, dtype=float),
        project,
    )
    return X1[0], float(fn0[0])


def rollout(
    x0: np.ndarray,
    U: np.ndarray,
    dt: float,
    mu_g_seq: np.ndarray,
    params: np.ndarray,
    dist: np.ndarray,
    project: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate N steps. Returns states (N+1, 13) and fn_raw per step (N,)."""
    U = np.asarray(U, dtype=float)
    mu_g_seq = np.asarray(mu_g_seq, dtype=float)
    params = np.asarray(params, dtype=float)
    dist = np.asarray(dist, dtype=float)
    N = U.shape[0]
    X = np.empty((N + 1, N_X))
    FN = np.empty(N)
    X[0] = x0
    xk = np.asarray(x0, dtype=float)[None].copy()
    for k in range(N):
        xk, fn = rk4_step_batch(xk, U[k][None], dt, mu_g_seq[k : k + 1], params, dist, project)
        X[k + 1] = xk[0]
        FN[k] = fn[0]
    return X, FN


def linearize_rollout(
    X: np.ndarray,
    U: np.ndarray,
    dt: float,
    mu_g_seq: np.ndarray,
    params: np.ndarray,
    dist: np.ndarray,
    project: bool,
    eps_x: float = 1e-5,
    eps_u: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians of the discrete step along a nominal.

    A[k] = d x_{k+1} / d x_k at (X[k], U[k]), B[k] = d x_{k+1} / d u_k.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    mu_g_seq = np.asarray(mu_g_seq, dtype=float)
    params = np.asarray(params, dtype=float)
    dist = np.asarray(dist, dtype=float)
    N = U.shape[0]
    A = np.empty((N, N_X, N_X))
    B = np.empty((N, N_X, N_U))
    nb = 2 * (N_X + N_U)
    Xb = np.empty((nb, N_X))
    Ub = np.empty((nb, N_U))
    for k in range(N):
        Xb[:] = X[k]
        Ub[:] = U[k]
        for i in range(N_X):
            Xb[2 * i, i] += eps_x
            Xb[2 * i + 1, i] -= eps_x
        for j in range(N_U):
            Ub[2 * N_X + 2 * j, j] += eps_u
            Ub[2 * N_X + 2 * j + 1, j] -= eps_u
        mu = np.full(nb, mu_g_seq[k])
        X1, _ = rk4_step_batch(Xb, Ub, dt, mu, params, dist, project)
        for i in range(N_X):
            A[k, :, i] = (X1[2 * i] - X1[2 * i + 1]) / (2.0 * eps_x)
        for j in range(N_U):
            B[k, :, j] = (X1[2 * N_X + 2 * j] - X1[2 * N_X + 2 * j + 1]) / (2.0 * eps_u)
    return A, B


def unicycle_rollout(
    start: np.ndarray,
    accels: np.ndarray,
    yawrates: np.ndarray,
    tau: float,
    nsub: int,
) -> np.ndarray:
    """Roll P constant-(a, omega) ground primitives from one (x, y, phi, v) node.

    RK4 with nsub substeps; returns (P, nsub+1, 4) including the start sample.
    """
    accels = np.asarray(accels, dtype=float)
    yawrates = np.asarray(yawrates, dtype=float)
    P = accels.shape[0]
    out = np.empty((P, nsub + 1, 4))
    out[:, 0] = np.asarray(start, dtype=float)
    h = tau / nsub
    state = np.broadcast_to(np.asarray(start, dtype=float), (P, 4)).copy()

    def f(s: np.ndarray) -> np.ndarray:
        return np.stack(
            [s[:, 3] * np.cos(s[:, 2]), s[:, 3] * np.sin(s[:, 2]), yawrates, accels], axis=1
        )

    for j in range(nsub):
        k1 = f(state)
        k2 = f(state + 0.5 * h * k1)
        k3 = f(state + 0.5 * h * k2)
        k4 = f(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, j + 1] = state
    return out


def point_mass_rollout(
    p0: np.ndarray,
    v0: np.ndarray,
    accels: np.ndarray,
    tau: float,
    nsub: int,
) -> np.ndarray:
    """Closed-form constant-acceleration flights. Returns (P, nsub+1, 6) [p, v]."""
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    accels = np.asarray(accels, dtype=float)
    t = np.linspace(0.0, tau, nsub + 1)
    pos = p0[None, None] + v0[None, None] * t[None, :, None] + 0.5 * accels[:, None] * t[None, :, None] ** 2
    vel = v0[None, None] + accels[:, None] * t[None, :, None]
    return np.concatenate([pos, vel], axis=2)


def grid_sample_2d(
    values: np.ndarray,
    origin: np.ndarray,
    res: float,
    pts: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear sample on cell centers. Returns (val, grad, inside).

    Queries are clamped to the cell-center hull; inside=False marks clamped
    points (their gradient is the one-sided boundary value).
    """
    values = np.asarray(values, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    nx, ny = values.shape
    u = (pts[:, 0] - origin[0]) / res - 0.5
    v = (pts[:, 1] - origin[1]) / res - 0.5
    inside = (u >= 0.0) & (u <= nx - 1.0) & (v >= 0.0) & (v <= ny - 1.0)
    u = np.clip(u, 0.0, nx - 1.0)
    v = np.clip(v, 0.0, ny - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.intp), nx - 1)
    j0 = np.minimum(np.floor(v).astype(np.intp), ny - 1)
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    fu = u - i0
    fv = v - j0
    g00 = values[i0, j0]
    g10 = values[i1, j0]
    g01 = values[i0, j1]
    g11 = values[i1, j1]
    val = (1 - fu) * (1 - fv) * g00 + fu * (1 - fv) * g10 + (1 - fu) * fv * g01 + fu * fv * g11
    gx = ((1 - fv) * (g10 - g00) + fv * (g11 - g01)) / res
    gy = ((1 - fu) * (g01 - g00) + fu * (g11 - g10)) / res
    return val, np.stack([gx, gy], axis=1), inside


def grid_sample_3d(
    values: np.ndarray,
    origin: np.ndarray,
    res: float,
    pts: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trilinear sample on cell centers. Returns (val, grad, inside)."""
    values = np.asarray(values, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    nx, ny, nz = values.shape
    u = (pts[:, 0] - origin[0]) / res - 0.5
    v = (pts[:, 1] - origin[1]) / res - 0.5
    w = (pts[:, 2] - origin[2]) / res - 0.5
    inside = (
        (u >= 0.0) & (u <= nx - 1.0)
        & (v >= 0.0) & (v <= ny - 1.0)
        & (w >= 0.0) & (w <= nz - 1.0)
    )
    u = np.clip(u, 0.0, nx - 1.0)
    v = np.clip(v, 0.0, ny - 1.0)
    w = np.clip(w, 0.0, nz - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.intp), nx - 1)
    j0 = np.minimum(np.floor(v).astype(np.intp), ny - 1)
    k0 = np.minimum(np.floor(w).astype(np.intp), nz - 1)
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    k1 = np.minimum(k0 + 1, nz - 1)
    fu = u - i0
    fv = v - j0
    fw = w - k0
    c000 = values[i0, j0, k0]
    c100 = values[i1, j0, k0]
    c010 = values[i0, j1, k0]
    c110 = values[i1, j1, k0]
    c001 = values[i0, j0, k1]
    c101 = values[i1, j0, k1]
    c011 = values[i0, j1, k1]
    c111 = values[i1, j1, k1]
    c00 = c000 * (1 - fu) + c100 * fu
    c01 = c001 * (1 - fu) + c101 * fu
    c10 = c010 * (1 - fu) + c110 * fu
    c11 = c011 * (1 - fu) + c111 * fu
    c0 = c00 * (1 - fv) + c10 * fv
    c1 = c01 * (1 - fv) + c11 * fv
    val = c0 * (1 - fw) + c1 * fw
    dx00 = c100 - c000
    dx01 = c101 - c001
    dx10 = c110 - c010
    dx11 = c111 - c011
    gx = ((dx00 * (1 - fv) + dx10 * fv) * (1 - fw) + (dx01 * (1 - fv) + dx11 * fv) * fw) / res
    gy = ((c10 - c00) * (1 - fw) + (c11 - c01) * fw) / res
    gz = (c1 - c0) / res
    return val, np.stack([gx, gy, gz], axis=1), inside
