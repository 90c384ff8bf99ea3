# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Mirrors the pure NumPy backend function for function;
keep formulas textually identical so the two backends agree to rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, fmax, floor, sin, sqrt

cnp.import_array()

N_X = 13
N_U = 4


cdef double _deriv_c(const double* x, const double* u, double mu_g,
                     double m, double g, double Ixx, double Iyy, double Izz,
                     const double* dist, double* xd) noexcept nogil:
    cdef double qw = x[3], qx = x[4], qy = x[5], qz = x[6]
    cdef double wx = x[10], wy = x[11], wz = x[12]
    cdef double T = u[0]
    cdef double zbx = 2.0 * (qx * qz + qw * qy)
    cdef double zby = 2.0 * (qy * qz - qw * qx)
    cdef double zbz = 1.0 - 2.0 * (qx * qx + qy * qy)
    cdef double fn_raw = m * g - T * zbz
    cdef double fn = mu_g * fmax(fn_raw, 0.0)
    xd[0] = x[7]
    xd[1] = x[8]
    xd[2] = x[9]
    xd[3] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    xd[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    xd[5] = 0.5 * (qw * wy - qx * wz + qz * wx)
    xd[6] = 0.5 * (qw * wz + qx * wy - qy * wx)
    xd[7] = (T * zbx + dist[0]) / m
    xd[8] = (T * zby + dist[1]) / m
    xd[9] = (T * zbz + dist[2]) / m + fn / m - g
    xd[10] = (u[1] + dist[3] - (Izz - Iyy) * wy * wz) / Ixx
    xd[11] = (u[2] + dist[4] - (Ixx - Izz) * wz * wx) / Iyy
    xd[12] = (u[3] + dist[5] - (Iyy - Ixx) * wx * wy) / Izz
    return fn_raw


cdef double _rk4_c(const double* x, const double* u, double dt, double mu_g,
                   double m, double g, double Ixx, double Iyy, double Izz,
                   const double* dist, bint project, double* x1) noexcept nogil:
    cdef double k1[13]
    cdef double k2[13]
    cdef double k3[13]
    cdef double k4[13]
    cdef double tmp[13]
    cdef double fn0, nrm, psi, c, s, speed
    cdef int i
    fn0 = _deriv_c(x, u, mu_g, m, g, Ixx, Iyy, Izz, dist, k1)
    for i in range(13):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _deriv_c(tmp, u, mu_g, m, g, Ixx, Iyy, Izz, dist, k2)
    for i in range(13):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _deriv_c(tmp, u, mu_g, m, g, Ixx, Iyy, Izz, dist, k3)
    for i in range(13):
        tmp[i] = x[i] + dt * k3[i]
    _deriv_c(tmp, u, mu_g, m, g, Ixx, Iyy, Izz, dist, k4)
    for i in range(13):
        x1[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    nrm = sqrt(x1[3] * x1[3] + x1[4] * x1[4] + x1[5] * x1[5] + x1[6] * x1[6])
    for i in range(3, 7):
        x1[i] /= nrm
    if project and mu_g > 0.5:
        psi = atan2(2.0 * (x1[3] * x1[6] + x1[4] * x1[5]),
                    1.0 - 2.0 * (x1[5] * x1[5] + x1[6] * x1[6]))
        c = cos(psi)
        s = sin(psi)
        speed = x1[7] * c + x1[8] * s
        x1[2] = 0.0
        x1[7] = speed * c
        x1[8] = speed * s
        x1[9] = 0.0
    return fn0


def dynamics_deriv(x, u, double mu_g, params, dist):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ua = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] pa = np.ascontiguousarray(params, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] da = np.ascontiguousarray(dist, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] out = np.empty(13)
    cdef double fn
    fn = _deriv_c(&xa[0], &ua[0], mu_g, pa[0], pa[1], pa[2], pa[3], pa[4], &da[0], &out[0])
    return out, fn


def rk4_step(x, u, double dt, double mu_g, params, dist, bint project):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ua = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] pa = np.ascontiguousarray(params, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] da = np.ascontiguousarray(dist, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] out = np.empty(13)
    cdef double fn
    fn = _rk4_c(&xa[0], &ua[0], dt, mu_g, pa[0], pa[1], pa[2], pa[3], pa[4], &da[0],
                project, &out[0])
    return out, fn


def rk4_step_batch(X, U, double dt, mu_g, params, dist, bint project):
    cdef cnp.ndarray[double, ndim=2] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Ua = np.ascontiguousarray(U, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] mu = np.ascontiguousarray(mu_g, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] pa = np.ascontiguousarray(params, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] da = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t B = Xa.shape[0], b
    cdef cnp.ndarray[double, ndim=2] out = np.empty((B, 13))
    cdef cnp.ndarray[double, ndim=1] FN = np.empty(B)
    with nogil:
        for b in range(B):
            FN[b] = _rk4_c(&Xa[b, 0], &Ua[b, 0], dt, mu[b],
                           pa[0], pa[1], pa[2], pa[3], pa[4], &da[0], project, &out[b, 0])
    return out, FN


def rollout(x0, U, double dt, mu_g_seq, params, dist, bint project):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Ua = np.ascontiguousarray(U, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] mu = np.ascontiguousarray(mu_g_seq, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] pa = np.ascontiguousarray(params, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] da = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t N = Ua.shape[0], k
    cdef cnp.ndarray[double, ndim=2] X = np.empty((N + 1, 13))
    cdef cnp.ndarray[double, ndim=1] FN = np.empty(N)
    cdef int i
    with nogil:
        for i in range(13):
            X[0, i] = xa[i]
        for k in range(N):
            FN[k] = _rk4_c(&X[k, 0], &Ua[k, 0], dt, mu[k],
                           pa[0], pa[1], pa[2], pa[3], pa[4], &da[0], project, &X[k + 1, 0])
    return X, FN


def linearize_rollout(X, U, double dt, mu_g_seq, params, dist, bint project,
                      double eps_x=1e-5, double eps_u=1e-5):
    cdef cnp.ndarray[double, ndim=2] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Ua = np.ascontiguousarray(U, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] mu = np.ascontiguousarray(mu_g_seq, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] pa = np.ascontiguousarray(params, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] da = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t N = Ua.shape[0], k
    cdef cnp.ndarray[double, ndim=3] A = np.empty((N, 13, 13))
    cdef cnp.ndarray[double, ndim=3] B = np.empty((N, 13, 4))
    cdef double xp[13]
    cdef double xm[13]
    cdef double up[4]
    cdef double um[4]
    cdef double op[13]
    cdef double om[13]
    cdef int i, j
    with nogil:
        for k in range(N):
            for i in range(13):
                for j in range(13):
                    xp[j] = Xa[k, j]
                    xm[j] = Xa[k, j]
                xp[i] += eps_x
                xm[i] -= eps_x
                for j in range(4):
                    up[j] = Ua[k, j]
                _rk4_c(xp, up, dt, mu[k], pa[0], pa[1], pa[2], pa[3], pa[4], &da[0], project, op)
                _rk4_c(xm, up, dt, mu[k], pa[0], pa[1], pa[2], pa[3], pa[4], &da[0], project, om)
                for j in range(13):
                    A[k, j, i] = (op[j] - om[j]) / (2.0 * eps_x)
            for i in range(4):
                for j in range(4):
                    up[j] = Ua[k, j]
                    um[j] = Ua[k, j]
                up[i] += eps_u
                um[i] -= eps_u
                for j in range(13):
                    xp[j] = Xa[k, j]
                _rk4_c(xp, up, dt, mu[k], pa[0], pa[1], pa[2], pa[3], pa[4], &da[0], project, op)
                _rk4_c(xp, um, dt, mu[k], pa[0], pa[1], pa[2], pa[3], pa[4], &da[0], project, om)
                for j in range(13):
                    B[k, j, i] = (op[j] - om[j]) / (2.0 * eps_u)
    return A, B


def unicycle_rollout(start, accels, yawrates, double tau, int nsub):
    cdef cnp.ndarray[double, ndim=1] s0 = np.ascontiguousarray(start, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] aa = np.ascontiguousarray(accels, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ww = np.ascontiguousarray(yawrates, dtype=np.float64)
    cdef Py_ssize_t P = aa.shape[0], p
    cdef cnp.ndarray[double, ndim=3] out = np.empty((P, nsub + 1, 4))
    cdef double h = tau / nsub
    cdef double st[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double tmp[4]
    cdef int j, i
    with nogil:
        for p in range(P):
            for i in range(4):
                st[i] = s0[i]
                out[p, 0, i] = s0[i]
            for j in range(nsub):
                _uni_deriv(st, aa[p], ww[p], k1)
                for i in range(4):
                    tmp[i] = st[i] + 0.5 * h * k1[i]
                _uni_deriv(tmp, aa[p], ww[p], k2)
                for i in range(4):
                    tmp[i] = st[i] + 0.5 * h * k2[i]
                _uni_deriv(tmp, aa[p], ww[p], k3)
                for i in range(4):
                    tmp[i] = st[i] + h * k3[i]
                _uni_deriv(tmp, aa[p], ww[p], k4)
                for i in range(4):
                    st[i] = st[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    out[p, j + 1, i] = st[i]
    return out


cdef void _uni_deriv(const double* s, double a, double w, double* d) noexcept nogil:
    d[0] = s[3] * cos(s[2])
    d[1] = s[3] * sin(s[2])
    d[2] = w
    d[3] = a


def point_mass_rollout(p0, v0, accels, double tau, int nsub):
    cdef cnp.ndarray[double, ndim=1] pa = np.ascontiguousarray(p0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] va = np.ascontiguousarray(v0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] aa = np.ascontiguousarray(accels, dtype=np.float64)
    cdef Py_ssize_t P = aa.shape[0], p
    cdef cnp.ndarray[double, ndim=3] out = np.empty((P, nsub + 1, 6))
    cdef double t
    cdef int j, i
    with nogil:
        for p in range(P):
            for j in range(nsub + 1):
                t = tau * j / nsub
                for i in range(3):
                    out[p, j, i] = pa[i] + va[i] * t + 0.5 * aa[p, i] * t * t
                    out[p, j, 3 + i] = va[i] + aa[p, i] * t
    return out


def grid_sample_2d(values, origin, double res, pts):
    cdef cnp.ndarray[double, ndim=2] G = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] og = np.ascontiguousarray(origin, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] P = np.atleast_2d(np.ascontiguousarray(pts, dtype=np.float64))
    cdef Py_ssize_t n = P.shape[0], k
    cdef Py_ssize_t nx = G.shape[0], ny = G.shape[1]
    cdef cnp.ndarray[double, ndim=1] val = np.empty(n)
    cdef cnp.ndarray[double, ndim=2] grad = np.empty((n, 2))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inside = np.empty(n, dtype=np.uint8)
    cdef double u, v, fu, fv, g00, g10, g01, g11
    cdef Py_ssize_t i0, j0, i1, j1
    with nogil:
        for k in range(n):
            u = (P[k, 0] - og[0]) / res - 0.5
            v = (P[k, 1] - og[1]) / res - 0.5
            inside[k] = 1 if (u >= 0.0 and u <= nx - 1.0 and v >= 0.0 and v <= ny - 1.0) else 0
            if u < 0.0:
                u = 0.0
            elif u > nx - 1.0:
                u = nx - 1.0
            if v < 0.0:
                v = 0.0
            elif v > ny - 1.0:
                v = ny - 1.0
            i0 = <Py_ssize_t>floor(u)
            if i0 > nx - 1:
                i0 = nx - 1
            j0 = <Py_ssize_t>floor(v)
            if j0 > ny - 1:
                j0 = ny - 1
            i1 = i0 + 1 if i0 + 1 < nx else nx - 1
            j1 = j0 + 1 if j0 + 1 < ny else ny - 1
            fu = u - i0
            fv = v - j0
            g00 = G[i0, j0]
            g10 = G[i1, j0]
            g01 = G[i0, j1]
            g11 = G[i1, j1]
            val[k] = ((1 - fu) * (1 - fv) * g00 + fu * (1 - fv) * g10
                      + (1 - fu) * fv * g01 + fu * fv * g11)
            grad[k, 0] = ((1 - fv) * (g10 - g00) + fv * (g11 - g01)) / res
            grad[k, 1] = ((1 - fu) * (g01 - g00) + fu * (g11 - g10)) / res
    return val, grad, inside.view(np.bool_)


def grid_sample_3d(values, origin, double res, pts):
    cdef cnp.ndarray[double, ndim=3] G = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] og = np.ascontiguousarray(origin, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] P = np.atleast_2d(np.ascontiguousarray(pts, dtype=np.float64))
    cdef Py_ssize_t n = P.shape[0], k
    cdef Py_ssize_t nx = G.shape[0], ny = G.shape[1], nz = G.shape[2]
    cdef cnp.ndarray[double, ndim=1] val = np.empty(n)
    cdef cnp.ndarray[double, ndim=2] grad = np.empty((n, 3))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inside = np.empty(n, dtype=np.uint8)
    cdef double u, v, w, fu, fv, fw
    cdef double c000, c100, c010, c110, c001, c101, c011, c111
    cdef double c00, c01, c10, c11, c0, c1
    cdef double dx00, dx01, dx10, dx11
    cdef Py_ssize_t i0, j0, k0, i1, j1, k1
    with nogil:
        for k in range(n):
            u = (P[k, 0] - og[0]) / res - 0.5
            v = (P[k, 1] - og[1]) / res - 0.5
            w = (P[k, 2] - og[2]) / res - 0.5
            inside[k] = 1 if (u >= 0.0 and u <= nx - 1.0 and v >= 0.0 and v <= ny - 1.0
                              and w >= 0.0 and w <= nz - 1.0) else 0
            if u < 0.0:
                u = 0.0
            elif u > nx - 1.0:
                u = nx - 1.0
            if v < 0.0:
                v = 0.0
            elif v > ny - 1.0:
                v = ny - 1.0
            if w < 0.0:
                w = 0.0
            elif w > nz - 1.0:
                w = nz - 1.0
            i0 = <Py_ssize_t>floor(u)
            if i0 > nx - 1:
                i0 = nx - 1
            j0 = <Py_ssize_t>floor(v)
            if j0 > ny - 1:
                j0 = ny - 1
            k0 = <Py_ssize_t>floor(w)
            if k0 > nz - 1:
                k0 = nz - 1
            i1 = i0 + 1 if i0 + 1 < nx else nx - 1
            j1 = j0 + 1 if j0 + 1 < ny else ny - 1
            k1 = k0 + 1 if k0 + 1 < nz else nz - 1
            fu = u - i0
            fv = v - j0
            fw = w - k0
            c000 = G[i0, j0, k0]
            c100 = G[i1, j0, k0]
            c010 = G[i0, j1, k0]
            c110 = G[i1, j1, k0]
            c001 = G[i0, j0, k1]
            c101 = G[i1, j0, k1]
            c011 = G[i0, j1, k1]
            c111 = G[i1, j1, k1]
            c00 = c000 * (1 - fu) + c100 * fu
            c01 = c001 * (1 - fu) + c101 * fu
            c10 = c010 * (1 - fu) + c110 * fu
            c11 = c011 * (1 - fu) + c111 * fu
            c0 = c00 * (1 - fv) + c10 * fv
            c1 = c01 * (1 - fv) + c11 * fv
            val[k] = c0 * (1 - fw) + c1 * fw
            dx00 = c100 - c000
            dx01 = c101 - c001
            dx10 = c110 - c010
            dx11 = c111 - c011
            grad[k, 0] = ((dx00 * (1 - fv) + dx10 * fv) * (1 - fw)
                          + (dx01 * (1 - fv) + dx11 * fv) * fw) / res
            grad[k, 1] = ((c10 - c00) * (1 - fw) + (c11 - c01) * fw) / res
            grad[k, 2] = (c1 - c0) / res
    return val, grad, inside.view(np.bool_)
