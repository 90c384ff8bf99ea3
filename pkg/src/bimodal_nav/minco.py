"""Minimum-control-effort piecewise quintics parameterized by waypoints and times.

The coefficient map c = M(q, T) is one banded linear solve: endpoint (p, v, a)
conditions, waypoint interpolation at junctions, and derivative continuity up
to order 4.  Gradients of any cost on the coefficients pull back to (q, T)
through the adjoint of the same banded system in O(M).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

NCOEF = 6  # quintic pieces
_BAND_L = 8
_BAND_U = 2
# factorial ratios k!/(k-d)! for tau^k differentiated d times
_DFACT = np.zeros((6, NCOEF))
for _d in range(6):
    for _k in range(_d, NCOEF):
        _DFACT[_d, _k] = np.prod(np.arange(_k - _d + 1, _k + 1)) if _d else 1.0


def beta(tau: float, order: int) -> np.ndarray:
    """Basis row: d^order/dtau^order [1, tau, ..., tau^5]."""
    out = np.zeros(NCOEF)
    if order >= NCOEF:
        return out
    powers = tau ** np.arange(NCOEF - order)
    out[order:] = _DFACT[order, order:] * powers
    return out


def beta_batch(taus: np.ndarray, order: int) -> np.ndarray:
    """Stacked basis rows for many local times: (len(taus), 6)."""
    taus = np.asarray(taus, dtype=float)
    out = np.zeros((len(taus), NCOEF))
    if order >= NCOEF:
        return out
    powers = taus[:, None] ** np.arange(NCOEF - order)[None, :]
    out[:, order:] = _DFACT[order, order:][None, :] * powers
    return out


@dataclass
class Boundary:
    """Full (p, v, a) condition at one trajectory end."""

    p: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.a = np.asarray(self.a, dtype=float)

    @classmethod
    def resting(cls, p) -> "Boundary":
        p = np.asarray(p, dtype=float)
        return cls(p=p, v=np.zeros_like(p), a=np.zeros_like(p))


def _assemble(T: np.ndarray) -> np.ndarray:
    """LAPACK-banded form (kl=8, ku=2, with fill-in rows) of the constraint
    matrix.

    Row layout: 3 start conditions; per junction i one interpolation row and
    five continuity rows (orders 0..4); 3 end conditions.  All row/column
    band offsets are independent of the piece index, so the fill vectorizes
    over junctions.  Entry (r, c) lives at ab[kl + ku + r - c, c].
    """
    M = len(T)
    n = NCOEF * M
    ab = np.zeros((2 * _BAND_L + _BAND_U + 1, n), order="F")
    base = _BAND_L + _BAND_U  # diagonal row in LAPACK layout

    # start boundary: p, v, a of piece 0 at tau=0 (diagonal entries d!)
    for d in range(3):
        ab[base, d] = _DFACT[d, d]

    if M > 1:
        bet = np.stack([beta_batch(T[:-1], d) for d in range(5)], axis=1)  # (M-1, 5, 6)
        rows = np.concatenate([bet[:, :1], bet], axis=1)  # interp row then orders 0..4
        cols_base = NCOEF * np.arange(M - 1)
        for ro in range(6):
            r_off = 3 + ro  # row minus 6*i
            for k in range(NCOEF):
                ab[base + r_off - k, cols_base + k] = rows[:, ro, k]
        for d in range(5):
            # -beta^(d)(0) entry of the next piece: column 6i+6+d, row 3+6i+1+d
            ab[base - 2, cols_base + NCOEF + d] = -_DFACT[d, d]

    # end boundary at tau = T_M
    c0 = NCOEF * (M - 1)
    for d in range(3):
        row = beta(T[M - 1], d)
        for k in range(NCOEF):
            ab[base + (n - 3 + d) - (c0 + k), c0 + k] = row[k]
    return ab


def _factor(T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LU-factor the banded constraint matrix; shared by solve and adjoint."""
    ab = _assemble(T)
    lu, piv, info = lapack.dgbtrf(ab, _BAND_L, _BAND_U)
    if info != 0:
        raise np.linalg.LinAlgError(f"banded factorization failed (info={info})")
    return lu, piv


def _banded_solve(fact: tuple[np.ndarray, np.ndarray], b: np.ndarray, trans: int) -> np.ndarray:
    lu, piv = fact
    x, info = lapack.dgbtrs(lu, _BAND_L, _BAND_U, b, piv, trans=trans)
    if info != 0:
        raise np.linalg.LinAlgError(f"banded solve failed (info={info})")
    return x


@dataclass
class MincoTrajectory:
    """Solved piecewise quintic: durations T (M,), coeffs (M, 6, ndim)."""

    T: np.ndarray
    coeffs: np.ndarray
    start: Boundary
    end: Boundary
    q: np.ndarray  # interior waypoints (M-1, ndim)

    def __post_init__(self) -> None:
        self.T = np.asarray(self.T, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self._fact: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n_pieces(self) -> int:
        return len(self.T)

    @property
    def ndim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def total_time(self) -> float:
        return float(self.T.sum())

    def piece_of(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(piece index, local tau) for global times, clamped to the domain."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        edges = np.concatenate([[0.0], np.cumsum(self.T)])
        idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, self.n_pieces - 1)
        tau = np.clip(t, 0.0, edges[-1]) - edges[idx]
        tau = np.minimum(tau, self.T[idx])
        return idx, tau

    def eval_piece(self, i: int, tau: np.ndarray, order: int = 0) -> np.ndarray:
        """Derivative of piece i at local times tau (no range check)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if order >= NCOEF:
            return np.zeros((len(tau), self.ndim))
        c = self.coeffs[i]
        # Horner on the differentiated polynomial
        out = np.zeros((len(tau), self.ndim))
        for k in range(NCOEF - 1, order - 1, -1):
            out = out * tau[:, None] + _DFACT[order, k] * c[k][None, :]
        return out

    def eval(self, t: np.ndarray, order: int = 0) -> np.ndarray:
        vals, _ = self.eval_flagged(t, order)
        return vals

    def eval_flagged(self, t: np.ndarray, order: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """(values, clamped flags); scalar t gives a (ndim,) value."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        clamped = (t_arr < 0.0) | (t_arr > self.total_time + 1e-12)
        idx, tau = self.piece_of(t_arr)
        out = np.empty((len(t_arr), self.ndim))
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = self.eval_piece(int(i), tau[sel], order)
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[0], clamped[0]
        return out, clamped

    def to_json(self, path: str | Path) -> None:
        doc = {
            "T": self.T.tolist(),
            "coeffs": self.coeffs.tolist(),
            "q": self.q.tolist(),
            "start": {"p": self.start.p.tolist(), "v": self.start.v.tolist(), "a": self.start.a.tolist()},
            "end": {"p": self.end.p.tolist(), "v": self.end.v.tolist(), "a": self.end.a.tolist()},
        }
        Path(path).write_text(json.dumps(doc) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "MincoTrajectory":
        doc = json.loads(Path(path).read_text())
        return cls(
            T=np.array(doc["T"]),
            coeffs=np.array(doc["coeffs"]),
            q=np.array(doc["q"]),
            start=Boundary(**{k: np.array(v) for k, v in doc["start"].items()}),
            end=Boundary(**{k: np.array(v) for k, v in doc["end"].items()}),
        )


def solve_coefficients(
    q: np.ndarray, T: np.ndarray, start: Boundary, end: Boundary
) -> MincoTrajectory:
    """Map (waypoints, times, boundary) to quintic coefficients, O(M)."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0.0) or not np.all(np.isfinite(T)):
        raise ValueError(f"piece durations must be positive, got {T}")
    M = len(T)
    ndim = len(start.p)
    q = np.asarray(q, dtype=float).reshape(M - 1, ndim) if M > 1 else np.zeros((0, ndim))
    n = NCOEF * M
    b = np.zeros((n, ndim))
    b[0], b[1], b[2] = start.p, start.v, start.a
    if M > 1:
        b[3 + NCOEF * np.arange(M - 1)] = q
    b[n - 3], b[n - 2], b[n - 1] = end.p, end.v, end.a
    fact = _factor(T)
    c = _banded_solve(fact, b, trans=0)
    traj = MincoTrajectory(
        T=T.copy(), coeffs=c.reshape(M, NCOEF, ndim), start=start, end=end, q=q
    )
    traj._fact = fact
    return traj


def backprop_gradients(
    traj: MincoTrajectory,
    dJ_dc: np.ndarray,
    dJ_dT_direct: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pull a coefficient-space gradient back to (q, T).

    dJ_dc shaped like coeffs (M, 6, ndim); dJ_dT_direct collects any cost
    dependence on T outside the linear map (e.g. sample times moving with T).
    """
    M = traj.n_pieces
    ndim = traj.ndim
    n = NCOEF * M
    G = np.asarray(dJ_dc, dtype=float).reshape(n, ndim)
    fact = traj._fact if traj._fact is not None else _factor(traj.T)
    lam = _banded_solve(fact, G, trans=1)

    dq = lam[3 + NCOEF * np.arange(M - 1)].copy()

    dT = np.zeros(M) if dJ_dT_direct is None else np.asarray(dJ_dT_direct, dtype=float).copy()
    # piece-end derivatives of orders 1..5 for every piece, batched
    ends = np.stack(
        [np.einsum("mk,mkd->md", beta_batch(traj.T, d), traj.coeffs) for d in range(1, 6)]
    )  # (5, M, ndim)
    if M > 1:
        # interp row differentiates to p', continuity row d to p^(d+1)
        lam_rows = lam[3 : 3 + NCOEF * (M - 1)].reshape(M - 1, NCOEF, ndim)
        orders = np.array([1, 1, 2, 3, 4, 5]) - 1
        deriv = ends[orders][:, : M - 1].transpose(1, 0, 2)  # (M-1, 6, ndim)
        dT[: M - 1] -= np.einsum("mod,mod->m", lam_rows, deriv)
    for d in range(3):
        dT[M - 1] -= float(lam[n - 3 + d] @ ends[d, M - 1])
    return dq, dT
