"""Limited-memory BFGS with a weak Wolfe line search.

Penalty-shaped objectives put razor-thin valleys along the constraint
boundaries; bisection on the weak Wolfe conditions keeps making progress
there where interpolating strong-Wolfe searches stall.  The caller's fun
returns (value, gradient) and may signal an infeasible probe with a huge
value, which the search treats as a failed sufficient-decrease test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

REJECT_THRESHOLD = 1e29  # fun values at or above this mean "do not go here"


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    n_evals: int
    converged: bool
    message: str
    trace: list[float] = field(default_factory=list)


def minimize_lbfgs(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    memory: int = 8,
    gtol: float = 1e-5,
    maxiter: int = 300,
    maxls: int = 40,
    c1: float = 1e-4,
    c2: float = 0.9,
    past: int = 5,
    delta: float = 1e-9,
    callback: Callable[[np.ndarray], None] | None = None,
) -> LbfgsResult:
    """Minimize fun from x0; returns the best accepted iterate.

    Stops on the gradient test ||g||_inf <= gtol * max(1, ||x||_inf), on a
    relative objective plateau over `past` iterations, or at maxiter.
    """
    x = np.asarray(x0, dtype=float).copy()
    n_evals = 0

    def ev(z: np.ndarray) -> tuple[float, np.ndarray]:
        nonlocal n_evals
        n_evals += 1
        f, g = fun(z)
        return float(f), np.asarray(g, dtype=float)

    f, g = ev(x)
    if f >= REJECT_THRESHOLD:
        raise ValueError("objective rejected the initial point")
    trace = [f]
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    rho: list[float] = []
    message = "max iterations reached"
    converged = False
    n_iter = 0

    for _ in range(maxiter):
        if np.max(np.abs(g)) <= gtol * max(1.0, float(np.max(np.abs(x)))):
            message = "gradient tolerance reached"
            converged = True
            break

        # two-loop recursion
        d = -g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
            a = r * float(s @ d)
            alphas.append(a)
            d -= a * y
        if S:
            y_last = Y[-1]
            d *= float(S[-1] @ y_last) / float(y_last @ y_last)
        for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
            b = r * float(y @ d)
            d += (a - b) * s

        dg0 = float(g @ d)
        if not np.isfinite(dg0) or dg0 >= 0.0:
            # fall back to steepest descent if curvature info went bad
            d = -g
            dg0 = -float(g @ g)
            S.clear()
            Y.clear()
            rho.clear()

        step = 1.0 if S else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-12))
        lo, hi = 0.0, np.inf
        f_new, g_new, x_new = f, g, x
        accepted = False
        for _ in range(maxls):
            x_try = x + step * d
            f_try, g_try = ev(x_try)
            if f_try >= REJECT_THRESHOLD or f_try > f + c1 * step * dg0:
                hi = step
            elif float(g_try @ d) < c2 * dg0:
                lo = step
            else:
                f_new, g_new, x_new = f_try, g_try, x_try
                accepted = True
                break
            step = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * lo
            if step <= 1e-18:
                break
        if not accepted:
            # keep the best Armijo point seen, else stop
            if np.isfinite(hi) and lo > 0.0:
                x_try = x + lo * d
                f_try, g_try = ev(x_try)
                if f_try < f:
                    f_new, g_new, x_new = f_try, g_try, x_try
                    accepted = True
            if not accepted:
                message = "line search failed"
                break

        s_vec = x_new - x
        y_vec = g_new - g
        x, f, g = x_new, f_new, g_new
        n_iter += 1
        trace.append(f)
        if callback is not None:
            callback(x)

        sy = float(s_vec @ y_vec)
        if sy > 1e-10 * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)):
            S.append(s_vec)
            Y.append(y_vec)
            rho.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)

        if len(trace) > past:
            f_past = trace[-1 - past]
            if f_past - f <= delta * max(abs(f), abs(f_past), 1.0):
                message = "objective plateau"
                converged = True
                break

    return LbfgsResult(
        x=x,
        fun=f,
        grad=g,
        iterations=n_iter,
        n_evals=n_evals,
        converged=converged,
        message=message,
        trace=trace,
    )
