"""Kernel backend selection.

BIMODAL_NAV_BACKEND=auto|compiled|pure picks the implementation at import
time.  "auto" (default) prefers the compiled extension and falls back to the
NumPy version; "compiled" raises if the extension is missing.
"""

from __future__ import annotations

import os

_choice = os.environ.get("BIMODAL_NAV_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "compiled", "pure"):
    raise ImportError(
        f"BIMODAL_NAV_BACKEND must be auto, compiled or pure, got {_choice!r}"
    )

if _choice == "pure":
    from . import pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        from . import pure as _impl

        BACKEND = "pure"

N_X = _impl.N_X
N_U = _impl.N_U
dynamics_deriv = _impl.dynamics_deriv
rk4_step = _impl.rk4_step
rk4_step_batch = _impl.rk4_step_batch
rollout = _impl.rollout
linearize_rollout = _impl.linearize_rollout
unicycle_rollout = _impl.unicycle_rollout
point_mass_rollout = _impl.point_mass_rollout
grid_sample_2d = _impl.grid_sample_2d
grid_sample_3d = _impl.grid_sample_3d

__all__ = [
    "BACKEND",
    "N_X",
    "N_U",
    "dynamics_deriv",
    "rk4_step",
    "rk4_step_batch",
    "rollout",
    "linearize_rollout",
    "unicycle_rollout",
    "point_mass_rollout",
    "grid_sample_2d",
    "grid_sample_3d",
]
