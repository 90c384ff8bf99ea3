"""Planning and control stack for a passive-wheeled ground/air bimodal vehicle."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .dynamics import (
    AERIAL,
    TERRESTRIAL,
    ControlInput,
    FullState,
    GroundContact,
    PhysicalParams,
)

__version__ = "0.1.0"

__all__ = [
    "AERIAL",
    "TERRESTRIAL",
    "ControlInput",
    "FullState",
    "GroundContact",
    "PhysicalParams",
    "KERNEL_BACKEND",
    "__version__",
]
