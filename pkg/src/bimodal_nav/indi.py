"""Incremental inner loop between the tracking controller and the rotors.

Replaces the model torque with a measurement-anchored increment: the commanded
torque is the filtered applied torque plus inertia times the gap between the
desired and the measured (filtered, differentiated) angular acceleration.
Unmodeled external torque then cancels to first order without being estimated
explicitly.  Rate, applied torque and the numerical derivative all pass
through second-order low-pass filters with one shared cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import PhysicalParams


@dataclass(frozen=True)
class IndiConfig:
    cutoff_hz: float = 12.0
    rate_hz: float = 200.0
    # filters count as warm after this many updates; None derives roughly two
    # filter time constants from cutoff and rate
    warmup_samples: int | None = None

    def __post_init__(self) -> None:
        if self.cutoff_hz <= 0 or self.rate_hz <= 0:
            raise ValueError("cutoff and rate must be positive")
        if self.cutoff_hz >= 0.5 * self.rate_hz:
            raise ValueError("cutoff must sit below the Nyquist rate")

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    @property
    def n_warmup(self) -> int:
        if self.warmup_samples is not None:
            return self.warmup_samples
        return int(np.ceil(2.0 * self.rate_hz / self.cutoff_hz))


class Biquad:
    """Second-order Butterworth low-pass (bilinear transform), vector input.

    Unity DC gain by construction; state is transposed direct form II.
    """

    def __init__(self, cutoff_hz: float, rate_hz: float, width: int) -> None:
        k = np.tan(np.pi * cutoff_hz / rate_hz)
        norm = 1.0 / (1.0 + np.sqrt(2.0) * k + k * k)
        self.b0 = k * k * norm
        self.b1 = 2.0 * self.b0
        self.b2 = self.b0
        self.a1 = 2.0 * (k * k - 1.0) * norm
        self.a2 = (1.0 - np.sqrt(2.0) * k + k * k) * norm
        self.z1 = np.zeros(width)
        self.z2 = np.zeros(width)
        self._primed = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self._primed:
            # start settled at the first sample instead of at zero
            self.z1 = (1.0 - self.b0) * x
            self.z2 = (self.b2 - self.a2) * x
            self._primed = True
        y = self.b0 * x + self.z1
        self.z1 = self.b1 * x - self.a1 * y + self.z2
        self.z2 = self.b2 * x - self.a2 * y
        return y


@dataclass
class FilteredSignals:
    omega_hat: np.ndarray
    omega_dot_hat: np.ndarray
    tau_hat: np.ndarray
    warm: bool


@dataclass
class IndiFilter:
    """Shared-cutoff filter bank over rate and applied torque."""

    config: IndiConfig = field(default_factory=IndiConfig)

    def __post_init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        fc, fs = self.config.cutoff_hz, self.config.rate_hz
        self._omega = Biquad(fc, fs, 3)
        self._tau = Biquad(fc, fs, 3)
        self._prev_omega_hat: np.ndarray | None = None
        self._count = 0

    def update(self, omega_raw: np.ndarray, tau_applied: np.ndarray) -> FilteredSignals:
        """Filter one sample pair; the rate derivative is a backward
        difference of the filtered rate (zero on the first sample)."""
        omega_hat = self._omega(omega_raw)
        tau_hat = self._tau(tau_applied)
        if self._prev_omega_hat is None:
            omega_dot_hat = np.zeros(3)
        else:
            omega_dot_hat = (omega_hat - self._prev_omega_hat) / self.config.dt
        self._prev_omega_hat = omega_hat
        self._count += 1
        return FilteredSignals(
            omega_hat=omega_hat,
            omega_dot_hat=omega_dot_hat,
            tau_hat=tau_hat,
            warm=self._count >= self.config.n_warmup,
        )


def desired_angular_acceleration(
    tau_nmpc: np.ndarray, omega: np.ndarray, params: PhysicalParams
) -> np.ndarray:
    """Invert the rotational model: omega_dot = M^-1 (tau - omega x M omega)."""
    M = np.asarray(params.inertia_diag)
    return (np.asarray(tau_nmpc) - np.cross(omega, M * omega)) / M


def indi_torque_command(
    tau_nmpc: np.ndarray,
    omega: np.ndarray,
    signals: FilteredSignals,
    params: PhysicalParams,
) -> np.ndarray:
    """Incremental torque command; passthrough while the filters warm up."""
    tau_nmpc = np.asarray(tau_nmpc, dtype=float)
    if not signals.warm:
        return tau_nmpc.copy()
    M = np.asarray(params.inertia_diag)
    omega_dot_d = desired_angular_acceleration(tau_nmpc, omega, params)
    return signals.tau_hat + M * (omega_dot_d - signals.omega_dot_hat)


def disturbance_estimate(signals: FilteredSignals, params: PhysicalParams) -> np.ndarray:
    """External torque implied by the filtered signals,
    M omega_dot_hat - tau_hat + omega_hat x M omega_hat."""
    M = np.asarray(params.inertia_diag)
    return (
        M * signals.omega_dot_hat
        - signals.tau_hat
        + np.cross(signals.omega_hat, M * signals.omega_hat)
    )


@dataclass
class IndiLoop:
    """Stateful wrapper used by the closed-loop harness; logs every tick."""

    params: PhysicalParams
    config: IndiConfig = field(default_factory=IndiConfig)

    def __post_init__(self) -> None:
        self.filter = IndiFilter(self.config)
        self.log: list[tuple] = []
        self.last_signals: FilteredSignals | None = None

    def reset(self) -> None:
        self.filter.reset()
        self.log.clear()
        self.last_signals = None

    def step(self, tau_nmpc: np.ndarray, omega_raw: np.ndarray,
             tau_applied: np.ndarray) -> np.ndarray:
        signals = self.filter.update(omega_raw, tau_applied)
        self.last_signals = signals
        tau_d = indi_torque_command(tau_nmpc, omega_raw, signals, self.params)
        self.log.append((
            np.asarray(tau_nmpc, dtype=float).copy(),
            signals.tau_hat.copy(),
            signals.omega_dot_hat.copy(),
            tau_d.copy(),
        ))
        return tau_d
