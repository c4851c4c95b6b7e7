"""Single-bin DFT phasor estimation at the nominal frequency.

Phasors are RMS-scaled (``sqrt(2)/N`` normalisation) and referenced to
absolute sample index, so a nominal-frequency cosine gives a constant
phasor window after window. Off a nominal frequency the raw estimate
is a mix of the true phasor and its conjugate weighted by the leakage
coefficients P and Q; :func:`correct_first_window` undoes that mix.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import UnprimedStateError, UnrecoverableCorrectionError, WindowLengthError

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi

#: |P|^2 - |Q|^2 at or below this cannot be inverted reliably.
SINGULAR_DET = 1e-9


def wrap_angle(angle):
    """Wrap to (-pi, pi]. Works on scalars and arrays."""
    wrapped = np.remainder(np.asarray(angle, dtype=float) + math.pi, TWO_PI) - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)
    if np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class PhasorEstimate:
    real_part: float
    imag_part: float
    timestamp_s: float = 0.0

    @classmethod
    def from_complex(cls, value: complex, timestamp_s: float = 0.0) -> "PhasorEstimate":
        value = complex(value)
        return cls(value.real, value.imag, float(timestamp_s))

    @classmethod
    def from_polar(cls, magnitude: float, angle_rad: float,
                   timestamp_s: float = 0.0) -> "PhasorEstimate":
        return cls.from_complex(magnitude * complex(math.cos(angle_rad), math.sin(angle_rad)),
                                timestamp_s)

    @property
    def value(self) -> complex:
        return complex(self.real_part, self.imag_part)

    @property
    def magnitude_rms(self) -> float:
        return math.hypot(self.real_part, self.imag_part)

    @property
    def angle_rad(self) -> float:
        return wrap_angle(math.atan2(self.imag_part, self.real_part))

    @property
    def angle_deg(self) -> float:
        return math.degrees(self.angle_rad)


@dataclass(frozen=True)
class PqCoefficients:
    p: complex
    q: complex
    delta_omega: float


def twiddle_table(n_samples: int, cycles: int = 1) -> np.ndarray:
    """``exp(-j * k * theta)`` for ``k = 0 .. N-1`` with ``theta = 2*pi*cycles/N``.

    ``k * cycles`` is reduced modulo N in integers before scaling, so the
    table is exactly periodic.
    """
    k = (np.arange(n_samples, dtype=np.int64) * cycles) % n_samples
    return np.exp(-1j * TWO_PI * k / n_samples)


def dft_window(window, theta_rad: Optional[float] = None, n_samples: Optional[int] = None,
               cycles: int = 1) -> PhasorEstimate:
    """Non-recursive phasor of one full window: ``sqrt(2)/N * sum x(n) exp(-j n theta)``.

    ``theta_rad`` defaults to ``2*pi*cycles/N``; when given it must agree
    with the window length.
    """
    x = np.asarray(window, dtype=float)
    n = x.size if n_samples is None else n_samples
    if x.ndim != 1 or x.size != n or n < 2:
        raise WindowLengthError(f"window holds {x.size} samples, expected {n}")
    if theta_rad is not None and not math.isclose(theta_rad * n, TWO_PI * cycles,
                                                  rel_tol=1e-12):
        raise WindowLengthError(f"theta {theta_rad} does not match N = {n}")
    return PhasorEstimate.from_complex(SQRT2 / n * np.dot(x, twiddle_table(n, cycles)))


@dataclass
class EstimatorState:
    """Mutable sliding-window state. One writer per instance."""

    n_samples_per_cycle: int
    dt_s: float
    nominal_omega: float
    cycles: int = 1
    t0_s: float = 0.0
    window: deque = field(default_factory=deque)
    running_phasor: complex = 0j
    r_index: int = 0
    primed: bool = False

    def __post_init__(self):
        if self.n_samples_per_cycle < 2:
            raise ValueError("N must be >= 2")
        if not self.dt_s > 0:
            raise ValueError("dt_s must be > 0")
        self._twiddle = twiddle_table(self.n_samples_per_cycle, self.cycles).tolist()

    @classmethod
    def for_rates(cls, f0_hz: float, sample_rate_hz: float, n_samples_per_cycle: int,
                  t0_s: float = 0.0) -> "EstimatorState":
        cycles = max(1, round(n_samples_per_cycle * f0_hz / sample_rate_hz))
        return cls(n_samples_per_cycle, 1.0 / sample_rate_hz, TWO_PI * f0_hz, cycles, t0_s)

    @property
    def theta_rad(self) -> float:
        return TWO_PI * self.cycles / self.n_samples_per_cycle

    def _newest_time(self) -> float:
        return self.t0_s + (self.r_index + self.n_samples_per_cycle - 1) * self.dt_s

    def estimate(self) -> PhasorEstimate:
        if not self.primed:
            raise UnprimedStateError("state has no full window yet")
        return PhasorEstimate.from_complex(self.running_phasor, self._newest_time())


def prime(state: EstimatorState, window) -> PhasorEstimate:
    """Load the first full window and compute its phasor directly."""
    x = np.asarray(window, dtype=float)
    est = dft_window(x, n_samples=state.n_samples_per_cycle, cycles=state.cycles)
    state.window = deque(x.tolist(), maxlen=state.n_samples_per_cycle)
    state.running_phasor = est.value
    state.r_index = 0
    state.primed = True
    return state.estimate()


def recursive_update(state: EstimatorState, new_sample: float,
                     dropped_sample: Optional[float] = None) -> PhasorEstimate:
    """Slide the window by one sample.

    ``X[r+1] = X[r] + sqrt(2)/N * (x(r+N) - x(r)) * exp(-j r theta)``.
    The leaving sample comes from the state's buffer unless the caller
    supplies it as ``dropped_sample``.
    """
    if not state.primed:
        raise UnprimedStateError("recursive_update called before prime()")
    n = state.n_samples_per_cycle
    oldest = state.window[0]
    if dropped_sample is None:
        dropped_sample = oldest
    state.window.append(float(new_sample))  # maxlen drops the oldest
    tw = state._twiddle[state.r_index % n]
    state.running_phasor = state.running_phasor + SQRT2 / n * (new_sample - dropped_sample) * tw
    state.r_index += 1
    return state.estimate()


def sliding_phasors(values, n_samples: int, cycles: int = 1) -> np.ndarray:
    """Raw phasor for every full window of ``values`` (window start r = 0, 1, ...).

    Same recurrence as :func:`recursive_update`, run through the compiled
    kernel when available.
    """
    values = np.asarray(values, dtype=float)
    if values.size < n_samples:
        raise WindowLengthError(f"need at least {n_samples} samples, got {values.size}")
    x0 = dft_window(values[:n_samples], n_samples=n_samples, cycles=cycles).value
    return kernels.recursive_dft(values, twiddle_table(n_samples, cycles), SQRT2 / n_samples, x0)


def _dirichlet(n: int, half_angle):
    """``sin(N a) / (N sin a)`` with the a -> 0 limit set to 1."""
    half_angle = np.asarray(half_angle, dtype=float)
    den = n * np.sin(half_angle)
    safe = np.where(den == 0.0, 1.0, den)
    return np.where(den == 0.0, 1.0, np.sin(n * half_angle) / safe)


def pq_series(n_samples: int, omega, nominal_omega: float, dt_s: float):
    """Vectorised P and Q over an array of input angular frequencies."""
    omega = np.asarray(omega, dtype=float)
    d_minus = (omega - nominal_omega) * dt_s
    d_plus = (omega + nominal_omega) * dt_s
    p = _dirichlet(n_samples, d_minus / 2) * np.exp(1j * (n_samples - 1) * d_minus / 2)
    # N*w0*dt is a whole number of turns when N comes from derive_n, so
    # sin(N*(w+w0)*dt/2) == sin(N*(w-w0)*dt/2); the latter is exactly 0 at w = w0
    turns = n_samples * nominal_omega * dt_s / TWO_PI
    if abs(turns - round(turns)) < 1e-9:
        num = np.sin(n_samples * d_minus / 2)
    else:
        num = np.sin(n_samples * d_plus / 2)
    q_mag = num / (n_samples * np.sin(d_plus / 2))
    q = q_mag * np.exp(-1j * (n_samples - 1) * d_plus / 2)
    exact = d_minus == 0.0
    p = np.where(exact, 1.0 + 0j, p)
    q = np.where(exact & (abs(turns - round(turns)) < 1e-9), 0j, q)
    return p, q


def pq_coefficients(n_samples_per_cycle: int, omega: float, nominal_omega: float,
                    dt_s: float) -> PqCoefficients:
    """Leakage coefficients of an N-sample nominal-bin DFT for a cosine at ``omega``."""
    if not dt_s > 0 or n_samples_per_cycle < 2:
        raise ValueError("need dt_s > 0 and N >= 2")
    p, q = pq_series(n_samples_per_cycle, omega, nominal_omega, dt_s)
    return PqCoefficients(complex(p), complex(q), float(omega - nominal_omega))


def invert_pq(raw, p, q, r_index, omega, nominal_omega: float, dt_s: float):
    """Array form of :func:`correct_first_window`; returns (X, det)."""
    raw = np.asarray(raw, dtype=complex)
    tau = np.asarray(r_index, dtype=float) * dt_s
    omega = np.asarray(omega, dtype=float)
    a = p * np.exp(1j * (omega - nominal_omega) * tau)
    b = q * np.exp(-1j * (omega + nominal_omega) * tau)
    det = (a * np.conj(a)).real - (b * np.conj(b)).real
    x = (np.conj(a) * raw - b * np.conj(raw)) / np.where(np.abs(det) > SINGULAR_DET, det, 1.0)
    return x, det


def correct_first_window(raw: PhasorEstimate, pq: PqCoefficients, r_index: int,
                         omega: float, nominal_omega: float, dt_s: float) -> PhasorEstimate:
    """Recover the true phasor X from a raw window estimate.

    Solves ``raw = a X + b conj(X)`` together with its conjugate, where
    ``a = P exp(j r (w - w0) dt)`` and ``b = Q exp(-j r (w + w0) dt)``.
    The result is the phasor of the cosine at sample index 0.
    """
    x, det = invert_pq(raw.value, pq.p, pq.q, r_index, omega, nominal_omega, dt_s)
    if not abs(float(det)) > SINGULAR_DET:
        raise UnrecoverableCorrectionError(
            f"|P|^2 - |Q|^2 = {float(det):.3g}: input frequency too far from nominal")
    return PhasorEstimate.from_complex(complex(x), raw.timestamp_s)


@dataclass(frozen=True)
class RotationPeriod:
    period_s: Optional[float]
    direction: str  # "clockwise", "anticlockwise" or "none"

    def describe(self) -> str:
        if self.period_s is None:
            return "no rotation"
        return f"{self.period_s:.4f} s {self.direction}"


def rotation_period(f_in_hz: float, f0_hz: float) -> RotationPeriod:
    """How long an off-nominal phasor takes to turn once, and which way."""
    if not f_in_hz > 0:
        raise ValueError("f_in_hz must be positive")
    offset = f_in_hz - f0_hz
    if offset == 0:
        return RotationPeriod(None, "none")
    return RotationPeriod(1.0 / abs(offset), "clockwise" if offset < 0 else "anticlockwise")
