"""Test-signal synthesis and timestamped sample streams.

Signals are cosines ``sqrt(2) * rms * cos(2*pi*f*t + phase)`` sampled
uniformly from ``t = 0``, optionally with extra single-frequency tones
given as a fraction of the fundamental RMS.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidTimebaseError, SignalSpecError, StreamParseError

SQRT2 = math.sqrt(2.0)

DEFAULT_NOMINAL_HZ = 50.0
DEFAULT_SAMPLE_RATE_HZ = 10_000.0
DEFAULT_DURATION_S = 5.0


@dataclass(frozen=True)
class Tone:
    """Single interfering sinusoid, amplitude relative to the fundamental RMS."""

    frequency_hz: float
    amplitude_fraction: float
    phase_rad: float = 0.0


@dataclass(frozen=True)
class SignalSpec:
    amplitude_rms: float
    frequency_hz: float = DEFAULT_NOMINAL_HZ
    phase_rad: float = 0.0
    nominal_frequency_hz: float = DEFAULT_NOMINAL_HZ
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    duration_s: float = DEFAULT_DURATION_S
    interference: tuple[Tone, ...] = ()

    def validate(self) -> None:
        """Raise :class:`SignalSpecError` if any invariant is violated."""
        numbers = (self.amplitude_rms, self.frequency_hz, self.phase_rad,
                   self.nominal_frequency_hz, self.sample_rate_hz, self.duration_s)
        if not all(math.isfinite(x) for x in numbers):
            raise SignalSpecError("signal parameters must be finite")
        if self.amplitude_rms < 0:
            raise SignalSpecError(f"amplitude_rms must be >= 0, got {self.amplitude_rms}")
        if self.frequency_hz <= 0 or self.nominal_frequency_hz <= 0:
            raise SignalSpecError("frequencies must be positive")
        if self.sample_rate_hz <= 2 * self.frequency_hz:
            raise SignalSpecError(
                f"sample rate {self.sample_rate_hz} Hz does not satisfy Nyquist "
                f"for {self.frequency_hz} Hz")
        if self.duration_s <= 0:
            raise SignalSpecError(f"duration_s must be > 0, got {self.duration_s}")
        for tone in self.interference:
            if tone.amplitude_fraction < 0:
                raise SignalSpecError("interference amplitude_fraction must be >= 0")
            if tone.frequency_hz <= 0 or not math.isfinite(tone.frequency_hz):
                raise SignalSpecError("interference frequency must be positive")

    @property
    def n_samples(self) -> int:
        # small slack so 2.0 s * 10 kHz is 20000 and not 19999
        return int(math.floor(self.duration_s * self.sample_rate_hz + 1e-9))

    def with_(self, **changes) -> "SignalSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class SampleStream:
    times_s: np.ndarray
    values: np.ndarray
    channel_label: str = "v"

    def __post_init__(self):
        t = np.array(self.times_s, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.ndim != 1 or v.ndim != 1 or t.shape != v.shape:
            raise SignalSpecError("times_s and values must be 1-D and of equal length")
        if t.size < 2:
            raise SignalSpecError("a stream needs at least 2 samples")
        steps = np.diff(t)
        if not np.all(steps > 0):
            bad = int(np.argmin(steps > 0)) + 1
            raise InvalidTimebaseError(
                f"timestamps not strictly increasing at sample {bad}", sample_index=bad)
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def scaled(self, factor: float) -> "SampleStream":
        return SampleStream(self.times_s, self.values * factor, self.channel_label)

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, target) -> None:
        """Write ``time_s,value`` rows; values use 17 significant digits (lossless)."""
        if isinstance(target, (str, os.PathLike)):
            with open(target, "w", newline="") as fh:
                self.to_csv(fh)
            return
        target.write("time_s,value\n")
        for t, v in zip(self.times_s.tolist(), self.values.tolist()):
            target.write(f"{t!r},{v!r}\n")

    @classmethod
    def from_csv(cls, source, channel_label: str = "v") -> "SampleStream":
        if isinstance(source, (str, os.PathLike)):
            with open(source, newline="") as fh:
                return cls.from_csv(fh, channel_label)
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None:
            raise StreamParseError("empty file", line=1)
        if [h.strip().lower() for h in header] != ["time_s", "value"]:
            raise StreamParseError(f"expected header 'time_s,value', got {header!r}", line=1)
        times, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise StreamParseError(f"expected 2 columns, got {len(row)}", line=lineno)
            try:
                times.append(float(row[0]))
                values.append(float(row[1]))
            except ValueError as exc:
                raise StreamParseError(str(exc), line=lineno) from None
        if len(times) < 2:
            raise StreamParseError("need at least 2 samples")
        return cls(np.array(times), np.array(values), channel_label)

    @classmethod
    def from_csv_text(cls, text: str, channel_label: str = "v") -> "SampleStream":
        return cls.from_csv(io.StringIO(text), channel_label)


def _exact(x: float) -> Fraction:
    # shortest decimal repr, so 49.7 is 497/10 rather than its binary neighbour
    return Fraction(repr(float(x)))


def cycle_fraction(frequency_hz: float, sample_rate_hz: float, n: int) -> np.ndarray:
    """Fractional cycle count ``frac(f * k / fs)`` for ``k = 0 .. n-1``.

    The reduction is done in integer arithmetic on the decimal values of
    ``f`` and ``fs`` so the phase argument handed to ``cos`` stays in
    ``[0, 1)`` cycles with no accumulated rounding, however long the stream.
    """
    ratio = _exact(frequency_hz) / _exact(sample_rate_hz)
    p, q = ratio.numerator, ratio.denominator
    if q < 2**53 and abs(p) * max(n - 1, 1) < 2**62:
        k = np.arange(n, dtype=np.int64)
        return np.mod(k * p, q).astype(float) / float(q)
    k = np.arange(n, dtype=float)
    return np.mod(k * (frequency_hz / sample_rate_hz), 1.0)


def _tone(cycles: np.ndarray, peak: float, phase: float) -> np.ndarray:
    return peak * np.cos(2.0 * math.pi * cycles + phase)


def synthesize(spec: SignalSpec, channel_label: str = "v") -> SampleStream:
    """Sample ``spec`` uniformly at ``spec.sample_rate_hz`` starting at t = 0."""
    spec.validate()
    n = spec.n_samples
    if n < 2:
        raise SignalSpecError("duration too short for 2 samples")
    fs = spec.sample_rate_hz
    times = np.arange(n, dtype=float) / fs
    values = _tone(cycle_fraction(spec.frequency_hz, fs, n),
                   SQRT2 * spec.amplitude_rms, spec.phase_rad)
    for tone in spec.interference:
        values = values + _tone(cycle_fraction(tone.frequency_hz, fs, n),
                                SQRT2 * tone.amplitude_fraction * spec.amplitude_rms,
                                tone.phase_rad)
    return SampleStream(times, values, channel_label)


def add_interference(stream: SampleStream, tone: Tone, fundamental_rms: float) -> SampleStream:
    """Return a new stream with ``tone`` added pointwise; ``stream`` is untouched."""
    if tone.amplitude_fraction < 0:
        raise SignalSpecError("interference amplitude_fraction must be >= 0")
    if tone.amplitude_fraction == 0:
        return SampleStream(stream.times_s, stream.values.copy(), stream.channel_label)
    peak = SQRT2 * tone.amplitude_fraction * fundamental_rms
    added = peak * np.cos(2.0 * math.pi * tone.frequency_hz * stream.times_s + tone.phase_rad)
    return SampleStream(stream.times_s, stream.values + added, stream.channel_label)


def nominal_inputs(rms: float = 230.0, f0: float = DEFAULT_NOMINAL_HZ,
                   **kw) -> list[SignalSpec]:
    """The four nominal-frequency inputs (phases -pi/6, 0, +pi/6, -pi)."""
    return [SignalSpec(rms, f0, phase, f0, **kw)
            for phase in (-math.pi / 6, 0.0, math.pi / 6, -math.pi)]


def off_nominal_inputs(rms: float = 230.0, f0: float = DEFAULT_NOMINAL_HZ,
                       freqs: Sequence[float] = (49.5, 49.7, 50.3, 50.7),
                       **kw) -> list[SignalSpec]:
    """The four off-nominal inputs, all at phase +pi/2."""
    return [SignalSpec(rms, f, math.pi / 2, f0, **kw) for f in freqs]
