"""Amplitude, frequency, sampling-rate and ROCOF tracking, and the full pipeline.

All trackers return one value per input sample. Warm-up samples (before
the first full zero-crossing period, or before enough frequency
increments exist) are back-filled with the first defined value, so the
series are always complete; callers that care about accuracy should skip
the first :func:`settling_samples` samples.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from . import kernels
from .errors import (InvalidTimebaseError, PipelineError, PmuError, UnrecoverableCorrectionError,
                     UnsupportedRateError, UntrackableSignalError)
from .phasor import (SINGULAR_DET, TWO_PI, PhasorEstimate, invert_pq, pq_series,
                     sliding_phasors, wrap_angle)
from .waveform import SampleStream

RMS_AVERAGE = 15
FREQUENCY_AVERAGE = 20
#: samples with |u| above 1 - guard sit on a cosine extremum and are skipped
EXTREMUM_GUARD = 1e-6
#: below this offset from f0 the raw DFT is used without P/Q correction
NOMINAL_TOLERANCE_HZ = 1e-6

_sliding = np.lib.stride_tricks.sliding_window_view


@dataclass(frozen=True)
class ZeroCrossingPeriods:
    """Rising zero crossings and the whole-sample periods between them."""

    positions: np.ndarray  # fractional sample positions (linear interpolation)
    indices: np.ndarray  # positions rounded to the nearest sample
    periods: np.ndarray  # indices[i+1] - indices[i]

    def per_sample(self, n_samples: int) -> np.ndarray:
        """Period in force at each sample: the latest period completed by then."""
        ends = self.indices[1:]
        slot = np.searchsorted(ends, np.arange(n_samples), side="right") - 1
        return self.periods[np.clip(slot, 0, None)]


def detect_zero_crossing_period(stream: SampleStream,
                                min_period_samples: float = 1) -> ZeroCrossingPeriods:
    """Locate rising (negative to non-negative) crossings.

    Crossings closer than ``min_period_samples`` to the previous accepted
    one are ignored, which keeps high-order harmonics from splitting a
    period.
    """
    v = stream.values
    hits = np.nonzero((v[:-1] < 0) & (v[1:] >= 0))[0]
    if hits.size < 2:
        raise UntrackableSignalError("fewer than two rising zero crossings",
                                     sample_index=int(hits[0]) + 1 if hits.size else 0)
    lo, hi = v[hits], v[hits + 1]
    positions = hits + (-lo) / (hi - lo)
    keep = [0]
    for i in range(1, positions.size):
        if positions[i] - positions[keep[-1]] >= min_period_samples:
            keep.append(i)
    positions = positions[keep]
    if positions.size < 2:
        raise UntrackableSignalError("fewer than two usable rising zero crossings")
    indices = np.rint(positions).astype(np.int64)
    return ZeroCrossingPeriods(positions, indices, np.diff(indices))


def _backfill(series: np.ndarray, what: str) -> np.ndarray:
    finite = np.isfinite(series)
    if not finite.any():
        raise UntrackableSignalError(f"no defined {what} value")
    first = int(np.argmax(finite))
    out = series.copy()
    out[:first] = out[first]
    bad = ~np.isfinite(out)
    if bad.any():
        raise UntrackableSignalError(f"{what} undefined", sample_index=int(np.argmax(bad)))
    return out


def trailing_mean(series: np.ndarray, width: int) -> np.ndarray:
    """Trailing moving average; the first ``width - 1`` outputs average what exists."""
    series = np.asarray(series, dtype=float)
    out = np.empty_like(series)
    head = min(width - 1, series.size)
    for m in range(head):
        out[m] = series[: m + 1].mean()
    if series.size >= width:
        out[width - 1:] = _sliding(series, width).mean(axis=1)
    return out


def rms_track(stream: SampleStream, periods: np.ndarray | None = None,
              method: str = "sine", min_period_samples: float = 1) -> np.ndarray:
    """Per-sample RMS over the trailing zero-crossing period, then a 15-point average.

    ``method="mean_square"`` is the plain ``sqrt(sum v^2 / T)`` over the
    last T samples. It is exact only when T spans whole cycles, so at
    off-nominal frequencies it carries a leakage ripple of order 1/T.

    ``method="sine"`` (default) uses the same window but removes that
    leakage for sinusoidal input: with ``c = cos(w dt)`` and the sample
    identity ``v[n]^2 - v[n-1] v[n+1] = A^2 sin^2(w dt)``,

        c     = sum v[n] (v[n-1] + v[n+1]) / (2 sum v[n]^2)
        RMS^2 = sum (v[n]^2 - v[n-1] v[n+1]) / (2 T (1 - c^2))

    with the T centres ``n`` ending one sample before the current one.
    Where the ratio is undefined (DC, zero signal) the mean-square value
    is used.
    """
    v = stream.values
    size = v.size
    if periods is None:
        periods = detect_zero_crossing_period(stream, min_period_samples).per_sample(size)
    periods = np.asarray(periods, dtype=np.int64)

    mean_sq = kernels.trailing_sums(v * v, periods) / periods
    if method == "mean_square":
        raw = np.sqrt(mean_sq)
    elif method == "sine":
        mid, prev, nxt = v[1:-1], v[:-2], v[2:]
        # index c of these arrays is centre sample c + 1; sample m uses centres m-T .. m-1
        lengths = periods[2:]
        s0 = kernels.trailing_sums(mid * mid, lengths)
        s_res = kernels.trailing_sums(mid * mid - prev * nxt, lengths)
        s_curv = kernels.trailing_sums(mid * (2 * mid - prev - nxt), lengths)
        with np.errstate(divide="ignore", invalid="ignore"):
            one_minus_c = s_curv / (2 * s0)
            sin2 = one_minus_c * (2 - one_minus_c)
            sine_ms = s_res / (2 * lengths * sin2)
        usable = (sin2 > 0) & np.isfinite(sine_ms) & (sine_ms >= 0)
        ms = mean_sq.copy()
        ms[2:][usable] = sine_ms[usable]
        raw = np.sqrt(ms)
    else:
        raise ValueError(f"unknown rms method {method!r}")
    return trailing_mean(_backfill(raw, "rms"), RMS_AVERAGE)


def frequency_track(stream: SampleStream, rms_series: np.ndarray,
                    guard: float = EXTREMUM_GUARD) -> np.ndarray:
    """Frequency from arccos phase increments of the amplitude-normalised signal.

    ``u = v / (sqrt(2) * rms)`` is clamped to [-1, 1]; each step contributes
    ``(acos u[n] - acos u[n-1]) / (2 pi (t[n] - t[n-1]))`` with its sign
    flipped while the waveform rises (acos is decreasing on that branch).
    Steps that straddle a peak or trough, or touch |u| > 1 - guard, are
    dropped; validating step n needs v[n+1], so the value reported at
    sample n averages the last 20 valid steps up to n - 1.
    """
    v, t = stream.values, stream.times_s
    vmax = math.sqrt(2.0) * np.asarray(rms_series, dtype=float)
    if not np.all(vmax > 0):
        raise UntrackableSignalError("zero amplitude, cannot normalise",
                                     sample_index=int(np.argmin(vmax > 0)))
    u = np.clip(v / vmax, -1.0, 1.0)
    phase = np.arccos(u)
    slope = np.sign(np.diff(v))  # slope[j-1] is the sign of step j
    step = np.diff(phase)
    step = np.where(slope > 0, -step, step)
    freq_step = step / (TWO_PI * np.diff(t))

    size = v.size
    valid = np.zeros(size, dtype=bool)  # valid[j]: step j (from j-1 to j) usable
    j = np.arange(2, size - 1)
    valid[j] = ((slope[j - 2] == slope[j - 1]) & (slope[j - 1] == slope[j])
                & (slope[j - 1] != 0)
                & (np.abs(u[j]) <= 1 - guard) & (np.abs(u[j - 1]) <= 1 - guard))
    steps = np.nonzero(valid)[0]
    if steps.size == 0:
        raise UntrackableSignalError("no monotonic cosine segments to measure")
    averaged = trailing_mean(freq_step[steps - 1], FREQUENCY_AVERAGE)
    slot = np.searchsorted(steps, np.arange(size) - 1, side="right") - 1
    return averaged[np.clip(slot, 0, None)]


def detect_sample_rate(times_s) -> np.ndarray:
    """``1 / (t[n] - t[n-1])`` per sample; sample 0 repeats sample 1."""
    t = np.asarray(times_s, dtype=float)
    if t.size < 2:
        raise InvalidTimebaseError("need at least two timestamps")
    dt = np.diff(t)
    if not np.all(dt > 0):
        bad = int(np.argmin(dt > 0)) + 1
        raise InvalidTimebaseError(f"timestamps not strictly increasing at sample {bad}",
                                   sample_index=bad)
    rate = 1.0 / dt
    return np.concatenate([rate[:1], rate])


def _micro(x: float) -> int:
    return int(round(float(x) * 1_000_000))


def window_ratio(f0_hz: float, sample_rate_hz: float) -> Fraction:
    """``f0 / Fs`` in lowest terms, both rates rounded to 1e-6 Hz."""
    if not (f0_hz > 0 and sample_rate_hz > 0):
        raise UnsupportedRateError("rates must be positive")
    ratio = Fraction(_micro(f0_hz), _micro(sample_rate_hz))
    if ratio.denominator > 1_000_000:
        raise UnsupportedRateError(
            f"f0/Fs = {f0_hz}/{sample_rate_hz} needs a {ratio.denominator}-sample window")
    return ratio


def derive_n(f0_hz: float, sample_rate_hz: float) -> int:
    """Samples per DFT window: the denominator of f0/Fs in lowest terms."""
    return window_ratio(f0_hz, sample_rate_hz).denominator


def rocof_track(frequency_series, times_s) -> np.ndarray:
    """First difference of frequency over time; 0 at the first sample."""
    f = np.asarray(frequency_series, dtype=float)
    t = np.asarray(times_s, dtype=float)
    if f.shape != t.shape:
        raise ValueError("frequency series and times must align")
    dt = np.diff(t)
    if not np.all(dt > 0):
        bad = int(np.argmin(dt > 0)) + 1
        raise InvalidTimebaseError(f"timestamps not strictly increasing at sample {bad}",
                                   sample_index=bad)
    return np.concatenate([[0.0], np.diff(f) / dt])


def settling_samples(f0_hz: float, sample_rate_hz: float) -> int:
    """Samples before tracker output counts as converged: two nominal cycles + 20."""
    return 2 * int(round(sample_rate_hz / f0_hz)) + FREQUENCY_AVERAGE


# -- frames -------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementFrame:
    timestamp_s: float
    rms: float
    frequency_hz: float
    rocof_hz_per_s: float
    sample_rate_hz: float
    n_samples_per_cycle: int
    phasor: PhasorEstimate

    @property
    def angle_deg(self) -> float:
        return self.phasor.angle_deg


FRAME_FIELDS = ("timestamp_s", "rms", "frequency_hz", "rocof", "sample_rate_hz", "n",
                "phasor_re", "phasor_im", "angle_deg")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.13g}"


@dataclass(frozen=True)
class FrameSeries:
    """Column-oriented frame storage; indexing yields :class:`MeasurementFrame`."""

    timestamp_s: np.ndarray
    rms: np.ndarray
    frequency_hz: np.ndarray
    rocof_hz_per_s: np.ndarray
    sample_rate_hz: np.ndarray
    n_samples_per_cycle: int
    phasor: np.ndarray  # complex synchrophasors
    first_sample: int = 0  # stream index of the newest sample in frame 0
    settle_index: int = 0  # first frame counted as converged

    def __len__(self) -> int:
        return self.timestamp_s.size

    def __getitem__(self, i: int) -> MeasurementFrame:
        i = range(len(self))[i]
        return MeasurementFrame(float(self.timestamp_s[i]), float(self.rms[i]),
                                float(self.frequency_hz[i]), float(self.rocof_hz_per_s[i]),
                                float(self.sample_rate_hz[i]), self.n_samples_per_cycle,
                                PhasorEstimate.from_complex(self.phasor[i], self.timestamp_s[i]))

    def __iter__(self) -> Iterator[MeasurementFrame]:
        for i in range(len(self)):
            yield self[i]

    @property
    def angle_rad(self) -> np.ndarray:
        return wrap_angle(np.angle(self.phasor))

    def converged(self) -> "FrameSeries":
        s = slice(self.settle_index, None)
        return FrameSeries(self.timestamp_s[s], self.rms[s], self.frequency_hz[s],
                           self.rocof_hz_per_s[s], self.sample_rate_hz[s],
                           self.n_samples_per_cycle, self.phasor[s],
                           self.first_sample + self.settle_index, 0)

    def rows(self) -> Iterator[tuple]:
        ang = np.degrees(self.angle_rad)
        for i in range(len(self)):
            z = self.phasor[i]
            yield (self.timestamp_s[i], self.rms[i], self.frequency_hz[i],
                   self.rocof_hz_per_s[i], self.sample_rate_hz[i], self.n_samples_per_cycle,
                   z.real, z.imag, ang[i])

    def to_csv(self, target) -> None:
        if not hasattr(target, "write"):
            with open(target, "w", newline="") as fh:
                return self.to_csv(fh)
        target.write(",".join(FRAME_FIELDS) + "\n")
        for row in self.rows():
            target.write(",".join(_fmt(x) for x in row) + "\n")

    def to_records(self) -> list[dict]:
        return [{k: (int(x) if k == "n" else float(x)) for k, x in zip(FRAME_FIELDS, row)}
                for row in self.rows()]

    def to_json(self, target=None, indent=None) -> str | None:
        text = json.dumps(self.to_records(), indent=indent)
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w") as fh:
                fh.write(text)
        return None

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _reference_rotation(t0: float, f0_hz: float) -> complex:
    """``exp(-j w0 t0)`` with the cycle count reduced exactly."""
    if t0 == 0:
        return 1 + 0j
    turns = (Fraction(repr(float(t0))) * Fraction(repr(float(f0_hz)))) % 1
    return complex(np.exp(-1j * TWO_PI * float(turns)))


def synchrophasors(raw, window_start, frequency_hz, f0_hz: float, sample_rate_hz: float,
                   n_samples: int, t0_s: float = 0.0) -> np.ndarray:
    """Turn raw window phasors into synchrophasors at each window's newest sample.

    ``raw[i]`` is the nominal-bin DFT of the window starting at local sample
    ``window_start[i]`` and ``frequency_hz[i]`` the tracked input frequency
    there. Windows within 1e-6 Hz of nominal pass through unchanged;
    the rest are P/Q-inverted and rotated by ``(w - w0) * t``.
    """
    raw = np.asarray(raw, dtype=complex)
    r = np.asarray(window_start)
    freq = np.asarray(frequency_hz, dtype=float)
    out = raw.copy()
    off = np.abs(freq - f0_hz) > NOMINAL_TOLERANCE_HZ
    if off.any():
        dt = 1.0 / sample_rate_hz
        w0 = TWO_PI * f0_hz
        omega = TWO_PI * freq[off]
        p, q = pq_series(n_samples, omega, w0, dt)
        x, det = invert_pq(raw[off], p, q, r[off], omega, w0, dt)
        singular = ~(np.abs(det) > SINGULAR_DET)
        if singular.any():
            k = int(np.argmax(singular))
            raise UnrecoverableCorrectionError(
                f"P/Q system singular at {omega[k] / TWO_PI:.6g} Hz (window {int(r[off][k])})")
        newest = r[off] + (n_samples - 1)
        out[off] = x * np.exp(1j * (omega - w0) * newest * dt)
    return out * _reference_rotation(t0_s, f0_hz)


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PipelineError:
        raise
    except PmuError as exc:
        raise PipelineError(name, exc, getattr(exc, "sample_index", None)) from exc


def run_pipeline(stream: SampleStream, f0_hz: float = 50.0, *, rms_method: str = "sine",
                 correct: bool = True, guard: float = EXTREMUM_GUARD) -> FrameSeries:
    """Run every tracker and the phasor estimator over ``stream``.

    One frame is emitted per full DFT window, stamped with the time of the
    window's newest sample. Off nominal (|f - f0| > 1e-6 Hz) each raw
    window phasor is corrected with the P/Q inversion at the tracked
    frequency and rotated to that timestamp, so the output is the
    synchrophasor ``X exp(j (w - w0) t)``.
    """
    times, values = stream.times_s, stream.values
    rates = _stage("sample-rate", detect_sample_rate, times)
    fs = float(np.median(rates))
    spread = np.abs(rates / fs - 1.0)
    if spread.max() > 1e-6:
        bad = int(np.argmax(spread > 1e-6))
        raise PipelineError("sample-rate", InvalidTimebaseError("non-uniform sampling"), bad)
    ratio = _stage("window", window_ratio, f0_hz, fs)
    n, cycles = ratio.denominator, ratio.numerator
    if n < 2:
        raise PipelineError("window", UnsupportedRateError(f"N = {n} is too short"))
    nominal_period = fs / f0_hz
    if values.size < max(2 * nominal_period, n):
        raise PipelineError("input", UntrackableSignalError(
            "stream shorter than two nominal cycles"), values.size)

    crossings = _stage("zero-crossing", detect_zero_crossing_period, stream,
                       min_period_samples=0.5 * nominal_period)
    periods = crossings.per_sample(values.size)
    rms = _stage("rms", rms_track, stream, periods, method=rms_method)
    freq = _stage("frequency", frequency_track, stream, rms, guard=guard)
    rocof = _stage("rocof", rocof_track, freq, times)

    raw = sliding_phasors(values, n, cycles)
    newest = np.arange(n - 1, values.size)
    f_frame = freq[newest]
    if correct:
        phasors = _stage("phasor-correction", synchrophasors, raw, np.arange(raw.size),
                         f_frame, f0_hz, fs, n, float(times[0]))
    else:
        phasors = raw * _reference_rotation(float(times[0]), f0_hz)

    settle = max(0, settling_samples(f0_hz, fs) - (n - 1))
    return FrameSeries(times[newest].copy(), rms[newest], f_frame, rocof[newest],
                       rates[newest], n, phasors, first_sample=n - 1,
                       settle_index=min(settle, newest.size))
