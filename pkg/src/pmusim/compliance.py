"""Steady-state compliance harness: TVE, requirement limits and test campaigns."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import PmuError, UndefinedReferenceError
from .phasor import TWO_PI, PhasorEstimate, dft_window, wrap_angle
from .trackers import FrameSeries, run_pipeline, synchrophasors
from .waveform import SampleStream, SignalSpec, Tone, synthesize

TVE_LIMIT = 0.01
OOB_TVE_LIMIT = 0.013

DEFAULT_F0 = 50.0
DEFAULT_RMS = 230.0
DEFAULT_FPS = 25.0
DEFAULT_CASE_DURATION_S = 2.0

TEST_NAMES = ("frequency", "magnitude", "phase_angle", "harmonic", "out_of_band")


# -- TVE ------------------------------------------------------------------------

@dataclass(frozen=True)
class TveSample:
    timestamp_s: float
    tve_fraction: float

    @property
    def percent(self) -> float:
        return 100.0 * self.tve_fraction


def tve_values(estimate, truth, denominator: str = "true") -> np.ndarray:
    """Vectorised TVE between complex phasor arrays.

    ``denominator="true"`` normalises by the reference phasor,
    ``"paper"`` by the estimate.
    """
    est = np.asarray(estimate, dtype=complex)
    ref = np.asarray(truth, dtype=complex)
    if denominator == "true":
        scale = np.abs(ref)
    elif denominator == "paper":
        scale = np.abs(est)
    else:
        raise ValueError(f"unknown TVE denominator {denominator!r}")
    if np.any(np.abs(ref) == 0):
        raise UndefinedReferenceError("TVE against a zero-magnitude reference")
    if np.any(scale == 0):
        raise UndefinedReferenceError("TVE with a zero-magnitude denominator")
    return np.abs(est - ref) / scale


def tve(estimate: PhasorEstimate, truth: PhasorEstimate, denominator: str = "true") -> TveSample:
    value = tve_values(estimate.value, truth.value, denominator)
    return TveSample(estimate.timestamp_s, float(value))


def true_phasor(spec: SignalSpec, t_s: float) -> PhasorEstimate:
    """Reference synchrophasor of the fundamental of ``spec`` at time ``t_s``."""
    angle = spec.phase_rad + TWO_PI * (spec.frequency_hz - spec.nominal_frequency_hz) * t_s
    return PhasorEstimate.from_polar(spec.amplitude_rms, wrap_angle(angle), t_s)


def true_phasor_series(spec: SignalSpec, times_s) -> np.ndarray:
    t = np.asarray(times_s, dtype=float)
    angle = spec.phase_rad + TWO_PI * (spec.frequency_hz - spec.nominal_frequency_hz) * t
    return spec.amplitude_rms * np.exp(1j * angle)


# -- requirement matrix ------------------------------------------------------------

@dataclass(frozen=True)
class Requirement:
    influence: str
    reference: str
    p_range: str
    p_max_tve_percent: Optional[float]
    m_range: str
    m_max_tve_percent: Optional[float]


REQUIREMENTS = (
    Requirement("signal frequency", "f0", "+-2.0 Hz", 1.0,
                "+-2.0 Hz for Fs < 10, +-Fs/5 for 10 <= Fs < 25, +-5.0 Hz for Fs >= 25", 1.0),
    Requirement("voltage magnitude", "100% rated", "80% to 120%", 1.0, "10% to 120%", 1.0),
    Requirement("current magnitude", "100% rated", "10% to 200%", 1.0, "10% to 200%", 1.0),
    Requirement("phase angle, |f_in - f0| < 0.25 Hz", "constant or slowly varying",
                "+-pi rad", 1.0, "+-pi rad", 1.0),
    Requirement("single harmonic", "THD < 0.2%", "1%, each up to 50th", 1.0,
                "10%, each up to 50th", 1.0),
    Requirement("out-of-band interference", "< 0.2% of input", "< 0.2% of input", None,
                "none for Fs < 10; 10% of input for Fs >= 10", 1.3),
)


def frequency_deviation_hz(perf_class: str, reporting_rate_fps: float) -> float:
    """Half-width of the steady-state frequency range for a class."""
    if perf_class == "P":
        return 2.0
    if perf_class == "M":
        if reporting_rate_fps < 10:
            return 2.0
        if reporting_rate_fps < 25:
            return reporting_rate_fps / 5.0
        return 5.0
    raise ValueError(f"performance class must be 'P' or 'M', got {perf_class!r}")


def passband_halfwidth(reporting_rate_fps: float) -> float:
    return reporting_rate_fps / 2.0


def is_out_of_band(f_hz: float, f0_hz: float, reporting_rate_fps: float) -> bool:
    return abs(f_hz - f0_hz) >= passband_halfwidth(reporting_rate_fps)


def oob_fundamental_band(reporting_rate_fps: float, f0_hz: float = DEFAULT_F0):
    """Fundamental range for interference testing: f0 +- 10% of the reporting Nyquist."""
    half = 0.1 * reporting_rate_fps / 2.0
    return f0_hz - half, f0_hz + half


# -- reference results -------------------------------------------------------------

#: Reference max TVE per influence value, in the units they were reported (see README).
REFERENCE_TVE = {
    ("frequency", "P"): {48: 0.0004, 49: 0.0004, 50: 0.0, 51: 0.0004, 52: 0.0004},
    ("frequency", "M"): {45: 0.0010, 46: 0.0017, 47: 0.0098, 48: 0.0004, 49: 0.0004,
                         50: 0.0, 51: 0.0004, 52: 0.0004, 53: 0.0180, 54: 0.0017,
                         55: 0.0010},
    ("magnitude", None): {10: 0.3792e-13, 30: 0.3656e-13, 50: 0.3608e-13, 70: 0.3707e-13,
                          90: 0.3611e-13, 110: 0.3505e-13, 130: 0.3517e-13,
                          150: 0.3517e-13, 170: 0.3601e-13, 190: 0.3700e-13,
                          200: 0.3675e-13},
    ("phase_angle", None): {k: v for k, v in zip(
        range(9), (0.3586e-13, 0.3954e-13, 0.7056e-13, 0.4029e-13, 0.6577e-13,
                   0.6623e-13, 0.4325e-13, 0.6315e-13, 0.5718e-13))},
    ("out_of_band", 10.0): {49.5: 0.0, 49.625: 0.0052, 49.75: 0.0, 49.875: 0.0027,
                            50.0: 0.0, 50.125: 0.0030, 50.25: 0.0002, 50.375: 0.0038,
                            50.5: 0.0003},
    ("out_of_band", 25.0): {48.75: 0.0, 49.0: 0.0, 49.25: 0.0005, 49.5: 0.0, 49.75: 0.0,
                            50.0: 0.0, 50.25: 0.0002, 50.5: 0.0003, 50.75: 0.0012,
                            51.0: 0.0006, 51.25: 0.0008},
}

KNOWN_ANOMALY_HZ = 53.0
KNOWN_ANOMALY_NOTE = ("known anomaly: reference results report max TVE 1.8% at 53 Hz "
                      "(isolated; neighbouring frequencies stay below 1%)")
HARMONIC_NOTE = ("informational: harmonics at f >= 2 f0 are outside the estimator's "
                 "design range; the single-bin DFT cannot separate them")


def reference_tve(test_name: str, key, influence_value: float) -> Optional[float]:
    table = REFERENCE_TVE.get((test_name, key))
    if table is None:
        return None
    for k, v in table.items():
        if math.isclose(float(k), float(influence_value), abs_tol=1e-9):
            return v
    return None


# -- cases and results -------------------------------------------------------------

@dataclass(frozen=True)
class ComplianceCase:
    test_name: str
    perf_class: str
    influence_value: float
    reporting_rate_fps: float
    signal_spec: SignalSpec
    tve_limit_fraction: float = TVE_LIMIT
    variant: str = ""
    informational: bool = False

    def __post_init__(self):
        if self.test_name not in TEST_NAMES:
            raise ValueError(f"unknown test {self.test_name!r}")
        if self.perf_class not in ("P", "M"):
            raise ValueError(f"performance class must be 'P' or 'M', got {self.perf_class!r}")
        if self.tve_limit_fraction not in (TVE_LIMIT, OOB_TVE_LIMIT):
            raise ValueError(f"unsupported TVE limit {self.tve_limit_fraction}")
        if not self.reporting_rate_fps > 0:
            raise ValueError("reporting rate must be positive")


@dataclass(frozen=True)
class ComplianceResult:
    case: ComplianceCase
    max_tve_fraction: float
    frames_evaluated: int
    notes: str = ""
    error: Optional[str] = None
    reference_value: Optional[float] = None
    oracle_max_tve_fraction: Optional[float] = None
    denominator: str = "true"

    @property
    def passed(self) -> bool:
        return self.error is None and self.max_tve_fraction <= self.case.tve_limit_fraction

    @property
    def hard_failure(self) -> bool:
        return not self.passed and not self.case.informational

    @property
    def max_tve_percent(self) -> float:
        return 100.0 * self.max_tve_fraction


def reporting_indices(frames: FrameSeries, reporting_rate_fps: float,
                      start_index: Optional[int] = None) -> np.ndarray:
    """Frame index nearest to each reporting instant k / Fs in the converged span."""
    ts = frames.timestamp_s
    start = frames.settle_index if start_index is None else start_index
    if start >= ts.size:
        return np.empty(0, dtype=np.int64)
    first = math.ceil(ts[start] * reporting_rate_fps - 1e-9)
    last = math.floor(ts[-1] * reporting_rate_fps + 1e-9)
    instants = np.arange(first, last + 1) / reporting_rate_fps
    right = np.clip(np.searchsorted(ts, instants), start, ts.size - 1)
    left = np.clip(right - 1, start, ts.size - 1)
    pick_left = np.abs(ts[left] - instants) <= np.abs(ts[right] - instants)
    return np.unique(np.where(pick_left, left, right))


def pure_reference(spec: SignalSpec) -> SignalSpec:
    return replace(spec, interference=())


def direct_phasors(stream: SampleStream, frames: FrameSeries, frame_index: Sequence[int],
                   f0_hz: float = DEFAULT_F0) -> np.ndarray:
    """Synchrophasors recomputed by direct summation over each frame's window.

    Independent of the recursive path: every window is summed from scratch
    and rotated to absolute sample index before the same P/Q correction.
    """
    n = frames.n_samples_per_cycle
    fs = float(np.median(frames.sample_rate_hz))
    cycles = max(1, round(n * f0_hz / fs))
    idx = np.asarray(frame_index, dtype=np.int64)
    starts = idx + frames.first_sample - (n - 1)
    raw = np.empty(idx.size, dtype=complex)
    for i, r in enumerate(starts):
        base = dft_window(stream.values[r:r + n], n_samples=n, cycles=cycles).value
        k = (int(r) * cycles) % n
        raw[i] = base * np.exp(-1j * TWO_PI * k / n)
    return synchrophasors(raw, starts, frames.frequency_hz[idx], f0_hz, fs, n,
                          float(stream.times_s[0]))


def evaluate_case(case: ComplianceCase, denominator: str = "true", *,
                  cross_check: bool = False, notes: str = "") -> ComplianceResult:
    """Synthesize, estimate, and take the max TVE over converged reporting instants."""
    spec = case.signal_spec
    try:
        stream = synthesize(spec)
        frames = run_pipeline(stream, spec.nominal_frequency_hz)
        idx = reporting_indices(frames, case.reporting_rate_fps)
        if idx.size == 0:
            raise PmuError("no converged reporting instants; lengthen the case")
        truth = true_phasor_series(pure_reference(spec), frames.timestamp_s[idx])
        values = tve_values(frames.phasor[idx], truth, denominator)
        oracle = None
        if cross_check:
            direct = direct_phasors(stream, frames, idx, spec.nominal_frequency_hz)
            oracle = float(tve_values(direct, truth, denominator).max())
        return ComplianceResult(case, float(values.max()), int(idx.size), notes,
                                oracle_max_tve_fraction=oracle, denominator=denominator)
    except PmuError as exc:
        return ComplianceResult(case, math.inf, 0, notes, error=f"{type(exc).__name__}: {exc}",
                                denominator=denominator)


def _run_all(jobs: list[tuple[ComplianceCase, dict]], workers: int) -> list[ComplianceResult]:
    def one(job):
        case, kw = job
        return evaluate_case(case, **kw)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    return sorted(results, key=lambda r: (r.case.variant, r.case.influence_value))


def _spec(rms, freq, phase, f0, sample_rate_hz, duration_s, tones=()) -> SignalSpec:
    return SignalSpec(rms, freq, phase, f0, sample_rate_hz, duration_s, tuple(tones))


def _with_reference(result: ComplianceResult, value: Optional[float]) -> ComplianceResult:
    return replace(result, reference_value=value)


def run_frequency_test(perf_class: str = "P", f0: float = DEFAULT_F0,
                       rated_rms: float = DEFAULT_RMS, *,
                       reporting_rate_fps: float = DEFAULT_FPS, step_hz: float = 1.0,
                       sample_rate_hz: float = 10_000.0,
                       duration_s: float = DEFAULT_CASE_DURATION_S,
                       denominator: str = "true", workers: int = 1) -> list[ComplianceResult]:
    """Sweep the input frequency over the class range at 100% magnitude, angle -pi/3.

    ``step_hz=0.1`` gives the fine diagnostic sweep.
    """
    dev = frequency_deviation_hz(perf_class, reporting_rate_fps)
    count = int(round(2 * dev / step_hz))
    grid = [round(f0 - dev + i * step_hz, 9) for i in range(count + 1)]
    jobs = []
    for f in grid:
        notes = KNOWN_ANOMALY_NOTE if math.isclose(f, KNOWN_ANOMALY_HZ) else ""
        case = ComplianceCase("frequency", perf_class, f, reporting_rate_fps,
                              _spec(rated_rms, f, -math.pi / 3, f0, sample_rate_hz, duration_s))
        jobs.append((case, {"denominator": denominator, "notes": notes}))
    results = _run_all(jobs, workers)
    return [_with_reference(r, reference_tve("frequency", perf_class, r.case.influence_value))
            for r in results]


MAGNITUDE_PERCENTS = (10, 30, 50, 70, 90, 110, 130, 150, 170, 190, 200)


def run_magnitude_test(f0: float = DEFAULT_F0, rated_rms: float = DEFAULT_RMS, *,
                       percents: Sequence[float] = MAGNITUDE_PERCENTS,
                       perf_class: str = "M", reporting_rate_fps: float = DEFAULT_FPS,
                       sample_rate_hz: float = 10_000.0,
                       duration_s: float = DEFAULT_CASE_DURATION_S,
                       denominator: str = "true", workers: int = 1) -> list[ComplianceResult]:
    """Voltage and current magnitude ranges run as one sweep, 10% to 200% of rated."""
    jobs = []
    for pct in percents:
        case = ComplianceCase("magnitude", perf_class, float(pct), reporting_rate_fps,
                              _spec(rated_rms * pct / 100.0, f0, -math.pi / 3, f0,
                                    sample_rate_hz, duration_s))
        jobs.append((case, {"denominator": denominator}))
    return [_with_reference(r, reference_tve("magnitude", None, r.case.influence_value))
            for r in _run_all(jobs, workers)]


PHASE_OFFSETS = tuple(-math.pi + k * math.pi / 4 for k in range(9))


def run_phase_test(f0: float = DEFAULT_F0, rated_rms: float = DEFAULT_RMS, *,
                   nominal_angle: float = -math.pi / 2, gradual_offset_hz: float = 0.0,
                   perf_class: str = "M", reporting_rate_fps: float = DEFAULT_FPS,
                   sample_rate_hz: float = 10_000.0,
                   duration_s: float = DEFAULT_CASE_DURATION_S,
                   denominator: str = "true", workers: int = 1) -> list[ComplianceResult]:
    """Offsets -pi .. +pi in pi/4 steps added to ``nominal_angle``.

    A non-zero ``gradual_offset_hz`` (|offset| < 0.25 Hz) runs the slowly
    rotating variant instead of fixed angles.
    """
    if abs(gradual_offset_hz) >= 0.25:
        raise ValueError("gradual phase test needs |f_in - f0| < 0.25 Hz")
    f_in = f0 + gradual_offset_hz
    variant = f"gradual {gradual_offset_hz:+g} Hz" if gradual_offset_hz else ""
    jobs = []
    for k, offset in enumerate(PHASE_OFFSETS):
        phase = wrap_angle(nominal_angle + offset)
        case = ComplianceCase("phase_angle", perf_class, offset, reporting_rate_fps,
                              _spec(rated_rms, f_in, phase, f0, sample_rate_hz, duration_s),
                              variant=variant)
        jobs.append((case, {"denominator": denominator}))
    results = _run_all(jobs, workers)
    if variant:
        return results
    return [_with_reference(r, REFERENCE_TVE[("phase_angle", None)][k])
            for k, r in enumerate(results)]


def oob_fundamental_grid(reporting_rate_fps: float, f0: float = DEFAULT_F0) -> list[float]:
    """9 points over the band at 10 fps, 11 at 25 fps (both steps are band/8 and band/10)."""
    lo, hi = oob_fundamental_band(reporting_rate_fps, f0)
    points = 11 if reporting_rate_fps >= 25 else 9
    return [round(lo + (hi - lo) * i / (points - 1), 9) for i in range(points)]


def oob_tone_grid(reporting_rate_fps: float, f0: float = DEFAULT_F0,
                  step_hz: float = 5.0, low_hz: float = 10.0) -> list[float]:
    """Interfering tones from 10 Hz up to 2 f0, outside the reporting pass-band."""
    half = passband_halfwidth(reporting_rate_fps)
    below = list(np.arange(low_hz, f0 - half, step_hz)) + [f0 - half]
    above = [f0 + half] + list(np.arange(f0 + half + step_hz, 2 * f0 + 1e-9, step_hz))
    tones = sorted({round(float(f), 9) for f in below + above if low_hz <= f <= 2 * f0})
    return [f for f in tones if is_out_of_band(f, f0, reporting_rate_fps)]


def run_oob_test(reporting_rate_fps: float = 10.0, f0: float = DEFAULT_F0,
                 rated_rms: float = DEFAULT_RMS, *, interference: bool = False,
                 tone_fraction: float = 0.1, tone_step_hz: float = 5.0,
                 sample_rate_hz: float = 10_000.0,
                 duration_s: float = DEFAULT_CASE_DURATION_S,
                 denominator: str = "true", workers: int = 1) -> list[ComplianceResult]:
    """Fundamental sweep over the interference band at angle -pi/4 (M class, 1.3%).

    With ``interference=True`` an extra set of cases holds the fundamental
    at f0 and adds a ``tone_fraction`` tone at each out-of-band frequency.
    """
    jobs = []
    for f in oob_fundamental_grid(reporting_rate_fps, f0):
        case = ComplianceCase("out_of_band", "M", f, reporting_rate_fps,
                              _spec(rated_rms, f, -math.pi / 4, f0, sample_rate_hz, duration_s),
                              tve_limit_fraction=OOB_TVE_LIMIT)
        jobs.append((case, {"denominator": denominator}))
    if interference:
        for tone in oob_tone_grid(reporting_rate_fps, f0, tone_step_hz):
            spec = _spec(rated_rms, f0, -math.pi / 4, f0, sample_rate_hz, duration_s,
                         [Tone(tone, tone_fraction)])
            case = ComplianceCase("out_of_band", "M", tone, reporting_rate_fps, spec,
                                  tve_limit_fraction=OOB_TVE_LIMIT,
                                  variant=f"interference {tone_fraction:g}")
            jobs.append((case, {"denominator": denominator}))
    key = float(reporting_rate_fps)
    return [r if r.case.variant else
            _with_reference(r, reference_tve("out_of_band", key, r.case.influence_value))
            for r in _run_all(jobs, workers)]


def run_harmonic_probe(f0: float = DEFAULT_F0, rated_rms: float = DEFAULT_RMS, *,
                       orders: Iterable[int] = range(2, 51),
                       fractions: Sequence[float] = (0.01, 0.1), strict: bool = False,
                       cross_check: bool = False, perf_class: str = "M",
                       reporting_rate_fps: float = DEFAULT_FPS,
                       sample_rate_hz: float = 10_000.0, duration_s: float = 1.0,
                       denominator: str = "true", workers: int = 1) -> list[ComplianceResult]:
    """Single-harmonic injection. Results are informational unless ``strict``."""
    jobs = []
    for frac in fractions:
        for order in orders:
            spec = _spec(rated_rms, f0, -math.pi / 3, f0, sample_rate_hz, duration_s,
                         [Tone(order * f0, frac)])
            case = ComplianceCase("harmonic", perf_class, float(order), reporting_rate_fps,
                                  spec, variant=f"{100 * frac:g}%", informational=not strict)
            jobs.append((case, {"denominator": denominator, "cross_check": cross_check,
                                "notes": "" if strict else HARMONIC_NOTE}))
    return _run_all(jobs, workers)


RUNNERS: dict[str, Callable[..., list[ComplianceResult]]] = {
    "frequency": run_frequency_test,
    "magnitude": run_magnitude_test,
    "phase": run_phase_test,
    "oob": run_oob_test,
    "harmonic": run_harmonic_probe,
}


def case_to_dict(case: ComplianceCase) -> dict:
    d = asdict(case)
    d["signal_spec"]["interference"] = [asdict(t) for t in case.signal_spec.interference]
    return d


def case_from_dict(d: dict) -> ComplianceCase:
    spec = dict(d["signal_spec"])
    spec["interference"] = tuple(Tone(**t) for t in spec.get("interference", ()))
    return ComplianceCase(**{**d, "signal_spec": SignalSpec(**spec)})


def result_to_dict(result: ComplianceResult) -> dict:
    return {
        "case": case_to_dict(result.case),
        "max_tve_fraction": _json_float(result.max_tve_fraction),
        "frames_evaluated": result.frames_evaluated,
        "pass": result.passed,
        "notes": result.notes,
        "error": result.error,
        "reference_value": result.reference_value,
        "oracle_max_tve_fraction": result.oracle_max_tve_fraction,
        "denominator": result.denominator,
    }


def result_from_dict(d: dict) -> ComplianceResult:
    return ComplianceResult(case_from_dict(d["case"]), _from_json_float(d["max_tve_fraction"]),
                            d["frames_evaluated"], d["notes"], d["error"],
                            d["reference_value"], d["oracle_max_tve_fraction"],
                            d.get("denominator", "true"))


def _json_float(x: float):
    return x if math.isfinite(x) else "inf"


def _from_json_float(x) -> float:
    return math.inf if x == "inf" else float(x)
