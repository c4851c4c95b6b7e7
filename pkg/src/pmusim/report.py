"""Campaign configuration, orchestration and report files."""
from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels
from .compliance import (ComplianceResult, result_from_dict, result_to_dict, run_frequency_test,
                         run_harmonic_probe, run_magnitude_test, run_oob_test, run_phase_test,
                         true_phasor_series)
from .errors import ConfigError
from .trackers import run_pipeline
from .waveform import nominal_inputs, off_nominal_inputs, synthesize

ALL_TESTS = ("frequency", "magnitude", "phase", "oob10", "oob25", "harmonic")
DEFAULT_TESTS = ("frequency", "magnitude", "phase", "oob10", "oob25")
DENOMINATORS = {"true_ref": "true", "paper_literal": "paper"}


@dataclass(frozen=True)
class CampaignConfig:
    f0_hz: float = 50.0
    rated_rms: float = 230.0
    sample_rate_hz: float = 10_000.0
    tests: tuple[str, ...] = DEFAULT_TESTS
    perf_class: str = "PM"  # "P", "M" or both
    tve_denominator_mode: str = "true_ref"
    output_dir: str = "campaign_out"
    reporting_rate_fps: float = 25.0
    duration_s: float = 2.0
    oob_interference: bool = False
    harmonic_strict: bool = False
    workers: int = 1

    def validate(self) -> "CampaignConfig":
        if not self.tests:
            raise ConfigError("no tests selected")
        unknown = [t for t in self.tests if t not in ALL_TESTS]
        if unknown:
            raise ConfigError(f"unknown tests {unknown}; choose from {', '.join(ALL_TESTS)}")
        if self.perf_class not in ("P", "M", "PM"):
            raise ConfigError("perf_class must be P, M or PM")
        if self.tve_denominator_mode not in DENOMINATORS:
            raise ConfigError(f"tve_denominator_mode must be one of {sorted(DENOMINATORS)}")
        for name in ("f0_hz", "rated_rms", "sample_rate_hz", "reporting_rate_fps",
                     "duration_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    @property
    def denominator(self) -> str:
        return DENOMINATORS[self.tve_denominator_mode]

    @classmethod
    def from_mapping(cls, values: dict) -> "CampaignConfig":
        """Build from string values (config file or CLI), coercing types."""
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            out[key] = _coerce(key, kinds[key], raw)
        return cls(**out)

    @classmethod
    def from_file(cls, path, **overrides) -> "CampaignConfig":
        """Flat ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)


def _coerce(key, kind, raw):
    if not isinstance(raw, str):
        return tuple(raw) if key == "tests" else raw
    try:
        if key == "tests":
            return tuple(t.strip() for t in raw.split(",") if t.strip())
        if kind in ("bool", bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


@dataclass
class Report:
    config: dict
    results: dict[str, list[ComplianceResult]]
    metadata: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    @property
    def hard_failures(self) -> list[ComplianceResult]:
        return [r for rs in self.results.values() for r in rs if r.hard_failure]

    @property
    def exit_code(self) -> int:
        return 1 if self.hard_failures else 0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "metadata": self.metadata,
            "residuals": self.residuals,
            "results": {k: [result_to_dict(r) for r in v] for k, v in self.results.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(d["config"], {k: [result_from_dict(r) for r in v]
                                 for k, v in d["results"].items()},
                   d.get("metadata", {}), d.get("residuals", {}))

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))


def _config_echo(cfg: CampaignConfig) -> dict:
    d = asdict(cfg)
    d["tests"] = list(cfg.tests)
    return d


def reproduction_residuals(f0: float = 50.0, rms: float = 230.0,
                           sample_rate_hz: float = 10_000.0, duration_s: float = 2.0) -> dict:
    """Worst converged errors for the nominal and off-nominal reproduction inputs."""
    out = {}
    groups = {
        "nominal": nominal_inputs(rms, f0, sample_rate_hz=sample_rate_hz, duration_s=duration_s),
        "off_nominal": off_nominal_inputs(rms, f0, sample_rate_hz=sample_rate_hz,
                                          duration_s=duration_s),
    }
    for name, specs in groups.items():
        rows = []
        for spec in specs:
            frames = run_pipeline(synthesize(spec), f0).converged()
            truth = true_phasor_series(spec, frames.timestamp_s)
            dang = np.angle(frames.phasor * np.conj(truth))
            rows.append({
                "frequency_hz": spec.frequency_hz,
                "phase_rad": spec.phase_rad,
                "max_rms_error": float(np.abs(frames.rms - rms).max()),
                "max_frequency_error_hz": float(np.abs(frames.frequency_hz
                                                       - spec.frequency_hz).max()),
                "max_angle_error_deg": float(np.degrees(np.abs(dang)).max()),
                "max_abs_rocof_hz_per_s": float(np.abs(frames.rocof_hz_per_s).max()),
                "final_angle_deg": float(np.degrees(frames.angle_rad[-1])),
            })
        out[name] = rows
    return out


def run_campaign(cfg: CampaignConfig, timestamp: Optional[str] = None) -> Report:
    cfg.validate()
    common = dict(sample_rate_hz=cfg.sample_rate_hz, duration_s=cfg.duration_s,
                  denominator=cfg.denominator, workers=cfg.workers)
    results: dict[str, list[ComplianceResult]] = {}
    for test in cfg.tests:
        if test == "frequency":
            for cls in ("P", "M"):
                if cls in cfg.perf_class:
                    results[f"frequency_{cls}"] = run_frequency_test(
                        cls, cfg.f0_hz, cfg.rated_rms,
                        reporting_rate_fps=cfg.reporting_rate_fps, **common)
        elif test == "magnitude":
            results["magnitude"] = run_magnitude_test(
                cfg.f0_hz, cfg.rated_rms, reporting_rate_fps=cfg.reporting_rate_fps, **common)
        elif test == "phase":
            results["phase"] = run_phase_test(
                cfg.f0_hz, cfg.rated_rms, reporting_rate_fps=cfg.reporting_rate_fps, **common)
        elif test in ("oob10", "oob25"):
            results[test] = run_oob_test(float(test[3:]), cfg.f0_hz, cfg.rated_rms,
                                         interference=cfg.oob_interference, **common)
        elif test == "harmonic":
            results["harmonic"] = run_harmonic_probe(
                cfg.f0_hz, cfg.rated_rms, strict=cfg.harmonic_strict, cross_check=True,
                reporting_rate_fps=cfg.reporting_rate_fps,
                **{**common, "duration_s": min(cfg.duration_s, 1.0)})
    metadata = {
        "tool_version": __version__,
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "kernel_backend": kernels.backend(),
        "reporting_instants": "uniform k/Fs instants, estimate at the nearest sample "
                              "timestamp, converged frames only",
        "reporting_rate_fps": cfg.reporting_rate_fps,
        "tve_denominator": cfg.tve_denominator_mode,
    }
    residuals = reproduction_residuals(cfg.f0_hz, cfg.rated_rms, cfg.sample_rate_hz)
    return Report(_config_echo(cfg), results, metadata, residuals)


# -- text tables ------------------------------------------------------------------

TABLE_TITLES = {
    "frequency_P": ("P CLASS FREQUENCY TEST RESULTS", "Input Frequency (Hz)"),
    "frequency_M": ("M CLASS FREQUENCY TEST RESULTS", "Input Frequency (Hz)"),
    "magnitude": ("P CLASS & M CLASS MAGNITUDE TEST RESULTS", "Magnitude (% of nominal)"),
    "phase": ("PHASE ANGLE TEST RESULTS", "Angle offset (pi rad)"),
    "oob10": ("10 FPS OUT OF BAND INTERFERENCE TEST RESULTS", "Frequency (Hz)"),
    "oob25": ("25 FPS OUT OF BAND INTERFERENCE TEST RESULTS", "Frequency (Hz)"),
    "harmonic": ("SINGLE HARMONIC PROBE (INFORMATIONAL)", "Harmonic order"),
}


def _g(x: Optional[float]) -> str:
    if x is None:
        return "-"
    if not math.isfinite(x):
        return "inf"
    return f"{x:.13g}"


def format_table(name: str, results: list[ComplianceResult]) -> str:
    title, column = TABLE_TITLES.get(name, (name.upper(), "Influence"))
    header = (f"{column:<26}{'Variant':<18}{'Max TVE (%)':<22}{'Limit (%)':<11}"
              f"{'Result':<8}{'Reference':<12}Notes")
    lines = [title, header, "-" * len(header)]
    for r in results:
        value = r.case.influence_value
        if name == "phase":
            value = value / math.pi
        result = "PASS" if r.passed else ("INFO" if r.case.informational else "FAIL")
        note = r.error or r.notes
        lines.append(f"{_g(value):<26}{r.case.variant or '-':<18}{_g(r.max_tve_percent):<22}"
                     f"{_g(100 * r.case.tve_limit_fraction):<11}{result:<8}"
                     f"{_g(r.reference_value):<12}{note}")
    return "\n".join(lines) + "\n"


def rotation_plot_data(f0: float = 50.0, rms: float = 230.0,
                       sample_rate_hz: float = 10_000.0, duration_s: float = 5.0,
                       step_s: float = 0.01) -> tuple[list[str], np.ndarray]:
    """Angle-vs-time columns for the four off-nominal inputs, one row per ``step_s``."""
    specs = off_nominal_inputs(rms, f0, sample_rate_hz=sample_rate_hz, duration_s=duration_s)
    columns, series, times = ["time_s"], [], None
    stride = max(1, int(round(step_s * sample_rate_hz)))
    for spec in specs:
        frames = run_pipeline(synthesize(spec), f0)
        take = slice(frames.settle_index, None, stride)
        times = frames.timestamp_s[take]
        series.append(np.degrees(frames.angle_rad[take]))
        columns.append(f"angle_deg_{spec.frequency_hz:g}hz")
    return columns, np.column_stack([times] + series)


def write_report(report: Report, output_dir, with_plot_data: bool = True) -> list[Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json"]
    written[0].write_text(report.to_json() + "\n")
    for name, results in report.results.items():
        path = out / f"table_{name}.txt"
        path.write_text(format_table(name, results))
        written.append(path)
    if with_plot_data:
        cfg = report.config
        columns, data = rotation_plot_data(cfg["f0_hz"], cfg["rated_rms"],
                                           cfg["sample_rate_hz"])
        path = out / "fig_rotation_angles.csv"
        with open(path, "w") as fh:
            fh.write(",".join(columns) + "\n")
            for row in data:
                fh.write(",".join(_g(x) for x in row) + "\n")
        written.append(path)
    return written
