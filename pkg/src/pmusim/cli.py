"""Command-line front end.

    pmusim estimate --input stream.csv
    pmusim estimate --rms 230 --freq 50 --phase 0.5235987755982988
    pmusim campaign --tests frequency,oob10 --class P --out results/
    pmusim rotation --fin 49.7 --f0 50
"""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, PmuError, StreamParseError
from .phasor import rotation_period
from .report import ALL_TESTS, CampaignConfig, run_campaign, write_report
from .trackers import FrameSeries, run_pipeline
from .waveform import SampleStream, SignalSpec, synthesize


def _g(x) -> str:
    return f"{x:.13g}"


def summary(frames: FrameSeries) -> str:
    last = frames[-1]
    return "\n".join([
        f"rms          {_g(last.rms)}",
        f"frequency_hz {_g(last.frequency_hz)}",
        f"angle_deg    {_g(last.angle_deg)}",
        f"rocof_hz_s   {_g(last.rocof_hz_per_s)}",
        f"n            {last.n_samples_per_cycle}",
        f"fs_hz        {_g(last.sample_rate_hz)}",
    ])


def cmd_estimate(args) -> int:
    if args.input:
        stream = SampleStream.from_csv(args.input)
    else:
        spec = SignalSpec(args.rms, args.freq, args.phase, args.f0, args.sample_rate,
                          args.duration)
        stream = synthesize(spec)
    frames = run_pipeline(stream, args.f0)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            _write_frames(frames, fh, args.format)
        print(summary(frames))
    else:
        _write_frames(frames, sys.stdout, args.format)
        print(summary(frames), file=sys.stderr)
    return 0


def _write_frames(frames: FrameSeries, fh, fmt: str) -> None:
    if fmt == "json":
        frames.to_json(fh)
        fh.write("\n")
    else:
        frames.to_csv(fh)


def cmd_campaign(args) -> int:
    overrides = {
        "tests": args.tests,
        "perf_class": args.perf_class,
        "output_dir": args.out,
        "tve_denominator_mode": {"true": "true_ref", "paper": "paper_literal"}.get(
            args.tve_denominator, args.tve_denominator),
        "f0_hz": args.f0,
        "rated_rms": args.rated_rms,
        "sample_rate_hz": args.sample_rate,
        "reporting_rate_fps": args.fps,
        "duration_s": args.duration,
        "workers": args.workers,
        "oob_interference": args.oob_interference,
        "harmonic_strict": args.harmonic_strict,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        cfg = CampaignConfig.from_file(args.config, **overrides)
    else:
        cfg = CampaignConfig.from_mapping(overrides)
    cfg.validate()
    report = run_campaign(cfg)
    paths = write_report(report, cfg.output_dir)
    for name, results in report.results.items():
        bad = sum(r.hard_failure for r in results)
        info = sum(r.case.informational for r in results)
        print(f"{name:<12} {len(results):3d} cases  {bad} failed"
              + (f"  ({info} informational)" if info else ""))
    print(f"wrote {len(paths)} files to {cfg.output_dir}")
    return report.exit_code


def cmd_rotation(args) -> int:
    print(rotation_period(args.fin, args.f0).describe())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmusim", description=__doc__.splitlines()[0] or None)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run the estimator on a stream or synthetic signal")
    src = est.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV with header time_s,value")
    src.add_argument("--rms", type=float, help="synthesize a cosine with this RMS value")
    est.add_argument("--freq", type=float, default=50.0, help="input frequency, Hz")
    est.add_argument("--phase", type=float, default=0.0, help="input phase, rad")
    est.add_argument("--duration", type=float, default=1.0, help="seconds to synthesize")
    est.add_argument("--sample-rate", type=float, default=10_000.0)
    est.add_argument("--f0", type=float, default=50.0, help="nominal frequency, Hz")
    est.add_argument("--format", choices=("csv", "json"), default="csv")
    est.add_argument("--output", "-o", help="frames file (default: stdout)")
    est.set_defaults(func=cmd_estimate)

    camp = sub.add_parser("campaign", help="run steady-state compliance tests")
    camp.add_argument("--config", help="flat key = value config file")
    camp.add_argument("--tests", help=f"comma list from {','.join(ALL_TESTS)}")
    camp.add_argument("--class", dest="perf_class", choices=("P", "M", "PM"))
    camp.add_argument("--out", help="output directory")
    camp.add_argument("--tve-denominator", choices=("true", "paper"))
    camp.add_argument("--f0", type=float)
    camp.add_argument("--rated-rms", type=float)
    camp.add_argument("--sample-rate", type=float)
    camp.add_argument("--fps", type=float, help="reporting rate for frequency/magnitude/phase")
    camp.add_argument("--duration", type=float, help="seconds per case")
    camp.add_argument("--workers", type=int)
    camp.add_argument("--oob-interference", action="store_const", const=True,
                      help="also inject 10%% out-of-band tones")
    camp.add_argument("--harmonic-strict", action="store_const", const=True,
                      help="count harmonic probe cases as pass/fail")
    camp.set_defaults(func=cmd_campaign)

    rot = sub.add_parser("rotation", help="phasor rotation period for an off-nominal input")
    rot.add_argument("--fin", type=float, required=True)
    rot.add_argument("--f0", type=float, default=50.0)
    rot.set_defaults(func=cmd_rotation)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StreamParseError, ConfigError, OSError) as exc:
        print(f"pmusim: error: {exc}", file=sys.stderr)
        return 2
    except PmuError as exc:
        print(f"pmusim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
