"""Time the pure-Python and compiled kernels on the same inputs.

    python benchmarks/bench_kernels.py [--seconds 10] [--repeat 5]
"""
import argparse
import math
import timeit

import numpy as np

from pmusim import kernels
from pmusim.phasor import SQRT2, dft_window, twiddle_table
from pmusim.trackers import run_pipeline
from pmusim.waveform import SignalSpec, synthesize


def cases(seconds: float):
    stream = synthesize(SignalSpec(230.0, 49.7, math.pi / 2, duration_s=seconds))
    x = stream.values
    n = 200
    tw = twiddle_table(n)
    x0 = dft_window(x[:n], n_samples=n).value
    terms = x * x
    lengths = np.where(np.arange(x.size) % 997 < 500, 201, 202).astype(np.int64)
    return {
        "recursive_dft": lambda: kernels.recursive_dft(x, tw, SQRT2 / n, x0),
        "trailing_sums": lambda: kernels.trailing_sums(terms, lengths),
        "run_pipeline": lambda: run_pipeline(stream),
    }, x.size


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seconds", type=float, default=10.0, help="signal length")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.HAVE_COMPILED else [])
    if not kernels.HAVE_COMPILED:
        print("compiled kernels not built; timing the Python backend only")
    funcs, size = cases(args.seconds)
    print(f"{size} samples, best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{b + ' (ms)':>16}" for b in backends) + f"{'speed-up':>12}")
    original = kernels.backend()
    try:
        for name, fn in funcs.items():
            best = {}
            for b in backends:
                kernels.use_backend(b)
                fn()  # warm-up
                best[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
            ratio = best["python"] / best["cython"] if "cython" in best else float("nan")
            print(f"{name:<16}" + "".join(f"{best[b]:>16.2f}" for b in backends)
                  + f"{ratio:>11.1f}x")
    finally:
        kernels.use_backend(original)


if __name__ == "__main__":
    main()
