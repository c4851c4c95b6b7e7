"""Recursive-DFT synchrophasor estimation and steady-state compliance testing."""

__version__ = "0.1.0"

from .errors import PmuError
from .phasor import (EstimatorState, PhasorEstimate, PqCoefficients, correct_first_window,
                     dft_window, pq_coefficients, prime, recursive_update, rotation_period)
from .trackers import FrameSeries, MeasurementFrame, derive_n, run_pipeline
from .waveform import SampleStream, SignalSpec, Tone, add_interference, synthesize

__all__ = [
    "EstimatorState", "FrameSeries", "MeasurementFrame", "PhasorEstimate", "PmuError",
    "PqCoefficients", "SampleStream", "SignalSpec", "Tone", "add_interference",
    "correct_first_window", "derive_n", "dft_window", "pq_coefficients", "prime",
    "recursive_update", "rotation_period", "run_pipeline", "synthesize",
]
