"""Exception hierarchy shared by the estimator, trackers and harness."""


class PmuError(Exception):
    """Base class for all pmusim errors."""


class SignalSpecError(PmuError, ValueError):
    """A signal description violates its invariants."""


class WindowLengthError(PmuError, ValueError):
    """A DFT window does not hold exactly N samples."""


class UnprimedStateError(PmuError, RuntimeError):
    """A recursive update was requested before the first window was loaded."""


class UnrecoverableCorrectionError(PmuError, ArithmeticError):
    """The off-nominal inversion system is (near) singular.

    Happens when the input frequency is too far from nominal for the
    P/Q leakage model to separate the phasor from its conjugate.
    """


class UntrackableSignalError(PmuError):
    """No usable zero crossings / zero amplitude: nothing to track."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class InvalidTimebaseError(PmuError, ValueError):
    """Timestamps are not strictly increasing (or not uniform)."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class UnsupportedRateError(PmuError, ValueError):
    """f0/Fs does not reduce to a ratio with a reasonable denominator."""


class UndefinedReferenceError(PmuError, ZeroDivisionError):
    """TVE requested against a zero-magnitude reference phasor."""


class ConfigError(PmuError, ValueError):
    """Campaign configuration is invalid."""


class StreamParseError(PmuError, ValueError):
    """A sample-stream file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PipelineError(PmuError):
    """A tracker or estimator stage failed inside :func:`run_pipeline`."""

    def __init__(self, stage, cause, sample_index=None):
        where = "" if sample_index is None else f" at sample {sample_index}"
        super().__init__(f"{stage} failed{where}: {cause}")
        self.stage = stage
        self.sample_index = sample_index
        self.cause = cause
