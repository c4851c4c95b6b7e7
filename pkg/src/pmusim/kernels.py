"""Hot-loop dispatch: compiled kernels when built, pure Python otherwise.

The backend is chosen once at import. :func:`use_backend` switches it
explicitly (the benchmark and the cross-backend tests use this).
"""
from __future__ import annotations

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

HAVE_COMPILED = _ckernels is not None
_active = _ckernels if HAVE_COMPILED else _pykernels


def backend() -> str:
    return "cython" if _active is _ckernels else "python"


def use_backend(name: str) -> None:
    global _active
    if name == "python":
        _active = _pykernels
    elif name == "cython":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def recursive_dft(values, twiddle, scale: float, x0: complex) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    twiddle = np.ascontiguousarray(twiddle, dtype=np.complex128)
    return _active.recursive_dft(values, twiddle, float(scale), complex(x0))


def trailing_sums(terms, lengths) -> np.ndarray:
    terms = np.ascontiguousarray(terms, dtype=np.float64)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    return _active.trailing_sums(terms, lengths)
