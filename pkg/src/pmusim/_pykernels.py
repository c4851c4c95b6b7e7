"""Pure-Python kernels. Reference semantics for ``_ckernels.pyx``."""
import numpy as np


def recursive_dft(values, twiddle, scale, x0):
    """Sliding single-bin DFT, one output per window start.

    ``out[0] = x0`` is the phasor of window ``values[0:N]``; every later
    entry adds the entering sample and removes the leaving one:
    ``out[r+1] = out[r] + scale * (values[r+N] - values[r]) * twiddle[r % N]``.
    """
    n = len(twiddle)
    v = np.asarray(values, dtype=float).tolist()
    tw = np.asarray(twiddle, dtype=complex).tolist()
    count = len(v) - n + 1
    out = [0j] * count
    x = complex(x0)
    out[0] = x
    k = 0
    for r in range(count - 1):
        x = x + scale * (v[r + n] - v[r]) * tw[k]
        out[r + 1] = x
        k += 1
        if k == n:
            k = 0
    return np.array(out, dtype=complex)


def trailing_sums(terms, lengths):
    """``out[m] = sum(terms[m-L+1 : m+1])`` with ``L = lengths[m]``; NaN if short."""
    terms = np.asarray(terms, dtype=float)
    lengths = np.asarray(lengths, dtype=np.int64)
    out = np.full(terms.size, np.nan)
    for length in np.unique(lengths):
        length = int(length)
        if length < 1 or length > terms.size:
            continue
        sums = np.lib.stride_tricks.sliding_window_view(terms, length).sum(axis=1)
        idx = np.nonzero(lengths == length)[0]
        idx = idx[idx >= length - 1]
        out[idx] = sums[idx - (length - 1)]
    return out
