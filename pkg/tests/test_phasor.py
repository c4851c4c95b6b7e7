import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmusim.errors import UnprimedStateError, UnrecoverableCorrectionError, WindowLengthError
from pmusim.phasor import (EstimatorState, PhasorEstimate, PqCoefficients, correct_first_window,
                           dft_window, pq_coefficients, pq_series, prime, recursive_update,
                           rotation_period, sliding_phasors, twiddle_table, wrap_angle)
from pmusim.waveform import SignalSpec, synthesize

W0 = 2 * math.pi * 50.0
DT = 1e-4
N = 200


def oracle_dft(x, start, n, cycles=1):
    """sqrt(2)/N * sum x(k) exp(-j k theta) with k counted from sample 0 of the stream."""
    k = np.arange(start, start + n)
    return math.sqrt(2) / n * np.sum(x[start:start + n] * np.exp(-2j * np.pi * cycles * k / n))


def oracle_pq(n, omega, w0, dt):
    """P and Q by brute summation of the window's leakage terms."""
    k = np.arange(n)
    p = np.sum(np.exp(1j * (omega - w0) * k * dt)) / n
    q = np.sum(np.exp(-1j * (omega + w0) * k * dt)) / n
    return p, q


@pytest.mark.parametrize("phase", [-math.pi / 6, 0.0, math.pi / 6, -math.pi, 1.0])
def test_dft_window_on_nominal_cosine_returns_rms_phasor(phase):
    x = synthesize(SignalSpec(230.0, 50.0, phase, duration_s=0.02)).values
    est = dft_window(x)
    assert est.magnitude_rms == pytest.approx(230.0, abs=1e-10)
    assert abs(wrap_angle(est.angle_rad - phase)) < 1e-12


def test_dft_window_theta_check():
    x = np.ones(N)
    dft_window(x, theta_rad=2 * math.pi / N)
    with pytest.raises(WindowLengthError):
        dft_window(x, theta_rad=2 * math.pi / 199)
    with pytest.raises(WindowLengthError):
        dft_window(x, n_samples=100)


def test_twiddle_table_values():
    tw = twiddle_table(8, cycles=3)
    expected = np.exp(-2j * np.pi * 3 * np.arange(8) / 8)
    np.testing.assert_allclose(tw, expected, atol=1e-15)


@pytest.mark.parametrize("f", [45.0, 49.7, 50.0, 52.3])
def test_recursive_update_matches_oracle(f):
    x = synthesize(SignalSpec(230.0, f, 0.4, duration_s=0.1)).values
    state = EstimatorState(N, DT, W0)
    first = prime(state, x[:N])
    assert first.value == pytest.approx(oracle_dft(x, 0, N), abs=1e-11)
    for r in range(1, x.size - N + 1):
        est = recursive_update(state, x[r + N - 1])
        assert abs(est.value - oracle_dft(x, r, N)) < 1e-11
    assert state.r_index == x.size - N
    assert est.timestamp_s == pytest.approx((x.size - 1) * DT)


def test_recursive_update_accepts_explicit_dropped_sample():
    x = np.random.default_rng(1).normal(size=N + 50)
    a, b = EstimatorState(N, DT, W0), EstimatorState(N, DT, W0)
    prime(a, x[:N])
    prime(b, x[:N])
    for r in range(50):
        ea = recursive_update(a, x[r + N])
        eb = recursive_update(b, x[r + N], dropped_sample=x[r])
        assert ea.value == eb.value


def test_unprimed_state_raises():
    state = EstimatorState(N, DT, W0)
    with pytest.raises(UnprimedStateError):
        recursive_update(state, 1.0)
    with pytest.raises(UnprimedStateError):
        state.estimate()


@pytest.mark.parametrize("cycles, n", [(1, 200), (3, 200), (7, 16)])
def test_sliding_phasors_match_oracle(cycles, n):
    x = np.random.default_rng(cycles).normal(size=n + 300)
    out = sliding_phasors(x, n, cycles)
    assert out.size == x.size - n + 1
    for r in (0, 1, 57, out.size - 1):
        assert abs(out[r] - oracle_dft(x, r, n, cycles)) < 1e-12


def test_sliding_phasors_needs_a_full_window():
    with pytest.raises(WindowLengthError):
        sliding_phasors(np.zeros(10), 20)


def test_state_for_rates_picks_cycle_count():
    s = EstimatorState.for_rates(50.0, 10_000.0, 200)
    assert s.cycles == 1 and s.theta_rad == pytest.approx(2 * math.pi / 200)
    s = EstimatorState.for_rates(60.0, 1_000.0, 50)
    assert s.cycles == 3


@pytest.mark.parametrize("f", [45.0, 48.3, 49.5, 50.7, 55.0, 150.0])
def test_pq_matches_brute_force(f):
    omega = 2 * math.pi * f
    pq = pq_coefficients(N, omega, W0, DT)
    p, q = oracle_pq(N, omega, W0, DT)
    assert abs(pq.p - p) < 1e-13
    assert abs(pq.q - q) < 1e-13


def test_pq_vectorised_matches_scalar():
    omegas = 2 * math.pi * np.array([49.0, 50.0, 51.5])
    p, q = pq_series(N, omegas, W0, DT)
    for i, om in enumerate(omegas):
        s = pq_coefficients(N, om, W0, DT)
        assert p[i] == s.p and q[i] == s.q


def test_pq_nominal_is_exact():
    pq = pq_coefficients(N, W0, W0, DT)
    assert pq == PqCoefficients(1 + 0j, 0j, 0.0)


def forward(x_true, pq, r, omega):
    a = pq.p * cmath.exp(1j * r * (omega - W0) * DT)
    b = pq.q * cmath.exp(-1j * r * (omega + W0) * DT)
    return a * x_true + b * x_true.conjugate()


@given(st.floats(45.0, 55.0), st.floats(-math.pi, math.pi), st.integers(0, 50_000),
       st.floats(1.0, 11_000.0))
def test_correction_round_trip(f, angle, r, mag):
    omega = 2 * math.pi * f
    x_true = cmath.rect(mag, angle)
    pq = pq_coefficients(N, omega, W0, DT)
    raw = PhasorEstimate.from_complex(forward(x_true, pq, r, omega))
    got = correct_first_window(raw, pq, r, omega, W0, DT)
    assert abs(got.value - x_true) <= 1e-12 * mag


@pytest.mark.parametrize("f", [45.0, 49.5, 50.7, 55.0])
def test_correction_recovers_signal_phasor(f):
    x = synthesize(SignalSpec(230.0, f, math.pi / 2, duration_s=0.05)).values
    omega = 2 * math.pi * f
    pq = pq_coefficients(N, omega, W0, DT)
    for r in (0, 33, 250):
        raw = PhasorEstimate.from_complex(oracle_dft(x, r, N))
        got = correct_first_window(raw, pq, r, omega, W0, DT)
        assert abs(got.value - 230j) < 1e-9


def test_correction_singular_system_raises():
    # at an integer harmonic both leakage terms vanish
    omega = 2 * math.pi * 100.0
    pq = pq_coefficients(N, omega, W0, DT)
    with pytest.raises(UnrecoverableCorrectionError):
        correct_first_window(PhasorEstimate.from_complex(1 + 1j), pq, 0, omega, W0, DT)


@given(st.floats(-100.0, 100.0))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_wrap_angle_maps_minus_pi_to_pi():
    assert wrap_angle(-math.pi) == math.pi


def test_phasor_estimate_accessors():
    est = PhasorEstimate.from_polar(230.0, -math.pi / 6, 0.5)
    assert est.magnitude_rms == pytest.approx(230.0)
    assert est.angle_deg == pytest.approx(-30.0)
    assert est.timestamp_s == 0.5


@pytest.mark.parametrize("f_in, text", [
    (49.5, "2.0000 s clockwise"),
    (49.7, "3.3333 s clockwise"),
    (50.3, "3.3333 s anticlockwise"),
    (50.7, "1.4286 s anticlockwise"),
    (50.0, "no rotation"),
])
def test_rotation_period(f_in, text):
    assert rotation_period(f_in, 50.0).describe() == text


def test_rotation_period_rejects_nonpositive():
    with pytest.raises(ValueError):
        rotation_period(0.0, 50.0)
