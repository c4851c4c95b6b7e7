"""Acceptance criteria 1-11, each tagged with ``criterion(n)``.

The terminal summary (see conftest) prints one PASS/FAIL line per criterion.
"""
import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import angle_diff_deg
from pmusim.compliance import (KNOWN_ANOMALY_NOTE, OOB_TVE_LIMIT, run_frequency_test,
                               run_harmonic_probe, run_magnitude_test, run_oob_test,
                               run_phase_test, tve_values)
from pmusim.phasor import (EstimatorState, PhasorEstimate, correct_first_window,
                           pq_coefficients, prime, recursive_update, rotation_period)
from pmusim.trackers import run_pipeline
from pmusim.waveform import SignalSpec, nominal_inputs, off_nominal_inputs, synthesize

W0 = 2 * math.pi * 50.0
DT = 1e-4
N = 200


def converged(spec):
    return run_pipeline(synthesize(spec), spec.nominal_frequency_hz).converged()


# 1 -------------------------------------------------------------------------------------

@pytest.mark.criterion(1)
@pytest.mark.parametrize("spec, angle_deg", list(zip(nominal_inputs(duration_s=2.0),
                                                      (-30.0, 0.0, 30.0, 180.0))),
                         ids=["-30deg", "0deg", "+30deg", "180deg"])
def test_c1_nominal_reproduction(spec, angle_deg):
    frames = converged(spec)
    assert np.abs(frames.rms - 230.0).max() < 1e-9
    assert np.abs(frames.frequency_hz - 50.0).max() < 1e-9
    assert np.abs(angle_diff_deg(np.degrees(frames.angle_rad), angle_deg)).max() < 1e-9


# 2 -------------------------------------------------------------------------------------

@pytest.mark.criterion(2)
@pytest.mark.parametrize("spec", off_nominal_inputs(duration_s=2.0),
                         ids=lambda s: f"{s.frequency_hz}Hz")
def test_c2_off_nominal_reproduction(spec):
    frames = converged(spec)
    assert np.abs(frames.rms - 230.0).max() < 1e-9
    assert np.abs(frames.frequency_hz - spec.frequency_hz).max() < 1e-9


# 3 -------------------------------------------------------------------------------------

def measured_rotation(frames):
    """Period and sense of the angle's revolution, from a line fit to the unwrapped angle."""
    slope = np.polyfit(frames.timestamp_s, np.unwrap(frames.angle_rad), 1)[0]
    return 2 * math.pi / abs(slope), "clockwise" if slope < 0 else "anticlockwise"


@pytest.mark.criterion(3)
@pytest.mark.parametrize("f_in, period, direction", [
    (49.5, 2.0, "clockwise"), (49.7, 3.3333, "clockwise"),
    (50.3, 3.3333, "anticlockwise"), (50.7, 1.4286, "anticlockwise")])
def test_c3_rotation_periods(f_in, period, direction):
    frames = converged(SignalSpec(230.0, f_in, math.pi / 2, duration_s=5.0))
    got_period, got_direction = measured_rotation(frames)
    assert got_period == pytest.approx(period, rel=0.01)
    assert got_direction == direction
    expected = rotation_period(f_in, 50.0)
    assert expected.direction == direction
    assert expected.period_s == pytest.approx(period, rel=1e-4)
    # every full revolution of a 5 s record actually happens
    turns = abs(np.unwrap(frames.angle_rad)[-1] - frames.angle_rad[0]) / (2 * math.pi)
    assert turns == pytest.approx((frames.timestamp_s[-1] - frames.timestamp_s[0]) / period,
                                  rel=0.01)


# 4 -------------------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_c4_frequency_p_class():
    res = {r.case.influence_value: r for r in run_frequency_test("P")}
    assert sorted(res) == [48.0, 49.0, 50.0, 51.0, 52.0]
    for f in (48.0, 49.0, 51.0, 52.0):
        assert res[f].max_tve_percent <= 0.01, f
    assert res[50.0].max_tve_fraction <= 1e-10
    assert all(r.passed for r in res.values())


@pytest.mark.criterion(4)
def test_c4_frequency_m_class():
    res = {r.case.influence_value: r for r in run_frequency_test("M")}
    assert sorted(res) == [float(f) for f in range(45, 56)]
    for f, r in res.items():
        limit = 2.0 if f == 53.0 else 1.0
        assert r.max_tve_percent <= limit, f
    assert KNOWN_ANOMALY_NOTE in res[53.0].notes
    assert res[53.0].reference_value == 0.0180


# 5 -------------------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_c5_magnitude_sweep():
    res = run_magnitude_test()
    assert [r.case.influence_value for r in res][0] == 10 and res[-1].case.influence_value == 200
    assert max(r.max_tve_fraction for r in res) < 1e-10


# 6 -------------------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_c6_phase_sweep():
    res = run_phase_test()
    offsets = [r.case.influence_value / math.pi for r in res]
    assert offsets == pytest.approx([-1 + k / 4 for k in range(9)])
    assert max(r.max_tve_fraction for r in res) < 1e-10


# 7 -------------------------------------------------------------------------------------

@pytest.mark.criterion(7)
@pytest.mark.parametrize("fps, worst_ref_percent", [(10.0, 0.0052), (25.0, 0.0012)])
def test_c7_out_of_band_sweeps(fps, worst_ref_percent):
    res = run_oob_test(fps)
    assert len(res) == (9 if fps == 10.0 else 11)
    tve = [r.max_tve_percent for r in res]
    if fps == 10.0:
        assert max(tve) <= 0.01
    assert max(tve) <= 1.5 * worst_ref_percent
    assert all(r.case.tve_limit_fraction == OOB_TVE_LIMIT and r.passed for r in res)


# 8 -------------------------------------------------------------------------------------

def oracle_window_phasors(x, n, count):
    """Each window summed from scratch: sqrt(2)/N sum x(k) exp(-j 2 pi k / N)."""
    k = np.arange(x.size)
    y = x * np.exp(-2j * np.pi * (k % n) / n)
    windows = np.lib.stride_tricks.sliding_window_view(y, n)[:count]
    return math.sqrt(2) / n * windows.sum(axis=1)


def _random_specs(count=100, seed=20261016):
    rng = np.random.default_rng(seed)
    return [SignalSpec(float(rng.uniform(1.0, 11_000.0)), float(rng.uniform(45.0, 55.0)),
                       float(math.pi - rng.uniform(0.0, 2 * math.pi)),
                       duration_s=(N + 10_000) / 10_000.0)
            for _ in range(count)]


@pytest.mark.criterion(8)
@pytest.mark.parametrize("spec", _random_specs(),
                         ids=lambda s: f"{s.amplitude_rms:.0f}V-{s.frequency_hz:.3f}Hz")
def test_c8_recursion_equals_direct_summation(spec):
    x = synthesize(spec).values
    updates = 10_000
    expected = oracle_window_phasors(x, N, updates + 1)
    state = EstimatorState(N, DT, W0)
    got = np.empty(updates + 1, dtype=complex)
    got[0] = prime(state, x[:N]).value
    for r in range(updates):
        got[r + 1] = recursive_update(state, x[N + r]).value
    rel = np.abs(got - expected) / np.abs(expected)
    assert rel.max() <= 1e-12


# 9 -------------------------------------------------------------------------------------

@pytest.mark.criterion(9)
def test_c9_pq_exact_at_nominal():
    for n, dt in ((200, 1e-4), (256, 1 / 12_800), (80, 1 / 4_000)):
        pq = pq_coefficients(n, W0, W0, dt)
        assert pq.p == 1 and pq.q == 0
        assert pq.p.imag == 0 and pq.q.real == 0


@pytest.mark.criterion(9)
@pytest.mark.parametrize("f_in", [49.5, 49.7, 50.3, 50.7])
@pytest.mark.parametrize("r", [0, 1, 137, 4_999])
def test_c9_correction_round_trip(f_in, r):
    omega = 2 * math.pi * f_in
    x_true = cmath.rect(230.0, math.pi / 2)
    pq = pq_coefficients(N, omega, W0, DT)
    a = pq.p * cmath.exp(1j * r * (omega - W0) * DT)
    b = pq.q * cmath.exp(-1j * r * (omega + W0) * DT)
    raw = PhasorEstimate.from_complex(a * x_true + b * x_true.conjugate())
    got = correct_first_window(raw, pq, r, omega, W0, DT).value
    assert abs(got - x_true) / abs(x_true) <= 1e-12


# 10 ------------------------------------------------------------------------------------

phasors = st.builds(cmath.rect, st.floats(1e-3, 1e4), st.floats(-math.pi, math.pi))


@pytest.mark.criterion(10)
@settings(max_examples=200)
@given(phasors, st.floats(0.5, 2.0))
def test_c10_tve_of_scaled_phasor(x, c):
    assert abs(float(tve_values(c * x, x)) - abs(c - 1)) <= 1e-12


@pytest.mark.criterion(10)
@settings(max_examples=200)
@given(phasors, st.floats(-math.pi, math.pi))
def test_c10_tve_of_rotated_phasor(x, delta):
    got = float(tve_values(cmath.exp(1j * delta) * x, x))
    assert abs(got - 2 * abs(math.sin(delta / 2))) <= 1e-12


# 11 ------------------------------------------------------------------------------------

@pytest.mark.criterion(11)
def test_c11_harmonic_probe_runs_and_oracle_agrees():
    res = run_harmonic_probe(cross_check=True, workers=4)
    assert len(res) == 2 * 49
    assert all(r.case.informational and not r.hard_failure for r in res)
    finished = [r for r in res if r.error is None]
    assert len(finished) >= 90
    for r in finished:
        assert abs(r.oracle_max_tve_fraction - r.max_tve_fraction) <= 1e-9, r.case
    # cases the estimator cannot track are reported, not raised
    assert all(r.max_tve_fraction == math.inf for r in res if r.error)
