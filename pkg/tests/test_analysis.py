import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from segchain.analysis import (EMPIRICAL, TABLE_I, TABLE_II, NoThresholdError, ScalingFit,
                               UnattainableError, evaluate, find_threshold, fit_scaling,
                               gates_before_failure, gauge_overhead, gauge_rate, p_cnot,
                               per_round_rate, required_segment, resource_table,
                               select_subthreshold)


def eq3(eps, d, a, b, g, dl):
    return math.exp((a * math.log(eps) + b) * (d + dl) + g)


# -- per-round rates ------------------------------------------------------------

def test_zero_failures_gives_bound():
    r = per_round_rate(0, 10_000, 10)
    assert r.p_L == 0.0 and r.upper > 0.0 and not r.saturated
    # 95% bound: P_up = 1 - 0.05**(1/N), per round through the same inversion
    P_up = 1 - 0.05 ** (1 / 10_000)
    assert r.upper == pytest.approx((1 - (1 - 2 * P_up) ** 0.1) / 2)


def test_half_failures_saturate():
    r = per_round_rate(500, 1000, 8)
    assert r.saturated and r.p_L == 0.5 and math.isinf(r.stderr)


def test_single_round_is_plain_fraction():
    r = per_round_rate(37, 1000, 1)
    assert r.p_L == pytest.approx(0.037)
    assert r.stderr == pytest.approx(math.sqrt(0.037 * 0.963 / 1000))


def test_bad_counts_rejected():
    with pytest.raises(ValueError):
        per_round_rate(11, 10, 3)
    with pytest.raises(ValueError):
        per_round_rate(1, 0, 3)


@given(st.floats(1e-4, 0.2), st.integers(1, 60))
def test_inversion_round_trip(p, rounds):
    # an R-round trial fails when an odd number of rounds flipped the logical
    P = sum(math.comb(rounds, k) * p ** k * (1 - p) ** (rounds - k) for k in range(1, rounds + 1, 2))
    # near P = 1/2 the inversion amplifies count rounding without bound
    assume(1 - 2 * P > 1e-3)
    trials = 10 ** 9
    r = per_round_rate(int(round(P * trials)), trials, rounds)
    assert not r.saturated
    assert r.p_L == pytest.approx(p, rel=1e-3, abs=1e-7)


def test_synthetic_trials_recovered_within_3_sigma():
    rng = np.random.default_rng(2)
    rounds, trials = 24, 20_000
    for p in (1e-4, 1e-3, 5e-3):
        flips = rng.random((trials, rounds)) < p
        failures = int((flips.sum(axis=1) % 2).sum())
        r = per_round_rate(failures, trials, rounds)
        assert abs(r.p_L - p) < 3 * r.stderr


# -- scaling law ----------------------------------------------------------------

def test_table_i_evaluate_by_hand():
    want = eq3(0.001, 13, 0.5978, 2.9767, -3.9819, 0.2923)
    assert float(evaluate(TABLE_I, 0.001, 13)) == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(4.1313e-9, rel=1e-4)


def test_threshold_where_d_dependence_vanishes():
    assert TABLE_I.threshold == pytest.approx(math.exp(-2.9767 / 0.5978))
    assert TABLE_I.threshold == pytest.approx(0.0069, abs=5e-5)
    at = [float(evaluate(TABLE_I, TABLE_I.threshold, d)) for d in (3, 7, 21)]
    assert at == pytest.approx([at[0]] * 3, rel=1e-9)


def test_empirical_formula_matches_scaling_form():
    s = EMPIRICAL.as_scaling()
    assert (s.alpha, s.beta, s.gamma) == pytest.approx((0.5, 2.4809, -3.9120), abs=1e-4)
    for eps in (1e-4, 1e-3, 5e-3):
        for d in (3, 9, 25):
            assert float(s.evaluate(eps, d)) == pytest.approx(float(EMPIRICAL.evaluate(eps, d)), rel=1e-10)


@pytest.mark.parametrize("d", [3, 5, 11, 31])
def test_empirical_at_threshold_is_p_th(d):
    assert float(EMPIRICAL.evaluate(EMPIRICAL.eps2_th, d)) == pytest.approx(0.02)


@given(st.floats(1e-5, 0.05), st.integers(3, 40))
def test_monotone_in_d_about_threshold(eps, d):
    lo, hi = float(evaluate(TABLE_I, eps, d)), float(evaluate(TABLE_I, eps, d + 2))
    th = TABLE_I.threshold
    if eps < th * (1 - 1e-9):
        assert hi < lo
    elif eps > th * (1 + 1e-9):
        assert hi > lo


def _synthetic_grid(params, rel_noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for d in (3, 5, 7, 9):
        for eps in np.linspace(0.001, 0.004, 7):
            p = eq3(eps, d, *params)
            se = rel_noise * p if rel_noise else 0.01 * p
            rows.append((eps, d, p * math.exp(rng.normal() * rel_noise), se))
    return rows


def test_fit_recovers_exact_parameters():
    params = (0.5978, 2.9767, -3.9819, 0.2923)
    fit = fit_scaling(_synthetic_grid(params))
    assert fit.params == pytest.approx(params, rel=1e-4)
    assert max(abs(r) for r in fit.residuals) < 1e-8


@given(st.floats(0.45, 0.75), st.floats(2.0, 3.5), st.floats(-5.0, -3.0), st.floats(0.0, 1.0))
def test_fit_recovery_property(a, b, g, dl):
    fit = fit_scaling(_synthetic_grid((a, b, g, dl)))
    assert fit.params == pytest.approx((a, b, g, dl), rel=1e-3, abs=1e-3)


def test_fit_with_noise_within_sigma():
    params = (0.5978, 2.9767, -3.9819, 0.2923)
    fit = fit_scaling(_synthetic_grid(params, rel_noise=0.05, seed=4))
    for got, want, s in zip(fit.params, params, fit.sigmas):
        assert abs(got - want) < 4 * s


def test_fit_needs_points():
    with pytest.raises(ValueError):
        fit_scaling([(0.001, 3, 1e-4, 1e-5)] * 3)


def test_subthreshold_selection():
    rows = [(0.001, 3, 1e-4, 1e-5), (0.001, 5, 1e-5, 5e-6), (0.006, 3, 1e-2, 1e-4), (0.002, 7, 0.0, 0.0)]
    assert select_subthreshold(rows, 0.007) == [rows[0]]


# -- threshold ------------------------------------------------------------------

def test_threshold_from_table_i_synthetic():
    rows = [(e, d, eq3(e, d, *TABLE_I.params), 0.0)
            for d in (3, 5, 7) for e in np.linspace(0.004, 0.012, 9)]
    est = find_threshold(rows)
    assert est.eps2_th == pytest.approx(math.exp(-2.9767 / 0.5978), rel=1e-9)
    assert est.eps2_th == pytest.approx(0.0069, abs=5e-5)


def test_no_crossing_reported():
    rows = [(e, d, e * d, 0.0) for d in (3, 5) for e in (0.004, 0.008, 0.012)]
    with pytest.raises(NoThresholdError):
        find_threshold(rows)


def test_threshold_bootstrap_uncertainty():
    rows = [(e, d, eq3(e, d, *TABLE_I.params), 0.05 * eq3(e, d, *TABLE_I.params))
            for d in (3, 5, 7) for e in np.linspace(0.004, 0.012, 9)]
    est = find_threshold(rows, n_boot=100)
    assert 0 < est.stderr < 0.1 * est.eps2_th


# -- resources ------------------------------------------------------------------

@pytest.mark.parametrize("eps, target, s", [
    (0.0012, 4e-6, 15),
    (0.00012, 4e-6, 7),
    (0.0011, 1e-15, 35),
    (0.00014, 1e-15, 17),
])
def test_required_segment_anchors(eps, target, s):
    assert abs(required_segment(eps, target) - s) <= 2


def test_required_segment_is_minimal():
    s = required_segment(0.0012, 4e-6)
    assert p_cnot(0.0012, s - 2) <= 4e-6 < p_cnot(0.0012, s - 4)
    assert p_cnot(0.0012, s - 2) == pytest.approx(14 * (s - 2) * float(evaluate(TABLE_I, 0.0012, s - 2)))


@given(st.floats(1e-5, 0.004), st.floats(1e-5, 0.004), st.floats(-16, -4), st.floats(-16, -4))
def test_required_segment_monotone(e1, e2, t1, t2):
    (e1, e2), (t1, t2) = sorted((e1, e2)), sorted((t1, t2))
    assert required_segment(e1, 10 ** t2) <= required_segment(e2, 10 ** t2)
    assert required_segment(e1, 10 ** t2) <= required_segment(e1, 10 ** t1)


def test_above_threshold_unattainable():
    with pytest.raises(UnattainableError):
        required_segment(0.008, 1e-6)
    assert resource_table([0.008], [1e-6])[0]["s"] is None


def test_overheads():
    assert gauge_overhead(3) == 864
    assert gauge_overhead(4) == 5184
    assert gauge_overhead(0) == 1


def test_level_4_gates_at_21_qubits():
    g = gates_before_failure(0.001, 21, 4)
    assert 1e14 <= g <= 1e16
    p = p_cnot(0.001, 19)
    assert g == pytest.approx(1 / math.exp(TABLE_II[4][0] * math.log(p) + TABLE_II[4][1]))


def test_level_0_is_reciprocal():
    assert gates_before_failure(0.001, 21, 0) == pytest.approx(1 / p_cnot(0.001, 19))


def test_table_i_params_on_scaling_fit():
    fit = ScalingFit(0.5978, 2.9767, -3.9819, 0.2923)
    assert fit.threshold == TABLE_I.threshold
