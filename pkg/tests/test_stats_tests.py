import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2, t as student_t

from llcd.models import GaussianModel
from llcd.stats_tests import (
    TestOutcome,
    lepage_test,
    mann_whitney_standardized,
    mann_whitney_u,
    mood_m,
    mood_standardized,
    snr_of_change,
    welch_t_one_sided,
)


def brute_force_u(past, recent):
    u = 0.0
    for p in past:
        for r in recent:
            if p < r:
                u += 1.0
            elif p == r:
                u += 0.5
    return u


def brute_force_m(past, recent):
    pooled = sorted(list(past) + list(recent))
    total = len(pooled)
    m = 0.0
    for r in recent:
        first = pooled.index(r) + 1
        count = pooled.count(r)
        midrank = first + (count - 1) / 2.0
        m += (midrank - (total + 1) / 2.0) ** 2
    return m


# ---------------------------------------------------------------------------
# Welch t


def test_welch_identical_windows_not_rejected():
    w = [1.0, 2.0, 3.0, 4.0]
    outcome = welch_t_one_sided(w, w, alpha=0.05)
    assert outcome.statistic == 0.0
    assert not outcome.rejected


def test_welch_detects_mean_drop():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(1000):
        past = rng.standard_normal(500)
        recent = rng.standard_normal(500) - 0.5
        hits += welch_t_one_sided(past, recent).rejected
    assert hits / 1000 >= 0.99  # noncentrality ~ 0.5 / sqrt(2/500) ~ 7.9


def test_welch_one_sided_direction():
    rng = np.random.default_rng(1)
    past = rng.standard_normal(500)
    recent = rng.standard_normal(500) + 1.0  # mean went UP: one-sided must ignore
    assert not welch_t_one_sided(past, recent).rejected
    assert welch_t_one_sided(past, recent, two_sided=True).rejected


def test_welch_threshold_is_student_quantile():
    rng = np.random.default_rng(2)
    past, recent = rng.standard_normal(500), rng.standard_normal(400)
    outcome = welch_t_one_sided(past, recent, alpha=0.01)
    var_p, var_r = past.var(ddof=1), recent.var(ddof=1)
    se_p, se_r = var_p / 500, var_r / 400
    dof = (se_p + se_r) ** 2 / (se_p**2 / 499 + se_r**2 / 399)
    assert outcome.threshold == pytest.approx(student_t.ppf(0.99, dof), rel=1e-12)


def test_welch_degenerate_windows():
    with pytest.raises(ValueError, match="degenerate"):
        welch_t_one_sided([1.0, 1.0, 1.0], [1.0, 1.0])


# ---------------------------------------------------------------------------
# rank statistics


def test_mann_whitney_hand_values():
    z = mann_whitney_standardized([1.0, 2.0], [3.0, 4.0])
    assert mann_whitney_u([1.0, 2.0], [3.0, 4.0]) == 4.0
    assert z == pytest.approx(2.0 / np.sqrt(4 * 5 / 12.0), rel=1e-12)  # ~1.549
    z_swapped = mann_whitney_standardized([3.0, 4.0], [1.0, 2.0])
    assert z_swapped == pytest.approx(-z, rel=1e-12)


def test_mann_whitney_centered_when_balanced():
    # U at exactly n_p n_r / 2 standardizes to zero
    assert mann_whitney_standardized([1.0, 4.0], [2.0, 3.0]) == pytest.approx(0.0)


def test_mood_hand_values():
    assert mood_m([1.0, 2.0], [3.0, 4.0]) == 2.5
    assert mood_standardized([1.0, 2.0], [3.0, 4.0]) == pytest.approx(0.0, abs=1e-12)
    # recent window on the extreme ranks of N=4: dispersion shift, Z > 0
    assert mood_m([2.0, 3.0], [1.0, 4.0]) == 4.5
    assert mood_standardized([2.0, 3.0], [1.0, 4.0]) > 0


def test_rank_statistics_against_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n_p, n_r = rng.integers(2, 7, size=2)
        pool = rng.choice(np.arange(1.0, 13.0), size=n_p + n_r, replace=False)
        past, recent = pool[:n_p], pool[n_p:]
        assert mann_whitney_u(past, recent) == brute_force_u(past, recent)
        assert mood_m(past, recent) == brute_force_m(past, recent)


def test_rank_statistics_with_ties():
    past, recent = [1.0, 2.0, 2.0], [2.0, 3.0]
    assert mann_whitney_u(past, recent) == brute_force_u(past, recent)
    assert mood_m(past, recent) == brute_force_m(past, recent)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(-50, 50), min_size=2, max_size=10),
    st.lists(st.integers(-50, 50), min_size=2, max_size=10),
    st.floats(0.1, 5.0),
    st.floats(-10.0, 10.0),
)
def test_rank_statistics_invariant_under_monotone_transforms(p, r, scale, shift):
    past = np.array(p, dtype=float)
    recent = np.array(r, dtype=float)
    if np.all(np.concatenate([past, recent]) == past[0]):
        return
    z_mw = mann_whitney_standardized(past, recent)
    z_mood = mood_standardized(past, recent)
    for transform in (lambda x: scale * x + shift, lambda x: np.exp(x / 25.0)):
        assert mann_whitney_standardized(
            transform(past), transform(recent)
        ) == pytest.approx(z_mw, rel=1e-9)
        assert mood_standardized(
            transform(past), transform(recent)
        ) == pytest.approx(z_mood, rel=1e-9)


def test_rank_statistics_degenerate():
    with pytest.raises(ValueError, match="identical"):
        mann_whitney_standardized([2.0, 2.0], [2.0, 2.0])
    with pytest.raises(ValueError, match="identical"):
        mood_standardized([2.0, 2.0], [2.0, 2.0])


# ---------------------------------------------------------------------------
# Lepage


def test_lepage_is_sum_of_squared_components():
    rng = np.random.default_rng(4)
    past, recent = rng.standard_normal(60), rng.standard_normal(50) * 1.4
    outcome = lepage_test(past, recent)
    expected = (
        mann_whitney_standardized(past, recent) ** 2
        + mood_standardized(past, recent) ** 2
    )
    assert outcome.statistic == pytest.approx(expected, rel=1e-12)
    assert outcome.statistic >= 0
    assert outcome.threshold == pytest.approx(chi2.ppf(0.95, 2), rel=1e-12)
    assert outcome.threshold == pytest.approx(5.9915, abs=1e-4)


def test_lepage_detects_location_shift():
    rng = np.random.default_rng(5)
    hits = 0
    for _ in range(1000):
        past = rng.standard_normal(500)
        recent = rng.standard_normal(500) - 0.5
        hits += lepage_test(past, recent).rejected
    assert hits / 1000 >= 0.95


def test_lepage_detects_scale_change():
    rng = np.random.default_rng(6)
    hits = 0
    for _ in range(1000):
        past = rng.standard_normal(500)
        recent = rng.standard_normal(500) * 2.0
        hits += lepage_test(past, recent).rejected
    assert hits / 1000 >= 0.9


# ---------------------------------------------------------------------------
# SNR


def test_snr_zero_when_no_change():
    rng = np.random.default_rng(7)
    model = GaussianModel([0.0], [[1.0]])
    snr = snr_of_change(model.sample, model.sample, model.log_likelihood,
                        100_000, rng)
    assert snr < 1e-4  # (3 sigma_CLT)^2 at this budget


def test_snr_unit_shift_hand_value():
    rng = np.random.default_rng(8)
    p = GaussianModel([0.0], [[1.0]])
    q = GaussianModel([1.0], [[1.0]])
    snr = snr_of_change(p.sample, q.sample, p.log_likelihood, 100_000, rng)
    # 0.25 / (0.5 + 1.5) from the chi-square moments
    assert snr == pytest.approx(0.125, abs=0.01)


def test_snr_std_error_brackets_truth():
    rng = np.random.default_rng(9)
    p = GaussianModel([0.0], [[1.0]])
    q = GaussianModel([1.0], [[1.0]])
    snr, se = snr_of_change(p.sample, q.sample, p.log_likelihood, 50_000, rng,
                            return_std_error=True)
    assert abs(snr - 0.125) <= 4 * se


def test_outcome_invariant():
    with pytest.raises(ValueError, match="inconsistent"):
        TestOutcome(statistic=1.0, threshold=2.0, rejected=True, alpha=0.05)
    with pytest.raises(ValueError, match="alpha"):
        TestOutcome(statistic=1.0, threshold=2.0, rejected=False, alpha=1.5)
