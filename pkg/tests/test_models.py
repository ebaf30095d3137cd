import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llcd.models import (
    GaussianMixtureModel,
    GaussianModel,
    as_data_matrix,
    evaluate_log_likelihood,
    fit_gaussian,
    fit_gmm_em,
    load_data_csv,
    model_from_dict,
    model_to_dict,
    random_gaussian,
    random_mixture,
    save_data_csv,
    select_k_cv,
)

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def std_normal(d=1):
    return GaussianModel(np.zeros(d), np.eye(d))


# ---------------------------------------------------------------------------
# construction and invariants


def test_covariance_must_be_spd():
    with pytest.raises(ValueError, match="positive definite"):
        GaussianModel([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        GaussianModel([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_cached_factorization_consistency():
    rng = np.random.default_rng(0)
    for d in (1, 3, 17):
        m = random_gaussian(d, rng)
        recon = m.chol @ m.chol.T
        rel = np.linalg.norm(recon - m.covariance) / np.linalg.norm(m.covariance)
        assert rel < 1e-9
        sign, logdet = np.linalg.slogdet(m.covariance)
        assert sign > 0
        assert m.log_det == pytest.approx(logdet, rel=1e-10)


def test_mixture_weight_validation():
    comp = std_normal()
    with pytest.raises(ValueError, match="sum"):
        GaussianMixtureModel([0.6, 0.6], [comp, comp])
    with pytest.raises(ValueError, match="positive"):
        GaussianMixtureModel([1.5, -0.5], [comp, comp])
    with pytest.raises(ValueError, match="dimension"):
        GaussianMixtureModel([0.5, 0.5], [comp, std_normal(2)])


# ---------------------------------------------------------------------------
# log-likelihood values


def test_gaussian_loglik_at_mode():
    assert std_normal().log_likelihood([[0.0]])[0] == pytest.approx(-HALF_LOG_2PI)
    assert std_normal(2).log_likelihood([[0.0, 0.0]])[0] == pytest.approx(
        -2 * HALF_LOG_2PI
    )


def test_gaussian_loglik_hand_value():
    # -log(2 pi)/2 - (1/2) * 2^2
    assert std_normal().log_likelihood([[2.0]])[0] == pytest.approx(-HALF_LOG_2PI - 2.0)


def test_dimension_mismatch_names_both_dims():
    with pytest.raises(ValueError, match="d=2.*d=3"):
        std_normal(2).log_likelihood(np.zeros((4, 3)))


def test_loglik_matches_direct_quadratic_form():
    # oracle: dense inverse and determinant, no Cholesky
    rng = np.random.default_rng(1)
    m = random_gaussian(5, rng)
    X = rng.standard_normal((40, 5))
    inv = np.linalg.inv(m.covariance)
    expected = [
        -0.5
        * (
            5 * math.log(2 * math.pi)
            + math.log(np.linalg.det(m.covariance))
            + (x - m.mean) @ inv @ (x - m.mean)
        )
        for x in X
    ]
    np.testing.assert_allclose(m.log_likelihood(X), expected, rtol=1e-10)


# ---------------------------------------------------------------------------
# sampling


def test_sampling_moments():
    rng = np.random.default_rng(2)
    X = std_normal().sample(100_000, rng)
    assert abs(X.mean()) < 0.02
    assert abs(X.var(ddof=1) - 1.0) < 0.05


def test_sampling_deterministic():
    m = random_gaussian(3, np.random.default_rng(3))
    a = m.sample(1, np.random.default_rng(42))
    b = m.sample(1, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)

    mix = random_mixture(3, 2, np.random.default_rng(4))
    a = mix.sample(7, np.random.default_rng(42))
    b = mix.sample(7, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_mixture_assignment_fraction():
    mix = GaussianMixtureModel(
        [0.5, 0.5], [std_normal(), GaussianModel([10.0], [[1.0]])]
    )
    _, idx = mix.sample(100_000, np.random.default_rng(5), return_components=True)
    frac = np.mean(idx == 0)
    assert 0.49 <= frac <= 0.51


# ---------------------------------------------------------------------------
# mixture log-likelihood variants


def far_mixture():
    return GaussianMixtureModel(
        [0.5, 0.5], [std_normal(), GaussianModel([10.0], [[1.0]])]
    )


def test_single_component_reduces_to_gaussian():
    rng = np.random.default_rng(6)
    comp = random_gaussian(3, rng)
    mix = GaussianMixtureModel([1.0], [comp])
    X = rng.standard_normal((50, 3))
    expected = comp.log_likelihood(X)
    np.testing.assert_allclose(mix.log_likelihood_upper(X), expected, rtol=1e-12)
    np.testing.assert_allclose(mix.log_likelihood_lower(X), expected, rtol=1e-12)
    np.testing.assert_allclose(mix.log_density(X), expected, rtol=1e-12)


def test_upper_variant_hand_value():
    # dominant component at x=0 is the one centered there; k * w = 1
    value = far_mixture().log_likelihood_upper([[0.0]])[0]
    assert value == pytest.approx(-HALF_LOG_2PI, rel=1e-12)
    # independent substitution into the printed form
    k, w, logdet, maha = 2, 0.5, 0.0, 0.0
    direct = -(k * w / 2) * (math.log(2 * math.pi) + logdet + maha)
    assert value == pytest.approx(direct, rel=1e-12)


def test_upper_variant_selects_dominant_component():
    mix = far_mixture()
    value = mix.log_likelihood_upper([[10.0]])[0]
    assert value == pytest.approx(-HALF_LOG_2PI, rel=1e-12)  # component 2's mode


def test_upper_conventional_flag():
    mix = far_mixture()
    conventional = mix.log_likelihood_upper([[0.0]], conventional=True)[0]
    assert conventional == pytest.approx(math.log(0.5) - HALF_LOG_2PI, rel=1e-12)


def test_lower_variant_hand_value():
    # -1/2 [ 0.5 (log 2pi + 0) + 0.5 (log 2pi + 100) ] = -log(2pi)/2 - 25
    value = far_mixture().log_likelihood_lower([[0.0]])[0]
    assert value == pytest.approx(-HALF_LOG_2PI - 25.0, rel=1e-12)


def test_log_density_symmetric_mixture():
    mix = GaussianMixtureModel(
        [0.5, 0.5], [GaussianModel([-2.0], [[1.0]]), GaussianModel([2.0], [[1.0]])]
    )
    value = mix.log_density([[0.0]])[0]
    comp = mix.components[0].log_likelihood([[0.0]])[0]
    assert value == pytest.approx(comp, rel=1e-12)  # log(2 * 0.5 * N(0; 2, 1))


def test_jensen_bound_random_points():
    rng = np.random.default_rng(7)
    mix = random_mixture(4, 3, rng)
    X = rng.standard_normal((1000, 4)) * 3
    assert np.all(mix.log_likelihood_lower(X) <= mix.log_density(X) + 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_jensen_bound_property(seed, d, k):
    rng = np.random.default_rng(seed)
    mix = random_mixture(d, k, rng)
    X = rng.standard_normal((50, d)) * 2
    assert np.all(mix.log_likelihood_lower(X) <= mix.log_density(X) + 1e-9)


def test_variance_law_and_additivity():
    rng = np.random.default_rng(8)
    # var of the log-likelihood under the model itself is d/2
    d = 4
    m = random_gaussian(d, rng)
    values = m.log_likelihood(m.sample(100_000, rng))
    assert np.var(values, ddof=1) == pytest.approx(d / 2, rel=0.05)

    # independent coordinates: the joint variance is the sum of marginal ones
    variances = np.array([0.5, 1.0, 2.0, 1.5, 0.8])
    m = GaussianModel(np.zeros(5), np.diag(variances))
    X = m.sample(100_000, rng)
    joint = np.var(m.log_likelihood(X), ddof=1)
    marginal_sum = sum(
        np.var(
            GaussianModel([0.0], [[v]]).log_likelihood(X[:, i : i + 1]), ddof=1
        )
        for i, v in enumerate(variances)
    )
    assert joint == pytest.approx(marginal_sum, rel=0.05)


# ---------------------------------------------------------------------------
# fitting


def test_fit_gaussian_hand_case():
    m = fit_gaussian([[0.0], [2.0]])
    assert m.mean[0] == pytest.approx(1.0)
    assert m.covariance[0, 0] == pytest.approx(2.0)  # divisor n-1 = 1


def test_fit_gaussian_recovers_mean():
    rng = np.random.default_rng(9)
    X = std_normal(4).sample(100_000, rng)
    m = fit_gaussian(X)
    assert np.all(np.abs(m.mean) < 0.02)


def test_fit_gaussian_preconditions():
    with pytest.raises(ValueError, match="insufficient samples"):
        fit_gaussian(np.zeros((3, 3)) + np.arange(3))
    with pytest.raises(ValueError, match="degenerate covariance"):
        fit_gaussian(np.ones((10, 2)))


def test_em_single_component_matches_sample_estimator():
    rng = np.random.default_rng(10)
    n = 500
    X = random_gaussian(3, rng).sample(n, rng)
    em = fit_gmm_em(X, 1, np.random.default_rng(0))
    direct = fit_gaussian(X)
    assert em.weights[0] == pytest.approx(1.0)
    np.testing.assert_allclose(em.components[0].mean, direct.mean, atol=1e-6)
    # EM maximizes the likelihood, so its covariance is the n-divisor
    # estimator (plus the trace-scaled jitter), not the unbiased one
    mle = direct.covariance * (n - 1) / n
    expected = mle + 1e-6 * (np.trace(mle) / 3) * np.eye(3)
    np.testing.assert_allclose(em.components[0].covariance, expected, rtol=1e-9)


def test_em_recovers_separated_mixture():
    rng = np.random.default_rng(11)
    truth = GaussianMixtureModel(
        [0.5, 0.5], [GaussianModel([-5.0], [[1.0]]), GaussianModel([5.0], [[1.0]])]
    )
    X = truth.sample(10_000, rng)
    model = fit_gmm_em(X, 2, np.random.default_rng(1))
    means = sorted(c.mean[0] for c in model.components)
    assert means[0] == pytest.approx(-5.0, abs=0.1)
    assert means[1] == pytest.approx(5.0, abs=0.1)
    assert np.all(np.abs(model.weights - 0.5) < 0.05)


def test_em_loglik_monotone():
    rng = np.random.default_rng(12)
    X = random_mixture(2, 2, rng).sample(2_000, rng)
    _, trace = fit_gmm_em(X, 2, np.random.default_rng(2), return_trace=True)
    diffs = np.diff(trace)
    assert np.all(diffs >= -1e-9)


def test_em_precondition():
    with pytest.raises(ValueError, match="insufficient"):
        fit_gmm_em(np.random.default_rng(0).standard_normal((5, 2)), 2,
                   np.random.default_rng(0))


def test_select_k_prefers_parsimony_on_gaussian_data():
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        X = random_gaussian(2, rng).sample(600, rng)
        if select_k_cv(X, (1, 2, 3), folds=3, rng=rng) == 1:
            hits += 1
    assert hits >= 9


def test_select_k_finds_two_components():
    rng = np.random.default_rng(13)
    truth = GaussianMixtureModel(
        [0.5, 0.5],
        [GaussianModel([-6.0, 0.0], np.eye(2)), GaussianModel([6.0, 0.0], np.eye(2))],
    )
    X = truth.sample(1_200, rng)
    assert select_k_cv(X, (1, 2, 4), folds=3, rng=rng) == 2


# ---------------------------------------------------------------------------
# dispatch, serialization, CSV


def test_evaluate_log_likelihood_dispatch():
    rng = np.random.default_rng(14)
    mix = random_mixture(2, 2, rng)
    X = rng.standard_normal((20, 2))
    np.testing.assert_array_equal(
        evaluate_log_likelihood(mix, X, "upper"), mix.log_likelihood_upper(X)
    )
    np.testing.assert_array_equal(
        evaluate_log_likelihood(mix, X, "lower"), mix.log_likelihood_lower(X)
    )
    np.testing.assert_array_equal(
        evaluate_log_likelihood(mix, X, "exact"), mix.log_density(X)
    )
    g = random_gaussian(2, rng)
    np.testing.assert_array_equal(
        evaluate_log_likelihood(g, X, "exact"), g.log_likelihood(X)
    )
    with pytest.raises(ValueError):
        evaluate_log_likelihood(g, X, "upper")


def test_model_serialization_roundtrip():
    rng = np.random.default_rng(15)
    for model in (random_gaussian(3, rng), random_mixture(2, 3, rng)):
        again = model_from_dict(model_to_dict(model))
        assert again == model


def test_data_csv_roundtrip(tmp_path):
    X = np.array([[1.25, -3.5], [0.0, 2.0 / 3.0], [1e-12, 4.0]])
    path = tmp_path / "data.csv"
    save_data_csv(path, X)
    np.testing.assert_array_equal(load_data_csv(path), X)


def test_as_data_matrix_rejects_bad_input():
    with pytest.raises(ValueError, match="non-finite"):
        as_data_matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        as_data_matrix(np.zeros((0, 2)))
