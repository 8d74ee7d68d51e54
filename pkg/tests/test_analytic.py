import numpy as np
import pytest
from scipy import stats

from tailsense import analytic
from tailsense.mc import cov_bound
from tailsense.sampling import RandomStream

NOMINAL = analytic.nominal_hyper()


def test_nominal_values():
    assert NOMINAL.means.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert NOMINAL.variances.tolist() == [10.0, 8.0, 6.0, 4.0, 2.0]
    assert NOMINAL.d == 5


def test_hyper_validation():
    with pytest.raises(ValueError):
        analytic.AnalyticHyper(np.array([1.0, 2.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        analytic.AnalyticHyper(np.array([1.0]), np.array([0.0]))


def test_qoi_values():
    assert analytic.qoi(np.zeros(3)) == 0.0
    assert analytic.qoi(np.ones(4)) == pytest.approx(-2.0)  # -4/sqrt(4)
    batch = analytic.qoi(np.array([[1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0]]))
    assert batch == pytest.approx([-2.0, 0.0])


def test_qoi_empty_rejected():
    with pytest.raises(ValueError):
        analytic.qoi(np.zeros(0))


def test_pushforward_nominal():
    mu_bar, var_bar = analytic.pushforward_params(NOMINAL)
    assert mu_bar == pytest.approx(-15.0 / np.sqrt(5.0))
    assert var_bar == pytest.approx(6.0)


def test_pushforward_degenerate_cases():
    h = analytic.AnalyticHyper(np.zeros(3), np.full(3, 2.5))
    mu_bar, var_bar = analytic.pushforward_params(h)
    assert mu_bar == 0.0
    assert var_bar == pytest.approx(2.5)


def test_exact_probability_center():
    mu_bar, _ = analytic.pushforward_params(NOMINAL)
    assert analytic.exact_probability(NOMINAL, mu_bar) == pytest.approx(0.5)


def test_exact_probability_nominal_tail():
    p = analytic.exact_probability(NOMINAL, 3.0)
    assert 3.69e-5 <= p < 3.70e-5  # quoted as 3.69e-5 (3 significant figures)


def test_exact_probability_saturates_left():
    mu_bar, var_bar = analytic.pushforward_params(NOMINAL)
    p = analytic.exact_probability(NOMINAL, mu_bar - 10.0 * np.sqrt(var_bar))
    assert p == pytest.approx(1.0, abs=1e-12)


def test_exact_probability_monotone_decreasing():
    taus = np.linspace(-15.0, 8.0, 200)
    ps = np.array([analytic.exact_probability(NOMINAL, t) for t in taus])
    assert np.all(np.diff(ps) < 0)
    assert np.all((ps >= 0) & (ps <= 1))


def test_standard_space_qoi_matches_direct():
    stream = RandomStream(3)
    z = stream.standard_normal((100, 5))
    theta = NOMINAL.means + np.sqrt(NOMINAL.variances) * z
    assert np.allclose(analytic.standard_space_qoi(NOMINAL)(z), analytic.qoi(theta))


def test_sample_moments():
    z = RandomStream(8).standard_normal((10**6, 5))
    theta = NOMINAL.means + np.sqrt(NOMINAL.variances) * z
    se_mean = np.sqrt(NOMINAL.variances / 10**6)
    assert np.all(np.abs(theta.mean(axis=0) - NOMINAL.means) < 4 * se_mean)
    assert np.allclose(theta.var(axis=0, ddof=1), NOMINAL.variances, rtol=0.01)


def test_pushforward_distribution_ks():
    # empirical law of the QoI vs the closed-form normal pushforward
    mu_bar, var_bar = analytic.pushforward_params(NOMINAL)
    z = RandomStream(12).standard_normal((10**6, 5))
    q = analytic.standard_space_qoi(NOMINAL)(z)
    d, _ = stats.kstest(q, "norm", args=(mu_bar, np.sqrt(var_bar)))
    assert d < 0.002


def test_hyper_box_bounds():
    box = analytic.hyper_box(NOMINAL, 0.10)
    xi = NOMINAL.xi
    assert np.allclose(box.lower, 0.9 * xi)
    assert np.allclose(box.upper, 1.1 * xi)
    assert box.dim == 10


def test_hyper_box_zero_nominal_rejected():
    h = analytic.AnalyticHyper(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        analytic.hyper_box(h, 0.10)


def test_hyper_from_xi_roundtrip():
    h = analytic.hyper_from_xi(NOMINAL.xi)
    assert np.array_equal(h.means, NOMINAL.means)
    assert np.array_equal(h.variances, NOMINAL.variances)


def test_probability_from_xi_matches_scalar():
    box = analytic.hyper_box(NOMINAL, 0.10)
    from tailsense.sampling import uniform_box_sample
    xi = uniform_box_sample(box, 50, RandomStream(4))
    vec = analytic.probability_from_xi(xi, 3.0)
    for row, p in zip(xi, vec):
        assert p == analytic.exact_probability(analytic.hyper_from_xi(row), 3.0)


def test_cov_curve_monotone_and_bounded():
    taus = np.arange(2.0, 5.01, 0.5)
    curve = analytic.cov_vs_threshold_curve(NOMINAL, taus, 0.10, 10_000,
                                            RandomStream(6))
    assert curve.shape == (7, 2)
    deltas = curve[:, 1]
    assert np.all(np.diff(deltas) >= 0)
    # Bhatia-Davis: delta <= sqrt((1-m)/m) with m the ensemble mean
    for tau, delta in curve:
        box = analytic.hyper_box(NOMINAL, 0.10)
        from tailsense.sampling import uniform_box_sample
        xi = uniform_box_sample(box, 10_000, RandomStream(6, stream_id=1))
        m = analytic.probability_from_xi(xi, tau).mean()
        assert delta <= cov_bound(m)


def test_cov_curve_vanishes_with_perturbation():
    taus = np.array([3.0])
    small = analytic.cov_vs_threshold_curve(NOMINAL, taus, 1e-4, 2000, RandomStream(7))
    large = analytic.cov_vs_threshold_curve(NOMINAL, taus, 0.10, 2000, RandomStream(7))
    assert small[0, 1] < 0.01 * large[0, 1]
