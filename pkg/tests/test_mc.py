import numpy as np
import pytest

from tailsense import analytic
from tailsense.mc import (cov_bound, mc_probability, required_mc_samples,
                          saltelli_sobol)
from tailsense.sampling import RandomStream, UniformBox


def std_normal_sampler(n, stream):
    return stream.standard_normal((n, 1))


def identity_qoi(theta):
    return np.asarray(theta)[:, 0]


def test_mc_symmetric_half():
    est = mc_probability(identity_qoi, std_normal_sampler, 10**6, 0.0, RandomStream(0))
    assert abs(est.p_hat - 0.5) < 0.0015
    assert est.n_samples == 10**6
    assert est.n_evals == 10**6


def test_mc_zero_hits_flags_undefined_cov():
    est = mc_probability(identity_qoi, std_normal_sampler, 100, 10.0, RandomStream(1))
    assert est.p_hat == 0.0
    assert est.cov_hat is None


def test_mc_cov_formula():
    est = mc_probability(identity_qoi, std_normal_sampler, 10**5, 1.0, RandomStream(2))
    expected = np.sqrt((1.0 - est.p_hat) / (10**5 * est.p_hat))
    assert est.cov_hat == pytest.approx(expected, rel=1e-12)


def test_mc_unbiased_over_repetitions():
    # grand mean over 200 independent repetitions within 4 standard errors
    reps = np.array([
        mc_probability(identity_qoi, std_normal_sampler, 10**4, 0.0,
                       RandomStream(3, stream_id=r + 1)).p_hat
        for r in range(200)
    ])
    se = reps.std(ddof=1) / np.sqrt(200)
    assert abs(reps.mean() - 0.5) < 4 * se


def test_mc_matches_analytic_tail():
    h = analytic.nominal_hyper()
    qoi = analytic.standard_space_qoi(h)

    def sampler(n, stream):
        return stream.standard_normal((n, h.d))

    est = mc_probability(qoi, sampler, 10**7, 3.0, RandomStream(4))
    truth = analytic.exact_probability(h, 3.0)
    se = truth * np.sqrt((1 - truth) / (10**7 * truth))
    assert abs(est.p_hat - truth) < 3 * se


def test_required_mc_samples():
    # planning rule n = 1/(delta^2 p), rounded up
    assert required_mc_samples(1e-6, 0.1) == 10**8
    assert required_mc_samples(0.5, 0.1) == 200
    # ~2.7 million samples for a ~3.7e-5 event at 10% CoV
    n = required_mc_samples(3.69e-5, 0.1)
    assert 2.6e6 < n < 2.8e6


def test_required_mc_samples_validation():
    with pytest.raises(ValueError):
        required_mc_samples(0.0, 0.1)
    with pytest.raises(ValueError):
        required_mc_samples(0.5, 0.0)


def test_cov_bound_values():
    assert cov_bound(0.5) == pytest.approx(1.0)
    assert cov_bound(0.1) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        cov_bound(0.0)


# ---------------------------------------------------------------------------
# pick-and-freeze indices


def test_saltelli_additive_function():
    # f(x) = x1 + 2*x2 on a box: S_i = T_i, known variance shares
    box = UniformBox(np.array([0.0, 0.0]), np.array([1.0, 1.0]))

    def f(x):
        return x[:, 0] + 2.0 * x[:, 1]

    rep = saltelli_sobol(f, box, 200_000, RandomStream(5))
    v1, v2 = 1.0 / 12.0, 4.0 / 12.0
    assert rep.first_order == pytest.approx([v1 / (v1 + v2), v2 / (v1 + v2)], abs=0.01)
    assert rep.total == pytest.approx(rep.first_order, abs=0.01)
    assert rep.n_evals == 200_000 * 4  # n_base * (M + 2)


def test_saltelli_interaction_shows_in_total():
    # f = x1 * x2 on [-1,1]^2 is purely interactive: S ~ 0, T ~ 1
    box = UniformBox(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))

    def f(x):
        return x[:, 0] * x[:, 1]

    rep = saltelli_sobol(f, box, 100_000, RandomStream(6))
    assert rep.first_order == pytest.approx([0.0, 0.0], abs=0.02)
    assert rep.total == pytest.approx([1.0, 1.0], abs=0.02)


def test_saltelli_deterministic():
    box = UniformBox(np.zeros(3), np.ones(3))

    def f(x):
        return x.sum(axis=1)

    a = saltelli_sobol(f, box, 1000, RandomStream(7))
    b = saltelli_sobol(f, box, 1000, RandomStream(7))
    assert np.array_equal(a.first_order, b.first_order)
    assert np.array_equal(a.total, b.total)


def test_saltelli_constant_function_raises():
    box = UniformBox(np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        saltelli_sobol(lambda x: np.zeros(x.shape[0]), box, 100, RandomStream(8))
