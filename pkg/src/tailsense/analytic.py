"""Closed-form benchmark model: a scaled negative sum of independent
Gaussians, whose exceedance probability is known exactly for every choice of
the hyper-parameters.

q(theta) = -(1/sqrt(d)) * sum_i theta_i  with  theta_i ~ N(mu_i, sigma_i^2)

pushes forward to a single Gaussian, so the rare-event probability
P(q > tau_bar) is one complementary error function away.  This makes the
model the end-to-end oracle for everything else in the package: subset
simulation can be checked against truth, and the sensitivity pipeline can be
fed noiseless probabilities.

The hyper-parameter vector is xi = [mu_1..mu_d, sigma_1^2..sigma_d^2]; note
the second block contains variances, not standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .sampling import RandomStream, UniformBox, uniform_box_sample

__all__ = [
    "AnalyticHyper",
    "qoi",
    "standard_space_qoi",
    "pushforward_params",
    "exact_probability",
    "probability_from_xi",
    "hyper_box",
    "hyper_from_xi",
    "cov_vs_threshold_curve",
]


@dataclass(frozen=True)
class AnalyticHyper:
    """Means and variances of the d independent Gaussian inputs."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.means, dtype=float))
        var = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if mu.shape != var.shape or mu.ndim != 1 or mu.size == 0:
            raise ValueError("means and variances must be equal-length 1-d vectors")
        if not np.all(var > 0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def d(self) -> int:
        return self.means.size

    @property
    def xi(self) -> np.ndarray:
        """The stacked hyper-parameter vector [means, variances]."""
        return np.concatenate([self.means, self.variances])


def nominal_hyper() -> AnalyticHyper:
    """The reference configuration used throughout: d=5, means 1..5,
    variances 10, 8, 6, 4, 2."""
    return AnalyticHyper(means=np.arange(1.0, 6.0),
                         variances=np.array([10.0, 8.0, 6.0, 4.0, 2.0]))


def qoi(theta: np.ndarray) -> np.ndarray:
    """-(1/sqrt(d)) times the coordinate sum, batched over rows."""
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        raise ValueError("empty input")
    single = theta.ndim == 1
    t = theta[None, :] if single else theta
    vals = -t.sum(axis=1) / math.sqrt(t.shape[1])
    return float(vals[0]) if single else vals


def standard_space_qoi(h: AnalyticHyper):
    """QoI over standard-normal coordinates for the given hyper-parameters.

    Absorbs the input law into the model (theta_i = mu_i + sigma_i * z_i), so
    samplers can always work with independent N(0,1) coordinates.
    """
    mu = h.means
    sig = np.sqrt(h.variances)

    def q(z):
        return qoi(mu + sig * np.asarray(z, dtype=float))

    return q


def pushforward_params(h: AnalyticHyper) -> tuple[float, float]:
    """(mean, variance) of the QoI's Gaussian law."""
    mu_bar = -float(h.means.sum()) / math.sqrt(h.d)
    var_bar = float(h.variances.mean())
    return mu_bar, var_bar


def exact_probability(h: AnalyticHyper, tau_bar: float) -> float:
    """P(q > tau_bar), exactly.

    Computed as erfc(z / sqrt(2)) / 2 so the deep tail suffers no
    cancellation; erfc is accurate to ~1e-15, far beyond every tolerance
    used downstream.  Clamped against floating rounding only.
    """
    mu_bar, var_bar = pushforward_params(h)
    if var_bar <= 0:
        raise ValueError("pushforward variance must be positive")
    z = (tau_bar - mu_bar) / math.sqrt(var_bar)
    return min(1.0, max(0.0, 0.5 * erfc(z / math.sqrt(2.0))))


def hyper_from_xi(xi: np.ndarray) -> AnalyticHyper:
    """Rebuild hyper-parameters from a stacked [means, variances] vector."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or xi.size % 2:
        raise ValueError("xi must stack d means and d variances")
    d = xi.size // 2
    return AnalyticHyper(means=xi[:d], variances=xi[d:])


def probability_from_xi(xi: np.ndarray, tau_bar: float) -> np.ndarray:
    """Vectorized exact probability over rows of stacked xi vectors."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    X = xi[None, :] if single else xi
    if X.shape[1] % 2:
        raise ValueError("xi rows must stack d means and d variances")
    d = X.shape[1] // 2
    mu = X[:, :d]
    var = X[:, d:]
    if np.any(var <= 0):
        raise ValueError("variances must be strictly positive")
    mu_bar = -mu.sum(axis=1) / math.sqrt(d)
    sd_bar = np.sqrt(var.mean(axis=1))
    p = 0.5 * erfc((tau_bar - mu_bar) / sd_bar / math.sqrt(2.0))
    p = np.clip(p, 0.0, 1.0)
    return float(p[0]) if single else p


def hyper_box(h: AnalyticHyper, fraction: float) -> UniformBox:
    """Componentwise +-fraction box around the nominal xi vector.

    The perturbation applies to the listed components themselves — in
    particular to the variances, not their square roots.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("perturbation fraction must lie in (0, 1)")
    xi = h.xi
    if np.any(xi == 0.0):
        raise ValueError("zero nominal component gives an empty interval")
    half = fraction * np.abs(xi)
    return UniformBox(xi - half, xi + half)


def cov_vs_threshold_curve(h: AnalyticHyper, tau_grid, fraction: float,
                           n_outer: int, stream: RandomStream) -> np.ndarray:
    """Empirical coefficient of variation of P_tau(xi) across the hyper box.

    Samples xi uniformly in the +-fraction box once and reuses the ensemble
    for every threshold.  Returns rows (tau_bar, delta); delta is NaN when
    the ensemble mean is zero (all probabilities underflow), flagging an
    undefined CoV rather than raising.

    Population variance (ddof=0) is used so the Bhatia-Davis bound
    sqrt((1-m)/m) holds for every finite ensemble, not just in expectation.
    """
    box = hyper_box(h, fraction)
    xi = uniform_box_sample(box, n_outer, stream)
    out = np.empty((len(tau_grid), 2))
    for row, tau in enumerate(np.asarray(tau_grid, dtype=float)):
        p = probability_from_xi(xi, tau)
        m = float(p.mean())
        delta = float(p.std(ddof=0) / m) if m > 0 else math.nan
        out[row] = (tau, delta)
    return out
