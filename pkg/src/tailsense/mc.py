"""Plain Monte Carlo baselines: exceedance probability, its coefficient of
variation, the variance bound for [0,1] variables, and pick-and-freeze Sobol'
index estimation.

Model callables follow the package-wide batch convention: ``f`` maps an
(n, d) array of inputs to an (n,) array of outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import RandomStream, UniformBox, uniform_box_sample

__all__ = [
    "MCEstimate",
    "SaltelliReport",
    "mc_probability",
    "required_mc_samples",
    "cov_bound",
    "saltelli_sobol",
]


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo exceedance-probability estimate.

    ``cov_hat`` is the estimated coefficient of variation
    sqrt((1 - p)/(n p)); it is None when no exceedance was observed, which
    signals "too rare for plain MC at this budget" rather than an error.
    """

    p_hat: float
    n_samples: int
    cov_hat: float | None
    n_evals: int


@dataclass(frozen=True)
class SaltelliReport:
    first_order: np.ndarray
    total: np.ndarray
    n_evals: int


def mc_probability(qoi, sampler, n: int, tau_bar: float,
                   stream: RandomStream, block: int = 250_000) -> MCEstimate:
    """Estimate P(qoi(theta) > tau_bar) from n i.i.d. draws.

    ``sampler(m, stream)`` must return an (m, d) array of inputs; evaluation
    is blocked so n = 1e7 fits in memory.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    hits = 0
    done = 0
    while done < n:
        m = min(block, n - done)
        theta = sampler(m, stream)
        hits += int(np.count_nonzero(qoi(theta) > tau_bar))
        done += m
    p = hits / n
    cov = math.sqrt((1.0 - p) / (n * p)) if p > 0 else None
    return MCEstimate(p_hat=p, n_samples=n, cov_hat=cov, n_evals=n)


def required_mc_samples(p: float, delta: float) -> int:
    """Plain-MC budget rule n >= 1/(delta^2 p), rounded up.

    This is the small-p planning rule (the exact CoV carries an extra
    (1-p) factor that is dropped here); at p = 1e-6 and delta = 0.1 it
    gives the familiar 1e8.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie strictly inside (0, 1)")
    if delta <= 0.0:
        raise ValueError("target CoV must be positive")
    return math.ceil(1.0 / (delta * delta * p))


def cov_bound(mean: float) -> float:
    """Upper bound sqrt((1 - m)/m) on the CoV of any [0,1]-valued variable.

    Follows from var <= m (1 - m) (Bhatia-Davis with endpoints 0 and 1).
    """
    if not 0.0 < mean < 1.0:
        raise ValueError("bound defined for mean strictly inside (0, 1)")
    return math.sqrt((1.0 - mean) / mean)


def saltelli_sobol(f, box: UniformBox, n_base: int, stream: RandomStream) -> SaltelliReport:
    """First-order and total Sobol' indices by pick-and-freeze sampling.

    Two independent base designs A and B plus the M hybrids A_B^(i) (column i
    of A replaced by column i of B) give the Jansen-form estimators

        S_i = 1 - E[(f_B - f_ABi)^2] / (2 V),
        T_i =     E[(f_A - f_ABi)^2] / (2 V),

    at a cost of n_base * (M + 2) evaluations.  Estimates are returned raw
    (small statistical excursions outside [0,1] are preserved, not clipped).
    """
    if n_base < 2:
        raise ValueError("need n_base >= 2 for a variance estimate")
    M = box.dim
    A = uniform_box_sample(box, n_base, stream)
    B = uniform_box_sample(box, n_base, stream)
    fA = np.asarray(f(A), dtype=float)
    fB = np.asarray(f(B), dtype=float)
    V = np.var(np.concatenate([fA, fB]), ddof=1)
    if V <= 0.0:
        raise ValueError("zero sample variance: Sobol' indices undefined for a constant function")
    first = np.empty(M)
    total = np.empty(M)
    for i in range(M):
        ABi = A.copy()
        ABi[:, i] = B[:, i]
        fABi = np.asarray(f(ABi), dtype=float)
        first[i] = 1.0 - np.mean((fB - fABi) ** 2) / (2.0 * V)
        total[i] = np.mean((fA - fABi) ** 2) / (2.0 * V)
    return SaltelliReport(first_order=first, total=total, n_evals=n_base * (M + 2))
