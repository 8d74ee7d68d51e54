"""Subset simulation: rare-event probability estimation by adaptive
intermediate thresholds and conditional sampling.

The input law is always independent standard normal in each coordinate;
model adapters are responsible for mapping physical parameters onto that
space (affine shifts for the analytic model, coefficient scaling for random
fields).  Keeping the target density fixed makes the modified Metropolis
kernel below exact for every model.

The estimator: an initial Monte Carlo population is thinned to its p0-tail,
whose members seed Markov chains that together form the next, conditional
population.  Repeating until the adaptive threshold passes the target tau_bar
gives

    p_hat = p0^(L-1) * (fraction of the final population above tau_bar).

QoI callables follow the package batch convention (n, d) -> (n,).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import RandomStream

__all__ = [
    "DegenerateLevelError",
    "SSConfig",
    "SSResult",
    "expected_levels",
    "quantile_threshold",
    "mma_chain",
    "run_subset_simulation",
]


class DegenerateLevelError(RuntimeError):
    """A level's QoI samples admit no strict quantile cut (e.g. all equal)."""


@dataclass(frozen=True)
class SSConfig:
    """Subset-simulation parameters.

    p0 is the conditional probability per level; values in [0.1, 0.3] are
    the recommended operating range.  proposal_spread is the per-coordinate
    standard deviation of the Gaussian random-walk proposal.
    """

    tau_bar: float
    n_per_level: int = 1000
    p0: float = 0.1
    max_levels: int = 20
    proposal_spread: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.n_per_level * self.p0 < 1.0:
            raise ValueError("n_per_level * p0 must be at least 1 (need a seed)")
        if self.max_levels < 1:
            raise ValueError("max_levels must be positive")
        if self.proposal_spread <= 0.0:
            raise ValueError("proposal_spread must be positive")


@dataclass(frozen=True)
class SSResult:
    p_hat: float
    thresholds: np.ndarray  # intermediate tau_1 < tau_2 < ... (may be empty)
    n_levels: int           # number of sample populations, L
    n_evals: int            # exact count of QoI rows evaluated
    terminated_early: bool  # max_levels reached with tau still below tau_bar


def expected_levels(p: float, p0: float) -> int:
    """Predicted number of intermediate levels, floor(log p / log p0) = L - 1.

    A guard absorbs floating error when the ratio is within 1e-9 of an
    integer from below, so e.g. p = p0^k reports exactly k.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly inside (0, 1)")
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie strictly inside (0, 1)")
    r = math.log(p) / math.log(p0)
    k = math.floor(r)
    if r - k > 1.0 - 1e-9:
        k += 1
    return k


def quantile_threshold(samples: np.ndarray, p0: float):
    """Adaptive level threshold and the seed set that survives it.

    Sorts descending and cuts between order statistics m and m+1 with
    m = floor(n * p0), placing tau at their midpoint so that exactly m
    samples strictly exceed it.  If the two straddling values are tied, the
    cut moves up to the largest m' <= m with a strict gap; with no strict
    gap anywhere above, the level cannot be thinned and is degenerate.

    Returns (tau, seed_indices) with seed_indices into ``samples``.
    """
    q = np.asarray(samples, dtype=float)
    n = q.size
    m = int(math.floor(n * p0))
    if m < 1:
        raise DegenerateLevelError("fewer than one seed at this level (n * p0 < 1)")
    order = np.argsort(q, kind="stable")[::-1]
    qs = q[order]
    while m >= 1 and not qs[m - 1] > qs[m]:
        m -= 1
    if m == 0:
        raise DegenerateLevelError("no strict gap in the upper tail; cannot place a threshold")
    tau = 0.5 * (qs[m - 1] + qs[m])
    return float(tau), order[:m].copy()


def mma_chain(seed_point: np.ndarray, chain_len: int, level_tau: float,
              qoi, proposal_spread: float, stream: RandomStream) -> np.ndarray:
    """One modified-Metropolis chain of ``chain_len`` states (seed included).

    Each step proposes a Gaussian random-walk move per coordinate and accepts
    it coordinate-wise with probability min(1, phi(cand)/phi(cur)) for the
    standard normal density phi; the assembled candidate then replaces the
    state only if its QoI still exceeds ``level_tau``, otherwise the state
    repeats.  Every returned state therefore satisfies the level condition.

    When all coordinates reject, the candidate equals the state and the QoI
    call is skipped.  Random draws per step are fixed (d proposals plus d
    acceptance uniforms), so the stream stays aligned regardless of the
    accept/reject pattern.
    """
    x = np.array(seed_point, dtype=float)
    d = x.size
    q = float(np.asarray(qoi(x[None, :]))[0])
    if not q > level_tau:
        raise ValueError("seed point violates the level condition qoi > level_tau")
    out = np.empty((chain_len, d))
    out[0] = x
    for step in range(1, chain_len):
        prop = x + proposal_spread * stream.standard_normal(d)
        log_ratio = 0.5 * (x * x - prop * prop)
        accept = np.log(stream.uniform(d)) < log_ratio
        if accept.any():
            cand = np.where(accept, prop, x)
            qc = float(np.asarray(qoi(cand[None, :]))[0])
            if qc > level_tau:
                x = cand
                q = qc
        out[step] = x
    return out


def run_subset_simulation(qoi, input_dim: int, cfg: SSConfig,
                          stream: RandomStream) -> SSResult:
    """Full subset-simulation estimate of P(qoi(theta) > cfg.tau_bar).

    All chains of a level advance in lockstep so QoI evaluations batch
    across chains; candidate states whose proposals were rejected in every
    coordinate are carried over without spending an evaluation.  Random
    draws per level are a fixed count, so results are reproducible from the
    stream alone.

    Raises DegenerateLevelError when a level cannot be thinned (the caller
    decides whether that sample is excluded or fatal).  If max_levels
    populations are exhausted before the threshold reaches tau_bar, the
    result carries terminated_early=True and the (possibly zero) product
    estimate from the last population.
    """
    N, d = cfg.n_per_level, int(input_dim)
    spread = cfg.proposal_spread
    theta = stream.standard_normal((N, d))
    q = np.asarray(qoi(theta), dtype=float)
    n_evals = N
    thresholds: list[float] = []
    level = 0
    while True:
        tau, seed_idx = quantile_threshold(q, cfg.p0)
        if tau >= cfg.tau_bar:
            frac = float(np.mean(q > cfg.tau_bar))
            return SSResult(p_hat=cfg.p0**level * frac,
                            thresholds=np.array(thresholds),
                            n_levels=level + 1, n_evals=n_evals,
                            terminated_early=False)
        if level + 1 >= cfg.max_levels:
            frac = float(np.mean(q > cfg.tau_bar))
            return SSResult(p_hat=cfg.p0**level * frac,
                            thresholds=np.array(thresholds),
                            n_levels=level + 1, n_evals=n_evals,
                            terminated_early=True)
        thresholds.append(tau)
        chain_len = int(math.floor(1.0 / cfg.p0))
        m = seed_idx.size
        cur = theta[seed_idx].copy()
        cur_q = q[seed_idx].copy()
        pop = np.empty((m * chain_len, d))
        pop_q = np.empty(m * chain_len)
        pop[:m] = cur
        pop_q[:m] = cur_q
        for step in range(1, chain_len):
            prop = cur + spread * stream.standard_normal((m, d))
            log_ratio = 0.5 * (cur * cur - prop * prop)
            accept = np.log(stream.uniform((m, d))) < log_ratio
            changed = accept.any(axis=1)
            if changed.any():
                cand = np.where(accept[changed], prop[changed], cur[changed])
                qc = np.asarray(qoi(cand), dtype=float)
                n_evals += cand.shape[0]
                ok = qc > tau
                rows = np.flatnonzero(changed)[ok]
                cur[rows] = cand[ok]
                cur_q[rows] = qc[ok]
            pop[step * m:(step + 1) * m] = cur
            pop_q[step * m:(step + 1) * m] = cur_q
        theta = pop
        q = pop_q
        level += 1
