"""Closed-form Sobol' indices of a polynomial chaos surrogate.

With an orthonormal basis, the variance of the surrogate splits exactly
across multi-indices, so every variance-based index is a ratio of squared
coefficient sums — no sampling involved.  "Support" below means the set of
dimensions in which a multi-index is nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pce import PCESurrogate

__all__ = [
    "ConstantSurrogateError",
    "SobolReport",
    "first_order_indices",
    "total_indices",
    "subset_index",
    "sobol_report",
]


class ConstantSurrogateError(ValueError):
    """All non-constant coefficients vanish; indices are undefined."""


@dataclass(frozen=True)
class SobolReport:
    """First-order and total indices plus the surrogate's two moments."""

    first_order: np.ndarray
    total: np.ndarray
    mean: float
    variance: float
    subset_indices: dict = field(default_factory=dict)


def _masses(surrogate: PCESurrogate):
    coeffs2 = surrogate.coeffs[1:] ** 2
    supports = [frozenset(j for j, o in enumerate(idx) if o)
                for idx in surrogate.basis[1:]]
    D = float(coeffs2.sum())
    if D <= 0.0:
        raise ConstantSurrogateError("surrogate has zero variance; Sobol' indices undefined")
    return coeffs2, supports, D


def first_order_indices(surrogate: PCESurrogate) -> np.ndarray:
    """S_i: coefficient mass of terms depending on dimension i alone."""
    coeffs2, supports, D = _masses(surrogate)
    S = np.zeros(surrogate.dim)
    for c2, sup in zip(coeffs2, supports):
        if len(sup) == 1:
            (i,) = sup
            S[i] += c2
    return S / D


def total_indices(surrogate: PCESurrogate) -> np.ndarray:
    """T_i: coefficient mass of every term whose support contains i."""
    coeffs2, supports, D = _masses(surrogate)
    T = np.zeros(surrogate.dim)
    for c2, sup in zip(coeffs2, supports):
        for i in sup:
            T[i] += c2
    return T / D


def subset_index(surrogate: PCESurrogate, u, kind: str = "closed") -> float:
    """Variance share of a set of dimensions.

    kind="closed": terms supported anywhere inside u (the closed index; for
    u = {i} this is S_i, for u = all dimensions it is 1).
    kind="interaction": terms supported on exactly u (the interaction-only
    share of the variance decomposition).
    """
    u = frozenset(int(i) for i in u)
    if not u:
        raise ValueError("subset must be nonempty")
    if not u <= set(range(surrogate.dim)):
        raise ValueError("subset contains out-of-range dimensions")
    if kind not in ("closed", "interaction"):
        raise ValueError("kind must be 'closed' or 'interaction'")
    coeffs2, supports, D = _masses(surrogate)
    keep = (lambda s: s <= u) if kind == "closed" else (lambda s: s == u)
    return float(sum(c2 for c2, s in zip(coeffs2, supports) if keep(s))) / D


def sobol_report(surrogate: PCESurrogate, subsets=()) -> SobolReport:
    """Bundle first-order and total indices, optionally with subset indices.

    ``subsets`` is an iterable of dimension collections; for each, both the
    closed and interaction-only variants are reported under keys
    ("closed", u) and ("interaction", u).
    """
    first = first_order_indices(surrogate)
    total = total_indices(surrogate)
    extra = {}
    for u in subsets:
        key = tuple(sorted(int(i) for i in u))
        extra[("closed", key)] = subset_index(surrogate, key, "closed")
        extra[("interaction", key)] = subset_index(surrogate, key, "interaction")
    return SobolReport(first_order=first, total=total,
                       mean=surrogate.mean, variance=surrogate.variance,
                       subset_indices=extra)
