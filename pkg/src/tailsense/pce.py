"""Polynomial chaos surrogates: total-order bases, orthonormal Legendre and
Hermite families, sparse coefficient recovery on an l1 ball, and surrogate
serialization.

Bases are orthonormal (E[Psi_k^2] = 1 under the input law), so the surrogate
mean is coeffs[0], its variance is the sum of the remaining squared
coefficients, and Sobol' indices reduce to coefficient-mass ratios.

Multi-indices are plain tuples of per-dimension polynomial orders, listed in
graded lexicographic order: ascending total degree, and within a degree by
descending leading exponents, e.g. for two dimensions
(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .sampling import RandomStream, UniformBox

__all__ = [
    "NonConvergenceError",
    "PCESurrogate",
    "total_order_basis",
    "eval_basis",
    "design_matrix",
    "project_l1",
    "fit_sparse",
    "cross_validate_lambda",
    "evaluate",
    "to_record",
    "from_record",
    "dumps_surrogate",
    "loads_surrogate",
]

_FAMILIES = ("legendre", "hermite")
_MAX_BASIS = 5_000_000


class NonConvergenceError(RuntimeError):
    """Solver hit the iteration cap; carries the best iterate found."""

    def __init__(self, message, best, info):
        super().__init__(message)
        self.best = best
        self.info = info


def _compositions(total: int, parts: int):
    # All ways to write `total` as `parts` ordered nonnegative integers,
    # leading entry descending -- this is lexicographic within a degree.
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def total_order_basis(M: int, r: int) -> list[tuple[int, ...]]:
    """All multi-indices with total order <= r, graded lexicographic.

    The count is the binomial (M + r) choose r.
    """
    if M < 1:
        raise ValueError("need at least one dimension")
    if r < 0:
        raise ValueError("total order must be nonnegative")
    count = math.comb(M + r, r)
    if count > _MAX_BASIS:
        raise ValueError(f"basis of size {count} exceeds the supported limit {_MAX_BASIS}")
    basis = [idx for deg in range(r + 1) for idx in _compositions(deg, M)]
    assert len(basis) == count
    return basis


def _normalize_family(family, M: int) -> tuple[str, ...]:
    fams = (family,) * M if isinstance(family, str) else tuple(family)
    if len(fams) != M:
        raise ValueError(f"need one family tag per dimension, got {len(fams)} for M={M}")
    for f in fams:
        if f not in _FAMILIES:
            raise ValueError(f"unknown polynomial family {f!r}; choose from {_FAMILIES}")
    return fams


def _legendre_table(x: np.ndarray, r: int) -> np.ndarray:
    """Orthonormal Legendre values, shape (r+1, ...) over x in [-1, 1].

    Standard three-term recurrence, then row n scaled by sqrt(2n+1) so that
    the polynomials are orthonormal for the uniform density 1/2 on [-1, 1].
    """
    T = np.empty((r + 1,) + x.shape)
    T[0] = 1.0
    if r >= 1:
        T[1] = x
    for n in range(1, r):
        T[n + 1] = ((2 * n + 1) * x * T[n] - n * T[n - 1]) / (n + 1)
    for n in range(r + 1):
        T[n] *= math.sqrt(2 * n + 1)
    return T


def _hermite_table(x: np.ndarray, r: int) -> np.ndarray:
    """Orthonormal probabilists' Hermite values, shape (r+1, ...).

    He recurrence, row n divided by sqrt(n!) for orthonormality under the
    standard normal density.
    """
    T = np.empty((r + 1,) + x.shape)
    T[0] = 1.0
    if r >= 1:
        T[1] = x
    for n in range(1, r):
        T[n + 1] = x * T[n] - n * T[n - 1]
    fact = 1.0
    for n in range(2, r + 1):
        fact *= n
        T[n] /= math.sqrt(fact)
    return T


def _dimension_tables(samples: np.ndarray, max_orders, box: UniformBox, fams) -> list[np.ndarray]:
    """Per-dimension value tables for a batch of sample points.

    Legendre dimensions are affinely mapped from the box onto [-1, 1] and
    must lie inside the box; Hermite dimensions are taken as already
    standardized and the box entry is ignored.
    """
    tables = []
    for j, fam in enumerate(fams):
        xj = samples[:, j]
        if fam == "legendre":
            lo, hi = box.lower[j], box.upper[j]
            tol = 1e-12 * (hi - lo)
            if np.any(xj < lo - tol) or np.any(xj > hi + tol):
                raise ValueError(f"sample outside the box in dimension {j} (Legendre family)")
            u = np.clip(2.0 * (xj - lo) / (hi - lo) - 1.0, -1.0, 1.0)
            tables.append(_legendre_table(u, max_orders[j]))
        else:
            tables.append(_hermite_table(xj, max_orders[j]))
    return tables


def eval_basis(index: tuple[int, ...], xi: np.ndarray, box: UniformBox, family) -> float:
    """Value of one orthonormal tensor-product basis function at one point."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    M = xi.size
    if len(index) != M:
        raise ValueError("multi-index length does not match the point dimension")
    fams = _normalize_family(family, M)
    tables = _dimension_tables(xi[None, :], list(index), box, fams)
    out = 1.0
    for j, k in enumerate(index):
        out *= tables[j][k, 0]
    return float(out)


def design_matrix(samples: np.ndarray, basis, box: UniformBox, family) -> np.ndarray:
    """Matrix of basis values, entry (j, k) = Psi_k(sample_j)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be a 2-d array (n, M)")
    if len(basis) == 0:
        raise ValueError("empty basis")
    M = samples.shape[1]
    fams = _normalize_family(family, M)
    max_orders = [max(idx[j] for idx in basis) for j in range(M)]
    tables = _dimension_tables(samples, max_orders, box, fams)
    A = np.empty((samples.shape[0], len(basis)))
    for k, idx in enumerate(basis):
        col = tables[0][idx[0]].copy()
        for j in range(1, M):
            if idx[j]:
                col *= tables[j][idx[j]]
        A[:, k] = col
    return A


def project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball of the given radius.

    Sort-and-threshold: soft-threshold at the level that makes the result's
    l1 norm hit the radius (Duchi-style), O(B log B).
    """
    if radius < 0:
        raise ValueError("l1 radius must be nonnegative")
    a = np.abs(v)
    if a.sum() <= radius:
        return np.array(v, dtype=float, copy=True)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    rho = np.nonzero(u - (css - radius) / j > 0)[0][-1]
    theta = (css[rho] - radius) / (rho + 1)
    w = np.sign(v) * np.maximum(a - theta, 0.0)
    # cancellation in a - theta can leave the norm over the radius by
    # ~ B * eps * max|v|; pull back onto the sphere so feasibility holds
    s = np.abs(w).sum()
    if s > radius:
        w *= radius / s
    return w


def fit_sparse(design: np.ndarray, y: np.ndarray, lam: float,
               max_iter: int = 20_000, tol_scale: float = 1e-8,
               full_output: bool = False):
    """Least squares on the l1 ball:  min ||y - A b||^2  s.t.  ||b||_1 <= lam.

    Accelerated projected gradient with a monotone safeguard: the FISTA
    candidate is kept only when it does not increase the objective, else a
    plain projected-gradient step from the current iterate is taken and the
    momentum is restarted.  The objective is therefore non-increasing.

    Convergence is declared when the gradient-mapping norm
    ||b - proj(b - step * grad)|| / step drops below tol_scale * ||y||^2;
    hitting max_iter first raises NonConvergenceError carrying the best
    iterate.
    """
    A = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim != 2 or y.ndim != 1 or A.shape[0] != y.size:
        raise ValueError("design must be (n, B) and y length n")
    if lam <= 0:
        raise ValueError("l1 radius lam must be positive")
    G = A.T @ A
    b = A.T @ y
    yy = float(y @ y)
    lip = 2.0 * max(float(np.linalg.eigvalsh(G)[-1]), np.finfo(float).tiny)
    step = 1.0 / lip
    tol = tol_scale * yy

    def objective(beta):
        return yy - 2.0 * float(beta @ b) + float(beta @ (G @ beta))

    x = np.zeros(A.shape[1])
    f_x = yy
    z = x
    t = 1.0
    objectives = [f_x]
    for it in range(1, max_iter + 1):
        grad_z = 2.0 * (G @ z - b)
        cand = project_l1(z - step * grad_z, lam)
        f_cand = objective(cand)
        if f_cand <= f_x:
            x_new, f_new = cand, f_cand
        else:
            # Safeguard: plain projected-gradient step cannot increase the
            # objective at step = 1/L; restart the momentum.
            grad_x = 2.0 * (G @ x - b)
            x_new = project_l1(x - step * grad_x, lam)
            f_new = objective(x_new)
            t = 1.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_next) * (x_new - x)
        x, f_x = x_new, min(f_new, f_x)
        t = t_next
        objectives.append(f_x)
        gmap = x - project_l1(x - step * 2.0 * (G @ x - b), lam)
        if float(np.linalg.norm(gmap)) / step <= tol:
            info = {"n_iter": it, "converged": True, "objectives": objectives}
            return (x, info) if full_output else x
    info = {"n_iter": max_iter, "converged": False, "objectives": objectives}
    raise NonConvergenceError(
        f"l1-constrained fit did not reach tolerance in {max_iter} iterations", x, info)


def cross_validate_lambda(design: np.ndarray, y: np.ndarray, stream: RandomStream,
                          k: int = 5, grid=None):
    """k-fold cross-validation over a logarithmic grid of l1 radii.

    The default grid spans four decades below the l1 norm of the
    least-squares solution (above which the constraint is inactive).
    Returns (best_lambda, [(lambda, mean held-out MSE), ...]).
    """
    A = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < k:
        raise ValueError("need at least k samples for k-fold cross-validation")
    if grid is None:
        ols = np.linalg.lstsq(A, y, rcond=None)[0]
        top = max(float(np.abs(ols).sum()), 1e-12)
        grid = np.logspace(math.log10(top) - 4.0, math.log10(top), 10)
    perm = stream.permutation(n)
    folds = [perm[i::k] for i in range(k)]
    table = []
    for lam in grid:
        errs = []
        for fold in folds:
            mask = np.ones(n, dtype=bool)
            mask[fold] = False
            try:
                beta = fit_sparse(A[mask], y[mask], float(lam))
            except NonConvergenceError as err:
                beta = err.best
            resid = y[fold] - A[fold] @ beta
            errs.append(float(np.mean(resid**2)))
        table.append((float(lam), float(np.mean(errs))))
    best = min(table, key=lambda pair: pair[1])[0]
    return best, table


@dataclass(frozen=True)
class PCESurrogate:
    """Fitted polynomial chaos surrogate over a hyper-parameter box."""

    box: UniformBox
    basis: tuple[tuple[int, ...], ...]
    coeffs: np.ndarray
    family: tuple[str, ...]

    def __post_init__(self):
        basis = tuple(tuple(int(o) for o in idx) for idx in self.basis)
        coeffs = np.asarray(self.coeffs, dtype=float)
        fams = _normalize_family(self.family, self.box.dim)
        if not basis or any(len(idx) != self.box.dim for idx in basis):
            raise ValueError("every multi-index must match the box dimension")
        if basis[0] != (0,) * self.box.dim:
            raise ValueError("basis[0] must be the constant (all-zeros) multi-index")
        if coeffs.ndim != 1 or coeffs.size != len(basis):
            raise ValueError("need exactly one coefficient per basis term")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "family", fams)

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def order(self) -> int:
        return max(sum(idx) for idx in self.basis)

    @property
    def mean(self) -> float:
        """Surrogate mean under the input law (orthonormal basis)."""
        return float(self.coeffs[0])

    @property
    def variance(self) -> float:
        """Surrogate variance: coefficient mass of the non-constant terms."""
        return float(np.sum(self.coeffs[1:] ** 2))

    def evaluate(self, xi: np.ndarray):
        return evaluate(self, xi)


def evaluate(surrogate: PCESurrogate, xi: np.ndarray):
    """Surrogate value(s) at one point (M,) or a batch (n, M)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = xi[None, :] if single else xi
    A = design_matrix(pts, surrogate.basis, surrogate.box, surrogate.family)
    vals = A @ surrogate.coeffs
    return float(vals[0]) if single else vals


def to_record(surrogate: PCESurrogate) -> dict:
    """Self-describing plain-data record; floats survive round-trip exactly."""
    return {
        "format": "tailsense-pce",
        "version": 1,
        "ordering": "graded-lex",
        "family": list(surrogate.family),
        "box": {"lower": surrogate.box.lower.tolist(),
                "upper": surrogate.box.upper.tolist()},
        "dim": surrogate.dim,
        "order": surrogate.order,
        "basis": [list(idx) for idx in surrogate.basis],
        "coeffs": surrogate.coeffs.tolist(),
    }


def from_record(record: dict) -> PCESurrogate:
    if record.get("format") != "tailsense-pce":
        raise ValueError("not a surrogate record (missing format tag)")
    box = UniformBox(np.array(record["box"]["lower"]), np.array(record["box"]["upper"]))
    return PCESurrogate(box=box,
                        basis=tuple(tuple(idx) for idx in record["basis"]),
                        coeffs=np.array(record["coeffs"], dtype=float),
                        family=tuple(record["family"]))


def dumps_surrogate(surrogate: PCESurrogate) -> str:
    return json.dumps(to_record(surrogate), indent=1)


def loads_surrogate(text: str) -> PCESurrogate:
    return from_record(json.loads(text))
