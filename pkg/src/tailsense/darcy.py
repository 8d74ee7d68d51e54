"""Subsurface benchmark: log-Gaussian permeability fields on the unit
square, steady single-phase Darcy flow, and a particle hitting-time QoI.

The permeability is kappa = exp(a) with a = mean + sigma_a * z, where z is a
zero-mean unit-variance Gaussian field with separable exponential covariance

    c((x1,y1),(x2,y2)) = exp(-|x1-x2|/ell_x - |y1-y2|/ell_y),

expanded in a truncated Karhunen-Loeve basis.  Separability means the 2-D
eigenpairs are products of two small 1-D eigenproblems (midpoint collocation
on cell centers), which keeps the decomposition O(n^3).

Flow: -div(kappa grad p) = 0, p = 1 on the left edge, p = 0 on the right,
no flux top and bottom, discretized by cell-centered finite differences with
harmonic face transmissibilities (locally conservative, M-matrix).  The QoI
is the time a passive particle released at (0, 1/2) needs to reach the right
edge, moving with the Darcy velocity; trajectories still inside at t_cap are
censored at t_cap.

Arrays indexed [ix, iy]; cell centers at ((i+1/2) h, (j+1/2) h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = [
    "DecompositionError",
    "SolverError",
    "Grid",
    "DarcyHyper",
    "KLEBasis",
    "FieldRealization",
    "StaggeredVelocity",
    "HittingTime",
    "DarcyContext",
    "kle_decompose",
    "mode_count_for_box",
    "realize_log_perm",
    "solve_pressure",
    "darcy_velocity",
    "hitting_time",
    "build_context",
    "qoi_darcy",
    "qoi_darcy_batch",
    "load_mean_field",
    "save_mean_field",
]


class DecompositionError(RuntimeError):
    """Covariance eigensolve produced a significantly negative eigenvalue."""


class SolverError(RuntimeError):
    """Pressure solve failed its residual check."""


@dataclass(frozen=True)
class Grid:
    """Uniform n-by-n cell-centered grid on the unit square."""

    n: int

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("grid needs at least 4 cells per side")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h


@dataclass(frozen=True)
class DarcyHyper:
    """Hyper-parameters of the permeability law."""

    ell_x: float
    ell_y: float
    sigma_a: float

    def __post_init__(self):
        if self.ell_x <= 0 or self.ell_y <= 0:
            raise ValueError("correlation lengths must be positive")
        if self.sigma_a < 0:
            raise ValueError("field amplitude must be nonnegative")

    @property
    def xi(self) -> np.ndarray:
        return np.array([self.ell_x, self.ell_y, self.sigma_a])


def nominal_hyper() -> DarcyHyper:
    return DarcyHyper(ell_x=0.4, ell_y=0.4, sigma_a=0.8)


@dataclass(frozen=True)
class KLEBasis:
    """Truncated eigenpairs of the discretized covariance operator.

    Modes are orthonormal in the h^2-weighted discrete inner product;
    energy_fraction is the retained share of the total eigenvalue mass
    (= trace of the covariance, which is 1 for this kernel).
    """

    eigenvalues: np.ndarray     # (n_kl,), descending, positive
    modes: np.ndarray           # (n_kl, n, n)
    n_kl: int
    energy_fraction: float
    n: int


@dataclass(frozen=True)
class FieldRealization:
    log_perm: np.ndarray
    perm: np.ndarray


class HittingTime(NamedTuple):
    time: float
    censored: bool


def _kle_1d(n: int, ell: float):
    """Eigenpairs of the 1-D exponential covariance, midpoint collocation.

    Returns (lam, E) with E columns orthonormal in l2(h): sum_a E_ai E_aj h
    = delta_ij.  The matrix h*C is symmetric positive definite; eigenvalues
    more negative than -1e-10 * lam_max indicate a broken input.
    """
    x = (np.arange(n) + 0.5) / n
    C = np.exp(-np.abs(x[:, None] - x[None, :]) / ell)
    lam, U = np.linalg.eigh(C / n)
    lam = lam[::-1]
    U = U[:, ::-1]
    if lam[-1] < -1e-10 * lam[0]:
        raise DecompositionError(f"negative covariance eigenvalue {lam[-1]:.3e}")
    return np.clip(lam, 0.0, None), U * math.sqrt(n)


def kle_decompose(hyper: DarcyHyper, grid: Grid, energy: float | None = None,
                  n_kl: int | None = None) -> KLEBasis:
    """Karhunen-Loeve basis of the 2-D field, truncated by energy or count.

    Exactly one of ``energy`` (smallest count with retained eigenvalue mass
    >= energy * trace) and ``n_kl`` (fixed count) must be given.  2-D
    eigenpairs are products of the two 1-D factorizations; ties in the
    product eigenvalues are broken by (i, j) in row-major order so the basis
    is reproducible.
    """
    if (energy is None) == (n_kl is None):
        raise ValueError("give exactly one of energy or n_kl")
    n = grid.n
    lx, Ex = _kle_1d(n, hyper.ell_x)
    ly, Ey = _kle_1d(n, hyper.ell_y)
    prod = np.outer(lx, ly).ravel()
    order = np.argsort(-prod, kind="stable")
    trace = float(lx.sum() * ly.sum())
    if n_kl is not None:
        if not 1 <= n_kl <= n * n:
            raise ValueError(f"n_kl must lie in [1, {n * n}]")
        K = int(n_kl)
    else:
        if not 0.0 < energy <= 1.0:
            raise ValueError("energy fraction must lie in (0, 1]")
        csum = np.cumsum(prod[order])
        K = int(np.searchsorted(csum, energy * trace - 1e-15 * trace) + 1)
        K = min(K, n * n)
    top = order[:K]
    lam = prod[top]
    modes = np.empty((K, n, n))
    for rank, flat in enumerate(top):
        i, j = divmod(int(flat), n)
        modes[rank] = np.outer(Ex[:, i], Ey[:, j])
    return KLEBasis(eigenvalues=lam, modes=modes, n_kl=K,
                    energy_fraction=float(lam.sum() / trace), n=n)


def mode_count_for_box(n: int, ell_x: float, ell_y: float,
                       energy: float = 0.90, box_fraction: float = 0.10) -> int:
    """Truncation size guaranteeing pointwise variance capture over a study box.

    When the correlation lengths are themselves uncertain (a +-box_fraction
    box around the nominal values), the expansion dimension must be fixed
    once so outer-loop samples share a coefficient space.  The count
    returned is the smallest K such that, at the least favorable corner of
    the box (both lengths at their minimum, where eigenvalues decay
    slowest), the truncated expansion captures at least ``energy`` of the
    field variance at *every* grid cell — the worst location, typically near
    the boundary, is the binding one, not the domain average.
    """
    if not 0.0 < energy < 1.0:
        raise ValueError("energy fraction must lie in (0, 1)")
    if not 0.0 <= box_fraction < 1.0:
        raise ValueError("box fraction must lie in [0, 1)")
    lo_x = ell_x * (1.0 - box_fraction)
    lo_y = ell_y * (1.0 - box_fraction)
    lx, Ex = _kle_1d(n, lo_x)
    ly, Ey = _kle_1d(n, lo_y)
    prod = np.outer(lx, ly).ravel()
    order = np.argsort(-prod, kind="stable")
    Ex2 = Ex * Ex
    Ey2 = Ey * Ey
    captured = np.zeros((n, n))
    # Pointwise variance of the field is c(x,x) = 1, so the capture target
    # at every cell is just `energy`.
    for rank, flat in enumerate(order):
        i, j = divmod(int(flat), n)
        captured += prod[flat] * np.outer(Ex2[:, i], Ey2[:, j])
        if captured.min() >= energy:
            return rank + 1
    raise DecompositionError("pointwise capture target not reached by the full basis")


def realize_log_perm(basis: KLEBasis, theta: np.ndarray,
                     mean_field: np.ndarray | None, sigma_a: float) -> FieldRealization:
    """One field realization a = mean + sigma_a * sum_k sqrt(lam_k) theta_k e_k."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (basis.n_kl,):
        raise ValueError(f"theta must have length n_kl = {basis.n_kl}")
    a = _realize_batch(basis, theta[None, :], mean_field, sigma_a)[0]
    return FieldRealization(log_perm=a, perm=np.exp(a))


def _realize_batch(basis: KLEBasis, thetas: np.ndarray,
                   mean_field: np.ndarray | None, sigma_a: float) -> np.ndarray:
    n = basis.n
    weights = thetas * np.sqrt(basis.eigenvalues)
    fields = (weights @ basis.modes.reshape(basis.n_kl, n * n)).reshape(-1, n, n)
    fields *= sigma_a
    if mean_field is not None:
        fields += mean_field
    return fields


def _transmissibilities(perm: np.ndarray):
    """Face conductances: harmonic interior faces, doubled boundary faces.

    The harmonic mean is the exact series conductance of the two half-cells
    meeting at a face; Dirichlet boundary faces see a single half-cell,
    hence the factor 2.
    """
    tx = 2.0 * perm[:-1, :] * perm[1:, :] / (perm[:-1, :] + perm[1:, :])   # (n-1, n)
    ty = 2.0 * perm[:, :-1] * perm[:, 1:] / (perm[:, :-1] + perm[:, 1:])   # (n, n-1)
    t_left = 2.0 * perm[0, :]
    t_right = 2.0 * perm[-1, :]
    return tx, ty, t_left, t_right


_pattern_cache: dict[int, tuple] = {}


def _assembly_pattern(n: int):
    """Sparsity pattern of the five-point operator, cached per grid size."""
    if n not in _pattern_cache:
        kk = np.arange(n * n).reshape(n, n)
        k1x = kk[:-1, :].ravel()
        k2x = kk[1:, :].ravel()
        k1y = kk[:, :-1].ravel()
        k2y = kk[:, 1:].ravel()
        main = np.arange(n * n)
        rows = np.concatenate([main, k1x, k2x, k1y, k2y])
        cols = np.concatenate([main, k2x, k1x, k2y, k1y])
        diag_targets = np.concatenate([k1x, k2x, k1y, k2y, kk[0, :], kk[-1, :]])
        _pattern_cache[n] = (rows, cols, diag_targets, kk[0, :], kk[-1, :])
    return _pattern_cache[n]


def solve_pressure(perm: np.ndarray) -> np.ndarray:
    """Pressure field for -div(kappa grad p) = 0 on the unit square.

    Cell-centered five-point scheme; p = 1 on the left edge, p = 0 on the
    right, no flux top and bottom.  Sparse direct solve with a residual
    check at 1e-10 relative.
    """
    perm = np.asarray(perm, dtype=float)
    n = perm.shape[0]
    if perm.shape != (n, n):
        raise ValueError("permeability must be square (n, n)")
    if not np.all(perm > 0):
        raise ValueError("permeability must be strictly positive")
    tx, ty, t_left, t_right = _transmissibilities(perm)
    rows, cols, diag_targets, left_cells, right_cells = _assembly_pattern(n)
    tvx = tx.ravel()
    tvy = ty.ravel()
    diag = np.bincount(diag_targets,
                       weights=np.concatenate([tvx, tvx, tvy, tvy, t_left, t_right]),
                       minlength=n * n)
    vals = np.concatenate([diag, -tvx, -tvx, -tvy, -tvy])
    A = sp.csc_matrix((vals, (rows, cols)), shape=(n * n, n * n))
    rhs = np.zeros(n * n)
    rhs[left_cells] = t_left
    p = splu(A).solve(rhs)
    resid = float(np.linalg.norm(A @ p - rhs) / np.linalg.norm(rhs))
    if resid > 1e-10:
        raise SolverError(f"pressure solve residual {resid:.3e} exceeds 1e-10")
    return p.reshape(n, n)


@dataclass(frozen=True)
class StaggeredVelocity:
    """Face-normal Darcy velocities: u on vertical faces (n+1, n), v on
    horizontal faces (n, n+1)."""

    u: np.ndarray
    v: np.ndarray
    h: float

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def max_speed(self) -> float:
        return max(float(np.abs(self.u).max()), float(np.abs(self.v).max()))

    def at(self, x: float, y: float) -> tuple[float, float]:
        """Bilinear interpolation of each staggered component at (x, y).

        Positions outside the square see the nearest in-range value
        (constant extrapolation), which is only exercised by intermediate
        integrator stages near the walls.
        """
        u, v, h, n = self.u, self.v, self.h, self.n
        # u: x on the face lattice i*h, y on cell centers (j+1/2)h
        fx = x / h
        i0 = min(max(int(fx), 0), n - 1)
        tx = min(max(fx - i0, 0.0), 1.0)
        fy = y / h - 0.5
        j0 = min(max(int(math.floor(fy)), 0), n - 2)
        ty = min(max(fy - j0, 0.0), 1.0)
        ux = ((1 - tx) * ((1 - ty) * u[i0, j0] + ty * u[i0, j0 + 1])
              + tx * ((1 - ty) * u[i0 + 1, j0] + ty * u[i0 + 1, j0 + 1]))
        # v: x on cell centers, y on the face lattice
        gx = x / h - 0.5
        a0 = min(max(int(math.floor(gx)), 0), n - 2)
        sx = min(max(gx - a0, 0.0), 1.0)
        gy = y / h
        b0 = min(max(int(gy), 0), n - 1)
        sy = min(max(gy - b0, 0.0), 1.0)
        vy = ((1 - sx) * ((1 - sy) * v[a0, b0] + sy * v[a0, b0 + 1])
              + sx * ((1 - sy) * v[a0 + 1, b0] + sy * v[a0 + 1, b0 + 1]))
        return float(ux), float(vy)


def darcy_velocity(perm: np.ndarray, p: np.ndarray) -> StaggeredVelocity:
    """Face velocities from transmissibility-weighted pressure differences.

    By construction these reproduce the fluxes of the solved system, so the
    discrete divergence vanishes cell by cell (up to the solver residual)
    and inflow balances outflow.
    """
    perm = np.asarray(perm, dtype=float)
    p = np.asarray(p, dtype=float)
    n = perm.shape[0]
    h = 1.0 / n
    tx, ty, t_left, t_right = _transmissibilities(perm)
    u = np.empty((n + 1, n))
    u[0, :] = t_left * (1.0 - p[0, :]) / h
    u[1:n, :] = tx * (p[:-1, :] - p[1:, :]) / h
    u[n, :] = t_right * (p[-1, :] - 0.0) / h
    v = np.zeros((n, n + 1))
    v[:, 1:n] = ty * (p[:, :-1] - p[:, 1:]) / h
    return StaggeredVelocity(u=u, v=v, h=h)


def hitting_time(vel: StaggeredVelocity, x0=(0.0, 0.5), t_cap: float = 100.0,
                 cfl: float = 0.1) -> HittingTime:
    """Time for a passive particle to reach the right edge, or t_cap.

    Classical fourth-order Runge-Kutta with a per-step size
    dt = max(cfl * h / |v(x)|, t_cap / 1e6), clipped to the remaining time:
    the speed-based term bounds the displacement per step to about cfl * h,
    and the floor keeps stagnant trajectories from stalling the integrator.
    The crossing time is interpolated linearly inside the final step.
    Trajectories that have not exited by t_cap return (t_cap, censored).
    """
    if t_cap <= 0:
        raise ValueError("t_cap must be positive")
    h = vel.h
    floor_dt = t_cap / 1e6
    x, y = float(x0[0]), float(x0[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError("release point must lie in the unit square")
    t = 0.0
    while t < t_cap:
        vx, vy = vel.at(x, y)
        speed = math.hypot(vx, vy)
        if not math.isfinite(speed):
            raise RuntimeError("non-finite velocity during particle tracking")
        dt = max(cfl * h / speed, floor_dt) if speed > 0 else t_cap - t
        dt = min(dt, t_cap - t)
        hx, hy = 0.5 * dt * vx, 0.5 * dt * vy
        v2x, v2y = vel.at(x + hx, y + hy)
        v3x, v3y = vel.at(x + 0.5 * dt * v2x, y + 0.5 * dt * v2y)
        v4x, v4y = vel.at(x + dt * v3x, y + dt * v3y)
        nx = x + dt * (vx + 2.0 * v2x + 2.0 * v3x + v4x) / 6.0
        ny = y + dt * (vy + 2.0 * v2y + 2.0 * v3y + v4y) / 6.0
        ny = min(max(ny, 0.0), 1.0)   # project onto the no-flux walls
        nx = max(nx, 0.0)             # inflow edge cannot be exited
        t += dt
        if nx >= 1.0:
            t_cross = t - dt + dt * (1.0 - x) / (nx - x)
            return HittingTime(time=min(t_cross, t_cap), censored=False)
        x, y = nx, ny
    return HittingTime(time=t_cap, censored=True)


@dataclass(frozen=True)
class DarcyContext:
    """Immutable per-hyper-parameter state shared by all QoI evaluations."""

    grid: Grid
    basis: KLEBasis
    hyper: DarcyHyper
    mean_field: np.ndarray | None = None
    t_cap: float = 100.0
    cfl: float = 0.1
    x0: tuple[float, float] = (0.0, 0.5)


def build_context(hyper: DarcyHyper, grid: Grid, energy: float | None = None,
                  n_kl: int | None = None, mean_field: np.ndarray | None = None,
                  t_cap: float = 100.0, cfl: float = 0.1,
                  x0=(0.0, 0.5)) -> DarcyContext:
    """Decompose the covariance for ``hyper`` and cache everything the QoI needs."""
    basis = kle_decompose(hyper, grid, energy=energy, n_kl=n_kl)
    if mean_field is not None:
        mean_field = np.asarray(mean_field, dtype=float)
        if mean_field.shape != (grid.n, grid.n):
            raise ValueError("mean field shape must match the grid")
    return DarcyContext(grid=grid, basis=basis, hyper=hyper,
                        mean_field=mean_field, t_cap=t_cap, cfl=cfl,
                        x0=(float(x0[0]), float(x0[1])))


def qoi_darcy(theta: np.ndarray, hyper: DarcyHyper, context: DarcyContext) -> float:
    """Hitting time for one coefficient vector theta."""
    return float(qoi_darcy_batch(np.asarray(theta, dtype=float)[None, :], hyper, context)[0])


def qoi_darcy_batch(thetas: np.ndarray, hyper: DarcyHyper, context: DarcyContext) -> np.ndarray:
    """Hitting times for a batch of coefficient vectors (B, n_kl).

    Field realization is vectorized across the batch; each sample then gets
    its own pressure solve and particle track.  Censored trajectories
    contribute the value t_cap.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2 or thetas.shape[1] != context.basis.n_kl:
        raise ValueError(f"thetas must be (B, {context.basis.n_kl})")
    fields = _realize_batch(context.basis, thetas, context.mean_field, hyper.sigma_a)
    out = np.empty(thetas.shape[0])
    for b in range(thetas.shape[0]):
        perm = np.exp(fields[b])
        p = solve_pressure(perm)
        vel = darcy_velocity(perm, p)
        out[b] = hitting_time(vel, x0=context.x0, t_cap=context.t_cap,
                              cfl=context.cfl).time
    return out


def load_mean_field(path) -> np.ndarray:
    """Read a plain-text grid file: first token n, then n*n row-major reals."""
    tokens = Path(path).read_text().split()
    if not tokens:
        raise ValueError(f"empty mean-field file {path}")
    n = int(tokens[0])
    vals = np.array([float(t) for t in tokens[1:]], dtype=float)
    if vals.size != n * n:
        raise ValueError(f"mean-field file {path} holds {vals.size} values, expected {n * n}")
    return vals.reshape(n, n)


def save_mean_field(path, field: np.ndarray) -> None:
    field = np.asarray(field, dtype=float)
    n = field.shape[0]
    if field.shape != (n, n):
        raise ValueError("mean field must be square")
    lines = [str(n)]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in field]
    Path(path).write_text("\n".join(lines) + "\n")
