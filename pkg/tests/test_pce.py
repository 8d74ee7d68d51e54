import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tailsense.pce import (NonConvergenceError, PCESurrogate,
                           cross_validate_lambda, design_matrix,
                           dumps_surrogate, eval_basis, fit_sparse,
                           loads_surrogate, project_l1, total_order_basis)
from tailsense.sampling import RandomStream, UniformBox


def unit_box(dim):
    return UniformBox(np.full(dim, -1.0), np.full(dim, 1.0))


# ---------------------------------------------------------------------------
# basis enumeration


def test_basis_count_formula():
    for M, r in ((2, 3), (5, 2), (10, 3), (3, 5)):
        n = len(total_order_basis(M, r))
        assert n == math.comb(M + r, r)


def test_basis_graded_lex_order():
    basis = total_order_basis(2, 2)
    assert basis == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_basis_starts_constant_and_degrees_sorted():
    basis = total_order_basis(4, 3)
    assert basis[0] == (0, 0, 0, 0)
    degrees = [sum(a) for a in basis]
    assert degrees == sorted(degrees)


def test_basis_rejects_bad_input():
    with pytest.raises(ValueError):
        total_order_basis(0, 2)
    with pytest.raises(ValueError):
        total_order_basis(2, -1)


def test_basis_size_cap():
    with pytest.raises(ValueError):
        total_order_basis(60, 10)  # astronomically many terms


# ---------------------------------------------------------------------------
# orthonormality (Gauss quadrature integrates polynomials exactly)


def test_legendre_orthonormal_on_box():
    box = UniformBox(np.array([2.0]), np.array([5.0]))
    basis = total_order_basis(1, 4)
    nodes, weights = np.polynomial.legendre.leggauss(12)
    x = (box.lower + (nodes + 1.0) / 2.0 * box.width)[:, None]
    psi = design_matrix(x, basis, box, family="legendre")
    gram = (psi * weights[:, None] / 2.0).T @ psi
    assert np.allclose(gram, np.eye(len(basis)), atol=1e-12)


def test_hermite_orthonormal_gaussian_weight():
    box = unit_box(1)  # ignored by the hermite family
    basis = total_order_basis(1, 4)
    nodes, weights = np.polynomial.hermite_e.hermegauss(16)
    psi = design_matrix(nodes[:, None], basis, box, family="hermite")
    gram = (psi * weights[:, None]).T @ psi / np.sqrt(2.0 * np.pi)
    assert np.allclose(gram, np.eye(len(basis)), atol=1e-10)


def test_tensor_orthonormality_2d():
    box = UniformBox(np.array([0.0, -2.0]), np.array([1.0, 2.0]))
    basis = total_order_basis(2, 3)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    xx, yy = np.meshgrid(nodes, nodes, indexing="ij")
    w2 = np.outer(weights, weights).ravel() / 4.0
    u = np.column_stack([(xx.ravel() + 1) / 2, (yy.ravel() + 1) / 2])
    pts = box.from_unit(u)
    psi = design_matrix(pts, basis, box, family="legendre")
    gram = (psi * w2[:, None]).T @ psi
    assert np.allclose(gram, np.eye(len(basis)), atol=1e-12)


def test_eval_basis_point_outside_box_raises():
    box = unit_box(2)
    with pytest.raises(ValueError):
        eval_basis(np.array([[0.0, 1.5]]), total_order_basis(2, 2), box,
                   family="legendre")


# ---------------------------------------------------------------------------
# l1-ball projection


@given(v=arrays(np.float64, st.integers(1, 30),
                elements=st.floats(-50, 50, allow_nan=False)),
       radius=st.floats(1e-3, 100.0, allow_nan=False))
@settings(max_examples=80, deadline=None)
def test_project_l1_feasible_and_idempotent(v, radius):
    w = project_l1(v, radius)
    assert np.abs(w).sum() <= radius * (1 + 1e-10)
    assert np.allclose(project_l1(w, radius), w, atol=1e-12)


def test_project_l1_noop_inside_ball():
    v = np.array([0.1, -0.2, 0.05])
    assert np.array_equal(project_l1(v, 1.0), v)


def test_project_l1_known_case():
    # projecting (3, 0) onto the unit l1 ball gives (1, 0)
    assert np.allclose(project_l1(np.array([3.0, 0.0]), 1.0), [1.0, 0.0])
    # symmetric two-mass case splits the radius
    w = project_l1(np.array([2.0, 2.0]), 1.0)
    assert np.allclose(w, [0.5, 0.5])


def test_project_l1_preserves_signs():
    v = np.array([-5.0, 3.0, -0.1])
    w = project_l1(v, 2.0)
    assert np.all(np.sign(w) == np.where(w == 0.0, 0.0, np.sign(v)))


# ---------------------------------------------------------------------------
# the constrained fit


def make_problem(n=80, seed=0, noise=0.0):
    stream = RandomStream(seed)
    box = unit_box(3)
    basis = total_order_basis(3, 2)
    from tailsense.sampling import lhs_sample
    x = lhs_sample(box, n, stream)
    psi = design_matrix(x, basis, box, family="legendre")
    beta_true = np.zeros(len(basis))
    beta_true[0], beta_true[1], beta_true[5] = 0.3, 1.2, -0.7
    y = psi @ beta_true
    if noise:
        y = y + noise * stream.standard_normal(n)
    return psi, y, beta_true


def test_fit_recovers_sparse_truth():
    psi, y, beta_true = make_problem()
    beta = fit_sparse(psi, y, lam=np.abs(beta_true).sum() * 1.5)
    assert np.allclose(beta, beta_true, atol=1e-5)


def test_fit_feasibility_binding():
    psi, y, beta_true = make_problem()
    lam = 0.6 * np.abs(beta_true).sum()
    beta = fit_sparse(psi, y, lam)
    assert np.abs(beta).sum() <= lam * (1 + 1e-9)


def test_fit_monotone_objective():
    psi, y, _ = make_problem(noise=0.3, seed=4)
    _, info = fit_sparse(psi, y, lam=1.0, full_output=True)
    objs = np.asarray(info["objectives"])
    assert np.all(np.diff(objs) <= 1e-9 * max(1.0, objs[0]))


@given(lam=st.floats(0.05, 10.0), seed=st.integers(0, 500))
@settings(max_examples=25, deadline=None)
def test_fit_always_feasible_property(lam, seed):
    psi, y, _ = make_problem(n=40, seed=seed, noise=0.5)
    beta = fit_sparse(psi, y, lam)
    assert np.abs(beta).sum() <= lam * (1 + 1e-9)
    assert np.all(np.isfinite(beta))


def test_fit_zero_radius_rejected():
    psi, y, _ = make_problem()
    with pytest.raises(ValueError):
        fit_sparse(psi, y, lam=0.0)


def test_fit_nonconvergence_carries_best_iterate():
    psi, y, _ = make_problem(n=60, seed=2, noise=0.1)
    with pytest.raises(NonConvergenceError) as exc:
        fit_sparse(psi, y, lam=1.0, max_iter=2)
    err = exc.value
    assert err.best is not None
    assert np.abs(err.best).sum() <= 1.0 * (1 + 1e-9)
    assert err.info["n_iter"] == 2


def test_fit_beats_interior_candidates():
    # solution objective is no worse than a few random feasible points
    psi, y, _ = make_problem(noise=0.4, seed=9)
    lam = 0.8
    beta = fit_sparse(psi, y, lam)
    f_star = np.sum((y - psi @ beta) ** 2)
    stream = RandomStream(77)
    for _ in range(20):
        cand = project_l1(stream.standard_normal(psi.shape[1]), lam)
        assert f_star <= np.sum((y - psi @ cand) ** 2) + 1e-8


def test_cross_validation_selects_reasonable_radius():
    psi, y, beta_true = make_problem(n=120, seed=3, noise=0.05)
    lam, table = cross_validate_lambda(psi, y, RandomStream(10))
    assert lam > 0.2 * np.abs(beta_true).sum()
    assert len(table) >= 4
    # the winner attains the smallest tabulated CV error
    errs = {l: e for l, e in table}
    assert errs[lam] == min(errs.values())


# ---------------------------------------------------------------------------
# surrogate object + serialization


def make_surrogate():
    box = UniformBox(np.array([0.0, -1.0]), np.array([2.0, 3.0]))
    basis = total_order_basis(2, 2)
    coeffs = np.array([0.5, 0.25, 0.0, 0.125, -0.3, 0.0])
    return PCESurrogate(box=box, basis=basis, coeffs=coeffs, family="legendre")


def test_surrogate_mean_variance():
    s = make_surrogate()
    assert s.mean == pytest.approx(0.5)
    assert s.variance == pytest.approx(0.25**2 + 0.125**2 + 0.3**2)


def test_surrogate_evaluate_matches_design():
    s = make_surrogate()
    x = RandomStream(1).uniform((40, 2)) * s.box.width + s.box.lower
    direct = design_matrix(x, s.basis, s.box, family="legendre") @ s.coeffs
    assert np.allclose(s.evaluate(x), direct)


def test_surrogate_validation():
    box = unit_box(2)
    basis = total_order_basis(2, 1)
    with pytest.raises(ValueError):
        PCESurrogate(box=box, basis=basis, coeffs=np.zeros(5), family="legendre")
    with pytest.raises(ValueError):
        PCESurrogate(box=box, basis=basis[1:], coeffs=np.zeros(2), family="legendre")
    with pytest.raises(ValueError):
        PCESurrogate(box=box, basis=basis, coeffs=np.zeros(3), family="jacobi")


def test_serialization_bit_exact_roundtrip():
    s = make_surrogate()
    text = dumps_surrogate(s)
    t = loads_surrogate(text)
    assert np.array_equal(t.coeffs, s.coeffs)
    assert np.array_equal(t.box.lower, s.box.lower)
    assert np.array_equal(t.box.upper, s.box.upper)
    assert t.basis == s.basis
    assert t.family == s.family
    x = np.array([[0.77, 2.13]])
    assert t.evaluate(x) == s.evaluate(x)


def test_serialization_format_is_json_with_tag():
    record = json.loads(dumps_surrogate(make_surrogate()))
    assert record["format"] == "tailsense-pce"
    assert record["ordering"] == "graded-lex"


def test_loads_rejects_foreign_payload():
    with pytest.raises(ValueError):
        loads_surrogate(json.dumps({"format": "something-else"}))
