from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hardy_bvp import forms as fm
from hardy_bvp import symbol_solver as ss
from hardy_bvp.coefficients import CoefficientField
from hardy_bvp.errors import ConstraintViolation, DegreeOverflow, NotAccretive, ZeroMeanViolation
from hardy_bvp.lattice import FrequencyLattice

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 4).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n + 1)))


def _accretive(rng, d, kappa=0.5):
    M = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = 0.5 * (M + M.conj().T)
    return M + (kappa - np.linalg.eigvalsh(H)[0]) * np.eye(d)


def test_basis_is_colex_ordered():
    assert fm.basis_masks(2, 2) == (0b011, 0b101, 0b110)
    assert fm.basis_masks(2, 1) == (1, 2, 4)
    assert list(fm.normal_mask(2, 2)) == [True, True, False]
    with pytest.raises(DegreeOverflow):
        fm.basis_masks(2, 4)


def test_wedge_and_interior_on_basis_vectors():
    e0, e1, e01 = (fm.Multivector.basis(2, s) for s in ([0], [1], [0, 1]))
    assert np.allclose(fm.wedge([1, 0, 0], e1).coeffs, e01.coeffs)
    assert np.allclose(fm.wedge([0, 1, 0], e0).coeffs, -e01.coeffs)
    assert np.allclose(fm.interior([1, 0, 0], e01).coeffs, e1.coeffs)
    assert np.allclose(fm.interior([0, 1, 0], e01).coeffs, -e0.coeffs)


def test_degree_overflow():
    with pytest.raises(DegreeOverflow):
        fm.wedge_matrix([1, 0, 0], 2, 3)
    with pytest.raises(DegreeOverflow):
        fm.interior_matrix([1, 0, 0], 2, 0)


@given(seed=seeds, nk=dims)
def test_wedge_is_nilpotent_and_adjoint_to_interior(seed, nk):
    n, k = nk
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n + 1)
    if k + 2 <= n + 1:
        assert np.allclose(fm.wedge_matrix(v, n, k + 1) @ fm.wedge_matrix(v, n, k), 0, atol=1e-12)
    if k <= n:
        assert np.allclose(fm.wedge_matrix(v, n, k).T, fm.interior_matrix(v, n, k + 1), atol=1e-14)


@given(seed=seeds, nk=dims)
def test_anticommutation_relations(seed, nk):
    n, k = nk
    rng = np.random.default_rng(seed)
    r = fm.anticommutators(rng.normal(size=n + 1), rng.normal(size=n + 1), n, k)
    assert r["mixed"] < 1e-12 and r["wedge"] < 1e-12


@given(seed=seeds, nk=dims)
def test_dirac_squares_to_frequency_norm(seed, nk):
    n, k = nk
    assert fm.dirac_square_residual(np.random.default_rng(seed).normal(size=n), k) < 1e-12


@given(seed=seeds, nk=st.integers(1, 3).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))))
def test_hat_is_an_involution_and_symbol_has_expected_dimension(seed, nk):
    n, k = nk
    rng = np.random.default_rng(seed)
    d = comb(n + 1, k)
    B = _accretive(rng, d)
    assert np.allclose(fm.forms_hat(fm.forms_hat(B, n, k), n, k), B, atol=1e-11)
    xi = rng.normal(size=n)
    fs = fm.build_forms_symbol(B, xi / np.linalg.norm(xi), k)
    assert fs.Hk_xi_basis.shape[1] == 2 * comb(n - 1, k - 1)
    assert fs.invariance_residual < 1e-10
    Pp, Pm, lam = fs.projections()
    assert np.sum(lam.real > 0) == np.sum(lam.real < 0) == comb(n - 1, k - 1)


def test_non_accretive_forms_coefficients_are_rejected():
    with pytest.raises(NotAccretive):
        fm.build_forms_symbol(np.diag([1.0, -1.0, 1.0]), [1.0, 0.0], 2)


def test_block_forms_coefficients_anticommute_with_reflection(rng):
    n, k = 2, 2
    nm = fm.normal_mask(n, k)
    B = _accretive(rng, 3)
    B[np.ix_(nm, ~nm)] = 0
    B[np.ix_(~nm, nm)] = 0
    r = fm.forms_block_check(fm.build_forms_symbol(B, [0.6, 0.8], k))
    assert r["anticommutator"] < 1e-10 and r["reflection_invariance"] < 1e-10


def test_degree_one_reduces_to_the_gradient_problem():
    A = np.array([[2.0, 0.3, 0.1], [-0.2, 1.5, 0.2], [0.1, 0.1, 1.2]], dtype=complex)
    N = 8
    lat = FrequencyLattice(2, N)
    P = lat.points.reshape(lat.shape + (2,))
    X, Y = P[..., 0], P[..., 1]
    grad = np.stack([-np.sin(X) * np.sin(2 * Y), 2 * np.cos(X) * np.cos(2 * Y)])
    r1 = ss.solve_constant(CoefficientField(2, 1, "constant", A), lat, "reg", grad, (0.5,),
                           "gradient", False)
    r2 = fm.solve_forms_constant(A, 1, "tan", grad, N, (0.5,))
    assert np.allclose(r2.trace, r1.trace, atol=1e-12)
    assert np.allclose(r2.fields[0.5], r1.fields[0.5], atol=1e-12)
    assert r2.cond == pytest.approx(r1.cond, rel=1e-10)


def test_two_form_tangential_problem(rng):
    # k = 2, n = 2: the tangential datum is a multiple of e1 ^ e2; closedness is automatic
    N = 8
    lat = FrequencyLattice(2, N)
    P = lat.points.reshape(lat.shape + (2,))
    g = np.cos(P[..., 0] + P[..., 1])[None]
    B = _accretive(rng, 3)
    rep = fm.solve_forms_constant(B, 2, "tan", g, N, (0.0, 0.5))
    assert rep.residuals["boundary"] < 1e-12
    assert np.allclose(rep.fields[0.0][~fm.normal_mask(2, 2)], g, atol=1e-12)
    assert np.linalg.norm(rep.fields[0.5]) < np.linalg.norm(rep.fields[0.0])


def test_data_constraints_are_enforced():
    N = 8
    lat = FrequencyLattice(2, N)
    P = lat.points.reshape(lat.shape + (2,))
    not_closed = np.stack([np.cos(P[..., 1]), np.zeros(lat.shape)])
    with pytest.raises(ConstraintViolation):
        fm.solve_forms_constant(np.eye(3), 1, "tan", not_closed, N)
    with pytest.raises(ZeroMeanViolation):
        fm.solve_forms_constant(np.eye(3), 1, "tan", np.ones((2,) + lat.shape), N)


def test_multivector_csv_roundtrip(tmp_path, rng):
    f = fm.Multivector(3, 2, rng.normal(size=6) + 1j * rng.normal(size=6))
    path = tmp_path / "mv.csv"
    f.to_csv(path)
    g = fm.Multivector.from_csv(path, 3)
    assert g.k == 2 and np.array_equal(g.coeffs, f.coeffs)


def test_data_mask_labels():
    assert fm.tangential_data_masks(2, 1) == [1, 2]
    assert fm.normal_data_masks(2, 2) == [1, 2]
