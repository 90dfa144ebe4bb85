import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardy_bvp import bvp_engine as be
from hardy_bvp import discrete_calculus as dc
from hardy_bvp.coefficients import (CoefficientField, identity, jacobian_coefficients,
                                    random_coefficients)
from hardy_bvp.errors import (CoercivityFailure, ConfigError, NotBlock, NotHermitean,
                              SeriesDiverges, ZeroMeanViolation)
from hardy_bvp.lattice import FrequencyLattice

seeds = st.integers(0, 2**32 - 1)
N = 16


def _x(n=N):
    return FrequencyLattice(1, n).points.reshape(-1)


def _frame(A):
    return dc.hardy_frame(dc.assemble_TA(A.on_grid(N)))


def _data(which):
    x = _x()
    u = np.cos(x) + 0.3 * np.sin(2 * x)
    return u[None]


def test_unknown_boundary_condition():
    with pytest.raises(ConfigError):
        be.BVPSpec(identity(1), "robin", _data("dir"), N)


@pytest.mark.parametrize("which", ["dir", "neu", "reg", "neuperp"])
def test_grid_path_matches_symbol_path_for_constant_coefficients(which):
    A = CoefficientField(1, 1, "constant", np.array([[1.7, 0.3 + 0.2j], [-0.4, 1.2]]))
    data = _data(which)
    t = (0.0, 0.6)
    r_sym = be.solve_bvp(be.BVPSpec(A, which, data, N, t, engine="symbol", compute_norms=False))
    r_grid = be.solve_bvp(be.BVPSpec(A.on_grid(N), which, data, N, t, compute_norms=False))
    for tt in t:
        assert np.allclose(r_grid.fields[tt], r_sym.fields[tt], atol=1e-11)
    assert r_grid.cond == pytest.approx(r_sym.cond, rel=1e-8)


@pytest.mark.parametrize("which", ["dir", "neu", "reg"])
def test_solution_satisfies_the_boundary_condition(which):
    A = jacobian_coefficients(0.3 * np.sin(_x()))
    rep = be.solve_bvp(be.BVPSpec(A, which, _data(which), N, (0.0,), compute_norms=False))
    assert rep.residuals["boundary"] < 1e-11


@pytest.mark.parametrize("which", ["dir", "neu", "reg"])
def test_restricted_solve_agrees_with_double_layer(which):
    A = jacobian_coefficients(0.3 * np.sin(_x()))
    frame = _frame(A)
    data = _data(which)
    rep = be.solve_on_frame(frame, which, data, compute_norms=False)
    f_dl, iters, nK = be.solve_double_layer(frame, which, data)
    assert nK < 1 and iters > 0
    f = frame.op.to_coeffs(rep.trace)
    assert np.linalg.norm(f_dl - f) < 1e-10 * np.linalg.norm(f)


def test_dense_fallback_matches_series(monkeypatch):
    A = CoefficientField(1, 1, "grid", np.tile(np.array([[1.0, 0.3], [0.0, 1.0]]), (N, 1, 1)))
    frame = _frame(A)
    data = _data("neu")
    f_series, it, nK = be.solve_double_layer(frame, "neu", data)
    assert 0 < nK < be.SERIES_NORM_LIMIT and it > 0
    monkeypatch.setattr(be, "SERIES_NORM_LIMIT", 0.0)
    f_direct, it_direct, _ = be.solve_double_layer(frame, "neu", data)
    assert it_direct == 0
    assert np.linalg.norm(f_direct - f_series) < 1e-11 * np.linalg.norm(f_series)


def test_neumann_series_diverges_for_large_operator():
    K = np.diag([1.0, 0.5]).astype(complex)
    with pytest.raises(SeriesDiverges):
        be.neumann_series_solve(K, np.ones(2, dtype=complex))


def test_neumann_series_inverts_small_operator(rng):
    K = rng.normal(size=(6, 6))
    K *= 0.5 / np.linalg.norm(K, 2)
    g = rng.normal(size=6) + 0j
    h, _, nK = be.neumann_series_solve(K, g)
    assert nK == pytest.approx(0.5, rel=1e-6)
    assert np.allclose(h + K @ h, g, atol=1e-12)


def test_neumann_data_with_mean_is_rejected():
    with pytest.raises(ZeroMeanViolation):
        be.solve_bvp(be.BVPSpec(identity(1).on_grid(N), "neu", np.ones((1, N)), N))


@settings(max_examples=10)
@given(seed=seeds)
def test_rellich_identity_for_hermitean_coefficients(seed):
    A = random_coefficients(np.random.default_rng(seed), 1, 1, "grid", N, structure="hermitean")
    res = be.rellich_residual(_frame(A))
    assert res["max_residual"] < 1e-9
    assert res["coercivity_constant"] > 0


def test_rellich_identity_fails_for_mixtures(rng):
    A = random_coefficients(rng, 1, 1, "grid", N, structure="hermitean")
    frame = _frame(A)
    x = _x()
    f = frame.op.to_coeffs(np.stack([np.cos(x), np.sin(x) + np.cos(2 * x)]))
    g = frame.Eplus @ f + 0.7 * frame.Eminus @ f
    assert be.rellich_form(frame.op, g) / np.linalg.norm(g) ** 2 > 1e-3


def test_rellich_requires_hermitean(rng):
    A = random_coefficients(rng, 1, 1, "grid", N, structure="general")
    with pytest.raises(NotHermitean):
        be.rellich_residual(_frame(A))


def test_block_structure(rng):
    A = random_coefficients(rng, 1, 1, "grid", N, structure="block")
    r = be.block_structure_check(_frame(A))
    assert r["diagonal_blocks"] < 1e-10 and r["anticommutator"] < 1e-10
    assert r["inverse_residual"] < 1e-10
    assert 1 <= r["kato_ratio"] < np.inf
    with pytest.raises(NotBlock):
        be.block_structure_check(_frame(random_coefficients(rng, 1, 1, "grid", N)))


def test_variational_oracle_converges_at_second_order():
    spec = be.BVPSpec(identity(1), "dir", np.cos(_x())[None], N)
    e1 = be.uniqueness_compare(spec, K=64, T_top=12.0)["error"]
    e2 = be.uniqueness_compare(spec, K=128, T_top=12.0)["error"]
    assert e2 < e1
    assert 3.0 < e1 / e2 < 5.0


@pytest.mark.parametrize("which", ["dir", "neu", "reg"])
def test_variational_oracle_agrees_for_variable_coefficients(which):
    A = jacobian_coefficients(0.3 * np.sin(_x()))
    out = be.uniqueness_compare(be.BVPSpec(A, which, _data(which), N), K=128)
    assert out["error"] < 5e-3
    assert out["energy_residual"] < 1e-8


def test_variational_oracle_rejects_non_coercive_forms():
    bad = CoefficientField(1, 1, "constant", np.diag([1.0, -0.5]).astype(complex))
    with pytest.raises(CoercivityFailure):
        be.variational_oracle(bad, "dir", np.cos(_x())[None], N, K=16, T_top=4.0)


def test_variational_oracle_rejects_neuperp():
    with pytest.raises(ConfigError):
        be.variational_oracle(identity(1), "neuperp", np.cos(_x())[None], N)


def test_openness_witness_is_stable_under_small_perturbations(rng):
    A0 = jacobian_coefficients(0.3 * np.sin(_x()))
    perts = [CoefficientField(1, 1, "grid", 0.01 * rng.normal(size=(N, 2, 2))) for _ in range(3)]
    out = be.openness_witness(A0, perts, N)
    for w, r in out["worst_ratio"].items():
        assert 1.0 <= r < 1.2, w
