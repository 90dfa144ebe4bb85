"""Acceptance criteria: one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hardy_bvp import bvp_engine as be
from hardy_bvp import discrete_calculus as dc
from hardy_bvp import forms as fm
from hardy_bvp import symbol_solver as ss
from hardy_bvp.cli import main as cli_main
from hardy_bvp.coefficients import (CoefficientField, accretivity_report, hat_transform, identity,
                                    jacobian_coefficients, random_coefficients, split_triangular)
from hardy_bvp.lattice import FrequencyLattice

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402


def record(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def _x(N):
    return FrequencyLattice(1, N).points.reshape(-1)


def _zero_mean_trace(rng, N, m=1, kmax=16):
    """Random zero-mean trace (2m, N) built from modes 1..kmax, identical at every N >= 2 kmax + 2."""
    x = _x(N)
    out = np.zeros((2 * m, N), dtype=complex)
    for c in range(2 * m):
        for k in range(1, kmax + 1):
            a, b = rng.normal(size=2) / k
            out[c] += a * np.cos(k * x) + b * np.sin(k * x)
    return out


def criterion_1():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for i in range(200):
        n, m = 1 + i % 3, 1 + (i // 3) % 2
        kind = "grid" if (i // 6) % 2 else "constant"
        N = {1: 16, 2: 8, 3: 4}[n] if kind == "grid" else None
        A = random_coefficients(rng, n, m, kind, N)
        hh = hat_transform(hat_transform(A)).entries
        worst = max(worst, np.max(np.abs(hh - A.entries)) / np.max(np.abs(A.entries)))
    el = time.perf_counter() - start
    return record(1, "transform involution", worst < 1e-12 and el < 5,
                  f"max rel err {worst:.2e}, {el:.2f} s")


def criterion_2():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        n, m = 1 + i % 3, 1 + (i // 3) % 2
        A = random_coefficients(rng, n, m)
        f = rng.normal(size=A.dim) + 1j * rng.normal(size=A.dim)
        g = split_triangular(A)[0].entries @ f
        lhs = np.vdot(g, hat_transform(A).entries @ g).real
        rhs = np.vdot(f, A.entries @ f).real
        worst = max(worst, abs(lhs - rhs) / np.vdot(f, f).real)
    el = time.perf_counter() - start
    return record(2, "accretivity transfer", worst < 1e-12 and el < 5,
                  f"max err {worst:.2e} |f|^2, {el:.2f} s")


def criterion_3():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst = 0.0
    for m in (1, 2):
        op = dc.assemble_TA(random_coefficients(rng, 1, m, "grid", 64))
        worst = max(worst, op.similarity_residual())
    el = time.perf_counter() - start
    return record(3, "generator similarity", worst < 1e-12 and el < 10,
                  f"max rel residual {worst:.2e}, {el:.2f} s")


def criterion_4():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    sq, part = 0.0, 0.0
    for _ in range(20):
        frame = dc.hardy_frame(dc.assemble_TA(random_coefficients(rng, 1, 1, "grid", 64)))
        d = frame.op.shape[0]
        E = frame.matrix(dc.sgn)
        Pn = frame.Enull
        sq = max(sq, np.linalg.norm(E @ E - (np.eye(d) - Pn), 2))
        part = max(part, np.linalg.norm(frame.Eplus + frame.Eminus + Pn - np.eye(d), 2))
    el = time.perf_counter() - start
    ok = sq < 1e-11 and part < 1e-11 and el < 60
    return record(4, "spectral calculus", ok,
                  f"|sgn^2 - I| {sq:.2e}, |partition - I| {part:.2e}, {el:.1f} s")


def criterion_5():
    N = 32
    frame = dc.hardy_frame(dc.assemble_TA(identity(1, 1, N)))
    d = frame.op.shape[0]
    R = frame.op.range_index
    basis = np.eye(d, dtype=complex)[:, R]
    rng = np.random.default_rng(5)
    mix = basis @ (rng.normal(size=(len(R), 20)) + 1j * rng.normal(size=(len(R), 20)))
    F = np.hstack([basis, mix])
    norms = np.linalg.norm(F, axis=0) ** 2
    qa = dc.quadratic_functional(frame, F, method="analytic") / norms
    qq = dc.quadratic_functional(frame, F, method="quadrature") / norms
    ea, eq = np.max(np.abs(qa - 0.5)), np.max(np.abs(qq - qa))
    return record(5, "quadratic estimate, A = I", ea < 1e-10 and eq < 1e-8,
                  f"|Q/|f|^2 - 1/2| {ea:.2e}, quadrature gap {eq:.2e}")


def criterion_6():
    rng = np.random.default_rng(6)
    traces = [_zero_mean_trace(rng, 128) for _ in range(100)]
    Cs = {}
    for N in (64, 128):
        A = jacobian_coefficients(0.3 * np.sin(_x(N)))
        frame = dc.hardy_frame(dc.assemble_TA(A))
        F = np.stack([frame.op.to_coeffs(t[:, :: 128 // N]) for t in traces], axis=1)
        ratios = dc.quadratic_functional(frame, F) / np.linalg.norm(F, axis=0) ** 2
        Cs[N] = max(ratios.max(), 1.0 / ratios.min())
    drift = abs(Cs[128] - Cs[64]) / Cs[64]
    return record(6, "quadratic estimate, Jacobian coefficients", drift < 0.2,
                  f"C(64) = {Cs[64]:.4f}, C(128) = {Cs[128]:.4f}, drift {drift:.1%}")


def criterion_7():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    cases = [random_coefficients(rng, 1, 1, structure="hermitean"),
             random_coefficients(rng, 1, 2, structure="hermitean"),
             jacobian_coefficients(0.3 * np.sin(_x(64)))]
    worst = 0.0
    for A in cases:
        frame = dc.hardy_frame(dc.assemble_TA(A.on_grid(64)))
        worst = max(worst, be.rellich_residual(frame)["max_residual"])
    el = time.perf_counter() - start
    return record(7, "Rellich identity", worst < 1e-9 and el < 30,
                  f"max residual {worst:.2e} |f|^2, {el:.1f} s")


def criterion_8():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        A = random_coefficients(rng, 1, 1, "grid", 64, structure="block")
        r = be.block_structure_check(dc.hardy_frame(dc.assemble_TA(A)))
        worst = max(worst, r["diagonal_blocks"], r["anticommutator"])
    return record(8, "block structure", worst < 1e-10, f"max {worst:.2e}")


def criterion_9():
    rng = np.random.default_rng(9)
    eig_err = 0.0
    for _ in range(500):
        n = int(1 + rng.integers(3))
        A = random_coefficients(rng, n, 1)
        xi = rng.normal(size=n)
        xi /= np.linalg.norm(xi)
        sp = ss.build_symbol(A, xi)
        mp, mm = ss.scalar_eigen_relation(*sp.abcd)
        lam = np.linalg.eigvals(sp.Txi)
        lp, lm = lam[np.argmax(lam.real)], lam[np.argmin(lam.real)]
        eig_err = max(eig_err, abs(lp + 1j * mp) / abs(lp), abs(lm + 1j * mm) / abs(lm))
    N = 32
    x = _x(N)
    solve_err = 0.0
    for which in ("neu", "reg", "dir"):
        A = random_coefficients(rng, 1, 1)
        data = (np.cos(x) + 0.5 * np.sin(3 * x))[None]
        r1 = ss.solve_constant(A, FrequencyLattice(1, N), which, data, (0.5,), compute_norms=False)
        frame = dc.hardy_frame(dc.assemble_TA(A.on_grid(N)))
        r2 = be.solve_on_frame(frame, which, data, (0.5,), compute_norms=False)
        scale = np.max(np.abs(r1.trace))
        solve_err = max(solve_err, np.max(np.abs(r1.trace - r2.trace)) / scale,
                        np.max(np.abs(r1.fields[0.5] - r2.fields[0.5])) / scale)
    return record(9, "constant-coefficient consistency", eig_err < 1e-12 and solve_err < 1e-12,
                  f"eigen relation {eig_err:.2e}, symbol vs discrete {solve_err:.2e}")


def criterion_10():
    rng = np.random.default_rng(10)
    worst = 0.0
    for i in range(100):
        n = 1 + i % 2
        A = random_coefficients(rng, n, 2, structure="hermitean")
        xi = rng.normal(size=n)
        Y = ss.hardy_fibre_basis(A, xi / np.linalg.norm(xi))
        f = Y @ (rng.normal(size=Y.shape[1]) + 1j * rng.normal(size=Y.shape[1]))
        worst = max(worst, ss.reverse_rellich_residual(A, xi, f))
    return record(10, "reverse Rellich", worst < 1e-11, f"max residual {worst:.2e}")


def criterion_11():
    N = 128
    x = _x(N)
    rep = ss.solve_constant(identity(1), FrequencyLattice(1, N), "dir", np.cos(x)[None],
                            (0.0, 0.25, 0.5, 1.0, 2.0, 4.0), compute_norms=False)
    spec_err = max(np.linalg.norm(rep.potentials[t][0] - np.exp(-t) * np.cos(x))
                   / np.linalg.norm(np.exp(-t) * np.cos(x)) for t in rep.t_levels)
    var = be.variational_oracle(identity(1), "dir", np.cos(x)[None], N, K=256, T_top=14.0)
    exact = np.exp(-var.t)[:, None] * np.cos(x)[None, :]
    var_err = np.linalg.norm(var.U[:, 0] - exact) / np.linalg.norm(exact)
    return record(11, "Poisson exactness", spec_err < 1e-10 and var_err < 1e-3,
                  f"spectral {spec_err:.2e}, variational 128x256 {var_err:.2e}")


def _uniqueness_cases():
    block = random_coefficients(np.random.default_rng(12), 1, 1, "grid", 64, structure="block")
    const = CoefficientField(1, 1, "constant", np.array([[1.0, 0.4], [-0.2, 1.5]], dtype=complex))
    return [("hermitean (Jacobian), neu", lambda N: jacobian_coefficients(0.3 * np.sin(_x(N))), "neu"),
            ("block, reg", lambda N: block, "reg"),
            ("constant, dir", lambda N: const, "dir")]


def criterion_12():
    start = time.perf_counter()
    ok = True
    parts = []
    for label, make, which in _uniqueness_cases():
        errs = []
        for N, K in ((64, 128), (128, 256)):
            x = _x(N)
            data = (np.cos(x) + 0.4 * np.sin(2 * x) - 0.2 * np.cos(3 * x))[None]
            errs.append(be.uniqueness_compare(be.BVPSpec(make(N), which, data, N), K=K)["error"])
        ok &= errs[0] < 2e-2 and errs[1] < errs[0]
        parts.append(f"{label}: {errs[0]:.1e} -> {errs[1]:.1e}")
    el = time.perf_counter() - start
    ok &= el < 300
    return record(12, "uniqueness vs variational", ok, "; ".join(parts) + f"; {el:.0f} s")


def criterion_13():
    rng = np.random.default_rng(13)
    N = 32
    A = identity(1, 1, N)
    f = _zero_mean_trace(np.random.default_rng(131), N, kmax=6)
    ratios = []
    for _ in range(5):
        B = random_coefficients(rng, 1, 1, "grid", N, kappa=0.0, amplitude=1.0)
        B = B.scaled(1.0 / B.sup_norm())
        for eps in (1e-3, 5e-4):
            ratios.append(dc.lipschitz_probe(A, A + B.scaled(eps), f, "sup", N)[0])
    spread = max(ratios) / min(ratios)
    return record(13, "Lipschitz probe", spread <= 2.0,
                  f"ratios in [{min(ratios):.3f}, {max(ratios):.3f}], spread {spread:.2f}")


def criterion_14():
    rng = np.random.default_rng(14)
    N = 32
    bases = [random_coefficients(rng, 1, 1, "grid", N, structure="hermitean"),
             random_coefficients(rng, 1, 1, "grid", N, structure="block"),
             random_coefficients(rng, 1, 1)]
    worst = 1.0
    for A0 in bases:
        kappa = accretivity_report(A0.on_grid(N)).kappa_pointwise
        perts = []
        for _ in range(20):
            B = random_coefficients(rng, 1, 1, "grid", N, kappa=0.0, amplitude=1.0)
            perts.append(B.scaled(0.05 * kappa / B.sup_norm()))
        w = be.openness_witness(A0, perts, N)["worst_ratio"]
        worst = max(worst, max(w.values()))
    return record(14, "openness witness", worst <= 2.0, f"worst condition ratio {worst:.3f}")


def criterion_15():
    rng = np.random.default_rng(15)
    sq, anti = 0.0, 0.0
    for n in range(1, 5):
        for k in range(0, 4):
            if k > n + 1:
                continue
            for _ in range(50):
                sq = max(sq, fm.dirac_square_residual(rng.normal(size=n), k))
            for _ in range(5):
                r = fm.anticommutators(rng.normal(size=n + 1), rng.normal(size=n + 1), n, k)
                anti = max(anti, r["mixed"], r["wedge"])
    N, n = 8, 2
    lat = FrequencyLattice(n, N)
    P = lat.points.reshape(lat.shape + (n,))
    X, Y = P[..., 0], P[..., 1]
    red = 0.0
    for _ in range(3):
        A = random_coefficients(rng, n, 1)
        grad = np.stack([-np.sin(X) * np.sin(2 * Y), 2 * np.cos(X) * np.cos(2 * Y)])
        r1 = ss.solve_constant(A, lat, "reg", grad, (0.5,), "gradient", False)
        r2 = fm.solve_forms_constant(A.entries, 1, "tan", grad, N, (0.5,))
        phi = (np.cos(X) * np.sin(Y))[None]
        r3 = ss.solve_constant(A, lat, "neu", phi, (0.5,), compute_norms=False)
        r4 = fm.solve_forms_constant(A.entries, 1, "nor", -phi, N, (0.5,))
        for a, b in ((r1, r2), (r3, r4)):
            s = np.max(np.abs(a.trace))
            red = max(red, np.max(np.abs(a.trace - b.trace)) / s,
                      np.max(np.abs(a.fields[0.5] - b.fields[0.5])) / s, abs(a.cond - b.cond) / a.cond)
    ok = sq < 1e-12 and anti < 1e-13 and red < 1e-12
    return record(15, "forms identities", ok,
                  f"D^2 {sq:.2e}, anticommutators {anti:.2e}, k=1 reduction {red:.2e}")


def criterion_16(tmp_dir):
    start = time.perf_counter()
    codes = [cli_main(["selftest", "--seed", "3", "--quiet", "--out", str(tmp_dir / f"run{i}")])
             for i in range(2)]
    el = (time.perf_counter() - start) / 2
    same = (tmp_dir / "run0" / "selftest.json").read_bytes() == (tmp_dir / "run1" / "selftest.json").read_bytes()
    ok = codes == [0, 0] and same and el < 60
    return record(16, "selftest speed and determinism", ok,
                  f"exit codes {codes}, identical {same}, {el:.1f} s per run")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12,
            criterion_13, criterion_14, criterion_15]


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: c.__name__)
def test_criterion(criterion):
    assert criterion()


def test_criterion_16(tmp_path):
    assert criterion_16(tmp_path)


if __name__ == "__main__":
    import tempfile

    results = [c() for c in CRITERIA]
    with tempfile.TemporaryDirectory() as d:
        results.append(criterion_16(Path(d)))
    sys.exit(0 if all(results) else 1)
