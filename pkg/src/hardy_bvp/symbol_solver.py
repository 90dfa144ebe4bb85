"""Constant-coefficient solver working one Fourier mode at a time.

For constant coefficients the generator is diagonal in frequency.  At a
frequency xi it acts on the 2m-dimensional fibre spanned by e0 (x) C^m and
(xi/|xi|) (x) C^m, and everything reduces to small dense linear algebra.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _linalg
from .coefficients import CoefficientField, _fibre_basis, classify, hat_transform, split_triangular
from .errors import (ConfigError, DegenerateSymbol, NotAccretive, SingularNormalBlock,
                     WellPosednessFailure, ZeroFrequency, ZeroMeanViolation)
from .lattice import FrequencyLattice, sphere_directions
from .report import NormBundle, SolveReport

WP_COND_LIMIT = 1e8
WHICH = ("neu", "reg", "dir", "neuperp")


def full_dirac(xi, m):
    """D at frequency xi on C^{(1+n)m}: [[0, i xi^T], [-i xi, 0]] (x) I_m."""
    xi = np.asarray(xi, dtype=float)
    n = len(xi)
    d = (1 + n) * m
    D = np.zeros((d, d), dtype=complex)
    for i in range(n):
        blk = slice((1 + i) * m, (2 + i) * m)
        D[:m, blk] = 1j * xi[i] * np.eye(m)
        D[blk, :m] = -1j * xi[i] * np.eye(m)
    return D


@dataclass
class SymbolProblem:
    """Symbol data at one frequency, in the orthonormal fibre basis Q."""

    A: CoefficientField
    xi: np.ndarray
    Q: np.ndarray
    T_full: np.ndarray
    Txi: np.ndarray
    Dxi: np.ndarray
    abcd: tuple

    @property
    def m(self):
        return self.A.m


def build_symbol(A, xi):
    if A.kind != "constant":
        raise ConfigError("symbols are only defined for constant coefficients")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (A.n,):
        raise ConfigError(f"frequency must have {A.n} components")
    r = np.linalg.norm(xi)
    if r == 0:
        raise ZeroFrequency("the symbol is not defined at xi = 0")
    m = A.m
    Abar, Aund = split_triangular(A)
    D = full_dirac(xi, m)
    T_full = np.linalg.solve(Abar.entries, D @ Aund.entries)
    Q = _fibre_basis(xi, m)
    Txi = Q.conj().T @ T_full @ Q
    Dxi = Q.conj().T @ D @ Q
    H = Q.conj().T @ hat_transform(A).entries @ Q
    abcd = (H[:m, :m], H[:m, m:], H[m:, :m], H[m:, m:])
    return SymbolProblem(A, xi, Q, T_full, Txi, Dxi, abcd)


def hardy_symbol_projections(sp):
    """Spectral projectors of Txi onto Re > 0 and Re < 0, in fibre coordinates.

    Returns (Pplus, Pminus, eigenvalues).
    """
    Pp, Pm, lam, _ = _linalg.half_plane_projectors(sp.Txi, DegenerateSymbol)
    return Pp, Pm, lam


def scalar_eigen_relation(a, b, c, d):
    """Roots mu_+, mu_- with (a z + b w) = mu w on the eigenvectors (z, w).

    mu = -(c - b)/2 +- i sqrt(a d - (b + c)^2 / 4), principal square root;
    mu_+ belongs to the eigenvalue lambda = -i mu_+ with positive real part.
    A radicand on the negative real axis is taken with +0 imaginary part,
    so its root points to +i.
    """
    a, b, c, d = (complex(np.asarray(v).reshape(())) for v in (a, b, c, d))
    rad = a * d - 0.25 * (b + c) ** 2
    rad = complex(rad.real, rad.imag + 0.0)
    s = np.sqrt(rad)
    mid = -0.5 * (c - b)
    return mid + 1j * s, mid - 1j * s


def _restricted_map(sp, which):
    m = sp.m
    if which == "reg":
        return np.hstack([np.zeros((m, m)), np.eye(m)])
    if which in ("neuperp", "dir"):
        return np.hstack([np.eye(m), np.zeros((m, m))])
    if which == "neu":
        return (sp.A.entries @ sp.Q)[:m]
    raise ConfigError(f"unknown boundary condition {which!r}")


def _plus_basis(sp):
    Pp, _, lam = hardy_symbol_projections(sp)
    k = int(np.sum(lam.real > 0))
    if k != sp.m:
        raise WellPosednessFailure(f"Hardy subspace has dimension {k}, expected {sp.m}", np.inf)
    return _linalg.range_basis(Pp, k), lam


def map_singular_values(sp, which):
    Y, _ = _plus_basis(sp)
    return np.linalg.svd(_restricted_map(sp, which) @ Y, compute_uv=False)


def boundary_map_condition(sp, which):
    """Condition number of the boundary map restricted to the Hardy fibre."""
    s = map_singular_values(sp, which)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def wp_scan(family, lambdas, which="neu", directions=512):
    """Scan a one-parameter family of constant coefficients.

    Returns one row per parameter value with the supremum over directions
    of the per-direction condition number and the condition number of the
    whole restricted map (largest over smallest singular value across all
    directions).  Failures are recorded as infinite; a finite global
    condition number above WP_COND_LIMIT gets status "ill_conditioned".
    """
    rows = []
    for lam in lambdas:
        A = family(lam)
        dirs = sphere_directions(A.n, directions)
        smax, smin, sup_cond = 0.0, np.inf, 0.0
        status = "ok"
        try:
            for xi in dirs:
                s = map_singular_values(build_symbol(A, xi), which)
                smax, smin = max(smax, s[0]), min(smin, s[-1])
                sup_cond = max(sup_cond, s[0] / s[-1] if s[-1] > 0 else np.inf)
        except (DegenerateSymbol, WellPosednessFailure, SingularNormalBlock) as exc:
            status = type(exc).__name__
            sup_cond = np.inf
            smin = 0.0
        glob = smax / smin if smin > 0 else np.inf
        if status == "ok" and not glob <= WP_COND_LIMIT:
            status = "ill_conditioned"
        rows.append({"lambda": float(lam), "sup_cond": float(sup_cond),
                     "global_cond": float(glob), "status": status})
    return rows


def _check_zero_mean(data, lattice, what):
    mean = np.abs(np.mean(data.reshape(data.shape[0], -1), axis=1))
    scale = np.sqrt(np.mean(np.abs(data) ** 2)) + 1e-300
    if np.any(mean > 1e-12 * max(scale, 1.0)):
        raise ZeroMeanViolation(f"{what} data has nonzero mean {mean.max():.3e}")


def _fibre_data(which, hat_data, k, xi, m, n, data_kind):
    if which in ("neu", "neuperp"):
        return -hat_data[:, k]
    if which == "dir":
        return hat_data[:, k]
    xn = np.linalg.norm(xi)
    if data_kind == "potential":
        return 1j * xn * hat_data[:, k]
    g = hat_data[:, k].reshape(n, m)
    return (xi / xn) @ g


def solve_constant(A, lattice, which, data, t_levels=(), data_kind="potential",
                   compute_norms=True):
    """Solve a boundary value problem for constant coefficients.

    ``data`` is an array of shape (m, *grid): the Neumann datum phi for
    "neu" and "neuperp", the Dirichlet datum u for "dir", and either the
    potential u or its gradient (shape (n*m, *grid)) for "reg".
    """
    if A.kind != "constant":
        raise ConfigError("solve_constant needs constant coefficients")
    if which not in WHICH:
        raise ConfigError(f"unknown boundary condition {which!r}")
    n, m, N = A.n, A.m, lattice.N
    if lattice.n != n:
        raise ConfigError("lattice dimension does not match coefficients")
    data = np.asarray(data, dtype=complex)
    rows = n * m if (which == "reg" and data_kind == "gradient") else m
    if data.shape != (rows,) + lattice.shape:
        raise ConfigError(f"data must have shape {(rows,) + lattice.shape}, got {data.shape}")
    if which != "reg" or data_kind == "gradient":
        _check_zero_mean(data, lattice, which)
    classify_A = classify(A)
    P = lattice.size
    d = A.dim
    hat_data = lattice.fft(data).reshape(rows, P)
    freqs = lattice.frequencies
    t_levels = tuple(float(t) for t in t_levels)

    trace_hat = np.zeros((d, P), dtype=complex)
    F_hat = {t: np.zeros((d, P), dtype=complex) for t in t_levels}
    U_hat = {t: np.zeros((m, P), dtype=complex) for t in t_levels}
    smax, smin, worst = 0.0, np.inf, 0.0
    bres_num, bres_den, pde, conj = 0.0, 0.0, 0.0, 0.0
    cache = {}
    solved = []
    for k in np.flatnonzero(lattice.nonzero_mask()):
        xi = freqs[k]
        key = tuple(np.round(xi / np.linalg.norm(xi), 13))
        if key not in cache:
            sp = build_symbol(A, xi / np.linalg.norm(xi))
            Y, _ = _plus_basis(sp)
            Mr1 = Y.conj().T @ sp.Txi @ Y
            cache[key] = (sp, Y, Mr1, _restricted_map(sp, which) @ Y)
        sp, Y, Mr1, SY = cache[key]
        r = np.linalg.norm(xi)
        Mr = r * Mr1
        s = np.linalg.svd(SY, compute_uv=False)
        smax, smin = max(smax, s[0]), min(smin, s[-1])
        worst = max(worst, s[0] / s[-1] if s[-1] > 0 else np.inf)
        g = _fibre_data(which, hat_data, k, xi, m, n, data_kind)
        c = np.linalg.lstsq(SY, g, rcond=None)[0]
        bres_num += np.linalg.norm(SY @ c - g) ** 2
        bres_den += np.linalg.norm(g) ** 2
        QY = sp.Q @ Y
        trace_hat[:, k] = QY @ c
        T_xi = r * sp.T_full
        for t in t_levels:
            E = sla.expm(-t * Mr)
            Fk = QY @ (E @ c)
            F_hat[t][:, k] = Fk
            dF = -QY @ (Mr @ (E @ c))
            pde = max(pde, np.linalg.norm(dF + T_xi @ Fk))
            grad0 = np.concatenate([1j * xi[i] * Fk[:m] for i in range(n)])
            conj = max(conj, np.linalg.norm(dF[m:] - grad0))
            if which == "dir":
                U_hat[t][:, k] = Fk[:m]
            else:
                U_hat[t][:, k] = -(QY @ np.linalg.solve(Mr, E @ c))[:m]
        solved.append((k, QY, Mr, c))

    cond = smax / smin if smin > 0 else np.inf
    if not cond <= WP_COND_LIMIT:
        raise WellPosednessFailure(f"restricted map condition number {cond:.3e}", cond)
    fnorm = np.linalg.norm(trace_hat)
    residuals = {
        "boundary": float(np.sqrt(bres_num / bres_den)) if bres_den > 0 else 0.0,
        "pde": float(pde / fnorm) if fnorm > 0 else 0.0,
        "worst_mode_cond": float(worst),
    }
    if classify_A.hermitean:
        residuals["rellich"] = float(rellich_constant(A, trace_hat) / max(fnorm**2, 1e-300))
    if which == "dir" and t_levels:
        residuals["conjugate"] = float(conj / max(fnorm, 1e-300))

    shape = lattice.shape
    trace = lattice.ifft(trace_hat.reshape((d,) + shape))
    fields = {t: lattice.ifft(F_hat[t].reshape((d,) + shape)) for t in t_levels}
    pots = {t: lattice.ifft(U_hat[t].reshape((m,) + shape)) for t in t_levels}
    norms = _constant_norms(solved, lattice, d) if compute_norms else None
    meta = {"engine": "symbol", "n": n, "m": m, "N": N, "classification": classify_A.to_dict()}
    return SolveReport(which, trace, float(cond), float(smin), float(smax), t_levels,
                       fields, pots, residuals, norms, meta)


def rellich_constant(A, trace_hat):
    """|(f0, (Af)0) - ((Af)_t, f_t)| summed over modes (Fourier side)."""
    m = A.m
    Af = A.entries @ trace_hat
    lhs = np.vdot(Af[:m], trace_hat[:m])
    rhs = np.vdot(trace_hat[m:], Af[m:])
    return float(abs(lhs - rhs))


def _constant_norms(solved, lattice, d):
    """Trace, sup and square-function norms computed mode by mode."""
    scale = np.sqrt(lattice.cell_volume)
    trace2, sq2 = 0.0, 0.0
    ts = np.concatenate([[0.0], np.geomspace(1.0 / (2 * lattice.N), 8.0, 200)])
    sup2 = np.zeros(len(ts))
    for k, QY, Mr, c in solved:
        lam, W = np.linalg.eig(Mr)
        coef = np.linalg.solve(W, c)
        B = QY @ W
        G = B.conj().T @ B
        trace2 += np.linalg.norm(QY @ c) ** 2
        I = _linalg.cross_integral_tdt(lam, lam)
        sq2 += float(np.real(coef.conj() @ (G * I) @ coef))
        E = np.exp(-np.outer(ts, lam)) * coef[None, :]
        sup2 += np.real(np.einsum("ti,ij,tj->t", E.conj(), G, E))
    return NormBundle(trace_norm=float(scale * np.sqrt(trace2)),
                      sup_norm=float(scale * np.sqrt(sup2.max())),
                      square_function=float(scale * np.sqrt(sq2)),
                      ntmax=None)


def reverse_rellich_terms(A, xi, f):
    """Both sides of (D_xi Abar f, Abar f) = 2 |xi|^2 int_0^inf Re(A F_t, F_t) dt.

    ``f`` is a fibre vector (length 2m) in the Hardy subspace of the symbol.
    """
    sp = build_symbol(A, xi)
    Y, _ = _plus_basis(sp)
    f = np.asarray(f, dtype=complex)
    f_full = sp.Q @ f
    Abar = split_triangular(A)[0].entries
    D = full_dirac(sp.xi, sp.m)
    g = Abar @ f_full
    lhs = np.vdot(g, D @ g)
    c = Y.conj().T @ f
    Mr = Y.conj().T @ sp.Txi @ Y
    lam, W = np.linalg.eig(Mr)
    coef = np.linalg.solve(W, c)
    B = sp.Q @ Y @ W
    G = B.conj().T @ A.entries @ B
    integral = coef.conj() @ (G * _linalg.cross_integral_exp(lam, lam)) @ coef
    rhs = 2 * np.dot(sp.xi, sp.xi) * integral.real
    return complex(lhs), float(rhs)


def reverse_rellich_residual(A, xi, f):
    lhs, rhs = reverse_rellich_terms(A, xi, f)
    return float(abs(lhs - rhs) / max(np.vdot(f, f).real, 1e-300))


def hardy_fibre_basis(A, xi):
    """Orthonormal fibre basis of the Hardy subspace (shape (2m, m))."""
    return _plus_basis(build_symbol(A, xi))[0]


__all__ = [
    "SymbolProblem", "build_symbol", "hardy_symbol_projections", "scalar_eigen_relation",
    "boundary_map_condition", "map_singular_values", "wp_scan", "solve_constant",
    "reverse_rellich_residual", "reverse_rellich_terms", "full_dirac", "hardy_fibre_basis",
    "FrequencyLattice", "NotAccretive",
]
