"""Exterior forms: k-vectors on R^{1+n}, the forms symbol and constant-B solves.

Basis k-vectors are strictly increasing index sets stored as bitmasks and
ordered colexicographically (increasing bitmask value).  Index 0 is the
normal direction; a basis element is normal when it contains 0.

Signs follow ordered insertion: inserting or removing index j in the set S
costs (-1)^{#{s in S : s < j}}.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np
import scipy.linalg as sla

from .errors import (ConfigError, ConstraintViolation, DegenerateSymbol, DegreeOverflow,
                     NotAccretive, SingularNormalBlock, WellPosednessFailure, ZeroFrequency,
                     ZeroMeanViolation)
from .lattice import FrequencyLattice
from .report import SolveReport

WP_COND_LIMIT = 1e8


@lru_cache(maxsize=None)
def basis_masks(n, k):
    """Bitmasks of the k-subsets of {0..n} in colex order."""
    if k < 0 or k > n + 1:
        raise DegreeOverflow(f"degree {k} outside 0..{n + 1}")
    masks = [sum(1 << i for i in c) for c in combinations(range(n + 1), k)]
    return tuple(sorted(masks))


@lru_cache(maxsize=None)
def _mask_index(n, k):
    return {mk: i for i, mk in enumerate(basis_masks(n, k))}


def _parity_below(mask, j):
    return (-1) ** bin(mask & ((1 << j) - 1)).count("1")


def normal_mask(n, k):
    """Boolean array: which basis k-vectors contain the normal index 0."""
    return np.array([bool(mk & 1) for mk in basis_masks(n, k)])


@dataclass
class Multivector:
    n: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (comb(self.n + 1, self.k),):
            raise ConfigError(f"expected {comb(self.n + 1, self.k)} coefficients for "
                              f"degree {self.k} on R^{self.n + 1}")

    @classmethod
    def basis(cls, n, indices):
        indices = sorted(indices)
        mk = sum(1 << i for i in indices)
        k = len(indices)
        c = np.zeros(comb(n + 1, k), dtype=complex)
        c[_mask_index(n, k)[mk]] = 1.0
        return cls(n, k, c)

    @property
    def masks(self):
        return basis_masks(self.n, self.k)

    def __add__(self, other):
        return Multivector(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return Multivector(self.n, self.k, self.coeffs - other.coeffs)

    def __rmul__(self, c):
        return Multivector(self.n, self.k, c * self.coeffs)

    def inner(self, other):
        return complex(np.vdot(self.coeffs, other.coeffs))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mask", "re", "im"])
            for mk, c in zip(self.masks, self.coeffs):
                w.writerow([mk, repr(float(c.real)), repr(float(c.imag))])

    @classmethod
    def from_csv(cls, path, n):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((int(row["mask"]), complex(float(row["re"]), float(row["im"]))))
        if not rows:
            raise ConfigError(f"{path}: no multivector rows")
        k = bin(rows[0][0]).count("1")
        out = np.zeros(comb(n + 1, k), dtype=complex)
        idx = _mask_index(n, k)
        for mk, c in rows:
            if mk not in idx:
                raise ConfigError(f"{path}: mask {mk} is not a {k}-subset of 0..{n}")
            out[idx[mk]] = c
        return cls(n, k, out)


def wedge_matrix(v, n, k):
    """Matrix of f -> v wedge f from degree k to k + 1."""
    if k + 1 > n + 1 or k < 0:
        raise DegreeOverflow(f"wedge from degree {k} exceeds {n + 1}")
    v = np.asarray(v)
    src, dst = basis_masks(n, k), _mask_index(n, k + 1)
    M = np.zeros((len(dst), len(src)), dtype=np.result_type(v, float))
    for col, mk in enumerate(src):
        for j in range(n + 1):
            if v[j] != 0 and not mk >> j & 1:
                M[dst[mk | 1 << j], col] += _parity_below(mk, j) * v[j]
    return M


def interior_matrix(v, n, k):
    """Matrix of f -> v (left interior) f from degree k to k - 1."""
    if k - 1 < 0 or k > n + 1:
        raise DegreeOverflow(f"interior product from degree {k} is undefined")
    v = np.asarray(v)
    src, dst = basis_masks(n, k), _mask_index(n, k - 1)
    M = np.zeros((len(dst), len(src)), dtype=np.result_type(v, float))
    for col, mk in enumerate(src):
        for j in range(n + 1):
            if v[j] != 0 and mk >> j & 1:
                M[dst[mk & ~(1 << j)], col] += _parity_below(mk, j) * v[j]
    return M


def wedge(v, f):
    return Multivector(f.n, f.k + 1, wedge_matrix(v, f.n, f.k) @ f.coeffs)


def interior(v, f):
    return Multivector(f.n, f.k - 1, interior_matrix(v, f.n, f.k) @ f.coeffs)


def _e0(n):
    e = np.zeros(n + 1)
    e[0] = 1.0
    return e


def _embed_xi(xi):
    return np.concatenate([[0.0], np.asarray(xi, dtype=float)])


def anticommutators(v, w, n, k):
    """Residuals of mu_v mu_w* + mu_w* mu_v = (v, w) I and mu_v mu_w + mu_w mu_v = 0 on degree k."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    d = comb(n + 1, k)
    mixed = np.zeros((d, d))
    if k >= 1:
        mixed += wedge_matrix(v, n, k - 1) @ interior_matrix(w, n, k)
    if k <= n:
        mixed += interior_matrix(w, n, k + 1) @ wedge_matrix(v, n, k)
    r1 = np.linalg.norm(mixed - np.dot(v, w) * np.eye(d), 2)
    if k + 2 <= n + 1:
        ww = wedge_matrix(v, n, k + 1) @ wedge_matrix(w, n, k) + \
            wedge_matrix(w, n, k + 1) @ wedge_matrix(v, n, k)
        r2 = np.linalg.norm(ww, 2) if ww.size else 0.0
    else:
        r2 = 0.0
    return {"mixed": float(r1), "wedge": float(r2)}


def forms_dirac(xi, k):
    """D_xi = i (mu* mu_xi + mu mu_xi*) on degree k forms over R^{1+n}."""
    n = len(xi)
    x = _embed_xi(xi)
    e0 = _e0(n)
    d = comb(n + 1, k)
    D = np.zeros((d, d), dtype=complex)
    if k <= n:
        D += interior_matrix(e0, n, k + 1) @ wedge_matrix(x, n, k)
    if k >= 1:
        D += wedge_matrix(e0, n, k - 1) @ interior_matrix(x, n, k)
    return 1j * D


def _split_perm(n, k):
    nm = normal_mask(n, k)
    return np.concatenate([np.where(nm)[0], np.where(~nm)[0]]), int(nm.sum())


def _permuted_blocks(B, n, k):
    perm, p = _split_perm(n, k)
    Bp = np.asarray(B, dtype=complex)[np.ix_(perm, perm)]
    return perm, p, Bp[:p, :p], Bp[:p, p:], Bp[p:, :p], Bp[p:, p:]


def _unpermute(M, perm):
    out = np.empty_like(M)
    out[np.ix_(perm, perm)] = M
    return out


def _check_normal(B00):
    s = np.linalg.svd(B00, compute_uv=False)
    if s.size and s[-1] < 1e-12 * max(s[0], 1e-300):
        raise SingularNormalBlock("normal block of B is singular")


def forms_split(B, n, k):
    """(Bbar, Bunder): Bbar = [[B_nn, B_nt], [0, I]], Bunder = [[I, 0], [B_tn, B_tt]]."""
    perm, p, B00, B01, B10, B11 = _permuted_blocks(B, n, k)
    _check_normal(B00)
    q = B11.shape[0]
    Bbar = np.block([[B00, B01], [np.zeros((q, p)), np.eye(q)]])
    Bund = np.block([[np.eye(p), np.zeros((p, q))], [B10, B11]])
    return _unpermute(Bbar, perm), _unpermute(Bund, perm)


def forms_hat(B, n, k):
    """Bhat = Bunder Bbar^{-1}, written blockwise; an involution."""
    perm, p, B00, B01, B10, B11 = _permuted_blocks(B, n, k)
    _check_normal(B00)
    inv = np.linalg.inv(B00)
    H = np.block([[inv, -inv @ B01], [B10 @ inv, B11 - B10 @ inv @ B01]])
    return _unpermute(H, perm)


def _check_accretive(B, tol=0.0):
    herm = 0.5 * (B + B.conj().T)
    kappa = np.linalg.eigvalsh(herm).min()
    if kappa <= tol:
        raise NotAccretive(f"B is not pointwise strictly accretive (min Re eig {kappa:.3e})")
    return float(kappa)


@dataclass
class FormsSymbol:
    xi: np.ndarray
    k: int
    B: np.ndarray
    Dxi_forms: np.ndarray
    T_full: np.ndarray
    Hk_xi_basis: np.ndarray
    TB_xi: np.ndarray
    invariance_residual: float

    @property
    def n(self):
        return len(self.xi)

    def projections(self):
        """Spectral projectors of TB_xi onto Re > 0 and Re < 0 and the eigenvalues."""
        lam, V = np.linalg.eig(self.TB_xi)
        Vi = np.linalg.inv(V)
        return (V * (lam.real > 0)) @ Vi, (V * (lam.real < 0)) @ Vi, lam

    def sign(self):
        Pp, Pm, _ = self.projections()
        return Pp - Pm

    def plus_basis(self):
        """Orthonormal basis (in Lambda^k coordinates) of chi+(T_xi) H^k_xi."""
        Pp, _, lam = self.projections()
        r = int(np.sum(lam.real > 0))
        U, _, _ = np.linalg.svd(self.Hk_xi_basis @ Pp)
        return U[:, :r]


def forms_constraint_maps(xi, k):
    """mu mu_xi and mu* mu_xi* as matrices on degree k (possibly with zero rows)."""
    n = len(xi)
    x = _embed_xi(xi)
    e0 = _e0(n)
    d = comb(n + 1, k)
    if k + 2 <= n + 1:
        up = wedge_matrix(e0, n, k + 1) @ wedge_matrix(x, n, k)
    else:
        up = np.zeros((0, d))
    if k >= 2:
        down = interior_matrix(e0, n, k - 1) @ interior_matrix(x, n, k)
    else:
        down = np.zeros((0, d))
    return up, down


def build_forms_symbol(B, xi, k, rank_tol=1e-10):
    """Forms symbol at frequency xi for a constant matrix B on Lambda^k(R^{1+n})."""
    xi = np.asarray(xi, dtype=float)
    n = len(xi)
    if np.linalg.norm(xi) == 0:
        raise ZeroFrequency("forms symbol needs xi != 0")
    B = np.asarray(B, dtype=complex)
    d = comb(n + 1, k)
    if B.shape != (d, d):
        raise ConfigError(f"B must be {d}x{d} for degree {k} on R^{n + 1}")
    _check_accretive(B)
    Dx = forms_dirac(xi, k)
    Bbar, Bund = forms_split(B, n, k)
    T = np.linalg.solve(Bbar, Dx @ Bund)
    up, down = forms_constraint_maps(xi, k)
    C = np.vstack([up, down @ B])
    if C.shape[0]:
        _, s, Vh = np.linalg.svd(C)
        rank = int(np.sum(s > rank_tol * max(s[0], 1.0)))
        W = Vh[rank:].conj().T
    else:
        W = np.eye(d, dtype=complex)
    expected = 2 * comb(n - 1, k - 1) if k >= 1 else 0
    if W.shape[1] != expected:
        raise DegenerateSymbol(f"H^k_xi has dimension {W.shape[1]}, expected {expected}")
    TW = T @ W
    TB = W.conj().T @ TW
    inv_res = np.linalg.norm(TW - W @ TB) / max(np.linalg.norm(TW), 1e-300)
    return FormsSymbol(xi, k, B, Dx, T, W, TB, float(inv_res))


def dirac_square_residual(xi, k):
    """max |D_xi^2 f - |xi|^2 f| / |f| over f in the range of D_xi."""
    Dx = forms_dirac(xi, k)
    U, s, _ = np.linalg.svd(Dx)
    r = int(np.sum(s > 1e-10 * max(s[0], 1.0))) if s.size else 0
    if r == 0:
        return 0.0
    R = U[:, :r]
    return float(np.linalg.norm(Dx @ Dx @ R - np.dot(xi, xi) * R, 2))


def forms_block_check(fs):
    """For block B: anticommutator of sgn(T_xi) with the normal/tangential reflection on H^k_xi."""
    nm = normal_mask(fs.n, fs.k)
    refl = np.where(nm, -1.0, 1.0)
    W = fs.Hk_xi_basis
    Nh = W.conj().T @ (refl[:, None] * W)
    E = fs.sign()
    scale = max(np.linalg.norm(E, 2), 1e-300)
    refl_res = np.linalg.norm(refl[:, None] * W - W @ Nh)
    return {"anticommutator": float(np.linalg.norm(Nh @ E + E @ Nh, 2) / scale),
            "reflection_invariance": float(refl_res)}


def _check_data_constraint(hat, n, k, which, lattice):
    """Relative size of xi ^ g (closedness) or xi _| g (coclosedness) over all modes."""
    num = 0.0
    for idx, xi in enumerate(lattice.frequencies):
        if not np.any(xi):
            continue
        g = hat[:, idx]
        if which == "tan" and k + 1 <= n:
            num += np.linalg.norm(wedge_matrix(xi.astype(float), n - 1, k) @ g) ** 2
        elif which == "nor" and k >= 2:
            num += np.linalg.norm(interior_matrix(xi.astype(float), n - 1, k - 1) @ g) ** 2
    den = np.linalg.norm(hat) ** 2
    return float(np.sqrt(num / den)) if den > 0 else 0.0


def solve_forms_constant(B, k, which, data, N, t_levels=(), constraint_tol=1e-10):
    """Constant-B boundary problem for k-forms, solved frequency by frequency.

    ``which="tan"`` prescribes the tangential part f_t = g (closed data, one
    component per tangential basis k-vector).  ``which="nor"`` prescribes
    the normal part of Bf (coclosed data, one component per normal basis
    k-vector, written on the k-1 subset that remains after removing 0).
    """
    B = np.asarray(B, dtype=complex)
    n = _infer_n(B.shape[0], k)
    if which not in ("tan", "nor"):
        raise ConfigError(f"forms problem must be 'tan' or 'nor', got {which!r}")
    lat = FrequencyLattice(n, N)
    nm = normal_mask(n, k)
    rows = np.where(~nm)[0] if which == "tan" else np.where(nm)[0]
    data = np.asarray(data, dtype=complex)
    if data.shape != (len(rows),) + lat.shape:
        raise ConfigError(f"data must have shape {(len(rows),) + lat.shape}")
    hat = lat.fft(data).reshape(len(rows), -1)
    if np.max(np.abs(hat[:, 0])) > 1e-12 * max(1.0, np.abs(hat).max()):
        raise ZeroMeanViolation("forms data must have zero mean")
    # data components are indexed by subsets of {1..n}; constraint maps act on R^n
    viol = _check_data_constraint(hat, n, k, which, lat)
    if viol > constraint_tol:
        raise ConstraintViolation(
            f"data violates the {'closedness' if which == 'tan' else 'coclosedness'} "
            f"constraint (relative residual {viol:.3e})")
    d = comb(n + 1, k)
    trace = np.zeros((d, lat.size), dtype=complex)
    fields = {t: np.zeros((d, lat.size), dtype=complex) for t in t_levels}
    cache = {}
    worst, smin_all, smax_all, bres = 1.0, np.inf, 0.0, 0.0
    for idx, xi in enumerate(lat.frequencies):
        if not np.any(xi):
            continue
        r = float(np.linalg.norm(xi))
        key = tuple(np.round(xi / r, 12))
        if key not in cache:
            fs = build_forms_symbol(B, xi / r, k)
            Pp, _, lam = fs.projections()
            Y = fs.plus_basis()
            S = Y[rows] if which == "tan" else (B @ Y)[rows]
            U, s, Vh = np.linalg.svd(S, full_matrices=False)
            cond = s[0] / s[-1] if s[-1] > 0 else np.inf
            if not cond <= WP_COND_LIMIT:
                raise WellPosednessFailure(f"forms boundary map condition {cond:.3e} at xi={xi}", cond)
            TY = Y.conj().T @ fs.T_full @ Y
            cache[key] = (Y, U, s, Vh, TY, cond)
        Y, U, s, Vh, TY, cond = cache[key]
        worst = max(worst, cond)
        smin_all, smax_all = min(smin_all, s[-1]), max(smax_all, s[0])
        g = hat[:, idx]
        c = Vh.conj().T @ ((U.conj().T @ g) / s)
        gn = np.linalg.norm(g)
        if gn > 0:
            bres = max(bres, np.linalg.norm(U @ (s * (Vh @ c)) - g) / gn)
        trace[:, idx] = Y @ c
        for t in t_levels:
            fields[t][:, idx] = Y @ (sla.expm(-t * r * TY) @ c)
    shape = (d,) + lat.shape
    to_grid = lambda v: lat.ifft(v.reshape(shape))
    cond = smax_all / smin_all if smin_all > 0 else np.inf
    return SolveReport(
        which, to_grid(trace), float(cond), float(smin_all), float(smax_all), tuple(t_levels),
        {t: to_grid(v) for t, v in fields.items()}, {},
        {"boundary": float(bres), "constraint": float(viol), "worst_mode_cond": float(worst),
         "involution": float(np.linalg.norm(forms_hat(forms_hat(B, n, k), n, k) - B)
                             / np.linalg.norm(B))},
        None, {"engine": "forms", "n": n, "k": k, "N": N})


def _infer_n(d, k):
    for n in range(0, 16):
        if comb(n + 1, k) == d:
            return n
    raise ConfigError(f"no dimension n with C(n+1, {k}) = {d}")


def tangential_data_masks(n, k):
    """Subsets of {1..n} (as masks on R^n) labelling tangential data components."""
    return [mk >> 1 for mk in basis_masks(n, k) if not mk & 1]


def normal_data_masks(n, k):
    """Subsets of {1..n} (as masks on R^n) for normal components e0 ^ e_S."""
    return [mk >> 1 for mk in basis_masks(n, k) if mk & 1]
