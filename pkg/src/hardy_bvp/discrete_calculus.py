"""Dense Fourier-side discretisation of the generator for variable coefficients.

Vectors hold unitary Fourier coefficients of the 2m components (n = 1),
component-major: index ``c*N + k`` with k in FFT order.  Pointwise
multiplication becomes a block-circulant matrix, so the discrete generator
keeps the exact algebra of the continuous one: D is Hermitian, T_A is
similar to D Ahat, and the zero modes split off as a finite null space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.special import gamma, jv

from . import _linalg
from .coefficients import CoefficientField, multiplication_operator, split_triangular, hat_transform
from .errors import ConfigError, ImaginaryAxisEigenvalue, UndefinedOnSpectrum
from .lattice import FrequencyLattice
from .report import NormBundle

ANALYTIC_COND_LIMIT = 1e4


@dataclass
class DiscreteOperator:
    matrix: np.ndarray
    lattice: FrequencyLattice
    m: int
    label: str = ""

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other


def _check_1d(lattice):
    if lattice.n != 1:
        raise ConfigError("the discrete calculus is implemented for n = 1")


def assemble_D(N, m):
    """D = [[0, d/dx], [-d/dx, 0]] on 2m components; Hermitian, kernel = constants."""
    lat = FrequencyLattice(1, N)
    ik = np.diag(1j * lat.axis_modes)
    blk = np.kron(np.eye(m), ik)
    Z = np.zeros_like(blk)
    return DiscreteOperator(np.block([[Z, blk], [-blk, Z]]), lat, m, "D")


@dataclass
class GeneratorOperator(DiscreteOperator):
    """T_A = inv(Abar) D Aunder together with the multiplication operators."""

    A: CoefficientField = None
    D: np.ndarray = None
    Abar: np.ndarray = None
    Abar_inv: np.ndarray = None
    Aund: np.ndarray = None
    Ahat: np.ndarray = None
    Ahat_inv: np.ndarray = None
    Amult: np.ndarray = None

    def similarity_residual(self):
        S = self.Abar_inv @ (self.D @ self.Ahat) @ self.Abar
        return float(np.linalg.norm(self.matrix - S, 2) / np.linalg.norm(self.matrix, 2))

    def to_coeffs(self, values):
        """Grid samples of shape (2m, N) to a coefficient vector."""
        return self.lattice.fft(np.asarray(values, dtype=complex)).reshape(-1)

    def to_grid(self, vec):
        return self.lattice.ifft(np.asarray(vec).reshape(2 * self.m, self.lattice.N))

    @cached_property
    def zero_index(self):
        N = self.lattice.N
        return np.arange(2 * self.m) * N

    @cached_property
    def range_index(self):
        return np.setdiff1d(np.arange(2 * self.m * self.lattice.N), self.zero_index)


def assemble_TA(A, N=None):
    """Assemble the discrete generator for coefficients on an N-point grid (n = 1)."""
    if A.kind == "constant":
        if N is None:
            raise ConfigError("grid size N is required for constant coefficients")
        A = A.on_grid(N)
    lat = A.lattice()
    _check_1d(lat)
    m = A.m
    Abar, Aund = split_triangular(A)
    Ah = hat_transform(A)
    mult = lambda F: multiplication_operator(F.samples, lat)
    D = assemble_D(lat.N, m).matrix
    Mbar = mult(Abar)
    Mbar_inv = multiplication_operator(np.linalg.inv(Abar.samples), lat)
    Mund = mult(Aund)
    Mhat = mult(Ah)
    Mhat_inv = multiplication_operator(np.linalg.inv(Ah.samples), lat)
    T = Mbar_inv @ (D @ Mund)
    return GeneratorOperator(T, lat, m, "T_A", A=A, D=D, Abar=Mbar, Abar_inv=Mbar_inv,
                             Aund=Mund, Ahat=Mhat, Ahat_inv=Mhat_inv, Amult=mult(A))


# --- functional calculus ----------------------------------------------------


class SpectralFunction:
    """Scalar function together with its action on triangular Schur blocks.

    ``plus`` and ``minus`` map an upper-triangular block whose spectrum lies
    in the right (left) half plane to the matrix function on that block.
    Functions without block forms fall back to the eigen-expansion.
    """

    def __init__(self, scalar, plus=None, minus=None, name=""):
        self.scalar = scalar
        self.plus = plus
        self.minus = minus
        self.name = name

    def __call__(self, z):
        return self.scalar(z)


def _zero(S):
    return np.zeros_like(S)


def _eye(S):
    return np.eye(S.shape[0], dtype=complex)


def _psi_block(t):
    def f(S):
        tS = t * S
        return np.linalg.solve(_eye(S) + tS @ tS, tS)
    return f


chi_plus = SpectralFunction(lambda z: (np.real(z) > 0).astype(complex), _eye, _zero, "chi_plus")
chi_minus = SpectralFunction(lambda z: (np.real(z) < 0).astype(complex), _zero, _eye, "chi_minus")
sgn = SpectralFunction(lambda z: np.sign(np.real(z)).astype(complex), _eye, lambda S: -_eye(S), "sgn")
absval = SpectralFunction(lambda z: z * np.sign(np.real(z)), lambda S: S.copy(), lambda S: -S, "abs")


def psi(z):
    return z / (1 + z * z)


def psi_scaled(t):
    """z -> psi(t z)."""
    blk = _psi_block(t)
    return SpectralFunction(lambda z: psi(t * z), blk, blk, f"psi({t})")


def semigroup(t):
    """z -> exp(-t z) chi_plus(z), the Hardy semigroup at time t."""
    return SpectralFunction(lambda z: np.exp(-t * z) * (np.real(z) > 0),
                            lambda S: sla.expm(-t * S), _zero, f"semigroup({t})")


def exp_abs(t):
    """z -> exp(-t |z|) on both half planes."""
    return SpectralFunction(lambda z: np.exp(-t * z * np.sign(np.real(z))),
                            lambda S: sla.expm(-t * S), lambda S: sla.expm(t * S), f"exp_abs({t})")


@dataclass
class HardyFrame:
    """Spectral data of T_A split into Re > 0, Re < 0 and the null part.

    The nonzero spectrum comes from the compression M of D Ahat to the
    nonconstant modes, which is invertible.  M is brought to ordered Schur
    form Z S Z* (right half plane first) and decoupled by a Sylvester
    solve, so projectors never go through eigenvectors.  The null part is
    the exact projection onto inv(Aunder) N(D) along the range.
    """

    op: GeneratorOperator
    S: np.ndarray
    Z: np.ndarray
    k: int
    X: np.ndarray
    W_null: np.ndarray
    G_null: np.ndarray
    omega_observed: float
    _proj: dict = field(default_factory=dict, repr=False)

    @property
    def lam(self):
        return np.diag(self.S)

    @cached_property
    def _eig(self):
        lam, V = np.linalg.eig(self.Z @ self.S @ self.Z.conj().T)
        return lam, V, np.linalg.inv(V)

    @property
    def eig_cond(self):
        return float(np.linalg.cond(self._eig[1]))

    def _to_range(self, g):
        z = self.op.zero_index
        return g - self.W_null @ np.linalg.solve(self.G_null, g[z])

    def schur_coords(self, f):
        g = self._to_range(self.op.Abar @ np.asarray(f, dtype=complex))
        return self.Z.conj().T @ g[self.op.range_index]

    def from_schur(self, y):
        g = np.zeros((self.op.shape[0],) + np.shape(y)[1:], dtype=complex)
        g[self.op.range_index] = self.Z @ y
        return self.op.Abar_inv @ g

    def split(self, y):
        """Schur coordinates -> (plus coordinates, minus coordinates)."""
        k = self.k
        return y[:k] + self.X @ y[k:], y[k:]

    def _block_matrix(self, b):
        k = self.k
        S11, S22 = self.S[:k, :k], self.S[k:, k:]
        bp, bm = b.plus(S11), b.minus(S22)
        top = np.hstack([bp, bp @ self.X - self.X @ bm])
        bot = np.hstack([np.zeros((S22.shape[0], k), dtype=complex), bm])
        return np.vstack([top, bot])

    def _values(self, b):
        with np.errstate(all="ignore"):
            vals = np.asarray(b(self._eig[0]), dtype=complex)
        if not np.all(np.isfinite(vals)):
            raise UndefinedOnSpectrum("function is not finite on the spectrum")
        return vals

    def _inner(self, b):
        """b(M) on the nonconstant modes."""
        if isinstance(b, SpectralFunction) and b.plus is not None:
            return self.Z @ self._block_matrix(b) @ self.Z.conj().T
        lam, V, Vinv = self._eig
        return (V * self._values(b)) @ Vinv

    def _range_projector(self):
        d = self.op.shape[0]
        return np.eye(d, dtype=complex) - self.W_null @ np.linalg.solve(
            self.G_null, np.eye(d, dtype=complex)[self.op.zero_index])

    def matrix(self, b):
        """Dense b(T_A), with b(0) = 0 on the null part."""
        op = self.op
        d = op.shape[0]
        R = op.range_index
        B = np.zeros((d, d), dtype=complex)
        B[np.ix_(R, R)] = self._inner(b)
        return op.Abar_inv @ (B @ self._range_projector()) @ op.Abar

    def apply(self, b, f):
        return self.matrix(b) @ np.asarray(f, dtype=complex)

    def projector(self, which):
        if which not in self._proj:
            if which == "null":
                Pn = np.eye(self.op.shape[0]) - self._range_projector()
                self._proj[which] = self.op.Abar_inv @ Pn @ self.op.Abar
            else:
                self._proj[which] = self.matrix(chi_plus if which == "plus" else chi_minus)
        return self._proj[which]

    @property
    def Eplus(self):
        return self.projector("plus")

    @property
    def Eminus(self):
        return self.projector("minus")

    @property
    def Enull(self):
        return self.projector("null")

    def plus_basis(self):
        """Orthonormal basis of the range of Eplus."""
        y = np.zeros((self.Z.shape[0], self.k), dtype=complex)
        y[: self.k] = np.eye(self.k)
        Q, _ = np.linalg.qr(self.from_schur(y))
        return Q

    def plus_part(self, f):
        """Plus coordinates p such that Eplus f = from_schur([p, 0])."""
        return self.split(self.schur_coords(f))[0]

    def evolve_plus(self, p, t):
        y = np.zeros(self.Z.shape[0], dtype=complex)
        y[: self.k] = sla.expm(-t * self.S[: self.k, : self.k]) @ p
        return self.from_schur(y)

    def null_vectors(self):
        """Basis of N(T_A) = inv(Aunder) N(D): one column per constant mode."""
        d = self.op.shape[0]
        nz = len(self.op.zero_index)
        Zc = np.zeros((d, nz), dtype=complex)
        Zc[self.op.zero_index, np.arange(nz)] = 1.0
        return np.linalg.solve(self.op.Aund, Zc)


def hardy_frame(op, rel_tol=1e-10):
    """Spectral splitting of a discrete generator.

    Raises ImaginaryAxisEigenvalue when a nonzero eigenvalue has
    |Re| < rel_tol * ||T_A||.
    """
    R, z = op.range_index, op.zero_index
    M = (op.D @ op.Ahat)[np.ix_(R, R)]
    S, Zs, k = sla.schur(M, output="complex", sort="rhp")
    lam = np.diag(S)
    scale = np.linalg.norm(op.matrix, 2)
    gap = np.min(np.abs(lam.real))
    if gap < rel_tol * scale:
        raise ImaginaryAxisEigenvalue(f"eigenvalue with |Re| = {gap:.3e} on the imaginary axis")
    X = sla.solve_sylvester(S[:k, :k], -S[k:, k:], S[:k, k:])
    W_null = op.Ahat_inv[:, z]
    th = np.abs(np.angle(lam))
    omega = float(np.max(np.minimum(th, np.pi - th)))
    return HardyFrame(op, S, Zs, k, X, W_null, W_null[z], omega)


def functional_calculus(frame, b):
    """Dense b(T_A).  ``b`` is a SpectralFunction or a vectorised callable."""
    return frame.matrix(b)


def resolvent_bound_probe(op, lambdas, omega):
    """max over samples of dist(lambda, S_omega) * ||(lambda - T_A)^-1||."""
    T = op.matrix
    eye = np.eye(T.shape[0])
    vals = []
    for z in np.atleast_1d(lambdas):
        smin = np.linalg.svd(z * eye - T, compute_uv=False)[-1]
        vals.append(float(_linalg.sector_distance(z, omega) / smin))
    return max(vals), vals


def semigroup_evolve(frame, f, t_levels):
    """F_t = exp(-t |T_A|) Eplus f at each t (coefficient vectors)."""
    p = frame.plus_part(f)
    return [frame.evolve_plus(p, t) for t in t_levels]


def default_t_grid(lattice, count=200):
    return np.geomspace(1.0 / (2 * lattice.N), 8.0 / lattice.xi_min, count)


def eigen_expansion(frame, f, part="all"):
    """(eigenvalues, eigenvectors as full vectors, coefficients) of the range part of f."""
    y = frame.schur_coords(f)
    k = frame.k
    if part == "plus":
        S, y = frame.S[:k, :k], frame.split(y)[0]
        emb = np.zeros((frame.Z.shape[0], k), dtype=complex)
        emb[:k] = np.eye(k)
    else:
        S = frame.S
        emb = np.eye(frame.Z.shape[0], dtype=complex)
    lam, Vs = np.linalg.eig(S)
    coef = np.linalg.solve(Vs, y)
    vecs = frame.from_schur(emb @ Vs)
    return lam, vecs, coef, np.linalg.cond(Vs)


def log_t_grid(lam, step=0.05, tail=1e-7):
    """Uniform grid in log t wide enough that psi-type integrands have decayed."""
    a = np.abs(lam)
    lo, hi = np.log(tail / a.max()), np.log(1.0 / (tail * a.min()))
    return np.exp(np.arange(lo, hi + step, step))


def quadratic_functional(frame, f, method="auto", t_grid=None):
    """int_0^inf ||psi(t T_A) f||^2 dt/t with psi(z) = z/(1+z^2).

    Evaluated in closed form from the eigen-expansion (cross terms
    included) when the eigenvector matrix is well conditioned, otherwise by
    trapezoidal quadrature in log t using triangular Schur solves.  ``f``
    may hold several vectors as columns.  Norms are those of the
    coefficient vectors.
    """
    f = np.asarray(f, dtype=complex)
    single = f.ndim == 1
    F = f[:, None] if single else f
    if method == "auto":
        lam_s, Vs = np.linalg.eig(frame.S)
        method = "analytic" if np.linalg.cond(Vs) < ANALYTIC_COND_LIMIT else "quadrature"
    if method == "analytic":
        out = []
        for col in F.T:
            lam, vecs, coef, _ = eigen_expansion(frame, col)
            G = vecs.conj().T @ vecs
            I = _linalg.cross_integral_psi(lam, lam)
            out.append(float(np.real(coef.conj() @ (G * I) @ coef)))
        out = np.array(out)
    else:
        if t_grid is None:
            t_grid = log_t_grid(frame.lam)
        Y = np.stack([frame.schur_coords(col) for col in F.T], axis=1)
        S = frame.S
        eye = np.eye(S.shape[0])
        S2 = S @ S
        SY = S @ Y
        vals = np.empty((len(t_grid), F.shape[1]))
        for i, t in enumerate(t_grid):
            W = sla.solve_triangular(eye + t * t * S2, t * SY)
            vals[i] = np.linalg.norm(frame.from_schur(W), axis=0) ** 2
        out = np.trapezoid(vals, np.log(t_grid), axis=0)
    return float(out[0]) if single else out


def ball_multiplier(lattice, r):
    """Fourier multiplier of convolution with the indicator of a ball of radius r."""
    n = lattice.n
    k = np.linalg.norm(lattice.frequencies, axis=1).reshape(lattice.shape)
    out = np.empty_like(k)
    z = k > 0
    out[z] = (2 * np.pi * r / k[z]) ** (n / 2) * jv(n / 2, k[z] * r)
    out[~z] = np.pi ** (n / 2) * r**n / gamma(n / 2 + 1)
    return out


def ntmax_norm(evaluate, lattice, t_grid, c0=0.5, c1=1.0, nodes=6):
    """L2 norm of the modified non-tangential maximal function.

    ``evaluate(s)`` returns grid samples (components, *grid) of F_s.  The
    window at (t, x) is [(1-c0)t, (1+c0)t] x B(x, c1 t); the ball radius is
    capped at half the period.
    """
    n = lattice.n
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    best = np.zeros(lattice.shape)
    for t in t_grid:
        a, b = (1 - c0) * t, (1 + c0) * t
        s_nodes = 0.5 * (b - a) * xg + 0.5 * (a + b)
        rho = np.zeros(lattice.shape)
        for s, w in zip(s_nodes, wg):
            rho += 0.5 * (b - a) * w * np.sum(np.abs(evaluate(s)) ** 2, axis=0)
        r = min(c1 * t, np.pi)
        axes = tuple(range(n))
        win = np.real(np.fft.ifftn(np.fft.fftn(rho, axes=axes) * ball_multiplier(lattice, r), axes=axes))
        val = t ** (-(1 + n) / 2) * np.sqrt(np.maximum(win, 0.0))
        best = np.maximum(best, val)
    return float(np.sqrt(lattice.cell_volume * np.sum(best**2)))


def _plus_norms(lp, B, cp, ts):
    G = B.conj().T @ B
    E = np.exp(-np.outer(ts, lp)) * cp[None, :]
    sup2 = np.real(np.einsum("ti,ij,tj->t", E.conj(), G, E))
    sq2 = float(np.real(cp.conj() @ (G * _linalg.cross_integral_tdt(lp, lp)) @ cp))
    return sup2, sq2


def norm_bundle(frame, f, t_grid=None, c0=0.5, c1=1.0, with_ntmax=True):
    """Trace, sup, square-function and non-tangential norms of exp(-t|T|) Eplus f.

    All values are in L2(torus) units.
    """
    op = frame.op
    lat = op.lattice
    scale = np.sqrt(lat.cell_volume)
    if t_grid is None:
        t_grid = default_t_grid(lat)
    f = np.asarray(f, dtype=complex)
    lp, B, cp, cond = eigen_expansion(frame, f, "plus")
    p = frame.plus_part(f)
    trace = np.linalg.norm(frame.evolve_plus(p, 0.0))
    ts = np.concatenate([[0.0], t_grid])
    if cond < ANALYTIC_COND_LIMIT:
        sup2, sq2 = _plus_norms(lp, B, cp, ts)
    else:
        sup2 = np.array([np.linalg.norm(frame.evolve_plus(p, t)) ** 2 for t in ts])
        S11 = frame.S[: frame.k, : frame.k]
        tq = np.geomspace(1e-5 / np.max(np.abs(lp)), 60 / np.min(lp.real), 1500)
        vals = []
        for t in tq:
            y = np.zeros(frame.Z.shape[0], dtype=complex)
            y[: frame.k] = t * S11 @ (sla.expm(-t * S11) @ p)
            vals.append(np.linalg.norm(frame.from_schur(y)) ** 2)
        sq2 = float(np.trapezoid(vals, np.log(tq)))
    nt = None
    if with_ntmax:
        def evaluate(s):
            return op.to_grid(B @ (np.exp(-s * lp) * cp))
        nt = ntmax_norm(evaluate, lat, t_grid, c0, c1)
    return NormBundle(trace_norm=float(scale * trace), sup_norm=float(scale * np.sqrt(sup2.max())),
                      square_function=float(scale * np.sqrt(max(sq2, 0.0))), ntmax=nt,
                      input_norm=float(scale * np.linalg.norm(f)))


def lipschitz_probe(A1, A2, f_values, norm="sup", N=None, t_grid=None):
    """Ratio ||F_{A2} - F_{A1}||_X / ||A2 - A1||_inf for one boundary trace.

    ``f_values`` are grid samples (2m, N) of the common trace f; each
    solution is exp(-t|T_A|) Eplus_A f.  ``norm`` is one of "trace", "sup",
    "square", "ntmax".  Returns (ratio, identical) where identical flags
    A2 == A1 (ratio 0).
    """
    N = N or A1.N or A2.N
    B1, B2 = A1.on_grid(N), A2.on_grid(N)
    diff = np.max(np.linalg.norm(B2.samples - B1.samples, ord=2, axis=(1, 2)))
    if diff == 0:
        return 0.0, True
    frames = [hardy_frame(assemble_TA(B)) for B in (B1, B2)]
    op = frames[0].op
    lat = op.lattice
    f = op.to_coeffs(f_values)
    if t_grid is None:
        t_grid = default_t_grid(lat)
    parts = [eigen_expansion(fr, f, "plus")[:3] for fr in frames]

    def delta(t, weight=lambda z, t: np.exp(-t * z)):
        (l1, V1, c1_), (l2, V2, c2_) = parts
        return V2 @ (weight(l2, t) * c2_) - V1 @ (weight(l1, t) * c1_)

    scale = np.sqrt(lat.cell_volume)
    if norm == "trace":
        val = np.linalg.norm(delta(0.0))
    elif norm == "sup":
        val = max(np.linalg.norm(delta(t)) for t in np.concatenate([[0.0], t_grid]))
    elif norm == "square":
        lmax = max(np.max(np.abs(p[0])) for p in parts)
        lmin = min(np.min(p[0].real) for p in parts)
        tq = np.geomspace(1e-5 / lmax, 60 / lmin, 3000)
        w = lambda z, t: t * z * np.exp(-t * z)
        vals = [np.linalg.norm(delta(t, w)) ** 2 for t in tq]
        val = np.sqrt(np.trapezoid(vals, np.log(tq)))
    elif norm == "ntmax":
        return ntmax_norm(lambda s: op.to_grid(delta(s)), lat, t_grid) / diff, False
    else:
        raise ConfigError(f"unknown norm {norm!r}")
    return float(scale * val / diff), False
