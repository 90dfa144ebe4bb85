"""Boundary value solves on the discrete Hardy frame and independent checks.

The main path restricts a boundary map (f -> f_t, (Af)_0 or f_0) to the
range of Eplus and solves by least squares.  The double layer path reaches
the same traces through a Neumann series, and ``variational_oracle`` solves
the weak form on a truncated strip without any spectral machinery.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import discrete_calculus as dc
from .coefficients import CoefficientField, classify
from .errors import (CoercivityFailure, ConfigError, NotBlock, NotHermitean, SeriesDiverges,
                     WellPosednessFailure, ZeroMeanViolation)
from .lattice import FrequencyLattice
from .report import SolveReport
from .symbol_solver import WP_COND_LIMIT, WHICH, solve_constant

NEUMANN_MARGIN = 1e-6
# above this norm the double layer equation is solved densely
SERIES_NORM_LIMIT = 0.9


@dataclass
class BVPSpec:
    """A boundary value problem on the periodic half-space.

    ``data`` holds grid samples of shape (m, *grid): phi for "neu" and
    "neuperp", u for "dir", and u (``data_kind="potential"``) or its
    gradient (``data_kind="gradient"``) for "reg".
    """

    A: CoefficientField
    which: str
    data: np.ndarray
    N: int
    t_levels: tuple = (0.0, 0.5, 1.0, 2.0)
    data_kind: str = "potential"
    engine: str = "auto"
    compute_norms: bool = True

    def __post_init__(self):
        if self.which not in WHICH:
            raise ConfigError(f"unknown boundary condition {self.which!r}")
        self.data = np.asarray(self.data, dtype=complex)


def _zero_mean(values, what):
    mean = np.abs(values.reshape(values.shape[0], -1).mean(axis=1))
    if np.any(mean > 1e-12 * max(1.0, np.sqrt(np.mean(np.abs(values) ** 2)))):
        raise ZeroMeanViolation(f"{what} data has nonzero mean {mean.max():.3e}")


def _rows(op, comps, nonzero_only):
    N = op.lattice.N
    ks = np.arange(1, N) if nonzero_only else np.arange(N)
    return np.concatenate([c * N + ks for c in comps])


def restricted_map(frame, which):
    """Matrix of the boundary map on an orthonormal trial basis.

    Returns (SY, rows, Y) where Y spans the trial space (range of Eplus,
    plus the constant-normal null vectors for "dir"/"neuperp") and rows
    index the data coefficients.
    """
    op = frame.op
    m = op.m
    Y = frame.plus_basis()
    normal, tang = range(m), range(m, 2 * m)
    if which in ("dir", "neuperp"):
        Zc = np.zeros((op.shape[0], m), dtype=complex)
        Zc[op.zero_index[:m], np.arange(m)] = 1.0
        # stationary solutions with constant normal part and no tangential constant
        null = np.linalg.solve(op.Aund, Zc)
        Y, _ = np.linalg.qr(np.hstack([Y, null]))
        rows = _rows(op, normal, False)
        S = Y
    elif which == "neu":
        rows = _rows(op, normal, True)
        S = op.Amult @ Y
    else:
        rows = _rows(op, tang, True)
        S = Y
    return S[rows], rows, Y


def _hardy_singular_values(frame, which, SY, rows):
    """Singular values of the boundary map on the Hardy space alone.

    For "dir"/"neuperp" the appended null vectors are left out, so the
    condition number measures the same map as in the constant-coefficient
    solver.
    """
    if which in ("dir", "neuperp"):
        SY = frame.plus_basis()[rows]
    return np.linalg.svd(SY, compute_uv=False)


def restricted_map_condition(frame, which):
    SY, rows, _ = restricted_map(frame, which)
    s = _hardy_singular_values(frame, which, SY, rows)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def _data_vector(op, which, data, data_kind):
    m, N = op.m, op.lattice.N
    hat = op.lattice.fft(data).reshape(-1)
    if which in ("neu", "neuperp"):
        return -hat
    if which == "dir":
        return hat
    k = np.tile(op.lattice.axis_modes, m)
    return 1j * k * hat if data_kind == "potential" else hat


def solve_bvp(spec):
    A = spec.A
    if spec.engine == "symbol" or (spec.engine == "auto" and A.kind == "constant"):
        lat = FrequencyLattice(A.n, spec.N)
        return solve_constant(A, lat, spec.which, spec.data, spec.t_levels, spec.data_kind,
                              spec.compute_norms)
    op = dc.assemble_TA(A.on_grid(spec.N))
    frame = dc.hardy_frame(op)
    return solve_on_frame(frame, spec.which, spec.data, spec.t_levels, spec.data_kind,
                          spec.compute_norms)


def solve_on_frame(frame, which, data, t_levels=(), data_kind="potential", compute_norms=True):
    """Restricted least-squares solve on an assembled discrete frame (n = 1)."""
    op = frame.op
    m, N = op.m, op.lattice.N
    data = np.asarray(data, dtype=complex)
    if data.shape != (m, N):
        raise ConfigError(f"data must have shape {(m, N)}, got {data.shape}")
    if which != "reg" or data_kind == "gradient":
        _zero_mean(data, which)
    SY, rows, Y = restricted_map(frame, which)
    g_all = _data_vector(op, which, data, data_kind)
    comp_rows = rows - (m * N if which == "reg" else 0)
    g = g_all[comp_rows]
    U_, s_full, Vh = np.linalg.svd(SY, full_matrices=False)
    s = _hardy_singular_values(frame, which, SY, rows) if which in ("dir", "neuperp") else s_full
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    if not cond <= WP_COND_LIMIT or s_full[-1] == 0:
        raise WellPosednessFailure(f"restricted map condition number {cond:.3e}", cond)
    c = Vh.conj().T @ ((U_.conj().T @ g) / s_full)
    f = Y @ c
    gnorm = np.linalg.norm(g)
    bres = np.linalg.norm(SY @ c - g) / gnorm if gnorm > 0 else 0.0

    p = frame.plus_part(f)
    k = frame.k
    S11 = frame.S[:k, :k]
    f_plus = frame.evolve_plus(p, 0.0)
    f_null = f - f_plus
    fnorm = max(np.linalg.norm(f), 1e-300)
    fields, pots = {}, {}
    pde = 0.0
    for t in t_levels:
        E = sla.expm(-t * S11) @ p
        Ft = _embed(frame, E) + f_null
        dF = _embed(frame, -S11 @ E)
        pde = max(pde, np.linalg.norm(dF + op.matrix @ Ft) / fnorm)
        fields[t] = op.to_grid(Ft)
        if which == "dir":
            pots[t] = fields[t][:m]
        else:
            pots[t] = -op.to_grid(_embed(frame, np.linalg.solve(S11, E)))[:m]
    residuals = {"boundary": float(bres), "pde": float(pde),
                 "similarity": op.similarity_residual()}
    if classify(op.A).hermitean:
        residuals["rellich"] = float(rellich_form(op, f_plus) / max(np.linalg.norm(f_plus) ** 2, 1e-300))
    norms = dc.norm_bundle(frame, f) if compute_norms else None
    meta = {"engine": "discrete", "n": 1, "m": m, "N": N,
            "omega_observed": frame.omega_observed,
            "classification": classify(op.A).to_dict()}
    return SolveReport(which, op.to_grid(f), float(cond), float(s[-1]), float(s[0]),
                       tuple(t_levels), fields, pots, residuals, norms, meta)


def _embed(frame, p):
    y = np.zeros(frame.Z.shape[0], dtype=complex)
    y[: frame.k] = p
    return frame.from_schur(y)


# --- double layer -----------------------------------------------------------


@dataclass
class DoubleLayer:
    """K = N_s sgn(.) N_s restricted to one boundary component space.

    ``sign`` is the sign operator (dense, coefficient space) whose
    compression is K, ``index`` the coordinates of the boundary space and
    ``lift`` maps the reconstructed conormal-type trace back to f.
    """

    which: str
    K: np.ndarray
    sign: np.ndarray
    index: np.ndarray
    lift: np.ndarray

    def reconstruct(self, h):
        full = np.zeros(self.sign.shape[0], dtype=complex)
        full[self.index] = h
        return self.lift @ (full + self.sign @ full)


def double_layer(frame, which):
    """Double layer operator for "neu", "dir" or "reg".

    neu: K = N- sgn(D Ahat) N- on zero-mean normal fields, f = inv(Abar) (I + sgn) h.
    dir: K = N- sgn(Ahat D) N- on all normal fields, f = inv(Aunder) (I + sgn) h.
    reg: K = N+ sgn(D Ahat) N+ on zero-mean tangential fields.
    """
    op = frame.op
    m = op.m
    sgnT = frame.matrix(dc.sgn)
    if which in ("neu", "reg"):
        sign = op.Abar @ sgnT @ op.Abar_inv
        lift = op.Abar_inv
    elif which == "dir":
        sign = op.Aund @ sgnT @ np.linalg.inv(op.Aund)
        lift = np.linalg.inv(op.Aund)
    else:
        raise ConfigError(f"no double layer for {which!r}")
    comps = range(m) if which in ("neu", "dir") else range(m, 2 * m)
    index = _rows(op, comps, which != "dir")
    return DoubleLayer(which, sign[np.ix_(index, index)], sign, index, lift)


def operator_norm_estimate(K, iters=200, tol=1e-12):
    """Spectral norm by power iteration on K* K from a fixed start vector."""
    rng = np.random.default_rng(12345)
    v = rng.normal(size=K.shape[1]) + 1j * rng.normal(size=K.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = K.conj().T @ (K @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = np.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(est)


def neumann_series_solve(K, g, tol=1e-13, norm=None):
    """Solve (I + K) h = g by the Neumann series.

    Raises SeriesDiverges when the estimated ||K|| >= 1 - 1e-6.  Returns
    (h, iterations, norm estimate).
    """
    nK = operator_norm_estimate(K) if norm is None else norm
    if nK >= 1 - NEUMANN_MARGIN:
        raise SeriesDiverges(f"double layer norm {nK:.6f} is not below 1")
    gnorm = np.linalg.norm(g)
    if gnorm == 0:
        return np.zeros_like(g), 0, nK
    bound = int(np.ceil(np.log(tol) / np.log(max(nK, 1e-16)))) + 5 if nK > 0 else 1
    h = g.copy()
    term = g.copy()
    it = 0
    for it in range(1, bound + 1):
        term = -(K @ term)
        h = h + term
        if np.linalg.norm(term) <= tol * gnorm:
            break
    return h, it, nK


def solve_double_layer(frame, which, data, data_kind="potential"):
    """Trace f from the double layer equation; returns (f, iterations, ||K||).

    The Neumann series is used when ||K|| < 0.9; otherwise (I + K) h = g
    is solved directly and the iteration count is 0.
    """
    op = frame.op
    data = np.asarray(data, dtype=complex)
    if which != "reg" or data_kind == "gradient":
        _zero_mean(data, which)
    dl = double_layer(frame, which)
    g_all = _data_vector(op, which, data, data_kind)
    shift = op.m * op.lattice.N if which == "reg" else 0
    g = g_all[dl.index - shift]
    nK = operator_norm_estimate(dl.K)
    if nK < SERIES_NORM_LIMIT:
        h, it, nK = neumann_series_solve(dl.K, g, norm=nK)
    else:
        h, it = np.linalg.solve(np.eye(len(g)) + dl.K, g), 0
    f = dl.reconstruct(h)
    if which == "dir":
        # drop the tangential constant picked up by the null projection of sgn(Ahat D)
        c = (op.Aund @ (frame.Enull @ f))[op.zero_index]
        c[: op.m] = 0.0
        corr = np.zeros_like(f)
        corr[op.zero_index] = c
        f = f - np.linalg.solve(op.Aund, corr)
    return f, it, nK


# --- structural checks --------------------------------------------------------


def rellich_form(op, f):
    """|(f0, (Af)0) - ((Af)_t, f_t)| on coefficient vectors."""
    mN = op.m * op.lattice.N
    Af = op.Amult @ f
    lhs = np.vdot(Af[:mN], f[:mN])
    rhs = np.vdot(f[mN:], Af[mN:])
    return float(abs(lhs - rhs))


def rellich_residual(frame):
    """Rellich residuals over an orthonormal basis of the Hardy range.

    Also reports the measured coercivity constant max ||f|| / ||(Af)_0||.
    """
    op = frame.op
    if not classify(op.A).hermitean:
        raise NotHermitean("Rellich identity requires Hermitian coefficients")
    Y = frame.plus_basis()
    res = [rellich_form(op, y) for y in Y.T]
    SY, _, _ = restricted_map(frame, "neu")
    smin = np.linalg.svd(SY, compute_uv=False)[-1]
    return {"max_residual": float(max(res)), "coercivity_constant": float(1.0 / smin),
            "basis_size": int(Y.shape[1])}


def _reflection(op):
    mN = op.m * op.lattice.N
    return np.concatenate([-np.ones(mN), np.ones(mN)])


def block_structure_check(frame):
    """Checks for block coefficients: sgn(T_A) anticommutes with the reflection.

    Reports the diagonal-block norm, the anticommutator, the residual of the
    explicit inverse 2 Eplus for tangential data, and the ratio of extreme
    values of ||f_0|| / ||f_t|| over the Hardy range.
    """
    op = frame.op
    if not classify(op.A).block:
        raise NotBlock("block structure check requires block coefficients")
    m, N = op.m, op.lattice.N
    mN = m * N
    E = frame.matrix(dc.sgn)
    nrm = np.linalg.norm(E, 2)
    diag = max(np.linalg.norm(E[:mN, :mN], 2), np.linalg.norm(E[mN:, mN:], 2)) / nrm
    Nr = _reflection(op)
    anti = np.linalg.norm(Nr[:, None] * E + E * Nr[None, :], 2) / nrm
    tang = _rows(op, range(m, 2 * m), True)
    Ep = frame.Eplus
    inv_res = np.linalg.norm(2 * Ep[np.ix_(tang, tang)] - np.eye(len(tang)), 2)
    Y = frame.plus_basis()
    P0, P1 = Y[:mN], Y[mN:]
    ev = sla.eigh(P0.conj().T @ P0, P1.conj().T @ P1, eigvals_only=True)
    ratios = np.sqrt(np.maximum(ev, 0.0))
    return {"diagonal_blocks": float(diag), "anticommutator": float(anti),
            "inverse_residual": float(inv_res), "kato_min": float(ratios.min()),
            "kato_max": float(ratios.max()), "kato_ratio": float(ratios.max() / ratios.min())}


# --- variational oracle ---------------------------------------------------------


@dataclass
class VariationalResult:
    t: np.ndarray
    U: np.ndarray
    energy_residual: float
    top: str
    meta: dict = field(default_factory=dict)


def _form_blocks(A, N):
    """x-operators of the form: G00, G01 = A0t d, G10 = d* At0, G11 = d* Att d."""
    A = A.on_grid(N)
    if A.n != 1:
        raise ConfigError("the variational oracle is implemented for n = 1")
    lat = A.lattice()
    m = A.m
    from .coefficients import multiplication_operator
    Mul = multiplication_operator(A.samples, lat)
    mN = m * N
    Dx = np.kron(np.eye(m), np.diag(1j * lat.axis_modes))
    G00 = Mul[:mN, :mN]
    G01 = Mul[:mN, mN:] @ Dx
    G10 = Dx.conj().T @ Mul[mN:, :mN]
    G11 = Dx.conj().T @ Mul[mN:, mN:] @ Dx
    return (G00, G01, G10, G11), lat


def _assemble_tridiag(G, K, h):
    G00, G01, G10, G11 = G
    diag_int = (2 / h) * G00 + (2 * h / 3) * G11
    first = (1 / h) * G00 - 0.5 * G01 - 0.5 * G10 + (h / 3) * G11
    last = (1 / h) * G00 + 0.5 * G01 + 0.5 * G10 + (h / 3) * G11
    upper = (-1 / h) * G00 - 0.5 * G01 + 0.5 * G10 + (h / 6) * G11
    lower = (-1 / h) * G00 + 0.5 * G01 - 0.5 * G10 + (h / 6) * G11
    diag = [first] + [diag_int] * (K - 1) + [last]
    return diag, lower, upper


def _block_thomas(diag, lower, upper, rhs, free):
    """Solve the block tridiagonal system on free index sets per level."""
    L = len(diag)
    levels = [l for l in range(L) if len(free[l])]
    lo, hi = levels[0], levels[-1]
    Cp, bp, facs = {}, {}, {}
    for l in range(lo, hi + 1):
        fl = free[l]
        D = diag[l][np.ix_(fl, fl)]
        b = rhs[l][fl]
        if l > lo:
            Ll = lower[np.ix_(fl, free[l - 1])]
            D = D - Ll @ Cp[l - 1]
            b = b - Ll @ bp[l - 1]
        fac = sla.lu_factor(D)
        facs[l] = fac
        if l < hi:
            Cp[l] = sla.lu_solve(fac, upper[np.ix_(fl, free[l + 1])])
        bp[l] = sla.lu_solve(fac, b)
    sol = {hi: bp[hi]}
    for l in range(hi - 1, lo - 1, -1):
        sol[l] = bp[l] - Cp[l] @ sol[l + 1]
    return sol


def _check_coercive(diag, lower, upper, free):
    """Block Cholesky of the Hermitian part; raises CoercivityFailure."""
    levels = [l for l in range(len(diag)) if len(free[l])]
    prev = None
    for l in levels:
        fl = free[l]
        H = 0.5 * (diag[l] + diag[l].conj().T)[np.ix_(fl, fl)]
        if prev is not None:
            pl, Lc = prev
            off = 0.5 * (lower + upper.conj().T)[np.ix_(fl, free[l - 1])]
            H = H - off @ sla.cho_solve(Lc, off.conj().T)
        try:
            Lc = sla.cho_factor(0.5 * (H + H.conj().T))
        except np.linalg.LinAlgError:
            raise CoercivityFailure(f"Hermitian part not positive definite at level {l}") from None
        prev = (l, Lc)


def variational_oracle(A, which, data, N, K=256, T_top=14.0, top="natural",
                       data_kind="potential", check_coercivity=True):
    """Weak-form solve of div A grad U = 0 on [0, T_top] x torus.

    P1 elements in t on a uniform grid of K intervals (second-order
    accurate), Fourier modes in x.  "dir"/"reg" impose U(0) = u (the
    potential), "neu" imposes the conormal datum weakly.  At the top,
    ``top="natural"`` leaves U free (for "neu" the constant modes are
    pinned to remove the kernel) and ``top="dirichlet"`` sets U = 0.
    Returns nodal values U with shape (K+1, m, N).
    """
    if which not in ("neu", "dir", "reg"):
        raise ConfigError(f"variational oracle supports neu, dir, reg; got {which!r}")
    G, lat = _form_blocks(A, N)
    m = A.m
    mN = m * N
    h = T_top / K
    diag, lower, upper = _assemble_tridiag(G, K, h)
    data = np.asarray(data, dtype=complex)
    hat = lat.fft(data).reshape(-1)
    if which == "reg" and data_kind == "gradient":
        k = np.tile(lat.axis_modes, m)
        nz = k != 0
        pot = np.zeros_like(hat)
        pot[nz] = hat[nz] / (1j * k[nz])
        hat = pot
    if which != "reg":
        _zero_mean(data, which)
    U = np.zeros((K + 1, mN), dtype=complex)
    rhs = [np.zeros(mN, dtype=complex) for _ in range(K + 1)]
    allidx = np.arange(mN)
    free = [allidx] * (K + 1)
    if which == "neu":
        rhs[0] = hat.copy()
    else:
        U[0] = hat
        free[0] = allidx[:0]
        rhs[1] = rhs[1] - lower @ U[0]
    if top == "dirichlet":
        free[K] = allidx[:0]
    elif which == "neu":
        free[K] = np.setdiff1d(allidx, np.arange(m) * N)
    elif top != "natural":
        raise ConfigError(f"unknown top condition {top!r}")
    if check_coercivity:
        _check_coercive(diag, lower, upper, free)
    sol = _block_thomas(diag, lower, upper, rhs, free)
    for l, v in sol.items():
        U[l, free[l]] = v
    # residual of the discrete weak form on the free rows
    num, den = 0.0, 0.0
    for l in range(K + 1):
        if not len(free[l]):
            continue
        r = diag[l] @ U[l]
        if l > 0:
            r = r + lower @ U[l - 1]
        if l < K:
            r = r + upper @ U[l + 1]
        b = hat if (l == 0 and which == "neu") else np.zeros(mN, dtype=complex)
        num += np.linalg.norm((r - b)[free[l]]) ** 2
        den += np.linalg.norm(b[free[l]]) ** 2 + np.linalg.norm((diag[l] @ U[l])[free[l]]) ** 2
    energy = float(np.sqrt(num / den)) if den > 0 else 0.0
    t = np.linspace(0.0, T_top, K + 1)
    grid = lat.ifft(U.reshape(K + 1, m, N))
    return VariationalResult(t, grid, energy, top, {"N": N, "K": K, "T_top": T_top})


def hardy_potential(spec, t):
    """Hardy-side potential U on the levels t (shape (len(t), m, N))."""
    s = BVPSpec(spec.A, spec.which, spec.data, spec.N, tuple(t), spec.data_kind,
                spec.engine, compute_norms=False)
    rep = solve_bvp(s)
    return np.stack([rep.potentials[tt] for tt in rep.t_levels]), rep


def slowest_decay(A, N):
    """Smallest real part among the Hardy eigenvalues at grid size N."""
    frame = dc.hardy_frame(dc.assemble_TA(A.on_grid(N)))
    return float(frame.lam[: frame.k].real.min())


def uniqueness_compare(spec, K=256, T_top=None, top="natural", tail=18.0):
    """Relative L2 distance between the Hardy solution and the variational one.

    With ``T_top=None`` the strip height is max(14, tail / slowest decay
    rate) and ``K`` counts intervals per 14 units of height, so the
    truncation error stays near exp(-tail).  For "reg" the variational
    potential is shifted by its mean at the top, since the Hardy potential
    is normalised to vanish at infinity.
    """
    if T_top is None:
        T_top = max(14.0, tail / slowest_decay(spec.A, spec.N))
        K = int(np.ceil(K * T_top / 14.0))
    var = variational_oracle(spec.A, spec.which, spec.data, spec.N, K, T_top, top, spec.data_kind)
    Uh, rep = hardy_potential(spec, var.t)
    Uv = var.U.copy()
    if spec.which == "reg":
        Uv = Uv - Uv[-1].mean(axis=-1, keepdims=True)[None]
    w = np.full(len(var.t), T_top / K)
    w[[0, -1]] *= 0.5
    diff = np.sqrt(np.sum(w[:, None, None] * np.abs(Uv - Uh) ** 2))
    ref = np.sqrt(np.sum(w[:, None, None] * np.abs(Uh) ** 2))
    return {"error": float(diff / ref), "energy_residual": var.energy_residual,
            "cond": rep.cond, "N": spec.N, "K": K, "T_top": float(T_top)}


def boundary_conditions(A, N, which=("neu", "reg", "dir")):
    """Condition numbers of the restricted boundary maps at grid size N."""
    frame = dc.hardy_frame(dc.assemble_TA(A.on_grid(N)))
    return {w: restricted_map_condition(frame, w) for w in which}


def openness_witness(A0, perturbations, N, which=("neu", "reg", "dir")):
    """Condition numbers for A0 and each A0 + B; worst ratio to the base per problem."""
    base = boundary_conditions(A0, N, which)
    rows = []
    worst = {w: 1.0 for w in which}
    for B in perturbations:
        c = boundary_conditions(A0.on_grid(N) + B.on_grid(N), N, which)
        rows.append(c)
        for w in which:
            r = c[w] / base[w]
            worst[w] = max(worst[w], r, 1.0 / r)
    return {"base": base, "perturbed": rows, "worst_ratio": worst}
