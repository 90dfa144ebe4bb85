"""Coefficient fields for divergence-form systems and their algebra.

A coefficient field holds one square matrix of size (1+n)m per grid point
(or a single matrix for constant coefficients).  Rows and columns are
ordered component-major: index ``i*m + alpha`` where ``i = 0`` is the
normal direction and ``i = 1..n`` are the tangential directions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, NotAccretive, SingularNormalBlock
from .lattice import FrequencyLattice

SINGULAR_TOL = 1e-12
CLASSIFY_TOL = 1e-12


@dataclass
class CoefficientField:
    """Matrix-valued coefficients on the torus.

    ``entries`` has shape (d, d) for ``kind == "constant"`` and
    (N,)*n + (d, d) for ``kind == "grid"``, with d = (1+n)m.
    """

    n: int
    m: int
    kind: str
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        d = self.dim
        if self.kind == "constant":
            if self.entries.shape != (d, d):
                raise ConfigError(f"constant coefficients need shape {(d, d)}, got {self.entries.shape}")
        elif self.kind == "grid":
            shp = self.entries.shape
            if len(shp) != self.n + 2 or shp[-2:] != (d, d) or len(set(shp[:-2])) != 1:
                raise ConfigError(f"grid coefficients need shape (N,)*{self.n}+{(d, d)}, got {shp}")
            FrequencyLattice(self.n, shp[0])
        else:
            raise ConfigError(f"unknown coefficient kind {self.kind!r}")

    @property
    def dim(self):
        return (1 + self.n) * self.m

    @property
    def N(self):
        return self.entries.shape[0] if self.kind == "grid" else None

    @property
    def samples(self):
        """Flattened view of shape (P, d, d); P = 1 for constant fields."""
        return self.entries.reshape(-1, self.dim, self.dim)

    def lattice(self, N=None):
        return FrequencyLattice(self.n, N if self.kind == "constant" else self.N)

    def with_entries(self, entries):
        return CoefficientField(self.n, self.m, self.kind, entries)

    def on_grid(self, N):
        """Sample onto an N-point grid (constant fields are broadcast)."""
        if self.kind == "grid":
            if self.N == N:
                return self
            return self.with_entries(_fourier_resample(self.entries, self.n, N))
        ent = np.broadcast_to(self.entries, (N,) * self.n + (self.dim, self.dim)).copy()
        return CoefficientField(self.n, self.m, "grid", ent)

    def blocks(self):
        """Return (A00, A0t, At0, Att) with leading grid axes kept."""
        m = self.m
        e = self.entries
        return e[..., :m, :m], e[..., :m, m:], e[..., m:, :m], e[..., m:, m:]

    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.samples, ord=2, axis=(1, 2))))

    def __add__(self, other):
        if isinstance(other, CoefficientField):
            if self.kind == other.kind:
                return self.with_entries(self.entries + other.entries)
            N = self.N or other.N
            a, b = self.on_grid(N), other.on_grid(N)
            return a.with_entries(a.entries + b.entries)
        return NotImplemented

    def scaled(self, s):
        return self.with_entries(s * self.entries)

    def to_dict(self):
        out = {"n": self.n, "m": self.m, "kind": self.kind}
        if self.kind == "constant":
            out["matrix"] = complex_to_json(self.entries)
        else:
            out["grid_size"] = self.N
            out["samples"] = complex_to_json(self.entries)
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            n, m, kind = int(data["n"]), int(data["m"]), data["kind"]
        except KeyError as exc:
            raise ConfigError(f"coefficient entry missing field {exc}") from None
        d = (1 + n) * m
        if kind == "constant":
            return cls(n, m, "constant", complex_array(data["matrix"], (d, d)))
        if kind == "grid":
            N = int(data["grid_size"])
            return cls(n, m, "grid", complex_array(data["samples"], (N,) * n + (d, d)))
        if kind == "jacobian":
            N = int(data["grid_size"])
            g = np.asarray(data["g"], dtype=float).reshape((N,) * n)
            return jacobian_coefficients(g)
        raise ConfigError(f"unknown coefficient kind {kind!r}")


def _fourier_resample(values, n, N):
    """Trigonometric interpolation of samples on the leading n axes to N points per axis."""
    axes = tuple(range(n))
    old = values.shape[0]
    if N & (N - 1) or N < 2:
        raise ConfigError(f"grid size must be a power of two, got {N}")
    hat = np.fft.fftn(values, axes=axes)
    modes_old = np.fft.fftfreq(old, 1.0 / old).astype(int)
    modes_new = np.fft.fftfreq(N, 1.0 / N).astype(int)
    keep = min(old, N) // 2
    sel_old = np.where(np.abs(modes_old) < keep)[0]
    sel_new = np.array([np.where(modes_new == k)[0][0] for k in modes_old[sel_old]])
    out = np.zeros((N,) * n + values.shape[n:], dtype=complex)
    idx_new = np.ix_(*([sel_new] * n))
    idx_old = np.ix_(*([sel_old] * n))
    out[idx_new] = hat[idx_old]
    return np.fft.ifftn(out, axes=axes) * (N / old) ** n


def complex_to_json(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def complex_from_json(data):
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ConfigError("complex values must be given as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def complex_array(data, shape):
    """Array of the given shape from real entries or [re, im] pairs."""
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("numeric array expected") from None
    shape = tuple(shape)
    if arr.shape == shape + (2,):
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.shape == shape:
        return arr.astype(complex)
    raise ConfigError(f"expected shape {shape} (or {shape + (2,)} as [re, im] pairs), got {arr.shape}")


def _check_normal_block(A):
    A00 = A.blocks()[0].reshape(-1, A.m, A.m)
    smin = np.linalg.svd(A00, compute_uv=False)[:, -1].min()
    scale = A.sup_norm()
    if smin < SINGULAR_TOL * scale:
        raise SingularNormalBlock(f"normal block has smallest singular value {smin:.3e}")


def split_triangular(A):
    """Return the upper and lower triangular factors (Abar, Aunder).

    Abar = [[A00, A0t], [0, I]] and Aunder = [[I, 0], [At0, Att]], so that
    Abar f = (Af)_normal + f_tangential and Aunder f = f_normal + (Af)_tangential.
    """
    _check_normal_block(A)
    m, d = A.m, A.dim
    eye = np.eye(d, dtype=complex)
    upper = np.broadcast_to(eye, A.entries.shape).copy()
    lower = upper.copy()
    upper[..., :m, :] = A.entries[..., :m, :]
    lower[..., m:, :] = A.entries[..., m:, :]
    return A.with_entries(upper), A.with_entries(lower)


def hat_transform(A):
    """The transformed coefficients Aunder @ inv(Abar), computed by blocks."""
    _check_normal_block(A)
    A00, A0t, At0, Att = A.blocks()
    inv00 = np.linalg.inv(A00)
    out = np.empty_like(A.entries)
    m = A.m
    out[..., :m, :m] = inv00
    out[..., :m, m:] = -inv00 @ A0t
    out[..., m:, :m] = At0 @ inv00
    out[..., m:, m:] = Att - At0 @ inv00 @ A0t
    return A.with_entries(out)


# --- dense operators on the Fourier side ---------------------------------


def dft_matrix(lattice):
    """Unitary DFT on the flattened N**n grid, consistent with ``lattice.fft``."""
    F1 = np.fft.fft(np.eye(lattice.N), norm="ortho")
    F = F1
    for _ in range(lattice.n - 1):
        F = np.kron(F, F1)
    return F


def multiplication_operator(samples, lattice):
    """Dense Fourier-side matrix of pointwise multiplication by a matrix field.

    ``samples`` has shape (P, r, c); the result maps c*P coefficients to
    r*P coefficients in component-major order.
    """
    F = dft_matrix(lattice)
    P, r, c = samples.shape
    out = np.empty((r * P, c * P), dtype=complex)
    FH = F.conj().T
    for p in range(r):
        for q in range(c):
            out[p * P:(p + 1) * P, q * P:(q + 1) * P] = (F * samples[:, p, q][None, :]) @ FH
    return out


def curlfree_basis(lattice, m, tangential_only=False, include_normal=True):
    """Orthonormal basis of zero-mean curl-free fields in Fourier coordinates.

    Per nonzero frequency xi the fibre is spanned by e0 (x) C^m and
    (xi/|xi|) (x) C^m.
    """
    n, P = lattice.n, lattice.size
    d = (1 + n) * m
    freqs = lattice.frequencies
    nz = np.flatnonzero(lattice.nonzero_mask())
    cols = []
    for k in nz:
        xi = freqs[k] / np.linalg.norm(freqs[k])
        for a in range(m):
            if include_normal and not tangential_only:
                v = np.zeros(d * P, dtype=complex)
                v[a * P + k] = 1.0
                cols.append(v)
            v = np.zeros(d * P, dtype=complex)
            for i in range(n):
                v[((1 + i) * m + a) * P + k] = xi[i]
            cols.append(v)
    return np.array(cols).T


def _fibre_basis(xi, m):
    """Orthonormal (d, 2m) basis {e0 (x) C^m, xi_hat (x) C^m} at one frequency."""
    n = len(xi)
    xh = np.asarray(xi, dtype=float) / np.linalg.norm(xi)
    Q = np.zeros(((1 + n) * m, 2 * m), dtype=complex)
    Q[:m, :m] = np.eye(m)
    for i in range(n):
        Q[(1 + i) * m:(2 + i) * m, m:] = xh[i] * np.eye(m)
    return Q


# --- accretivity ----------------------------------------------------------


@dataclass
class AccretivityReport:
    kappa_pointwise: float
    kappa_curlfree: float
    kappa_blocks: tuple
    omega_hat: float
    kappa_hat: float
    omega_A: float

    def to_dict(self):
        return {
            "kappa_pointwise": self.kappa_pointwise,
            "kappa_curlfree": self.kappa_curlfree,
            "kappa_blocks": list(self.kappa_blocks),
            "omega_hat": self.omega_hat,
            "kappa_hat": self.kappa_hat,
            "omega_A": self.omega_A,
        }


def _herm(M):
    return 0.5 * (M + M.conj().swapaxes(-1, -2))


def _sector_angle(M):
    """Largest |arg (Mf, f)| for a matrix whose Hermitian part is positive."""
    H = _herm(M)
    K = (M - M.conj().T) / 2j
    K = 0.5 * (K + K.conj().T)
    mu = sla.eigh(K, H, eigvals_only=True)
    return float(np.arctan(np.max(np.abs(mu))))


def _compressed_constant(A, lattice):
    """Per-frequency data (min Re eig, angle) for constant coefficients."""
    m = A.m
    Ahat = hat_transform(A).entries
    kap_cf, kap_hat, kap_tt = np.inf, np.inf, np.inf
    om_hat, om_A = 0.0, 0.0
    freqs = lattice.frequencies[lattice.nonzero_mask()]
    dirs = np.unique(np.round(freqs / np.linalg.norm(freqs, axis=1, keepdims=True), 14), axis=0)
    for xi in dirs:
        Q = _fibre_basis(xi, m)
        CA = Q.conj().T @ A.entries @ Q
        CH = Q.conj().T @ Ahat @ Q
        kap_cf = min(kap_cf, np.linalg.eigvalsh(_herm(CA))[0])
        kap_hat = min(kap_hat, np.linalg.eigvalsh(_herm(CH))[0])
        kap_tt = min(kap_tt, np.linalg.eigvalsh(_herm(CA[m:, m:]))[0])
        if kap_cf > 0:
            om_A = max(om_A, _sector_angle(CA))
        if kap_hat > 0:
            om_hat = max(om_hat, _sector_angle(CH))
    return kap_cf, kap_hat, kap_tt, om_hat, om_A


def _compressed_grid(A):
    lat = A.lattice()
    Q = curlfree_basis(lat, A.m)
    MA = multiplication_operator(A.samples, lat)
    MH = multiplication_operator(hat_transform(A).samples, lat)
    CA = Q.conj().T @ MA @ Q
    CH = Q.conj().T @ MH @ Q
    kap_cf = np.linalg.eigvalsh(_herm(CA))[0]
    kap_hat = np.linalg.eigvalsh(_herm(CH))[0]
    Qt = curlfree_basis(lat, A.m, tangential_only=True)
    kap_tt = np.linalg.eigvalsh(_herm(Qt.conj().T @ MA @ Qt))[0]
    om_A = _sector_angle(CA) if kap_cf > 0 else np.pi / 2
    om_hat = _sector_angle(CH) if kap_hat > 0 else np.pi / 2
    return kap_cf, kap_hat, kap_tt, om_hat, om_A


def accretivity_report(A, lattice=None, gate=True):
    """Accretivity constants and sector angles of A and its transform.

    For constant A the curl-free compression runs over the nonzero
    frequencies of ``lattice`` (default N=16); grid fields use their own
    lattice with dense operators.  Raises NotAccretive when the
    curl-free constant (or that of the transform) is not positive.
    """
    samples = A.samples
    kap_pw = float(np.min(np.linalg.eigvalsh(_herm(samples))[:, 0]))
    A00 = A.blocks()[0].reshape(-1, A.m, A.m)
    kap_00 = float(np.min(np.linalg.eigvalsh(_herm(A00))[:, 0]))
    if A.kind == "constant":
        lat = lattice or FrequencyLattice(A.n, 16)
        kap_cf, kap_hat, kap_tt, om_hat, om_A = _compressed_constant(A, lat)
    else:
        kap_cf, kap_hat, kap_tt, om_hat, om_A = _compressed_grid(A)
    rep = AccretivityReport(
        kappa_pointwise=kap_pw,
        kappa_curlfree=float(kap_cf),
        kappa_blocks=(kap_00, float(kap_tt)),
        omega_hat=float(om_hat),
        kappa_hat=float(kap_hat),
        omega_A=float(om_A),
    )
    if gate and (rep.kappa_curlfree <= 0 or rep.kappa_hat <= 0):
        raise NotAccretive(
            f"curl-free accretivity constant {rep.kappa_curlfree:.3e} "
            f"(transformed {rep.kappa_hat:.3e}) is not positive"
        )
    return rep


# --- classification -------------------------------------------------------


@dataclass(frozen=True)
class Classification:
    hermitean: bool
    block: bool
    constant: bool
    jacobian_type: bool

    def to_dict(self):
        return dict(self.__dict__)


def classify(A, tol=CLASSIFY_TOL):
    scale = max(A.sup_norm(), 1e-300)
    eps = tol * scale
    s = A.samples
    herm = np.max(np.abs(s - s.conj().swapaxes(1, 2))) <= eps
    _, A0t, At0, Att = A.blocks()
    block = max(np.max(np.abs(A0t)), np.max(np.abs(At0))) <= eps
    const = A.kind == "constant" or np.max(np.abs(s - s[:1])) <= eps
    jac = False
    if A.m == 1:
        A00 = A.blocks()[0].reshape(-1)
        col = At0.reshape(len(s), -1)
        row = A0t.reshape(len(s), -1)
        eye = np.eye(A.n)
        jac = (
            np.max(np.abs(s.imag)) <= eps
            and np.max(np.abs(Att.reshape(len(s), A.n, A.n) - eye)) <= eps
            and np.max(np.abs(row - col)) <= eps
            and np.max(np.abs(A00 - 1 - np.sum(np.abs(col) ** 2, axis=1))) <= eps
        )
    return Classification(bool(herm), bool(block), bool(const), bool(jac))


# --- constructors ---------------------------------------------------------


def spectral_gradient(g):
    """Gradient of a real periodic function sampled on an N**n grid."""
    g = np.asarray(g, dtype=float)
    n, N = g.ndim, g.shape[0]
    lat = FrequencyLattice(n, N)
    gh = np.fft.fftn(g)
    k = lat.axis_modes.copy()
    k[N // 2] = 0.0  # drop the unpaired Nyquist mode for real data
    out = []
    for ax in range(n):
        shape = [1] * n
        shape[ax] = N
        out.append(np.fft.ifftn(1j * k.reshape(shape) * gh).real)
    return np.stack(out, axis=-1)


def jacobian_coefficients(g):
    """Coefficients [[1+|grad g|^2, -grad g^T], [-grad g, I]] for m = 1.

    These arise when the region above the graph of g is flattened by
    (t, x) -> (t + g(x), x).
    """
    grad = spectral_gradient(g)
    n = grad.shape[-1]
    ent = np.zeros(grad.shape[:-1] + (1 + n, 1 + n), dtype=complex)
    ent[..., 0, 0] = 1 + np.sum(grad**2, axis=-1)
    ent[..., 0, 1:] = -grad
    ent[..., 1:, 0] = -grad
    ent[..., 1:, 1:] = np.eye(n)
    return CoefficientField(n, 1, "grid", ent)


def identity(n, m=1, N=None):
    d = (1 + n) * m
    A = CoefficientField(n, m, "constant", np.eye(d))
    return A.on_grid(N) if N else A


def random_coefficients(rng, n, m, kind="constant", N=None, structure="general",
                        kappa=0.3, amplitude=0.5, bandwidth=2):
    """Random pointwise-accretive coefficients with smallest Re-eigenvalue kappa.

    ``structure`` is one of "general", "hermitean", "block".  Grid fields
    are trigonometric polynomials of degree ``bandwidth``.
    """
    d = (1 + n) * m

    def cplx(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)

    ent = amplitude * cplx(d, d)
    if kind == "grid":
        lat = FrequencyLattice(n, N)
        x = lat.points
        ent = np.broadcast_to(ent, (lat.size, d, d)).copy()
        for k in np.ndindex(*(2 * bandwidth + 1,) * n):
            kv = np.array(k) - bandwidth
            if not kv.any():
                continue
            phase = np.exp(1j * x @ kv)
            coef = amplitude * cplx(d, d) / (1 + np.sum(kv**2))
            ent += phase[:, None, None] * coef[None]
        ent = ent.reshape((N,) * n + (d, d))
    elif kind != "constant":
        raise ConfigError(f"unknown coefficient kind {kind!r}")
    if structure == "hermitean":
        ent = _herm(ent)
    elif structure == "block":
        ent[..., :m, m:] = 0
        ent[..., m:, :m] = 0
    elif structure != "general":
        raise ConfigError(f"unknown structure {structure!r}")
    lo = np.min(np.linalg.eigvalsh(_herm(ent.reshape(-1, d, d)))[:, 0])
    ent = ent + (kappa - lo) * np.eye(d)
    return CoefficientField(n, m, kind, ent)
