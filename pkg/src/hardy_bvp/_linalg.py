"""Small dense linear-algebra helpers shared by the solvers."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

EIG_COND_LIMIT = 1e8


def schur_projector(T, side="rhp"):
    """Spectral projector onto the invariant subspace selected by ``side``.

    Uses an ordered Schur form and a Sylvester solve, which stays accurate
    when the eigenvector matrix is badly conditioned.
    """
    S, Z, k = sla.schur(T, output="complex", sort=side)
    d = T.shape[0]
    T11, T12, T22 = S[:k, :k], S[:k, k:], S[k:, k:]
    X = sla.solve_sylvester(T11, -T22, T12)
    P = np.zeros((d, d), dtype=complex)
    P[:k, :k] = np.eye(k)
    P[:k, k:] = X
    return Z @ P @ Z.conj().T


def half_plane_projectors(T, degenerate_exc, rel_tol=1e-10):
    """Projectors onto Re > 0 and Re < 0 eigen-subspaces of an invertible-on-range T.

    Returns (Pplus, Pminus, eigenvalues, used_schur).
    """
    lam, V = sla.eig(T)
    scale = max(np.linalg.norm(T, 2), 1e-300)
    gap = np.min(np.abs(lam.real))
    if gap < rel_tol * scale:
        raise degenerate_exc(f"eigenvalue with |Re| = {gap:.3e} on the imaginary axis")
    if np.linalg.cond(V) <= EIG_COND_LIMIT:
        Vi = np.linalg.inv(V)
        Pp = (V * (lam.real > 0)) @ Vi
        Pm = (V * (lam.real < 0)) @ Vi
        return Pp, Pm, lam, False
    Pp = schur_projector(T, "rhp")
    Pm = schur_projector(T, "lhp")
    return Pp, Pm, lam, True


def range_basis(P, rank):
    """Orthonormal basis of the range of a projector with known rank."""
    U, _, _ = np.linalg.svd(P)
    return U[:, :rank]


def sector_distance(lam, omega):
    """Distance from points lam to the closed double sector |arg(+-z)| <= omega."""
    lam = np.asarray(lam, dtype=complex)
    r = np.abs(lam)
    th = np.abs(np.angle(lam))
    phi = np.minimum(th, np.pi - th)
    return np.where(phi <= omega, 0.0, r * np.sin(np.minimum(phi - omega, np.pi / 2)))


def cross_integral_psi(lam_a, lam_b):
    """Matrix of int_0^inf conj(psi(t a)) psi(t b) dt/t with psi(z) = z/(1+z^2).

    Closed form (mu lam / 2) (Log alpha - Log beta)/(alpha - beta) with
    alpha = conj(a)^2, beta = b^2, evaluated through expm1 so that nearly
    equal arguments stay accurate.
    """
    mu = np.conj(np.asarray(lam_a))[:, None]
    lb = np.asarray(lam_b)[None, :]
    alpha = mu**2
    beta = lb**2
    dlog = np.log(alpha) - np.log(beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dlog == 0, 1.0 / beta, dlog / (beta * np.expm1(dlog)))
    return 0.5 * mu * lb * ratio


def cross_integral_tdt(lam_a, lam_b):
    """Matrix of int_0^inf conj(t a e^{-ta}) (t b e^{-tb}) dt/t."""
    mu = np.conj(np.asarray(lam_a))[:, None]
    lb = np.asarray(lam_b)[None, :]
    return mu * lb / (mu + lb) ** 2


def cross_integral_exp(lam_a, lam_b):
    """Matrix of int_0^inf conj(e^{-ta}) e^{-tb} dt."""
    mu = np.conj(np.asarray(lam_a))[:, None]
    lb = np.asarray(lam_b)[None, :]
    return 1.0 / (mu + lb)
