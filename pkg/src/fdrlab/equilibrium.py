"""Gibbs and adjusted equilibrium states, energies and von Neumann entropy."""

from __future__ import annotations

import numpy as np

from .linalg import LinalgError, as_matrix, hermitian, hermitian_eig

NEGATIVE_EIGENVALUE_TOL = 1e-10


def gibbs_state(H, beta: float) -> np.ndarray:
    """exp(-beta H) / Tr exp(-beta H), evaluated in the eigenbasis of H.

    The spectrum is shifted by its minimum before exponentiating, which keeps
    every Boltzmann factor in (0, 1].
    """
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and non-negative, got {beta!r}")
    eig = hermitian_eig(H)
    E = eig.eigenvalues
    p = np.exp(-beta * (E - E.min()))
    p /= p.sum()
    rho = eig.apply(lambda _: p)
    return (rho + rho.conj().T) / 2


def adjusted_equilibrium(H0, Vbar, beta: float) -> np.ndarray:
    """Gibbs state of the mean Hamiltonian H0 + Vbar (Lagrange multiplier nu = 1)."""
    H0, Vbar = as_matrix(H0), as_matrix(Vbar)
    if H0.shape != Vbar.shape:
        raise LinalgError("H0 and Vbar dimensions differ")
    return gibbs_state(H0 + Vbar, beta)


def energy(rho, H) -> float:
    rho, H = as_matrix(rho), as_matrix(H)
    if rho.shape != H.shape:
        raise LinalgError("state and Hamiltonian dimensions differ")
    e = np.trace(rho @ H)
    scale = max(1.0, float(np.linalg.norm(H)))
    if abs(e.imag) > 1e-12 * scale:
        raise ValueError(f"energy has imaginary part {e.imag:.3e}")
    return float(e.real)


def populations(rho) -> np.ndarray:
    """Eigenvalues of a density matrix, clipped to [0, 1].

    Eigenvalues below -1e-10 indicate an invalid state and raise.
    """
    w = np.linalg.eigvalsh(hermitian(rho, tol=1e-9, name="density matrix"))
    if w.min() < -NEGATIVE_EIGENVALUE_TOL:
        raise ValueError(f"density matrix has eigenvalue {w.min():.3e} < 0")
    return np.clip(w, 0.0, 1.0)


def von_neumann_entropy(rho) -> float:
    p = populations(rho)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def is_density_matrix(rho, tol: float = 1e-12) -> bool:
    rho = np.asarray(rho, dtype=complex)
    if np.linalg.norm(rho - rho.conj().T) > tol * max(1.0, np.linalg.norm(rho)):
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return bool(np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -tol)


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("zero state vector")
    psi = psi / norm
    return np.outer(psi, psi.conj())
