"""Dense complex linear algebra for small Hermitian problems.

Every matrix function in the package goes through :func:`hermitian_eig`, so
real-time, imaginary-time and general complex-time exponentials share one
code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITICITY_TOL = 1e-12


class LinalgError(ValueError):
    """Raised for malformed or non-Hermitian input."""


class NumericalError(RuntimeError):
    """Raised when an eigensolver fails to converge."""


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_matrix(M) -> np.ndarray:
    """Coerce ``M`` to a finite square complex array."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise LinalgError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise LinalgError("matrix has non-finite entries")
    return M


def _same_dim(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape != B.shape:
        raise LinalgError(f"dimension mismatch: {A.shape} vs {B.shape}")


def dagger(M: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(M, -1, -2))


def commutator(A, B) -> np.ndarray:
    A, B = as_matrix(A), as_matrix(B)
    _same_dim(A, B)
    return A @ B - B @ A


def anticommutator(A, B) -> np.ndarray:
    A, B = as_matrix(A), as_matrix(B)
    _same_dim(A, B)
    return A @ B + B @ A


def trace(M) -> complex:
    return complex(np.trace(as_matrix(M)))


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product Tr(A^dagger B)."""
    A, B = as_matrix(A), as_matrix(B)
    _same_dim(A, B)
    # Tr(A^dagger B) = sum_ij conj(A_ij) B_ij
    return complex(np.vdot(A, B))


def fro_norm(M) -> float:
    return float(np.linalg.norm(M))


def hermiticity_defect(M) -> float:
    """Relative defect ||M - M^dagger||_F / ||M||_F (0 for the zero matrix)."""
    M = np.asarray(M, dtype=complex)
    scale = np.linalg.norm(M)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(M - dagger(M)) / scale)


def is_hermitian(M, tol: float = HERMITICITY_TOL) -> bool:
    return hermiticity_defect(M) <= tol


def hermitian(M, tol: float = HERMITICITY_TOL, name: str = "matrix") -> np.ndarray:
    """Validate Hermiticity within ``tol`` and return the symmetrized matrix."""
    M = as_matrix(M)
    defect = hermiticity_defect(M)
    if defect > tol:
        raise LinalgError(f"{name} is not Hermitian (relative defect {defect:.3e})")
    return (M + dagger(M)) / 2


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues and the unitary whose columns are eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ dagger(U)

    def apply(self, f) -> np.ndarray:
        """Matrix function U diag(f(E)) U^dagger."""
        U = self.eigenvectors
        return (U * f(self.eigenvalues)) @ dagger(U)

    def to_eigenbasis(self, X) -> np.ndarray:
        U = self.eigenvectors
        return dagger(U) @ X @ U

    def from_eigenbasis(self, X) -> np.ndarray:
        U = self.eigenvectors
        return U @ X @ dagger(U)

    def bohr_frequencies(self) -> np.ndarray:
        """Matrix of E_j - E_k."""
        E = self.eigenvalues
        return E[:, None] - E[None, :]


def _fix_phases(V: np.ndarray) -> np.ndarray:
    # largest-magnitude component of each column made real positive;
    # the first index wins among near-ties so the choice is deterministic
    mags = np.abs(V)
    idx = np.argmax(mags >= mags.max(axis=0) * (1 - 1e-12), axis=0)
    pivots = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(pivots) / pivots)[None, :]


def hermitian_eig(H, tol: float = HERMITICITY_TOL) -> SpectralDecomposition:
    H = hermitian(H, tol)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Hermitian eigensolver did not converge: {exc}") from exc
    return SpectralDecomposition(w, _fix_phases(V))


def expm_hermitian(H, z: complex) -> np.ndarray:
    """exp(z H) for Hermitian H and any complex scalar z."""
    return hermitian_eig(H).apply(lambda E: np.exp(z * E))


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """GUE-like random Hermitian matrix, used by tests and the check suite."""
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (X + dagger(X)) / 2


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ dagger(G)
    return rho / np.trace(rho).real
