"""Time-ordered unitary evolution on a uniform grid.

The time-ordered exponential is discretized by the midpoint exponential
product  U(t_{k+1}) = exp(-i dt H(t_k + dt/2)) U(t_k),  which is unitary by
construction and second order for smooth H(t).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import LinalgError, NumericalError, dagger, hermitian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    def index_of(self, t: float) -> int:
        """Index of the grid point nearest to t; the snap must be below dt/2."""
        k = int(round(t / self.dt))
        if not 0 <= k <= self.n_steps or abs(k * self.dt - t) >= self.dt / 2:
            raise ValueError(f"time {t!r} is not on the grid")
        return k

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.dt / factor, self.n_steps * factor)


@dataclass(frozen=True)
class UnitaryTrajectory:
    grid: TimeGrid
    unitaries: np.ndarray  # (n_steps + 1, d, d), unitaries[0] = I

    @property
    def final(self) -> np.ndarray:
        return self.unitaries[-1]


def step_unitaries(hamiltonians: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i dt H) for a stack of Hermitian matrices, one batched eigensolve."""
    H = (hamiltonians + dagger(hamiltonians)) / 2
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed during propagation: {exc}") from exc
    return (V * np.exp(-1j * dt * w)[..., None, :]) @ dagger(V)


def chain(steps: np.ndarray) -> np.ndarray:
    """Ordered products U_k = S_{k-1} ... S_0, with U_0 = I."""
    n, d, _ = steps.shape
    out = np.empty((n + 1, d, d), dtype=complex)
    out[0] = np.eye(d)
    for k in range(n):
        out[k + 1] = steps[k] @ out[k]
    return out


def evolve_unitary(
    H_of_t: Callable[[float], np.ndarray],
    grid: TimeGrid,
    static: bool = False,
) -> UnitaryTrajectory:
    """Propagate U(t) from U(0) = I with the midpoint exponential product.

    With ``static=True`` the Hamiltonian is sampled once; the midpoint product
    is then exact and U(t_k) = exp(-i t_k H) is evaluated in closed form.
    """
    if static:
        H = hermitian(H_of_t(0.0), tol=1e-10, name="Hamiltonian")
        _warn_step(H[None], grid.dt)
        w, V = np.linalg.eigh(H)
        phases = np.exp(-1j * np.outer(grid.times, w))
        return UnitaryTrajectory(grid, (V[None] * phases[:, None, :]) @ dagger(V)[None])
    Hs = np.array([H_of_t(t) for t in grid.midpoints], dtype=complex)
    if Hs.ndim != 3 or Hs.shape[1] != Hs.shape[2]:
        raise LinalgError("Hamiltonian must return square matrices")
    return UnitaryTrajectory(grid, propagate_midpoint_hamiltonians(Hs, grid.dt))


def _warn_step(Hs: np.ndarray, dt: float) -> None:
    if not np.all(np.isfinite(Hs)):
        raise NumericalError("Hamiltonian has non-finite entries")
    hnorm = float(np.max(np.linalg.norm(Hs, ord=2, axis=(-2, -1))))
    if dt * hnorm > 1:
        log.warning("dt * ||H|| = %.3g exceeds 1; expect large discretization error", dt * hnorm)


def propagate_midpoint_hamiltonians(Hs: np.ndarray, dt: float) -> np.ndarray:
    """Unitaries on the grid from the stack of midpoint Hamiltonians."""
    _warn_step(Hs, dt)
    return chain(step_unitaries(Hs, dt))


def _check_dim(X: np.ndarray, traj: UnitaryTrajectory) -> None:
    if X.shape != traj.unitaries.shape[1:]:
        raise LinalgError(f"dimension mismatch: {X.shape} vs {traj.unitaries.shape[1:]}")


def evolve_state(rho0, traj: UnitaryTrajectory) -> np.ndarray:
    """rho(t_k) = U_k rho0 U_k^dagger for every grid point."""
    rho0 = np.asarray(rho0, dtype=complex)
    _check_dim(rho0, traj)
    U = traj.unitaries
    return U @ rho0 @ dagger(U)


def evolve_observable(A, traj: UnitaryTrajectory) -> np.ndarray:
    """A(t_k) = U_k^dagger A U_k for every grid point."""
    A = np.asarray(A, dtype=complex)
    _check_dim(A, traj)
    U = traj.unitaries
    return dagger(U) @ A @ U


def unitarity_defect(traj: UnitaryTrajectory) -> np.ndarray:
    """||U_k^dagger U_k - I||_F along the trajectory."""
    U = traj.unitaries
    d = U.shape[-1]
    return np.linalg.norm(dagger(U) @ U - np.eye(d), axis=(1, 2))
