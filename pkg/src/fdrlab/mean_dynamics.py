"""Configuration-averaged dynamics.

Each configuration is propagated exactly (up to the grid rule) and the
results are averaged.  Averages are accumulated in ascending configuration
index, whatever the number of worker threads, so outputs are bit-stable.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .equilibrium import von_neumann_entropy
from .linalg import LinalgError, as_matrix, commutator, dagger, hermitian_eig, hs_inner
from .model import (
    Configuration,
    FiniteEnsemble,
    SystemSpec,
    mean_hamiltonian,
    sample_configurations,
)
from .propagator import TimeGrid, evolve_unitary, propagate_midpoint_hamiltonians

RETAIN_LIMIT = 10**7


class EnsembleMismatch(ValueError):
    """Two series were computed from different configuration sets."""


@dataclass(frozen=True)
class BathField:
    """Probe term -h(t) B added to every configuration Hamiltonian.

    ``values[k]`` is h on the step [t_k, t_{k+1}).
    """

    B: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class MeanTrajectory:
    grid: TimeGrid
    states: np.ndarray  # (n_steps + 1, d, d)
    weights: np.ndarray
    master_seed: int | None
    std_error: np.ndarray | None = None  # entrywise, Sampled ensembles only
    per_config_states: np.ndarray | None = None

    @property
    def n_configs(self) -> int:
        return len(self.weights)

    @property
    def fingerprint(self) -> tuple:
        return (self.grid, self.n_configs, self.master_seed, self.weights.tobytes())

    def expectation(self, A) -> np.ndarray:
        A = as_matrix(A)
        return np.einsum("kij,ji->k", self.states, A)


@dataclass(frozen=True)
class DeviationSeries:
    grid: TimeGrid
    values: np.ndarray  # (n_steps + 1, d, d)
    weights: np.ndarray
    master_seed: int | None

    @property
    def fingerprint(self) -> tuple:
        return (self.grid, len(self.weights), self.master_seed, self.weights.tobytes())

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=(1, 2))


def resolve_configurations(spec: SystemSpec, n_configs: int, master_seed: int | None) -> list[Configuration]:
    if isinstance(spec.ensemble, FiniteEnsemble):
        return sample_configurations(spec.ensemble)
    seed = spec.ensemble.master_seed if master_seed is None else master_seed
    return sample_configurations(spec.ensemble, n_configs, seed)


def _seed_of(spec: SystemSpec, master_seed: int | None) -> int | None:
    if isinstance(spec.ensemble, FiniteEnsemble):
        return None
    return spec.ensemble.master_seed if master_seed is None else master_seed


def _check_breakpoints(config: Configuration, grid: TimeGrid) -> None:
    for b in getattr(config.potential, "breakpoints", ()):
        if b <= grid.t_final and abs(b / grid.dt - round(b / grid.dt)) > 1e-9:
            raise ValueError(f"piecewise breakpoint {b} is not aligned with dt={grid.dt}")


def config_unitaries(spec: SystemSpec, config: Configuration, grid: TimeGrid, bath: BathField | None = None) -> np.ndarray:
    """U_omega(t_k) under H0 + V_omega(t) - h(t) B."""
    _check_breakpoints(config, grid)
    pot = config.potential
    if bath is None:
        traj = evolve_unitary(lambda t: spec.H0 + pot.at(t), grid, static=getattr(pot, "is_static", False))
        return traj.unitaries
    if getattr(pot, "is_static", False):
        H = spec.H0 + pot.at(0.0)
        Hs = H[None] - bath.values[:, None, None] * bath.B[None]
    else:
        Hs = np.array([spec.H0 + pot.at(t) for t in grid.midpoints])
        Hs = Hs - bath.values[:, None, None] * bath.B[None]
    return propagate_midpoint_hamiltonians(Hs, grid.dt)


def _ordered_map(fn, items: list, threads: int) -> Iterator:
    """Map in parallel but yield in input order, holding a bounded window."""
    if threads <= 1:
        yield from map(fn, items)
        return
    window = 2 * threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, len(items), window):
            yield from pool.map(fn, items[start : start + window])


def _per_config(spec, grid, bath, rho0, X):
    Hbar = mean_hamiltonian(spec)
    times = grid.times

    def work(config: Configuration):
        U = config_unitaries(spec, config, grid, bath)
        Ud = dagger(U)
        out = {"U": U}
        if rho0 is not None:
            out["rho"] = U @ rho0 @ Ud
        if X is not None:
            evolved = out["rho"] if X is rho0 else U @ X @ Ud
            pot = config.potential
            if getattr(pot, "is_static", False):
                dH = np.broadcast_to(spec.H0 + pot.at(0.0) - Hbar, evolved.shape)
            else:
                dH = np.array([spec.H0 + pot.at(t) - Hbar for t in times])
            out["dev"] = dH @ evolved - evolved @ dH
        return out

    return work


def _accumulate(
    spec: SystemSpec,
    grid: TimeGrid,
    configs: list[Configuration],
    rho0=None,
    X=None,
    bath: BathField | None = None,
    threads: int = 1,
    retain: bool | None = None,
    with_stats: bool = False,
) -> dict:
    d = spec.dim
    shape = (grid.n_steps + 1, d, d)
    if retain is None:
        retain = len(configs) * (grid.n_steps + 1) * d * d <= RETAIN_LIMIT
    mean = np.zeros(shape, dtype=complex) if rho0 is not None else None
    second = np.zeros(shape) if (rho0 is not None and with_stats) else None
    dev = np.zeros(shape, dtype=complex) if X is not None else None
    kept = [] if (retain and rho0 is not None) else None
    work = _per_config(spec, grid, bath, rho0, X)
    for config, out in zip(configs, _ordered_map(work, configs, threads)):
        w = config.weight
        if mean is not None:
            mean += w * out["rho"]
            if second is not None:
                second += w * np.abs(out["rho"]) ** 2
            if kept is not None:
                kept.append(out["rho"])
        if dev is not None:
            dev += w * out["dev"]
    result = {"mean": mean, "dev": dev, "kept": None if kept is None else np.array(kept)}
    if second is not None and len(configs) > 1:
        n = len(configs)
        var = np.maximum(second - np.abs(mean) ** 2, 0.0) * n / (n - 1)
        result["std_error"] = np.sqrt(var / n)
    return result


def mean_state(
    spec: SystemSpec,
    rho0,
    grid: TimeGrid,
    n_configs: int = 1,
    master_seed: int | None = None,
    *,
    threads: int = 1,
    bath: BathField | None = None,
    retain: bool | None = None,
) -> MeanTrajectory:
    """Configuration average of U_omega(t_k) rho0 U_omega(t_k)^dagger.

    Finite ensembles use their exact weights and ignore ``n_configs``; sampled
    ensembles use equal weights 1/n and also report entrywise standard errors.
    """
    rho0 = as_matrix(rho0)
    if rho0.shape != (spec.dim, spec.dim):
        raise LinalgError("initial state has the wrong dimension")
    configs = resolve_configurations(spec, n_configs, master_seed)
    sampled = not isinstance(spec.ensemble, FiniteEnsemble)
    acc = _accumulate(spec, grid, configs, rho0=rho0, bath=bath, threads=threads, retain=retain, with_stats=sampled)
    return MeanTrajectory(
        grid=grid,
        states=acc["mean"],
        weights=np.array([c.weight for c in configs]),
        master_seed=_seed_of(spec, master_seed),
        std_error=acc.get("std_error"),
        per_config_states=acc["kept"],
    )


def deviation_term(
    spec: SystemSpec,
    X,
    grid: TimeGrid,
    n_configs: int = 1,
    master_seed: int | None = None,
    *,
    threads: int = 1,
    bath: BathField | None = None,
) -> DeviationSeries:
    """C_k = sum_omega w_omega [H_omega(t_k) - Hbar, U_omega(t_k) X U_omega(t_k)^dagger]."""
    X = as_matrix(X)
    if X.shape != (spec.dim, spec.dim):
        raise LinalgError("argument has the wrong dimension")
    configs = resolve_configurations(spec, n_configs, master_seed)
    acc = _accumulate(spec, grid, configs, X=X, bath=bath, threads=threads, retain=False)
    return DeviationSeries(grid, acc["dev"], np.array([c.weight for c in configs]), _seed_of(spec, master_seed))


def mean_and_deviation(
    spec: SystemSpec,
    rho0,
    grid: TimeGrid,
    n_configs: int = 1,
    master_seed: int | None = None,
    *,
    threads: int = 1,
    bath: BathField | None = None,
    retain: bool | None = None,
) -> tuple[MeanTrajectory, DeviationSeries]:
    """Mean state and the deviation series C_t[rho0] from a single propagation pass."""
    rho0 = as_matrix(rho0)
    configs = resolve_configurations(spec, n_configs, master_seed)
    sampled = not isinstance(spec.ensemble, FiniteEnsemble)
    acc = _accumulate(spec, grid, configs, rho0=rho0, X=rho0, bath=bath, threads=threads, retain=retain, with_stats=sampled)
    weights = np.array([c.weight for c in configs])
    seed = _seed_of(spec, master_seed)
    mean = MeanTrajectory(grid, acc["mean"], weights, seed, acc.get("std_error"), acc["kept"])
    return mean, DeviationSeries(grid, acc["dev"], weights, seed)


def mean_observable(
    spec: SystemSpec, A, grid: TimeGrid, n_configs: int = 1, master_seed: int | None = None, *, threads: int = 1
) -> np.ndarray:
    """Heisenberg-picture average sum_omega w_omega U_omega^dagger A U_omega."""
    A = as_matrix(A)
    configs = resolve_configurations(spec, n_configs, master_seed)
    total = np.zeros((grid.n_steps + 1, spec.dim, spec.dim), dtype=complex)

    def work(config):
        U = config_unitaries(spec, config, grid)
        return dagger(U) @ A @ U

    for config, At in zip(configs, _ordered_map(work, configs, threads)):
        total += config.weight * At
    return total


def mean_propagate(Hbar, X, taus) -> np.ndarray:
    """exp(-i tau Hbar) X exp(+i tau Hbar) for each tau (eigenbasis evaluation)."""
    eig = hermitian_eig(Hbar)
    Xt = eig.to_eigenbasis(as_matrix(X))
    omega = eig.bohr_frequencies()
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    phased = Xt[None] * np.exp(-1j * taus[:, None, None] * omega[None])
    U = eig.eigenvectors
    return U @ phased @ dagger(U)


def _deviation_integral(Hbar, dev: DeviationSeries) -> np.ndarray:
    """J(t_k) = int_0^{t_k} exp(-i(t_k - s)L) C_s ds by the composite trapezoid rule."""
    eig = hermitian_eig(Hbar)
    omega = eig.bohr_frequencies()
    times = dev.grid.times
    Ct = dagger(eig.eigenvectors)[None] @ dev.values @ eig.eigenvectors[None]
    # exp(-i(t-s)L) acts entrywise in the eigenbasis as exp(-i(t-s) omega_jk)
    integrand = Ct * np.exp(1j * times[:, None, None] * omega[None])
    cum = cumulative_trapezoid(integrand, dx=dev.grid.dt, axis=0, initial=0)
    J = cum * np.exp(-1j * times[:, None, None] * omega[None])
    U = eig.eigenvectors
    return U @ J @ dagger(U)


def eta(spec: SystemSpec, dev: DeviationSeries) -> np.ndarray:
    """eta(t_k) = -i int_0^{t_k} exp(-i(t_k - s)L) C_s ds; eta(0) = 0.

    The sign is the one for which rho_bar = exp(-itL) rho0 + eta solves
    d rho/dt = -i[Hbar, rho] - i C_t.
    """
    return -1j * _deviation_integral(mean_hamiltonian(spec), dev)


def eta_decomposition_error(spec: SystemSpec, mean: MeanTrajectory, dev: DeviationSeries) -> np.ndarray:
    """||rho_bar(t) - exp(-itL) rho0 - eta(t)||_F on the grid."""
    _same_ensemble(mean, dev)
    free = mean_propagate(mean_hamiltonian(spec), mean.states[0], mean.grid.times)
    return np.linalg.norm(mean.states - free - eta(spec, dev), axis=(1, 2))


def _same_ensemble(mean: MeanTrajectory, dev: DeviationSeries) -> None:
    if mean.fingerprint != dev.fingerprint:
        raise EnsembleMismatch("mean trajectory and deviation series use different configurations")


def mean_dynamics_residual(spec: SystemSpec, mean: MeanTrajectory, dev: DeviationSeries) -> np.ndarray:
    """r_k = ||(rho_{k+1} - rho_{k-1}) / 2dt + i[Hbar, rho_k] + i C_k||_F at interior points."""
    _same_ensemble(mean, dev)
    rho = mean.states
    if len(rho) < 3:
        raise ValueError("residual needs at least three grid points")
    Hbar = mean_hamiltonian(spec)
    dt = mean.grid.dt
    mid = rho[1:-1]
    r = (rho[2:] - rho[:-2]) / (2 * dt) + 1j * (Hbar @ mid - mid @ Hbar) + 1j * dev.values[1:-1]
    return np.linalg.norm(r, axis=(1, 2))


def entropy_margin(mean: MeanTrajectory) -> np.ndarray:
    """S(rho_bar(t_k)) - S(rho_bar(t_0))."""
    S = np.array([von_neumann_entropy(r) for r in mean.states])
    return S - S[0]


def bath_entropy_production(rho_t, Hbar, B, hB_t: float, beta: float) -> float:
    """-i beta h_B(t) Tr(rho(t) [Hbar, B]).

    Only meaningful while the deviation term vanishes; the caller is
    responsible for that condition.
    """
    val = -1j * beta * hB_t * np.trace(as_matrix(rho_t) @ commutator(Hbar, B))
    scale = max(1.0, abs(beta * hB_t) * np.linalg.norm(Hbar) * np.linalg.norm(B))
    if abs(val.imag) > 1e-12 * scale:
        raise ValueError(f"entropy production has imaginary part {val.imag:.3e}")
    return float(val.real)


def dissipativity_identity_check(rho, dH) -> float:
    """|(rho, [dH, rho])|, which vanishes for Hermitian rho and dH."""
    return abs(hs_inner(rho, commutator(dH, rho)))


def deviation_hermiticity_defect(dev: DeviationSeries) -> float:
    """max_k ||C_k^dagger + C_k||_F; C is anti-Hermitian for Hermitian inputs."""
    return float(np.max(np.linalg.norm(dagger(dev.values) + dev.values, axis=(1, 2))))


def operator_side_residual(spec: SystemSpec, A, grid: TimeGrid, n_configs: int = 1, master_seed: int | None = None) -> np.ndarray:
    """Diagnostic for the mean Heisenberg equation with the daggered deviation term.

    Returns ||dA_bar/dt - i[Hbar, A_bar] - i D_k^dagger|| at interior points,
    with D_k = sum_omega w_omega [dH_omega(t_k), U_omega A U_omega^dagger].
    Not asserted anywhere; the sign/dagger convention is reported as is.
    """
    A_bar = mean_observable(spec, A, grid, n_configs, master_seed)
    D = deviation_term(spec, A, grid, n_configs, master_seed).values
    Hbar = mean_hamiltonian(spec)
    mid = A_bar[1:-1]
    r = (A_bar[2:] - A_bar[:-2]) / (2 * grid.dt) - 1j * (Hbar @ mid - mid @ Hbar) - 1j * dagger(D[1:-1])
    return np.linalg.norm(r, axis=(1, 2))

