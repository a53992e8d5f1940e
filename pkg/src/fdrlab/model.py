"""Base Hamiltonian, random potential ensembles and the mean Hamiltonian.

Potentials are finite Hermitian matrices on a d-level system.  An ensemble is
either a finite weighted list of potential trajectories (exact averages) or a
seeded sampler from one of the parametric families below (Monte Carlo).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .linalg import hermitian, hermiticity_defect


class ModelError(ValueError):
    pass


class PotentialTrajectory(Protocol):
    """Anything that maps a time t >= 0 to a Hermitian matrix."""

    def at(self, t: float) -> np.ndarray: ...


@dataclass(frozen=True)
class CouplingPotential:
    """V(t) = lam * Q, time independent."""

    lam: float
    Q: np.ndarray

    kind = "coupling"
    is_static = True
    breakpoints: tuple = ()

    def at(self, t: float) -> np.ndarray:
        return self.lam * self.Q


@dataclass(frozen=True)
class FourierPotential:
    """V(t) = vbar + sum_m c_m sin(nu_m t + phi_m) Q_m."""

    vbar: np.ndarray
    modes: tuple  # of (c, nu, phi, Q)

    kind = "fourier"
    is_static = False
    breakpoints: tuple = ()

    def at(self, t: float) -> np.ndarray:
        V = np.array(self.vbar, dtype=complex)
        for c, nu, phi, Q in self.modes:
            V = V + c * np.sin(nu * t + phi) * Q
        return V


@dataclass(frozen=True)
class PiecewiseConstantPotential:
    """V(t) = vbar + offsets[i] on [breakpoints[i], breakpoints[i+1]).

    ``breakpoints[0]`` must be 0; the last offset holds for all later times.
    Only piecewise smooth, so propagation grids must align with the breaks.
    """

    vbar: np.ndarray
    breakpoints: tuple
    offsets: tuple

    kind = "piecewise"
    is_static = False

    def __post_init__(self):
        if len(self.breakpoints) != len(self.offsets) or not self.breakpoints:
            raise ModelError("piecewise potential needs one offset per breakpoint")
        if self.breakpoints[0] != 0 or np.any(np.diff(self.breakpoints) <= 0):
            raise ModelError("breakpoints must start at 0 and increase strictly")

    def at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.vbar + self.offsets[max(i, 0)]


@dataclass(frozen=True)
class Configuration:
    """One realization omega with its probability weight."""

    index: int
    weight: float
    potential: PotentialTrajectory


@dataclass(frozen=True)
class FiniteEnsemble:
    items: tuple  # of (weight, PotentialTrajectory)
    declared_mean: np.ndarray

    def __post_init__(self):
        w = np.array([wi for wi, _ in self.items], dtype=float)
        if len(w) == 0:
            raise ModelError("finite ensemble is empty")
        if np.any(w < 0):
            raise ModelError("ensemble weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ModelError(f"ensemble weights sum to {w.sum()!r}, not 1")


@dataclass(frozen=True)
class SampledEnsemble:
    """Parametric family sampled with per-configuration child RNG streams.

    family is one of:

    * ``coupling``: lam ~ Normal(mean, std) or Uniform(mean - half_width,
      mean + half_width); V = lam Q; declared mean = mean * Q.
    * ``fourier``: modes with fixed (c, nu, Q) and phases uniform on
      [0, 2 pi); declared mean = vbar.
    * ``piecewise``: fixed breakpoints, offsets s_i * Q with s_i ~ Normal(0, std);
      declared mean = vbar.
    """

    family: str
    params: dict
    declared_mean: np.ndarray
    master_seed: int = 0

    def draw(self, k: int) -> PotentialTrajectory:
        rng = np.random.default_rng([int(self.master_seed), int(k)])
        p = self.params
        if self.family == "coupling":
            if p.get("distribution", "normal") == "uniform":
                lam = rng.uniform(p["mean"] - p["half_width"], p["mean"] + p["half_width"])
            else:
                lam = rng.normal(p["mean"], p["std"])
            return CouplingPotential(float(lam), p["Q"])
        if self.family == "fourier":
            modes = tuple(
                (c, nu, float(rng.uniform(0.0, 2 * np.pi)), Q) for c, nu, Q in p["modes"]
            )
            return FourierPotential(p["vbar"], modes)
        if self.family == "piecewise":
            bps = tuple(p["breakpoints"])
            offsets = tuple(float(rng.normal(0.0, p["std"])) * p["Q"] for _ in bps)
            return PiecewiseConstantPotential(p["vbar"], bps, offsets)
        raise ModelError(f"unknown ensemble family {self.family!r}")


def coupling_family_mean(params: dict) -> np.ndarray:
    return params["mean"] * params["Q"]


@dataclass(frozen=True)
class SystemSpec:
    H0: np.ndarray
    ensemble: FiniteEnsemble | SampledEnsemble
    beta: float
    dim: int = field(init=False)

    def __post_init__(self):
        H0 = hermitian(self.H0, name="H0")
        object.__setattr__(self, "H0", H0)
        object.__setattr__(self, "dim", H0.shape[0])
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ModelError("beta must be finite and non-negative")
        if np.shape(self.ensemble.declared_mean) != H0.shape:
            raise ModelError("declared mean has the wrong dimension")
        if isinstance(self.ensemble, FiniteEnsemble):
            for _, pot in self.ensemble.items:
                if np.shape(pot.at(0.0)) != H0.shape:
                    raise ModelError("ensemble potential has the wrong dimension")


def deterministic_ensemble(Vbar) -> FiniteEnsemble:
    """Single configuration V_omega == Vbar."""
    Vbar = np.asarray(Vbar, dtype=complex)
    return FiniteEnsemble(((1.0, CouplingPotential(1.0, Vbar)),), Vbar)


def symmetric_pair(lam: float, Q) -> FiniteEnsemble:
    """Two equally weighted configurations +lam Q and -lam Q (mean zero)."""
    Q = np.asarray(Q, dtype=complex)
    return FiniteEnsemble(
        ((0.5, CouplingPotential(lam, Q)), (0.5, CouplingPotential(-lam, Q))),
        np.zeros_like(Q),
    )


def hamiltonian_at(spec: SystemSpec, config: Configuration | int, t: float) -> np.ndarray:
    if isinstance(config, (int, np.integer)):
        if not isinstance(spec.ensemble, FiniteEnsemble):
            raise ModelError("integer configuration handles need a finite ensemble")
        if not 0 <= config < len(spec.ensemble.items):
            raise ModelError(f"configuration index {config} out of range")
        pot = spec.ensemble.items[config][1]
    else:
        pot = config.potential
    return spec.H0 + pot.at(t)


def mean_hamiltonian(spec: SystemSpec) -> np.ndarray:
    return spec.H0 + spec.ensemble.declared_mean


def sample_configurations(ensemble, n: int = 1, master_seed: int | None = None) -> list[Configuration]:
    """Configuration handles; finite ensembles return their items regardless of n."""
    if isinstance(ensemble, FiniteEnsemble):
        return [Configuration(k, float(w), pot) for k, (w, pot) in enumerate(ensemble.items)]
    if n < 1:
        raise ModelError("need at least one sample")
    if master_seed is not None and master_seed != ensemble.master_seed:
        ensemble = SampledEnsemble(ensemble.family, ensemble.params, ensemble.declared_mean, master_seed)
    return [Configuration(k, 1.0 / n, ensemble.draw(k)) for k in range(n)]


@dataclass(frozen=True)
class MeanConstancyReport:
    max_deviation: float
    max_std_error: float
    passed: bool


def check_mean_constancy(
    spec: SystemSpec, times: Sequence[float], n_samples: int = 1000, tol: float = 1e-10
) -> MeanConstancyReport:
    """Compare the ensemble average of V_omega(t) with the declared mean.

    Sampled ensembles pass when deviation <= tol + 3 SE at every time, with SE
    the Frobenius norm of the entrywise standard error.
    """
    Vbar = spec.ensemble.declared_mean
    configs = sample_configurations(spec.ensemble, n_samples)
    worst_dev, worst_se, ok = 0.0, 0.0, True
    for t in times:
        Vs = np.array([c.potential.at(t) for c in configs])
        w = np.array([c.weight for c in configs])
        mean = np.tensordot(w, Vs, axes=1)
        se = 0.0
        if isinstance(spec.ensemble, SampledEnsemble) and len(configs) > 1:
            sd = Vs.std(axis=0, ddof=1)  # entrywise, complex magnitude
            se = float(np.linalg.norm(sd) / np.sqrt(len(configs)))
        dev = float(np.linalg.norm(mean - Vbar))
        worst_dev, worst_se = max(worst_dev, dev), max(worst_se, se)
        ok = ok and dev <= tol + 3 * se
    return MeanConstancyReport(worst_dev, worst_se, ok)


def check_hermitian_potentials(spec: SystemSpec, times, n_samples: int = 10) -> float:
    """Largest relative hermiticity defect of sampled potentials at ``times``."""
    return max(
        hermiticity_defect(c.potential.at(t))
        for c in sample_configurations(spec.ensemble, n_samples)
        for t in times
    )
