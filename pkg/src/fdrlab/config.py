"""Experiment configuration files.

A config is a JSON document.  Complex numbers are ``[re, im]`` pairs and a
matrix is a list of rows of such pairs.  Wherever an operator is expected a
string refers to an entry of the ``operators`` table.

Minimal example::

    {
      "dim": 2,
      "h0": {"diagonal": [0.0, 1.0]},
      "beta": 1.0,
      "operators": {"X": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]},
      "ensemble": {"family": "finite", "items": [
          {"weight": 0.5, "type": "coupling", "lam": 0.5, "Q": "X"},
          {"weight": 0.5, "type": "coupling", "lam": -0.5, "Q": "X"}]},
      "grid": {"dt": 0.001, "n_steps": 1000}
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .equilibrium import adjusted_equilibrium, pure_state
from .linalg import LinalgError, hermitian
from .model import (
    CouplingPotential,
    FiniteEnsemble,
    FourierPotential,
    ModelError,
    PiecewiseConstantPotential,
    SampledEnsemble,
    SystemSpec,
    deterministic_ensemble,
)
from .propagator import TimeGrid
from .response import PROFILES, BathCoupling


class ConfigError(ValueError):
    pass


def _real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def decode_complex(x) -> complex:
    if _real(x):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(_real(v) for v in x):
        return complex(x[0], x[1])
    raise ConfigError(f"expected a finite number or an [re, im] pair, got {x!r}")


def encode_complex(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def decode_matrix(rows) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ConfigError("matrix literal must be a non-empty list of rows")
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError("matrix literal must be square")
    return np.array([[decode_complex(x) for x in r] for r in rows], dtype=complex)


def encode_matrix(M) -> list:
    return [[encode_complex(z) for z in row] for row in np.asarray(M)]


@dataclass
class ExperimentConfig:
    spec: SystemSpec
    grid: TimeGrid
    rho0: np.ndarray
    operators: dict
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    bath: BathCoupling | None = None
    n_configs: int = 1
    master_seed: int | None = None
    output_dir: str = "fdrlab_out"
    raw: dict = field(default_factory=dict)

    @property
    def sha256(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing '{key}' in {where}")
    return section[key]


def _number(x, name: str, positive=False, nonneg=False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not np.isfinite(x):
        raise ConfigError(f"{name} must be a finite number")
    if positive and x <= 0:
        raise ConfigError(f"{name} must be positive")
    if nonneg and x < 0:
        raise ConfigError(f"{name} must be non-negative")
    return float(x)


class _Parser:
    def __init__(self, raw: dict):
        self.raw = raw
        self.dim = int(_require(raw, "dim", "config"))
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        self.operators = {}
        for name, lit in raw.get("operators", {}).items():
            self.operators[name] = self.hermitian(lit, f"operator {name}")

    def matrix(self, value, what: str) -> np.ndarray:
        if isinstance(value, str):
            if value not in self.operators:
                raise ConfigError(f"{what}: unknown operator {value!r}")
            M = self.operators[value]
        elif isinstance(value, dict) and "diagonal" in value:
            M = np.diag([decode_complex(x) for x in value["diagonal"]])
        elif value == 0 or value is None:
            M = np.zeros((self.dim, self.dim), dtype=complex)
        else:
            M = decode_matrix(value)
        if M.shape != (self.dim, self.dim):
            raise ConfigError(f"{what}: expected a {self.dim}x{self.dim} matrix, got {M.shape}")
        return M

    def hermitian(self, value, what: str) -> np.ndarray:
        try:
            return hermitian(self.matrix(value, what), name=what)
        except LinalgError as exc:
            raise ConfigError(str(exc)) from exc

    def modes(self, modes, with_phase: bool) -> tuple:
        out = []
        for m in modes:
            c, nu = _number(m["c"], "mode c"), _number(m["nu"], "mode nu")
            Q = self.hermitian(m["Q"], "mode Q")
            out.append((c, nu, _number(m.get("phi", 0.0), "mode phi"), Q) if with_phase else (c, nu, Q))
        return tuple(out)

    def potential(self, item: dict):
        kind = item.get("type", "coupling")
        if kind == "coupling":
            return CouplingPotential(_number(item["lam"], "lam"), self.hermitian(item["Q"], "Q"))
        if kind == "fourier":
            return FourierPotential(self.hermitian(item.get("vbar"), "vbar"), self.modes(item["modes"], True))
        if kind == "piecewise":
            offsets = tuple(self.hermitian(o, "offset") for o in item["offsets"])
            return PiecewiseConstantPotential(self.hermitian(item.get("vbar"), "vbar"), tuple(item["breakpoints"]), offsets)
        raise ConfigError(f"unknown potential type {kind!r}")

    def ensemble(self, ens: dict, seed: int):
        family = _require(ens, "family", "ensemble")
        declared = ens.get("declared_mean")
        if family == "deterministic":
            return deterministic_ensemble(self.hermitian(ens.get("vbar"), "vbar"))
        if family == "finite":
            items = tuple((_number(it["weight"], "weight", nonneg=True), self.potential(it)) for it in ens["items"])
            if declared is None:
                if not all(getattr(p, "is_static", False) for _, p in items):
                    raise ConfigError("finite ensembles with time-dependent items need a declared_mean")
                mean = sum(w * p.at(0.0) for w, p in items)
            else:
                mean = self.hermitian(declared, "declared_mean")
            return FiniteEnsemble(items, mean)
        if family == "coupling":
            params = {
                "distribution": ens.get("distribution", "normal"),
                "mean": _number(ens.get("mean", 0.0), "mean"),
                "Q": self.hermitian(ens["Q"], "Q"),
            }
            if params["distribution"] == "uniform":
                params["half_width"] = _number(ens["half_width"], "half_width", nonneg=True)
            elif params["distribution"] == "normal":
                params["std"] = _number(ens["std"], "std", nonneg=True)
            else:
                raise ConfigError(f"unknown distribution {params['distribution']!r}")
            mean = params["mean"] * params["Q"] if declared is None else self.hermitian(declared, "declared_mean")
            return SampledEnsemble("coupling", params, mean, seed)
        if family == "fourier":
            vbar = self.hermitian(ens.get("vbar"), "vbar")
            params = {"vbar": vbar, "modes": self.modes(ens["modes"], False)}
            mean = vbar if declared is None else self.hermitian(declared, "declared_mean")
            return SampledEnsemble("fourier", params, mean, seed)
        if family == "piecewise":
            vbar = self.hermitian(ens.get("vbar"), "vbar")
            params = {
                "vbar": vbar,
                "breakpoints": [float(b) for b in ens["breakpoints"]],
                "std": _number(ens["std"], "std", nonneg=True),
                "Q": self.hermitian(ens["Q"], "Q"),
            }
            mean = vbar if declared is None else self.hermitian(declared, "declared_mean")
            return SampledEnsemble("piecewise", params, mean, seed)
        raise ConfigError(f"unknown ensemble family {family!r}")

    def initial_state(self, spec: SystemSpec, init) -> np.ndarray:
        kind = init if isinstance(init, str) else init.get("kind")
        if kind in (None, "adjusted_equilibrium"):
            return adjusted_equilibrium(spec.H0, spec.ensemble.declared_mean, spec.beta)
        if kind == "maximally_mixed":
            return np.eye(self.dim, dtype=complex) / self.dim
        if kind == "pure":
            psi = [decode_complex(x) for x in init["vector"]]
            if len(psi) != self.dim:
                raise ConfigError("initial state vector has the wrong length")
            return pure_state(psi)
        if kind == "matrix":
            rho = self.hermitian(init["value"], "initial state")
            w = np.linalg.eigvalsh(rho)
            if abs(np.trace(rho) - 1) > 1e-12 or w.min() < -1e-12:
                raise ConfigError("initial state is not a density matrix")
            return rho
        raise ConfigError(f"unknown initial state kind {kind!r}")


def parse_config(raw: dict, *, seed=None, dt=None, n_steps=None, out=None) -> ExperimentConfig:
    """Validate a config document and build the system, grid and probe.

    Command-line overrides are folded into the stored document, so the config
    hash covers them.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = json.loads(json.dumps(raw))
    sampling = raw.setdefault("sampling", {})
    grid_sec = raw.setdefault("grid", {})
    if seed is not None:
        sampling["master_seed"] = int(seed)
    if dt is not None:
        grid_sec["dt"] = float(dt)
    if n_steps is not None:
        grid_sec["n_steps"] = int(n_steps)
    try:
        p = _Parser(raw)
        H0 = p.hermitian(_require(raw, "h0", "config"), "h0")
        beta = _number(_require(raw, "beta", "config"), "beta", nonneg=True)
        master_seed = int(sampling.get("master_seed", 0))
        if master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        ensemble = p.ensemble(_require(raw, "ensemble", "config"), master_seed)
        spec = SystemSpec(H0, ensemble, beta)
        n = grid_sec.get("n_steps")
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError("grid.n_steps must be a positive integer")
        grid = TimeGrid(_number(grid_sec.get("dt"), "grid.dt", positive=True), n)
        rho0 = p.initial_state(spec, raw.get("initial_state", "adjusted_equilibrium"))
        obs = raw.get("observables", {})
        A = p.hermitian(obs["A"], "observable A") if "A" in obs else None
        B = p.hermitian(obs["B"], "observable B") if "B" in obs else None
        bath = None
        if "bath" in raw:
            b = raw["bath"]
            if B is None:
                raise ConfigError("a bath section needs observables.B")
            profile = b.get("profile", "impulse")
            if profile not in PROFILES:
                raise ConfigError(f"unknown bath profile {profile!r}")
            bath = BathCoupling(
                B,
                profile,
                _number(b.get("epsilon", 1e-3), "bath.epsilon"),
                _number(b.get("t_prime", 0.0), "bath.t_prime", nonneg=True),
            )
            grid.index_of(bath.t_prime)
        n_configs = int(sampling.get("n_configs", 1))
        if n_configs < 1:
            raise ConfigError("sampling.n_configs must be positive")
    except ConfigError:
        raise
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: missing or mistyped field {exc}") from exc
    except (ValueError, ModelError) as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = out or raw.get("outputs", {}).get("directory", "fdrlab_out")
    return ExperimentConfig(
        spec=spec,
        grid=grid,
        rho0=rho0,
        operators=p.operators,
        A=A,
        B=B,
        bath=bath,
        n_configs=n_configs,
        master_seed=master_seed,
        output_dir=out_dir,
        raw=raw,
    )


SHIPPED = Path(__file__).parent / "configs"


def shipped_configs() -> list[str]:
    return sorted(p.stem for p in SHIPPED.glob("*.json"))


def resolve_config_path(path) -> Path:
    """A file path, or the name of a shipped config such as ``qubit_dephasing``."""
    p = Path(path)
    if not p.exists() and (SHIPPED / f"{p.name}.json").exists():
        return SHIPPED / f"{p.name}.json"
    return p


def load_config(path, **overrides) -> ExperimentConfig:
    path = resolve_config_path(path)
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, **overrides)
