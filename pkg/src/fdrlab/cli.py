"""Command-line runner: ``fdrlab {equilibrium,evolve,response,fdr,check}``.

Exit codes: 0 success, 1 invalid config, 2 numerical failure, 3 a check of
the invariant suite failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, encode_complex, encode_matrix, load_config
from .equilibrium import adjusted_equilibrium, energy, gibbs_state, von_neumann_entropy
from .linalg import NumericalError, hermiticity_defect
from .mean_dynamics import (
    config_unitaries,
    deviation_term,
    entropy_margin,
    mean_and_deviation,
    mean_dynamics_residual,
    mean_observable,
    resolve_configurations,
)
from .model import FiniteEnsemble, check_hermitian_potentials, check_mean_constancy, mean_hamiltonian
from .response import (
    delta_term,
    kms_check,
    kubo_check,
    line_ratios,
    line_table,
    windowed_line_check,
)

log = logging.getLogger("fdrlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3
LINE_TOL = 1e-10


class CheckFailed(RuntimeError):
    pass


def fmt(x) -> str:
    """Shortest round-trip text with 17 significant digits at most."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class Outputs:
    """Writes files into the output directory and remembers their checksums."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.checksums: dict[str, str] = {}

    def _write(self, name: str, text: str) -> None:
        data = text.encode()
        (self.dir / name).write_bytes(data)
        self.checksums[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        self._write(name, buf.getvalue())

    def json(self, name: str, obj) -> None:
        self._write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def manifest(self, cfg: ExperimentConfig, command: str, started: float) -> None:
        manifest = {
            "command": command,
            "config_sha256": cfg.sha256,
            "version": __version__,
            "master_seed": cfg.master_seed,
            "wall_clock_seconds": time.perf_counter() - started,
            "outputs": dict(sorted(self.checksums.items())),
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _flat_header(d: int) -> list[str]:
    return [f"{part}_{i}{j}" for i in range(d) for j in range(d) for part in ("re", "im")]


def _flat(M) -> list[float]:
    z = np.asarray(M).ravel()
    return list(np.column_stack([z.real, z.imag]).ravel())


# ----------------------------------------------------------------- commands


def cmd_equilibrium(cfg: ExperimentConfig, out: Outputs, threads: int = 1) -> None:
    spec = cfg.spec
    Vbar = spec.ensemble.declared_mean
    Hbar = mean_hamiltonian(spec)
    sigma = gibbs_state(spec.H0, spec.beta)
    sigma_p = adjusted_equilibrium(spec.H0, Vbar, spec.beta)
    out.json("sigma_beta.json", {"beta": spec.beta, "matrix": encode_matrix(sigma)})
    out.json("sigma_prime.json", {"beta": spec.beta, "matrix": encode_matrix(sigma_p)})
    out.json(
        "summary.json",
        {
            "beta": spec.beta,
            "dim": spec.dim,
            "sigma_beta": {"energy_H0": energy(sigma, spec.H0), "entropy": von_neumann_entropy(sigma)},
            "sigma_prime": {
                "energy_H0": energy(sigma_p, spec.H0),
                "energy_Hbar": energy(sigma_p, Hbar),
                "entropy": von_neumann_entropy(sigma_p),
            },
            "max_abs_difference": float(np.max(np.abs(sigma - sigma_p))),
        },
    )


def cmd_evolve(cfg: ExperimentConfig, out: Outputs, threads: int = 1) -> None:
    spec, grid = cfg.spec, cfg.grid
    mean, dev = mean_and_deviation(spec, cfg.rho0, grid, cfg.n_configs, cfg.master_seed, threads=threads, retain=False)
    t = grid.times
    d = spec.dim
    out.csv("mean_state.csv", ["t"] + _flat_header(d), ([tk] + _flat(r) for tk, r in zip(t, mean.states)))
    out.csv("deviation_norm.csv", ["t", "deviation_norm"], zip(t, dev.norms()))
    out.csv("entropy_margin.csv", ["t", "entropy_margin"], zip(t, entropy_margin(mean)))
    if grid.n_steps >= 2:
        out.csv("residual.csv", ["t", "residual"], zip(t[1:-1], mean_dynamics_residual(spec, mean, dev)))
    if mean.std_error is not None:
        out.csv("mean_state_stderr.csv", ["t"] + [f"se_{i}{j}" for i in range(d) for j in range(d)],
                ([tk] + list(se.ravel()) for tk, se in zip(t, mean.std_error)))


def _need_observables(cfg: ExperimentConfig):
    if cfg.A is None or cfg.B is None:
        raise ConfigError("this command needs observables.A and observables.B")
    return cfg.A, cfg.B


def cmd_response(cfg: ExperimentConfig, out: Outputs, threads: int = 1) -> None:
    if cfg.bath is None:
        raise ConfigError("response needs a bath section")
    A, B = _need_observables(cfg)
    if cfg.bath.profile != "impulse":
        raise ConfigError("response is defined for the impulse profile")
    rep = kubo_check(
        cfg.spec, cfg.grid, A, B, cfg.bath.t_prime, cfg.bath.epsilon, cfg.n_configs, cfg.master_seed, threads=threads
    )
    t = rep.times
    out.csv("response.csv", ["t", "re", "im"], ((tk, r.real, r.imag) for tk, r in zip(t, rep.lhs)))
    out.csv(
        "kubo_check.csv",
        ["t", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "abs_error", "first_order_re", "first_order_im"],
        (
            (tk, l.real, l.imag, r.real, r.imag, e, f.real, f.imag)
            for tk, l, r, e, f in zip(t, rep.lhs, rep.rhs, rep.abs_error, rep.first_order)
        ),
    )
    out.csv(
        "delta.csv",
        ["t", "re", "im", "centroid_re", "centroid_im"],
        ((tk, v.real, v.imag, c.real, c.imag) for tk, v, c in zip(t, rep.delta_at_t_prime, rep.delta)),
    )
    out.json(
        "response_summary.json",
        {
            "t_prime": cfg.bath.t_prime,
            "t_prime_effective": rep.t_prime_effective,
            "epsilon": cfg.bath.epsilon,
            "max_abs_error": rep.max_error,
            "tolerance": rep.tolerance,
            "passed": rep.passed,
            "first_order_max_error": rep.first_order_error,
            "fitted_factor": encode_complex(rep.fitted_factor),
            "max_abs_delta": float(np.max(np.abs(rep.delta_at_t_prime))),
        },
    )


def cmd_fdr(cfg: ExperimentConfig, out: Outputs, threads: int = 1) -> None:
    A, B = _need_observables(cfg)
    spec = cfg.spec
    Hbar = mean_hamiltonian(spec)
    table = line_table(A, B, Hbar, spec.beta)
    rat = line_ratios(table)
    rows = []
    for k, lam in enumerate(table.frequencies):
        ea, ef = rat.antisym_rel_error[k], rat.fdr_rel_error[k]
        ok = (np.isnan(ea) or ea <= LINE_TOL) and (np.isnan(ef) or ef <= LINE_TOL)
        rows.append(
            [lam, table.multiplicity[k]]
            + [f(getattr(table, kind)[k]) for kind in ("plain", "sym", "antisym", "response") for f in (np.real, np.imag)]
            + [rat.antisym_ratio[k].real, rat.antisym_expected[k], rat.fdr_ratio[k].real, rat.fdr_expected[k], ok]
        )
    header = ["lambda", "multiplicity"] + [
        f"{kind}_{part}" for kind in ("plain", "sym", "antisym", "response") for part in ("re", "im")
    ] + ["antisym_over_plain", "one_minus_exp", "response_over_sym", "tanh_half", "pass"]
    out.csv("lines.csv", header, rows)

    times = np.linspace(-cfg.grid.t_final, cfg.grid.t_final, 11)
    reports = [kms_check(A, B, Hbar, spec.beta, float(t)) for t in times]
    out.json(
        "kms_check.json",
        {
            "beta": spec.beta,
            "max_abs_error": max(r.abs_error for r in reports),
            "passed": all(r.passed for r in reports),
            "points": [
                {"t": float(t), "lhs": encode_complex(r.lhs), "rhs": encode_complex(r.rhs), "abs_error": r.abs_error}
                for t, r in zip(times, reports)
            ],
        },
    )
    chk = windowed_line_check(A, B, Hbar, spec.beta)
    wrows = []
    for k, lam in enumerate(chk.frequencies):
        row = [lam]
        for kind in ("plain", "sym", "antisym"):
            for arr in (chk.spectra[kind], chk.recovered[kind], chk.exact[kind]):
                row += [arr[k].real, arr[k].imag]
        wrows.append(row)
    wheader = ["lambda"] + [
        f"{kind}_{what}_{part}"
        for kind in ("plain", "sym", "antisym")
        for what in ("spectrum", "recovered", "exact")
        for part in ("re", "im")
    ]
    out.csv("windowed_spectra.csv", wheader, wrows)
    out.json(
        "windowed_summary.json",
        {
            "gamma": chk.gamma,
            "T": chk.T,
            "weight_rel_error": chk.weight_rel_error,
            "fdr_rel_error": chk.fdr_rel_error,
        },
    )


# -------------------------------------------------------------- check suite


def _breakpoint_mask(configs, grid) -> np.ndarray:
    """Interior points whose central difference straddles a potential jump."""
    bad = np.zeros(grid.n_steps + 1, dtype=bool)
    for c in configs:
        for b in getattr(c.potential, "breakpoints", ()):
            if 0 < b < grid.t_final:
                k = int(round(b / grid.dt))
                bad[max(k - 1, 0) : k + 2] = True
    return bad[1:-1]


def run_checks(cfg: ExperimentConfig, threads: int = 1) -> list[tuple[str, float, float, bool]]:
    """Invariant suite on the configured system; rows are (name, value, limit, passed)."""
    spec, grid = cfg.spec, cfg.grid
    rows = []

    def add(name, value, limit):
        rows.append((name, float(value), float(limit), bool(value <= limit)))

    finite = isinstance(spec.ensemble, FiniteEnsemble)
    n_mc = 1 if finite else max(cfg.n_configs, 1000)
    times = grid.times[:: max(1, grid.n_steps // 20)]
    mc = check_mean_constancy(spec, times, n_samples=n_mc)
    rows.append(("check_mean_constancy", mc.max_deviation, 1e-10 + 3 * mc.max_std_error, mc.passed))
    add("hermitian_potentials", check_hermitian_potentials(spec, times), 1e-12)

    configs = resolve_configurations(spec, cfg.n_configs, cfg.master_seed)
    k = np.maximum(np.arange(grid.n_steps + 1), 1)
    worst = 0.0
    for c in configs[:8]:
        U = config_unitaries(spec, c, grid)
        defect = np.linalg.norm(np.conj(np.swapaxes(U, 1, 2)) @ U - np.eye(spec.dim), axis=(1, 2))
        worst = max(worst, float(np.max(defect / k)))
    add("unitarity_per_step", worst, 1e-12)

    mean, dev = mean_and_deviation(spec, cfg.rho0, grid, cfg.n_configs, cfg.master_seed, threads=threads, retain=False)
    traces = np.einsum("kii->k", mean.states)
    add("trace", float(np.max(np.abs(traces - 1))), 1e-12)
    add("hermitian_mean_state", max(hermiticity_defect(r) for r in mean.states), 1e-12)

    A = cfg.A if cfg.A is not None else spec.H0
    B = cfg.B if cfg.B is not None else spec.H0
    heis = mean_observable(spec, A, grid, cfg.n_configs, cfg.master_seed, threads=threads)
    dual = np.abs(mean.expectation(A) - np.einsum("ij,kji->k", cfg.rho0, heis))
    add("duality", float(np.max(dual)), 1e-10)

    Hbar = mean_hamiltonian(spec)
    kms = [kms_check(A, B, Hbar, spec.beta, float(t)) for t in np.linspace(-grid.t_final, grid.t_final, 7)]
    add("kms", max(r.abs_error / r.scale for r in kms), 1e-10)

    err_a, err_f = line_ratios(line_table(A, B, Hbar, spec.beta)).max_errors()
    add("line_antisym_ratio", err_a, LINE_TOL)
    add("line_fdr_ratio", err_f, LINE_TOL)

    sigma = adjusted_equilibrium(spec.H0, spec.ensemble.declared_mean, spec.beta)
    dev_sigma = deviation_term(spec, sigma, grid, cfg.n_configs, cfg.master_seed, threads=threads)
    add("delta_at_t_prime_zero", float(np.max(np.abs(delta_term(spec, A, B, dev_sigma, grid.times, 0.0)))), 1e-14)
    if cfg.bath is not None and cfg.bath.t_prime > 0 and cfg.bath.t_prime < grid.t_final:
        tp = cfg.bath.t_prime
        later = grid.times[grid.times >= tp]
        size = float(np.max(np.abs(delta_term(spec, A, B, dev_sigma, later, tp))))
        # reported, not checked: the extra term is allowed to be anything here
        rows.append((f"delta_at_t_prime_{tp:g}", size, float("nan"), True))

    add("entropy_margin_negativity", float(max(0.0, -np.min(entropy_margin(mean)))), 1e-8)

    rows.append(_residual_order_row(cfg, threads))
    return rows


def _residual_order_row(cfg: ExperimentConfig, threads: int):
    """Residual of the mean equation on the first stretch of the grid at dt and dt/2."""
    spec, grid = cfg.spec, cfg.grid
    n = min(grid.n_steps, 400)
    coarse = type(grid)(grid.dt, n)
    fine = coarse.refined(2)
    res = []
    for g in (coarse, fine):
        mean, dev = mean_and_deviation(spec, cfg.rho0, g, cfg.n_configs, cfg.master_seed, threads=threads, retain=False)
        r = mean_dynamics_residual(spec, mean, dev)
        mask = _breakpoint_mask(resolve_configurations(spec, cfg.n_configs, cfg.master_seed), g)
        res.append(float(np.max(r[~mask])) if np.any(~mask) else 0.0)
    if res[0] <= 1e-10:
        return ("residual_order", res[0], 1e-10, True)
    ratio = res[0] / res[1]
    return ("residual_order", ratio, 4.5, bool(3.5 <= ratio <= 4.5))


def cmd_check(cfg: ExperimentConfig, out: Outputs | None = None, threads: int = 1) -> list:
    rows = run_checks(cfg, threads)
    width = max(len(r[0]) for r in rows)
    print(f"{'check':<{width}}  {'value':>12}  {'limit':>12}  result")
    for name, value, limit, ok in rows:
        verdict = "info" if np.isnan(limit) else ("PASS" if ok else "FAIL")
        print(f"{name:<{width}}  {value:12.4e}  {limit:12.4e}  {verdict}")
    if out is not None:
        out.csv("checks.csv", ["check", "value", "limit", "passed"], rows)
    failed = [r[0] for r in rows if not r[3]]
    if failed:
        raise CheckFailed("failed checks: " + ", ".join(failed))
    return rows


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "evolve": cmd_evolve,
    "response": cmd_response,
    "fdr": cmd_fdr,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdrlab", description="Configuration-averaged dynamics and FDR checks.")
    p.add_argument("--version", action="version", version=f"fdrlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--out", help="output directory (overrides outputs.directory)")
        s.add_argument("--seed", type=int, help="master seed (overrides sampling.master_seed)")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--dt", type=float)
        s.add_argument("--steps", type=int)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FDRLAB_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config, seed=args.seed, dt=args.dt, n_steps=args.steps, out=args.out)
        out = Outputs(cfg.output_dir)
        COMMANDS[args.command](cfg, out, threads=args.threads)
        out.manifest(cfg, args.command, started)
    except ConfigError as exc:
        print(f"fdrlab: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as exc:
        print(f"fdrlab: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"fdrlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
