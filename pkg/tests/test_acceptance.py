"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed as they are produced and again, in order, in the
terminal summary of the pytest run.
"""

import json

import numpy as np
import pytest

from fdrlab import cli
from fdrlab.config import load_config
from fdrlab.equilibrium import adjusted_equilibrium, pure_state
from fdrlab.linalg import PAULI_X, PAULI_Z, random_density, random_hermitian
from fdrlab.mean_dynamics import (
    deviation_term,
    dissipativity_identity_check,
    entropy_margin,
    eta_decomposition_error,
    mean_and_deviation,
    mean_dynamics_residual,
    mean_observable,
    mean_state,
)
from fdrlab.model import (
    CouplingPotential,
    FiniteEnsemble,
    FourierPotential,
    SampledEnsemble,
    SystemSpec,
    deterministic_ensemble,
    symmetric_pair,
)
from fdrlab.propagator import TimeGrid, evolve_unitary, unitarity_defect
from fdrlab.response import delta_term, kms_check, kubo_check, line_ratios, line_table, windowed_line_check

RESULTS: dict[int, str] = {}

Z = PAULI_Z.astype(complex)
X = PAULI_X.astype(complex)


def report(n: int, ok: bool, what: str, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {what}: {detail}"
    RESULTS[n] = line
    print(line)


def random_finite_ensemble(d, rng, n_items=3, time_dependent=False):
    w = rng.dirichlet(np.ones(n_items))
    w[-1] = 1.0 - w[:-1].sum()
    items, mean = [], np.zeros((d, d), dtype=complex)
    for wi in w:
        if time_dependent:
            vbar = random_hermitian(d, rng, 0.5)
            pot = FourierPotential(vbar, ((0.4, rng.uniform(0.5, 2), rng.uniform(0, 2 * np.pi), random_hermitian(d, rng)),))
            mean += wi * vbar  # declared mean; the sine parts need not average out
        else:
            Q = random_hermitian(d, rng)
            pot = CouplingPotential(1.0, Q)
            mean += wi * Q
        items.append((float(wi), pot))
    return FiniteEnsemble(tuple(items), mean)


def test_criterion_01_propagator_order():
    rng = np.random.default_rng(1)
    H0, H1, H2 = (random_hermitian(4, rng) for _ in range(3))
    H = lambda t: H0 + np.sin(1.3 * t) * H1 + np.cos(0.7 * t) ** 2 * H2
    T, n = 2.0, 64
    ref = evolve_unitary(H, TimeGrid(T / (64 * 2 * n), 64 * 2 * n)).final
    coarse = evolve_unitary(H, TimeGrid(T / n, n))
    fine = evolve_unitary(H, TimeGrid(T / (2 * n), 2 * n))
    ratio = np.linalg.norm(coarse.final - ref) / np.linalg.norm(fine.final - ref)
    long = evolve_unitary(H, TimeGrid(0.01, 4096))
    k = np.maximum(np.arange(4097), 1)
    drift = float(np.max(unitarity_defect(long) / k))
    ok = 3.5 <= ratio <= 4.5 and drift <= 1e-12
    report(1, ok, "propagator order", f"halving ratio {ratio:.4f} in [3.5, 4.5], drift/step {drift:.2e} <= 1e-12")
    assert ok


def test_criterion_02_duality():
    rng = np.random.default_rng(2)
    worst = 0.0
    for trial in range(20):
        d = int(rng.integers(2, 6))
        if trial % 3 == 2:
            modes = ((0.3, 1.1, random_hermitian(d, rng)),)
            Vbar = random_hermitian(d, rng, 0.3)
            ens = SampledEnsemble("fourier", {"vbar": Vbar, "modes": modes}, Vbar, trial)
        else:
            ens = random_finite_ensemble(d, rng, time_dependent=trial % 3 == 1)
        spec = SystemSpec(random_hermitian(d, rng), ens, 1.0)
        rho0, A = random_density(d, rng), random_hermitian(d, rng)
        grid = TimeGrid(0.02, 100)
        lhs = mean_state(spec, rho0, grid, n_configs=8).expectation(A)
        rhs = np.einsum("ij,kji->k", rho0, mean_observable(spec, A, grid, n_configs=8))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    ok = worst <= 1e-10
    report(2, ok, "Schroedinger/Heisenberg duality", f"max |Tr(rho(t)A) - Tr(rho A(t))| = {worst:.2e} <= 1e-10 over 20 triples")
    assert ok


def test_criterion_03_stationarity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(5):
        d = int(rng.integers(2, 8))
        H0, V = random_hermitian(d, rng), random_hermitian(d, rng)
        beta = rng.uniform(0.1, 5)
        spec = SystemSpec(H0, deterministic_ensemble(V), beta)
        sigma = adjusted_equilibrium(H0, V, beta)
        T = 50 / np.linalg.norm(H0 + V, 2)
        traj = mean_state(spec, sigma, TimeGrid(T / 2000, 2000))
        worst = max(worst, float(np.max(np.linalg.norm(traj.states - sigma, axis=(1, 2)))))
    ok = worst <= 1e-9
    report(3, ok, "stationarity of the adjusted equilibrium", f"max ||rho(t) - sigma'|| = {worst:.2e} <= 1e-9")
    assert ok


def test_criterion_04_residual():
    spec = SystemSpec(Z, symmetric_pair(0.5, X), 1.0)
    rho0 = pure_state([1, 1])
    res = {}
    for dt in (2e-3, 1e-3):
        grid = TimeGrid(dt, int(round(2 / dt)))
        res[dt] = float(np.max(mean_dynamics_residual(spec, *mean_and_deviation(spec, rho0, grid))))
    ratio = res[2e-3] / res[1e-3]
    ok = 3.5 <= ratio <= 4.5 and res[1e-3] <= 1e-4
    report(4, ok, "mean-dynamics residual", f"residual {res[1e-3]:.2e} <= 1e-4 at dt=1e-3, halving ratio {ratio:.4f}")
    assert ok


def test_criterion_05_eta_decomposition():
    rng = np.random.default_rng(5)
    worst = 0.0
    cases = [SystemSpec(Z, symmetric_pair(0.5, X), 1.0)]
    for _ in range(6):
        d = int(rng.integers(2, 5))
        cases.append(SystemSpec(random_hermitian(d, rng), random_finite_ensemble(d, rng), 1.0))
    for spec in cases:
        d = spec.dim
        Vbar = spec.ensemble.declared_mean
        dH = max(np.linalg.norm(p.at(0.0) - Vbar, 2) for _, p in spec.ensemble.items)
        for dt in (1e-2, 5e-3):
            grid = TimeGrid(dt, int(round(3 / dt)))
            mean, dev = mean_and_deviation(spec, random_density(d, rng), grid)
            err = eta_decomposition_error(spec, mean, dev)[1:]
            bound = 5 * dt**2 * grid.times[1:] * dH**2
            worst = max(worst, float(np.max(err / bound)))
    ok = worst <= 1.0
    report(5, ok, "eta decomposition", f"max error / (5 dt^2 t ||dH||^2) = {worst:.3f} <= 1")
    assert ok


def test_criterion_06_delta_at_zero():
    rng = np.random.default_rng(6)
    grid = TimeGrid(0.01, 300)
    specs = [
        SystemSpec(Z, symmetric_pair(0.5, X), 1.0),
        SystemSpec(random_hermitian(3, rng), random_finite_ensemble(3, rng), 0.7),
        SystemSpec(Z, SampledEnsemble("coupling", {"mean": 0.1, "std": 0.4, "Q": X}, 0.1 * X, 4), 2.0),
    ]
    worst = 0.0
    for spec in specs:
        d = spec.dim
        A, B = random_hermitian(d, rng), random_hermitian(d, rng)
        sigma = adjusted_equilibrium(spec.H0, spec.ensemble.declared_mean, spec.beta)
        dev = deviation_term(spec, sigma, grid, n_configs=50)
        worst = max(worst, float(np.max(np.abs(delta_term(spec, A, B, dev, grid.times, 0.0)))))
    ok = worst <= 1e-14
    report(6, ok, "extra term vanishes at t'=0", f"max |Delta(t, 0)| = {worst:.2e} <= 1e-14")
    assert ok


def test_criterion_07_modified_kubo():
    spec = SystemSpec(Z, symmetric_pair(0.5, X), 1.0)
    errors = []
    for dt, eps in ((1e-3, 1e-3), (5e-4, 5e-4)):
        rep = kubo_check(spec, TimeGrid(dt, int(round(1.5 / dt))), X, X, 0.5, epsilon=eps)
        errors.append(rep)
    e1, e2 = errors[0].max_error, errors[1].max_error
    shrinks = e2 < e1 / 3
    ok = e1 <= 1e-3 and shrinks
    detail = (
        f"|R_fd - 2i theta (C^- + Delta)| = {e1:.3e} (limit 1e-3), refined {e2:.3e}; "
        f"max |Delta| = {np.max(np.abs(errors[0].delta)):.3e}; "
        f"R_fd vs exact first-order response {errors[0].first_order_error:.1e}; "
        f"fitted factor on C^- {errors[0].fitted_factor:.4f}"
    )
    report(7, ok, "modified Kubo formula", detail)
    assert ok


def test_criterion_08_kms():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 9))
        A, B, H = (random_hermitian(d, rng) for _ in range(3))
        rep = kms_check(A, B, H, rng.uniform(0.1, 10), rng.uniform(-5, 5))
        worst = max(worst, rep.abs_error / rep.scale)
    ok = worst <= 1e-10
    report(8, ok, "KMS condition", f"max |C_AB(t) - C_BA(-t - i beta)| / scale = {worst:.2e} <= 1e-10")
    assert ok


def test_criterion_09_spectral_identities():
    rng = np.random.default_rng(9)
    worst_a = worst_f = worst_zero = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 9))
        A, B, H = (random_hermitian(d, rng) for _ in range(3))
        rep = line_ratios(line_table(A, B, H, rng.uniform(0.1, 10)))
        a, f = rep.max_errors()
        worst_a, worst_f = max(worst_a, a), max(worst_f, f)
        worst_zero = max(worst_zero, rep.zero_line_response)
    worst_w = worst_wf = 0.0
    for _ in range(10):
        d = int(rng.integers(2, 5))
        A, B, H = (random_hermitian(d, rng) for _ in range(3))
        chk = windowed_line_check(A, B, H, rng.uniform(0.2, 3.0), gamma_factor=0.05)
        worst_w, worst_wf = max(worst_w, chk.max_weight_error), max(worst_wf, chk.fdr_rel_error)
    ok = worst_a <= 1e-10 and worst_f <= 1e-10 and worst_zero <= 1e-14 and worst_w <= 0.05 and worst_wf <= 0.05
    report(
        9,
        ok,
        "spectral identities",
        f"line ratio errors {worst_a:.1e}, {worst_f:.1e} <= 1e-10; windowed weights {worst_w:.1e}, "
        f"windowed tanh ratio {worst_wf:.1e} <= 0.05",
    )
    assert ok


def test_criterion_10_entropy_margin():
    rng = np.random.default_rng(10)
    worst = 0.0
    for trial in range(8):
        d = int(rng.integers(2, 5))
        spec = SystemSpec(random_hermitian(d, rng), random_finite_ensemble(d, rng, time_dependent=trial % 2 == 1), 1.0)
        rho0 = random_density(d, rng, rank=1 + trial % d)
        worst = min(worst, float(np.min(entropy_margin(mean_state(spec, rho0, TimeGrid(0.02, 300))))))
    cfg = load_config("qubit_dephasing")
    peak = float(np.max(entropy_margin(mean_state(cfg.spec, cfg.rho0, cfg.grid))))
    ok = worst >= -1e-8 and peak > 0.01
    report(10, ok, "entropy margin", f"min margin {worst:.2e} >= -1e-8, qubit_dephasing peak {peak:.4f} > 0.01 nats")
    assert ok


def test_criterion_11_dissipativity():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(2, 9))
        rho, dH = random_hermitian(d, rng), random_hermitian(d, rng)
        scale = np.linalg.norm(rho) ** 2 * np.linalg.norm(dH)
        worst = max(worst, dissipativity_identity_check(rho, dH) / scale)
    ok = worst <= 1e-12
    report(11, ok, "dissipativity identity", f"max |Tr(rho [dH, rho])| / scale = {worst:.2e} <= 1e-12")
    assert ok


@pytest.mark.parametrize("name", ["coupling_family"])
def test_criterion_12_reproducibility(tmp_path, name):
    outputs = []
    for threads in ("1", "4"):
        out = tmp_path / f"t{threads}"
        code = cli.main(["evolve", "--config", name, "--out", str(out), "--threads", threads])
        assert code == 0
        outputs.append(json.loads((out / "manifest.json").read_text())["outputs"])
    ok = outputs[0] == outputs[1] and len(outputs[0]) >= 4
    report(12, ok, "reproducibility", f"{name}: {len(outputs[0])} output checksums identical across --threads 1 and 4")
    assert ok
