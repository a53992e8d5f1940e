"""Probe-perturbed mean dynamics, linear response, correlations and FDR checks.

Conventions
-----------
* Heisenberg evolution under the mean Hamiltonian: X(z) = exp(izH) X exp(-izH),
  evaluated in the eigenbasis of H, so complex z is exact.
* The probe enters each configuration as H_omega(t) - h(t) B.
* Heaviside theta(0) = 1.
* Bohr lines of a correlation sum_jk p_j A_jk B_kj exp(it(E_j - E_k)) are
  labelled by lam = E_k - E_j, the frequency at which the weight ratios
  antisym/plain = 1 - exp(-beta lam) and response/sym = tanh(beta lam / 2)
  hold line by line.  The response weight of a line is its antisymmetric
  weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import adjusted_equilibrium
from .linalg import SpectralDecomposition, as_matrix, dagger, hermitian, hermitian_eig
from .mean_dynamics import (
    BathField,
    DeviationSeries,
    MeanTrajectory,
    _deviation_integral,
    config_unitaries,
    deviation_term,
    mean_state,
    mean_propagate,
    resolve_configurations,
)
from .model import SystemSpec, mean_hamiltonian
from .propagator import TimeGrid

SQRT_2PI = np.sqrt(2 * np.pi)
MERGE_TOL = 1e-9
WEAK_LINE = 1e-3
PROFILES = ("impulse", "step", "zero")


def heaviside(x):
    return np.where(np.asarray(x) >= 0, 1.0, 0.0)


@dataclass(frozen=True)
class BathCoupling:
    """Probe h_B(t) B.

    ``impulse`` puts weight epsilon on the single grid step starting at t'
    (h = epsilon / dt there), ``step`` is h = epsilon for t >= t', ``zero``
    switches the probe off.
    """

    B: np.ndarray
    profile: str = "impulse"
    epsilon: float = 1e-3
    t_prime: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "B", hermitian(self.B, name="B"))
        if self.profile not in PROFILES:
            raise ValueError(f"unknown probe profile {self.profile!r}")
        if not np.isfinite(self.epsilon):
            raise ValueError("epsilon must be finite")
        if self.t_prime < 0:
            raise ValueError("t_prime must be non-negative")

    def field(self, grid: TimeGrid) -> BathField:
        j = grid.index_of(self.t_prime)
        h = np.zeros(grid.n_steps)
        if self.profile == "impulse":
            if j >= grid.n_steps:
                raise ValueError("impulse time must leave at least one step on the grid")
            h[j] = self.epsilon / grid.dt
        elif self.profile == "step":
            h[j:] = self.epsilon
        return BathField(self.B, h)


def perturbed_mean_state(
    spec: SystemSpec,
    rho0,
    grid: TimeGrid,
    coupling: BathCoupling,
    n_configs: int = 1,
    master_seed: int | None = None,
    *,
    threads: int = 1,
) -> MeanTrajectory:
    """Mean state with every configuration propagated under H_omega(t) - h_B(t) B."""
    return mean_state(
        spec, rho0, grid, n_configs, master_seed, threads=threads, bath=coupling.field(grid), retain=False
    )


@dataclass(frozen=True)
class ResponseSeries:
    grid: TimeGrid
    values: np.ndarray
    t_prime_index: int
    epsilon: float

    @property
    def t_prime_effective(self) -> float:
        """Centroid of the impulse, where the kick acts to O(dt^2)."""
        return (self.t_prime_index + 0.5) * self.grid.dt


def default_epsilon(B) -> float:
    return 1e-3 / np.linalg.norm(as_matrix(B), ord=2)


def response_function(
    spec: SystemSpec,
    rho0,
    grid: TimeGrid,
    A,
    B,
    t_prime: float,
    epsilon: float | None = None,
    n_configs: int = 1,
    master_seed: int | None = None,
    *,
    threads: int = 1,
) -> ResponseSeries:
    """Central difference [<A>(+eps impulse) - <A>(-eps impulse)] / (2 eps).

    The value at t_k approximates R(t_k, t') with t' the impulse centroid
    t_j + dt/2.
    """
    epsilon = default_epsilon(B) if epsilon is None else epsilon
    if epsilon == 0:
        raise ValueError("epsilon must be non-zero")
    A = as_matrix(A)
    runs = []
    for sign in (1.0, -1.0):
        coupling = BathCoupling(B, "impulse", sign * epsilon, t_prime)
        traj = perturbed_mean_state(spec, rho0, grid, coupling, n_configs, master_seed, threads=threads)
        runs.append(traj.expectation(A))
    return ResponseSeries(grid, (runs[0] - runs[1]) / (2 * epsilon), grid.index_of(t_prime), epsilon)


def response_linearity(
    spec: SystemSpec, rho0, grid: TimeGrid, A, B, t_prime: float, epsilon: float | None = None, **kw
) -> float:
    """max_k |R_eps - R_{eps/2}|, the Richardson estimate of the O(eps^2) error times 3/4."""
    epsilon = default_epsilon(B) if epsilon is None else epsilon
    r1 = response_function(spec, rho0, grid, A, B, t_prime, epsilon, **kw).values
    r2 = response_function(spec, rho0, grid, A, B, t_prime, epsilon / 2, **kw).values
    return float(np.max(np.abs(r1 - r2)))


def first_order_response(
    spec: SystemSpec, rho0, grid: TimeGrid, A, B, t_prime_index: int, n_configs: int = 1, master_seed=None
) -> np.ndarray:
    """First-order Dyson term i sum_w w Tr(A U_w(t,t')[B, rho_w(t')] U_w(t,t')^dagger).

    Averaged over t' in {t_j, t_{j+1}} to match the centroid of a one-step
    impulse; zero for t_k <= t_j.  Independent of the finite-difference path.
    """
    A, B, rho0 = as_matrix(A), as_matrix(B), as_matrix(rho0)
    j = t_prime_index
    out = np.zeros(grid.n_steps + 1, dtype=complex)
    for config in resolve_configurations(spec, n_configs, master_seed):
        U = config_unitaries(spec, config, grid)
        for jj in (j, j + 1):
            Uj = U[jj]
            rho_j = Uj @ rho0 @ dagger(Uj)
            kick = B @ rho_j - rho_j @ B
            prop = U[j + 1 :] @ dagger(Uj)[None]
            moved = prop @ kick @ dagger(prop)
            out[j + 1 :] += 0.5 * config.weight * 1j * np.einsum("kij,ji->k", moved, A)
    return out


# ---------------------------------------------------------------- correlations


def _eig(Hbar) -> SpectralDecomposition:
    return Hbar if isinstance(Hbar, SpectralDecomposition) else hermitian_eig(Hbar)


def heisenberg(X, Hbar, z) -> np.ndarray:
    """exp(izH) X exp(-izH) for complex z (scalar or 1-d array)."""
    eig = _eig(Hbar)
    U = eig.eigenvectors
    return U @ _heis_eigen(X, eig, z) @ dagger(U)


def correlation(A, B, Hbar, sigma, t, t_prime=0.0, kind: str = "plain"):
    """Tr(sigma A(t) B(t')) and its commutator / anticommutator variants.

    ``t`` may be complex and may be an array; kind is plain, antisym or sym.
    A 1-d ``sigma`` is read as populations in the eigenbasis of Hbar; use that
    form for complex times, where exp(beta dE) growth would amplify the
    roundoff left in the off-diagonal of a rotated matrix.
    """
    eig = _eig(Hbar)
    U = eig.eigenvectors
    sigma = np.asarray(sigma)
    s = np.diag(sigma.astype(complex)) if sigma.ndim == 1 else dagger(U) @ as_matrix(sigma) @ U
    At = _heis_eigen(A, eig, t)
    Bt = _heis_eigen(B, eig, t_prime)
    ab = np.einsum("ij,...jk,...ki->...", s, At, Bt)
    if kind == "plain":
        return ab
    ba = np.einsum("ij,...jk,...ki->...", s, Bt, At)
    if kind == "antisym":
        return ab - ba
    if kind == "sym":
        return ab + ba
    raise ValueError(f"unknown correlation kind {kind!r}")


def _heis_eigen(X, eig: SpectralDecomposition, z) -> np.ndarray:
    Xt = eig.to_eigenbasis(as_matrix(X))
    z = np.asarray(z, dtype=complex)
    return Xt * np.exp(1j * z[..., None, None] * eig.bohr_frequencies())


def correlation_sym(A, B, Hbar, sigma, t, t_prime=0.0):
    return correlation(A, B, Hbar, sigma, t, t_prime, "sym")


def correlation_antisym(A, B, Hbar, sigma, t, t_prime=0.0):
    return correlation(A, B, Hbar, sigma, t, t_prime, "antisym")


# ------------------------------------------------------------------ extra term


def _deviation_integral_at(Hbar, dev: DeviationSeries, t_prime: float) -> np.ndarray:
    """int_0^{t'} exp(-i(t'-s)L) C_s ds for any t' in the grid range.

    Grid values come from the cumulative trapezoid; a fractional last step
    uses linear interpolation of C, keeping the rule second order.
    """
    grid = dev.grid
    if not -1e-12 <= t_prime <= grid.t_final + 1e-12:
        raise ValueError(f"t_prime {t_prime!r} outside the grid")
    J = _deviation_integral(Hbar, dev)
    x = t_prime / grid.dt
    j = int(np.floor(x + 1e-9))
    frac = x - j
    if j >= grid.n_steps or abs(frac) < 1e-9:
        return J[min(j, grid.n_steps)]
    h = frac * grid.dt
    C_end = (1 - frac) * dev.values[j] + frac * dev.values[j + 1]
    back = mean_propagate(Hbar, J[j] + 0.5 * h * dev.values[j], [h])[0]
    return back + 0.5 * h * C_end


def delta_term(spec: SystemSpec, A, B, dev: DeviationSeries, t, t_prime: float):
    """Extra Kubo term (1/2) Tr[(int_0^{t'} e^{-i(t-t')L}[B, e^{-i(t'-s)L} C_s] ds) A].

    ``dev`` must be the deviation series of sigma'_beta.  ``t`` may be an array;
    every t must satisfy t >= t'.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < t_prime - 1e-12):
        raise ValueError("delta_term needs t >= t_prime")
    if t_prime == 0:
        return np.zeros(t.shape, dtype=complex)
    Hbar = mean_hamiltonian(spec)
    A, B = as_matrix(A), as_matrix(B)
    J = _deviation_integral_at(Hbar, dev, t_prime)
    inner = B @ J - J @ B
    moved = mean_propagate(Hbar, inner, np.atleast_1d(t - t_prime))
    vals = 0.5 * np.einsum("kij,ji->k", moved, A)
    return vals.reshape(t.shape)


# ------------------------------------------------------------------ Kubo check


@dataclass(frozen=True)
class KuboReport:
    """Finite-difference response against 2i theta(t-t') [C^-(t,t') + Delta(t,t')].

    ``first_order`` is the exact first-order perturbative response (no
    mean-field step).  ``delta`` is the extra term at the impulse centroid,
    as used in ``rhs``; ``delta_at_t_prime`` is the same term at the nominal
    t' (zero for t < t').  ``fitted_factor`` is the complex constant c that best
    fits lhs = c theta C^- ; the closed form asserts c = 2i.
    """

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    delta: np.ndarray
    antisym: np.ndarray
    first_order: np.ndarray
    delta_at_t_prime: np.ndarray
    t_prime_effective: float
    fitted_factor: complex
    tolerance: float

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    @property
    def max_error(self) -> float:
        return float(self.abs_error.max())

    @property
    def first_order_error(self) -> float:
        return float(np.max(np.abs(self.lhs - self.first_order)))

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def at(self, t: float) -> dict:
        k = int(np.argmin(np.abs(self.times - t)))
        return {"lhs": self.lhs[k], "rhs": self.rhs[k], "abs_error": float(self.abs_error[k])}


def kubo_check(
    spec: SystemSpec,
    grid: TimeGrid,
    A,
    B,
    t_prime: float,
    epsilon: float | None = None,
    n_configs: int = 1,
    master_seed: int | None = None,
    *,
    threads: int = 1,
    tolerance: float = 1e-3,
) -> KuboReport:
    """Compare the finite-difference response with the modified Kubo formula.

    Starts from sigma'_beta.  The right-hand side is evaluated at the impulse
    centroid t' + dt/2, so theta(t_k - t') is 0 up to t_j and 1 afterwards.
    """
    Hbar = mean_hamiltonian(spec)
    sigma = adjusted_equilibrium(spec.H0, spec.ensemble.declared_mean, spec.beta)
    resp = response_function(spec, sigma, grid, A, B, t_prime, epsilon, n_configs, master_seed, threads=threads)
    tc = resp.t_prime_effective
    times = grid.times
    after = times > tc
    dev = deviation_term(spec, sigma, grid, n_configs, master_seed, threads=threads)
    cm = np.zeros(len(times), dtype=complex)
    cm[after] = correlation(A, B, Hbar, sigma, times[after], tc, "antisym")
    delta = np.zeros(len(times), dtype=complex)
    delta[after] = delta_term(spec, A, B, dev, times[after], tc)
    rhs = 2j * heaviside(times - tc) * (cm + delta)
    nominal = np.zeros(len(times), dtype=complex)
    on = times >= t_prime
    nominal[on] = delta_term(spec, A, B, dev, times[on], t_prime)
    first = first_order_response(spec, sigma, grid, A, B, resp.t_prime_index, n_configs, master_seed)
    denom = np.vdot(cm, cm)
    fitted = complex(np.vdot(cm, resp.values) / denom) if denom > 0 else complex("nan")
    return KuboReport(times, resp.values, rhs, delta, cm, first, nominal, tc, fitted, tolerance)


# ------------------------------------------------------------------ KMS check


@dataclass(frozen=True)
class KMSReport:
    lhs: complex
    rhs: complex
    abs_error: float
    scale: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.abs_error <= self.tolerance * self.scale


def kms_check(A, B, Hbar, beta: float, t: float, tolerance: float = 1e-8) -> KMSReport:
    """C_AB(t) against C_BA(-t - i beta) in the Gibbs state of Hbar."""
    A, B = as_matrix(A), as_matrix(B)
    eig = hermitian_eig(Hbar)
    p = np.exp(-beta * (eig.eigenvalues - eig.eigenvalues.min()))
    p /= p.sum()
    lhs = complex(correlation(A, B, eig, p, t, 0.0))
    rhs = complex(correlation(B, A, eig, p, -t - 1j * beta, 0.0))
    scale = max(1.0, float(np.linalg.norm(A, 2) * np.linalg.norm(B, 2)))
    return KMSReport(lhs, rhs, abs(lhs - rhs), scale, tolerance)


# -------------------------------------------------------------- line spectra

KINDS = ("plain", "sym", "antisym", "response")


@dataclass(frozen=True)
class SpectralLineSeries:
    frequencies: np.ndarray
    weights: np.ndarray
    beta: float
    kind: str = "plain"

    def __len__(self) -> int:
        return len(self.frequencies)


@dataclass(frozen=True)
class LineTable:
    """All four weight kinds on a common set of merged Bohr lines."""

    frequencies: np.ndarray
    plain: np.ndarray
    sym: np.ndarray
    antisym: np.ndarray
    response: np.ndarray
    multiplicity: np.ndarray
    beta: float

    def series(self, kind: str) -> SpectralLineSeries:
        if kind not in KINDS:
            raise ValueError(f"unknown line kind {kind!r}")
        return SpectralLineSeries(self.frequencies, getattr(self, kind), self.beta, kind)


def _merge(freqs: np.ndarray, columns: list[np.ndarray], tol: float):
    order = np.argsort(freqs, kind="stable")
    freqs = freqs[order]
    columns = [c[order] for c in columns]
    starts = np.concatenate(([True], np.diff(freqs) > tol))
    group = np.cumsum(starts) - 1
    n = group[-1] + 1 if len(group) else 0
    counts = np.bincount(group, minlength=n)
    merged_f = np.bincount(group, weights=freqs, minlength=n) / counts
    merged = [np.zeros(n, dtype=complex) for _ in columns]
    for m, c in zip(merged, columns):
        np.add.at(m, group, c)
    return merged_f, merged, counts


def line_table(A, B, Hbar, beta: float, merge_tol: float = MERGE_TOL) -> LineTable:
    """Exact Bohr-line weights of the plain, sym, antisym and response correlations."""
    A, B = as_matrix(A), as_matrix(B)
    eig = hermitian_eig(Hbar)
    E = eig.eigenvalues
    p = np.exp(-beta * (E - E.min()))
    p /= p.sum()
    At, Bt = eig.to_eigenbasis(A), eig.to_eigenbasis(B)
    prod = At * Bt.T  # A_jk B_kj
    pj = np.broadcast_to(p[:, None], prod.shape)
    pk = np.broadcast_to(p[None, :], prod.shape)
    lam = (E[None, :] - E[:, None]).ravel()  # E_k - E_j
    plain = (SQRT_2PI * pj * prod).ravel()
    sym = (SQRT_2PI * (pj + pk) * prod).ravel()
    anti = (SQRT_2PI * (pj - pk) * prod).ravel()
    freqs, (plain, sym, anti), counts = _merge(lam, [plain, sym, anti], merge_tol)
    scale = SQRT_2PI * max(np.linalg.norm(A, 2) * np.linalg.norm(B, 2), 1e-300)
    keep = (np.abs(plain) > 1e-15 * scale) | (np.abs(sym) > 1e-15 * scale)
    return LineTable(freqs[keep], plain[keep], sym[keep], anti[keep], anti[keep].copy(), counts[keep], beta)


def line_spectrum(A, B, Hbar, beta: float, kind: str = "plain") -> SpectralLineSeries:
    return line_table(A, B, Hbar, beta).series(kind)


@dataclass(frozen=True)
class LineRatioReport:
    frequencies: np.ndarray
    antisym_ratio: np.ndarray
    antisym_expected: np.ndarray
    fdr_ratio: np.ndarray
    fdr_expected: np.ndarray
    antisym_rel_error: np.ndarray
    fdr_rel_error: np.ndarray
    zero_line_response: float

    def max_errors(self) -> tuple[float, float]:
        a = np.nanmax(self.antisym_rel_error) if np.any(np.isfinite(self.antisym_rel_error)) else 0.0
        f = np.nanmax(self.fdr_rel_error) if np.any(np.isfinite(self.fdr_rel_error)) else 0.0
        return float(a), float(f)


def line_ratios(table: LineTable, zero_tol: float = MERGE_TOL) -> LineRatioReport:
    """Per-line antisym/plain vs 1 - exp(-beta lam) and response/sym vs tanh(beta lam/2).

    Ratios are NaN where the denominator weight vanishes; lam = 0 lines are
    excluded from the tanh check and their largest |response weight| is
    reported separately.
    """
    lam, beta = table.frequencies, table.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        scale_p = np.abs(table.plain).max() if len(lam) else 1.0
        scale_s = np.abs(table.sym).max() if len(lam) else 1.0
        ok_p = np.abs(table.plain) > 1e-12 * scale_p
        ok_s = (np.abs(table.sym) > 1e-12 * scale_s) & (np.abs(lam) > zero_tol)
        r_a = np.where(ok_p, table.antisym / table.plain, np.nan)
        r_f = np.where(ok_s, table.response / table.sym, np.nan)
        e_a = -np.expm1(-beta * lam)
        e_f = np.tanh(beta * lam / 2)
        err_a = np.where(ok_p, np.abs(r_a - e_a) / np.maximum(np.abs(e_a), 1e-300), np.nan)
        err_a = np.where(ok_p & (np.abs(lam) <= zero_tol), np.abs(r_a - e_a), err_a)
        err_f = np.where(ok_s, np.abs(r_f - e_f) / np.abs(e_f), np.nan)
    zero = np.abs(lam) <= zero_tol
    zero_resp = float(np.abs(table.response[zero]).max()) if np.any(zero) else 0.0
    return LineRatioReport(lam, r_a, e_a, r_f, e_f, err_a, err_f, zero_resp)


# --------------------------------------------------------- windowed transforms


def windowed_fourier(values, dt: float, lambdas, gamma: float = 0.0) -> np.ndarray:
    """(1/sqrt(2 pi)) int_0^T exp(-i t lam) exp(-gamma t) g(t) dt by the trapezoid rule.

    ``values`` are samples of g on t_k = k dt, k = 0..n.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    g = np.asarray(values, dtype=complex)
    t = np.arange(len(g)) * dt
    w = np.full(len(g), dt)
    w[0] = w[-1] = dt / 2
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    weighted = w * np.exp(-gamma * t) * g
    out = np.empty(len(lambdas), dtype=complex)
    for start in range(0, len(lambdas), 64):
        chunk = lambdas[start : start + 64]
        out[start : start + 64] = np.exp(-1j * np.outer(chunk, t)) @ weighted
    return out / SQRT_2PI


def window_kernel(x, gamma: float, T: float) -> np.ndarray:
    """One-sided damped transform of exp(i x0 t) evaluated at detuning x = lam - x0."""
    s = gamma + 1j * np.asarray(x, dtype=float)
    return (1 - np.exp(-s * T)) / (s * SQRT_2PI)


def fit_line_weights(spectrum, line_frequencies, gamma: float, T: float) -> np.ndarray:
    """Recover line weights from a windowed spectrum sampled at the transform peaks.

    A line at label lam oscillates as exp(-i lam t), so its windowed peak sits
    at -lam; solving the kernel system removes the overlap of neighbouring
    Lorentzians.
    """
    lam = np.asarray(line_frequencies, dtype=float)
    # sample at -lam_a; line b contributes w_b K(-lam_a + lam_b)
    M = window_kernel(lam[None, :] - lam[:, None], gamma, T)
    return np.linalg.solve(M, np.asarray(spectrum)) * SQRT_2PI


@dataclass(frozen=True)
class WindowedCheck:
    frequencies: np.ndarray
    gamma: float
    T: float
    spectra: dict  # kind -> windowed values at the peaks -lam
    recovered: dict  # kind -> fitted weights
    exact: dict
    weight_rel_error: dict
    fdr_ratio: np.ndarray
    fdr_expected: np.ndarray
    fdr_rel_error: float

    @property
    def max_weight_error(self) -> float:
        return max(self.weight_rel_error.values())


def minimum_level_gap(Hbar) -> float:
    E = hermitian_eig(Hbar).eigenvalues
    gaps = np.diff(E)
    gaps = gaps[gaps > MERGE_TOL]
    return float(gaps.min()) if len(gaps) else 1.0


def windowed_line_check(A, B, Hbar, beta: float, gamma_factor: float = 0.05, points_per_period: int = 200) -> WindowedCheck:
    """Cross-check exact line weights against damped finite-window transforms.

    Time series of the plain, sym and antisym correlations (t' = 0) are
    transformed with gamma = gamma_factor * (minimum level gap) over
    T = 20 / gamma.  Line weights recovered from those spectra are compared
    with the exact table, and response/sym is compared with tanh(beta lam / 2)
    using the recovered antisym weights as the response weights.  Lines with
    sym weight below WEAK_LINE times the largest are left out of the ratio,
    which quadrature error would dominate there.
    """
    eig = hermitian_eig(Hbar)
    sigma = adjusted_equilibrium(Hbar, np.zeros_like(as_matrix(Hbar)), beta)
    table = line_table(A, B, Hbar, beta)
    gamma = gamma_factor * minimum_level_gap(Hbar)
    T = 20.0 / gamma
    fmax = max(float(np.abs(table.frequencies).max()) if len(table.frequencies) else 0.0, gamma, 1e-12)
    dt = 2 * np.pi / (points_per_period * fmax)
    n = int(np.ceil(T / dt))
    dt = T / n
    times = np.arange(n + 1) * dt
    lam = table.frequencies
    spectra, recovered, exact, errs = {}, {}, {}, {}
    for kind in ("plain", "sym", "antisym"):
        series = correlation(A, B, eig, sigma, times, 0.0, kind)
        spec_vals = windowed_fourier(series, dt, -lam, gamma)
        w_fit = fit_line_weights(spec_vals, lam, gamma, T)
        w_true = getattr(table, kind)
        ref = max(np.abs(w_true).max(), 1e-300)
        spectra[kind], recovered[kind], exact[kind] = spec_vals, w_fit, w_true
        errs[kind] = float(np.max(np.abs(w_fit - w_true)) / ref)
    nonzero = (np.abs(lam) > MERGE_TOL) & (np.abs(table.sym) > WEAK_LINE * max(np.abs(table.sym).max(), 1e-300))
    ratio = recovered["antisym"][nonzero] / recovered["sym"][nonzero]
    expected = np.tanh(beta * lam[nonzero] / 2)
    fdr_err = float(np.max(np.abs(ratio - expected) / np.abs(expected))) if np.any(nonzero) else 0.0
    return WindowedCheck(lam, gamma, T, spectra, recovered, exact, errs, ratio, expected, fdr_err)
