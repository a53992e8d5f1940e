import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdrlab.equilibrium import gibbs_state
from fdrlab.linalg import PAULI_X, PAULI_Z, random_hermitian
from fdrlab.response import (
    SQRT_2PI,
    kms_check,
    line_ratios,
    line_spectrum,
    line_table,
    minimum_level_gap,
    windowed_fourier,
    windowed_line_check,
)


def kms_oracle(A, B, H, beta, z):
    """sum_jk p_j X_jk Y_kj exp(i z (E_j - E_k)) in the eigenbasis, written out as loops."""
    E, V = np.linalg.eigh(H)
    p = np.exp(-beta * (E - E.min()))
    p /= p.sum()
    Ae, Be = V.conj().T @ A @ V, V.conj().T @ B @ V
    total = 0j
    for j in range(len(E)):
        for k in range(len(E)):
            total += p[j] * Ae[j, k] * Be[k, j] * np.exp(1j * z * (E[j] - E[k]))
    return total


def test_kms_fixed_instance(rng):
    A, B, H = (random_hermitian(3, rng) for _ in range(3))
    rep = kms_check(A, B, H, 0.7, 1.3)
    assert abs(rep.lhs - kms_oracle(A, B, H, 0.7, 1.3)) <= 1e-12
    # C_BA(-t - i beta) = sum p_j B_jk A_kj exp(i(-t - i beta)(E_j - E_k))
    assert abs(rep.rhs - kms_oracle(B, A, H, 0.7, -1.3 - 0.7j)) <= 1e-12
    assert rep.abs_error <= 1e-10


def test_kms_trivial(rng):
    H, A = random_hermitian(4, rng), random_hermitian(4, rng)
    assert kms_check(np.eye(4), np.eye(4), H, 2.0, 0.3).abs_error <= 1e-14
    rep = kms_check(A, A, H, 1.5, 0.0)
    assert abs(rep.lhs - np.trace(gibbs_state(H, 1.5) @ A @ A)) <= 1e-12
    assert rep.passed


def test_kms_random_instances(rng):
    for _ in range(100):
        d = int(rng.integers(2, 9))
        A, B, H = (random_hermitian(d, rng) for _ in range(3))
        rep = kms_check(A, B, H, rng.uniform(0.1, 10), rng.uniform(-5, 5))
        assert rep.abs_error <= 1e-10 * rep.scale


def test_diagonal_operators_single_line():
    s = line_spectrum(PAULI_Z, PAULI_Z, PAULI_Z, 1.0)
    assert len(s) == 1 and s.frequencies[0] == 0.0
    assert np.isclose(s.weights[0], SQRT_2PI)


def test_qubit_lines():
    beta = 0.8
    table = line_table(PAULI_X, PAULI_X, PAULI_Z, beta)
    # E = (-1, 1); lines at E_k - E_j = +2 (j = 0) and -2 (j = 1)
    assert np.allclose(table.frequencies, [-2.0, 2.0])
    p = np.exp(beta * np.array([1.0, -1.0]))
    p /= p.sum()
    assert np.allclose(table.plain, SQRT_2PI * p[::-1])


def test_plain_weights_reproduce_correlation(rng):
    H, A, B = (random_hermitian(4, rng) for _ in range(3))
    table = line_table(A, B, H, 1.2)
    sigma = gibbs_state(H, 1.2)
    for t in (0.0, 0.9, -2.1):
        U = _u(H, t)
        direct = np.trace(sigma @ U.conj().T @ A @ U @ B)
        from_lines = np.sum(table.plain * np.exp(-1j * t * table.frequencies)) / SQRT_2PI
        assert abs(direct - from_lines) <= 1e-12


def _u(H, t):
    E, V = np.linalg.eigh(H)
    return V @ np.diag(np.exp(-1j * t * E)) @ V.conj().T


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 6), beta=st.floats(0.1, 5.0))
def test_line_ratio_identities(seed, d, beta):
    rng = np.random.default_rng(seed)
    A, B, H = (random_hermitian(d, rng) for _ in range(3))
    rep = line_ratios(line_table(A, B, H, beta))
    err_a, err_f = rep.max_errors()
    assert err_a <= 1e-10 and err_f <= 1e-10
    assert rep.zero_line_response <= 1e-14


def test_degenerate_lines_merged():
    H = np.diag([0.0, 1.0, 2.0])  # E_1 - E_0 = E_2 - E_1
    A = random_hermitian(3, np.random.default_rng(3))
    table = line_table(A, A, H, 1.0)
    assert len(np.unique(np.round(table.frequencies, 12))) == len(table.frequencies)
    assert table.multiplicity.max() >= 2
    assert line_ratios(table).max_errors()[1] <= 1e-10


def test_windowed_zero():
    assert np.all(windowed_fourier(np.zeros(50), 0.1, [0.0, 1.0], 0.2) == 0)
    with pytest.raises(ValueError):
        windowed_fourier(np.ones(5), 0.1, [0.0], -1.0)


def test_windowed_lorentzian():
    lam0, gamma = 1.3, 0.1
    T = 20 / gamma
    dt = 0.005
    t = np.arange(int(round(T / dt)) + 1) * dt
    lams = np.linspace(lam0 - 1, lam0 + 1, 41)
    got = windowed_fourier(np.exp(1j * lam0 * t), dt, lams, gamma)
    expected = 1 / (SQRT_2PI * (gamma + 1j * (lams - lam0)))
    assert np.max(np.abs(got - expected) / np.abs(expected)) <= 0.02


def test_minimum_level_gap():
    assert minimum_level_gap(np.diag([0.0, 0.3, 1.0, 1.0])) == pytest.approx(0.3)


def test_windowed_cross_check(rng):
    for _ in range(5):
        d = int(rng.integers(2, 5))
        A, B, H = (random_hermitian(d, rng) for _ in range(3))
        chk = windowed_line_check(A, B, H, rng.uniform(0.2, 3.0))
        assert chk.max_weight_error <= 0.05
        assert chk.fdr_rel_error <= 0.05
