import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entthermo.entropy import (
    FreeEnergyLedger,
    ThermoContext,
    block_free_energies,
    canonical_state,
    delta_F,
    erase_work,
    free_energy,
    measurement_work,
    relative_entropy,
    shannon_entropy,
    von_neumann_entropy,
)
from entthermo.qcore import MemoryLayout, random_state, random_unitary

# frozen scalar oracles
S_QUARTER = 0.5623351446188083   # -(0.25 ln 0.25 + 0.75 ln 0.75)
H_235 = 1.0296530140645737       # (0.2, 0.3, 0.5)
D_HALF_QUARTER = 0.14384103622589042  # 0.5 ln 2 + 0.5 ln(2/3)
Z_01 = 1.3678794411714423        # 1 + e^-1
F_01 = -0.31326168751822286


def test_scalar_oracles_are_what_they_claim():
    assert S_QUARTER == pytest.approx(-(0.25 * math.log(0.25) + 0.75 * math.log(0.75)), abs=1e-15)
    assert H_235 == pytest.approx(-sum(p * math.log(p) for p in (0.2, 0.3, 0.5)), abs=1e-15)
    assert D_HALF_QUARTER == pytest.approx(0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75), abs=1e-15)
    assert Z_01 == pytest.approx(1 + math.exp(-1), abs=1e-15)
    assert F_01 == pytest.approx(-math.log(1 + math.exp(-1)), abs=1e-15)


def test_von_neumann_entropy():
    assert von_neumann_entropy(np.diag([1.0, 0.0])) == 0.0
    assert von_neumann_entropy(np.eye(2) / 2) == pytest.approx(math.log(2), abs=1e-14)
    assert von_neumann_entropy(np.diag([0.25, 0.75])) == pytest.approx(S_QUARTER, abs=1e-14)
    assert round(von_neumann_entropy(np.diag([0.25, 0.75])), 6) == 0.562335


def test_shannon_entropy():
    assert shannon_entropy([1, 0]) == 0.0
    assert shannon_entropy([0.5, 0.5]) == pytest.approx(math.log(2))
    assert shannon_entropy([0.2, 0.3, 0.5]) == pytest.approx(H_235, abs=1e-14)
    with pytest.raises(ValueError):
        shannon_entropy([0.5, 0.6])


def test_relative_entropy():
    rho = random_state(3, 3, 1)
    assert relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-12)
    assert relative_entropy(np.eye(2) / 2, np.diag([0.25, 0.75])) == pytest.approx(D_HALF_QUARTER, abs=1e-14)
    assert relative_entropy(np.diag([1.0, 0]), np.diag([0, 1.0])) == math.inf


def test_relative_entropy_finite_on_contained_support():
    rho = np.diag([1.0, 0.0, 0.0])
    sigma = np.diag([0.5, 0.5, 0.0])
    assert relative_entropy(rho, sigma) == pytest.approx(math.log(2))


def test_canonical_state_examples():
    ctx = ThermoContext(1.0)
    rho, z, f = canonical_state(np.zeros((3, 3)), ThermoContext(2.0))
    assert np.allclose(rho, np.eye(3) / 3) and z == pytest.approx(3) and f == pytest.approx(-math.log(3) / 2)
    rho, z, f = canonical_state(np.diag([0.0, 1.0]), ctx)
    assert z == pytest.approx(Z_01, abs=1e-14) and f == pytest.approx(F_01, abs=1e-14)
    rho, _, _ = canonical_state(np.diag([0.0, 1.0]), ThermoContext(50.0))
    assert rho[1, 1].real < 1e-20 and rho[1, 1].real == pytest.approx(math.exp(-50) / (1 + math.exp(-50)), rel=1e-12)


def test_thermo_context_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        ThermoContext(0.0)


def test_measurement_work_examples():
    layout = MemoryLayout.trivial(1, 1)
    h_b = np.zeros((2, 2))
    init = np.kron(np.diag([1.0, 0]), np.eye(2) / 2)
    assert measurement_work([(1.0, init), (0.0, None)], layout, h_b, init) == 0.0
    layout = MemoryLayout.from_spectra([0.0, 0.3])
    h_b = np.diag([0.0, 0.7])
    init = random_state(4, 4, 2)
    assert measurement_work([(1.0, init)], layout, h_b, init) == pytest.approx(0.0, abs=1e-15)


def test_measurement_work_trace_oracle():
    layout = MemoryLayout.from_spectra([0.1, 0.4], [0.9])
    h_b = np.diag([0.0, 0.5])
    init = random_state(6, 3, 4)
    finals = [(0.3, random_state(6, 2, 5)), (0.7, random_state(6, 2, 6))]
    energies = [np.diag([0.1, 0.4, 0.0]), np.diag([0.0, 0.0, 0.9])]
    total = 0.0
    for (p, rho), hm in zip(finals, energies):
        h = np.kron(hm, np.eye(2)) + np.kron(np.eye(3), h_b)
        total += p * np.trace(rho @ h).real
    h0 = np.kron(energies[0], np.eye(2)) + np.kron(np.eye(3), h_b)
    expected = total - np.trace(init @ h0).real
    assert measurement_work(finals, layout, h_b, init) == pytest.approx(expected, abs=1e-14)


def test_erase_work_examples():
    h_m, h_b = np.diag([0.0, 0.2, 0.5]), np.diag([0.0, 1.0])
    rho = random_state(6, 6, 3)
    assert erase_work(rho, rho, h_m, h_b) == 0.0
    # a diagonal unitary commutes with the diagonal total Hamiltonian
    u = np.diag(np.exp(1j * np.arange(6)))
    assert erase_work(u @ rho @ u.conj().T, rho, h_m, h_b) == pytest.approx(0.0, abs=1e-14)
    v = random_unitary(6, 1)
    fin = v @ rho @ v.conj().T
    h = np.kron(h_m, np.eye(2)) + np.kron(np.eye(3), h_b)
    assert erase_work(fin, rho, h_m, h_b) == pytest.approx(np.trace((fin - rho) @ h).real, abs=1e-14)


def test_delta_F_examples():
    same = FreeEnergyLedger(-0.5, [-0.5, -0.5], [0.4, 0.6], [0.1, 0.9])
    assert delta_F(same, "meas") == 0.0 and delta_F(same, "eras") == 0.0
    ledger = FreeEnergyLedger(-0.3, [-0.3, -0.7], [0.4, 0.6])
    assert delta_F(ledger, "meas") == pytest.approx(-0.54 - (-0.3), abs=1e-15)
    complete = FreeEnergyLedger(-0.3, [-0.3, -0.7], [0.4, 0.6], [1.0, 0.0])
    assert delta_F(complete, "eras") == pytest.approx(-delta_F(complete, "meas"), abs=1e-15)
    with pytest.raises(ValueError):
        delta_F(ledger, "eras")


def test_block_free_energies_use_trace():
    layout = MemoryLayout.from_spectra([0.0, 1.0], [0.5])
    f = block_free_energies(layout, ThermoContext(1.0))
    assert f[0] == pytest.approx(F_01) and f[1] == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4))
def test_relative_entropy_nonnegative(seed, rank):
    rho = random_state(4, rank, seed)
    sigma = random_state(4, 4, seed + 1)
    d = relative_entropy(rho, sigma)
    assert d >= -1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_entropy_unitary_invariance(seed):
    rho = random_state(4, 3, seed)
    u = random_unitary(4, seed + 7)
    assert abs(von_neumann_entropy(u @ rho @ u.conj().T) - von_neumann_entropy(rho)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.5, 1.0, 2.0]))
def test_gibbs_variational_and_relative_entropy_identity(seed, beta):
    rng = np.random.default_rng(seed)
    h = np.diag(rng.uniform(0, 2, 3))
    ctx = ThermoContext(beta)
    can, _, f = canonical_state(h, ctx)
    rho = random_state(3, 3, seed)
    energy = np.trace(rho @ h).real
    assert energy - von_neumann_entropy(rho) / beta >= f - 1e-9
    rhs = beta * (energy - np.trace(can @ h).real) + von_neumann_entropy(can) - von_neumann_entropy(rho)
    assert abs(relative_entropy(rho, can) - rhs) <= 1e-9
    assert free_energy(h, ctx) == pytest.approx(f)
