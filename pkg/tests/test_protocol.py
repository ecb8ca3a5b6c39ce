import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entthermo.campaign import (
    chain_scenario,
    complete_erase_scenario,
    erase_canonical_scenario,
    measurement_scenario,
)
from entthermo.entropy import shannon_entropy
from entthermo.protocol import (
    EraseConfig,
    Scenario,
    ScenarioError,
    evaluate_bounds,
    lemma2_cross_check,
    run_erase,
    run_measurement,
    run_scenario,
)
from entthermo.qcore import MemoryLayout
from entthermo.scenario_io import load

LN2 = math.log(2)


def by_id(checks):
    return {c.id: c for c in checks}


def cnot_scenario():
    u = np.eye(4)[[0, 1, 3, 2]]
    return Scenario(layout=MemoryLayout.trivial(1, 1), beta=1.0, H_B=np.zeros((1, 1)), d_S=2,
                    rho_S=np.diag([0.5, 0.5]), U_SMB=u)


def test_null_protocol_measurement():
    s = Scenario(layout=MemoryLayout.from_spectra([0.0, 0.4]), beta=1.0, H_B=np.diag([0.0, 0.3]), d_S=2,
                 rho_S=np.diag([0.6, 0.4]), U_SMB=np.eye(8))
    records, q = run_measurement(s)
    assert q.p == [pytest.approx(1.0)]
    for v in (q.W_meas, q.dF_meas, q.dU_EF, q.dP_EF, q.rel_ent, q.I_QC, q.H_p):
        assert abs(v) < 1e-10
    report, _ = run_scenario(s)
    for c in report.bounds:
        if c.applicable:
            assert abs(c.slack) < 1e-9


def test_cnot_hand_computation():
    report, records = run_scenario(cnot_scenario())
    m = report.measurement
    assert m.p == pytest.approx([0.5, 0.5], abs=1e-14)
    # after the CNOT, S and R share a classically correlated state with zero EoF
    assert m.EF_SR1 == pytest.approx(0.0, abs=1e-12) and m.EF_SR1_method == "wootters"
    assert m.dU_EF == pytest.approx(-LN2, abs=1e-12)
    assert m.dP_EF == pytest.approx(-LN2, abs=1e-12)
    assert m.I_QC == pytest.approx(LN2, abs=1e-12) and m.H_p == pytest.approx(LN2, abs=1e-12)
    assert m.W_meas == 0.0 and m.dF_meas == 0.0
    b = by_id(report.bounds)
    assert b["meas"].passed and abs(b["meas"].slack) < 1e-12
    c = report.comparison
    assert c["gap_U"] >= -c["tolerance"] and c["gap_P"] >= -1e-8 and c["pass"]


def test_records_are_valid_branches():
    records, q = run_measurement(measurement_scenario(3))
    assert abs(sum(r.p_k for r in records) - 1) < 1e-10
    for r in records:
        if r.rho_MB_fin is not None:
            w = np.linalg.eigvalsh(r.rho_MB_fin)
            assert w.min() > -1e-10 and abs(w.sum() - 1) < 1e-10


def test_null_erase():
    s = Scenario(layout=MemoryLayout.from_spectra([0.0, 0.2], [0.5]), beta=2.0, H_B=np.diag([0.0, 1.0]),
                 erase=EraseConfig("canonical_product", np.eye(6), [0.3, 0.7]))
    e = run_erase(s)
    assert e.q == pytest.approx([0.3, 0.7], abs=1e-12)
    assert abs(e.W_eras) < 1e-12 and abs(e.dF_eras) < 1e-12 and abs(e.ddif) < 1e-12


def test_canonical_product_erase_bound_and_zero_slack():
    report, _ = run_scenario(erase_canonical_scenario(5))
    assert abs(report.erase.rel_ent_ini) < 1e-10
    b = by_id(report.bounds)
    assert b["eras1"].applicable and b["eras1"].passed
    assert not b["meas"].applicable and not b["eras2"].applicable


def test_complete_erase_construction():
    report, _ = run_scenario(complete_erase_scenario(randomize=False))
    e = report.erase
    assert e.q[0] >= 1 - 1e-10 and e.complete
    assert abs(e.dif_fin) < 1e-9
    assert abs(e.ddif - shannon_entropy(e.p)) < 1e-8
    b = by_id(report.bounds)
    assert b["composed"].applicable and b["composed"].passed
    inv = by_id(report.invariants)
    assert inv["inv:composed_terms"].passed and inv["inv:dF_telescopes"].passed


def test_bundled_complete_erase_matches_constructor():
    from_file = load("complete_erase")
    built = complete_erase_scenario(randomize=False)
    assert np.array_equal(from_file.U_SMB, built.U_SMB)
    assert np.array_equal(from_file.erase.U_eras, built.erase.U_eras)


def test_bounds_outside_validity_are_not_applicable():
    report, _ = run_scenario(chain_scenario(2))
    b = by_id(report.bounds)
    assert not b["eras1"].applicable and b["eras1"].passed is None
    assert not b["composed"].applicable
    assert b["eras2"].applicable


def test_flip_hook_detects_failure():
    report, _ = run_scenario(measurement_scenario(4), flip=frozenset({"meas"}))
    b = by_id(report.bounds)
    assert b["meas"].passed is False and "flipped" in b["meas"].note
    assert not report.ok


def test_tolerance_budget_counts_optimizer_terms():
    report, _ = run_scenario(measurement_scenario(1))
    m = report.measurement
    assert by_id(report.bounds)["meas"].tolerance == pytest.approx(2e-4 * m.n_opt_terms + 1e-8)


def test_lemma2_cross_check_on_post_measurement_state():
    s = measurement_scenario(6)
    records, _ = run_measurement(s)
    assert lemma2_cross_check(records, s).passed


def test_validation_names_fields():
    base = dict(layout=MemoryLayout.trivial(1, 1), beta=1.0, H_B=np.zeros((1, 1)), d_S=2,
                rho_S=np.diag([0.5, 0.5]), U_SMB=np.eye(4))
    with pytest.raises(ScenarioError) as e:
        Scenario(**{**base, "U_SMB": np.ones((4, 4))}).validate()
    assert e.value.field == "U_SMB"
    with pytest.raises(ScenarioError) as e:
        Scenario(**{**base, "rho_S": np.diag([0.5, 0.6])}).validate()
    assert e.value.field == "rho_S"
    with pytest.raises(ScenarioError) as e:
        Scenario(**{**base, "beta": -1.0}).validate()
    assert e.value.field == "beta"
    with pytest.raises(ScenarioError) as e:
        Scenario(**{**base, "rho_S": None, "U_SMB": None,
                    "erase": EraseConfig("from_measurement", np.eye(2))}).validate()
    assert e.value.field == "erase.initial_mode"
    with pytest.raises(ScenarioError) as e:
        Scenario(**{**base, "erase": EraseConfig("canonical_product", np.eye(2), [0.5, 0.6])}).validate()
    assert e.value.field == "erase.probabilities"


def test_explicit_branches_must_stay_in_their_block():
    layout = MemoryLayout.trivial(1, 1)
    wrong = np.diag([0.0, 1.0])  # block 1 state offered as branch 0
    s = Scenario(layout=layout, beta=1.0, H_B=np.zeros((1, 1)),
                 erase=EraseConfig("explicit", np.eye(2), branches=[(0.5, wrong), (0.5, wrong)]))
    with pytest.raises(ScenarioError) as e:
        s.validate()
    assert e.value.field == "erase.branches[0]"


def test_explicit_branches_run():
    layout = MemoryLayout.trivial(1, 1)
    s = Scenario(layout=layout, beta=1.0, H_B=np.zeros((1, 1)),
                 erase=EraseConfig("explicit", np.eye(2)[[1, 0]],
                                   branches=[(0.25, np.diag([1.0, 0])), (0.75, np.diag([0.0, 1]))]))
    report, _ = run_scenario(s)
    assert report.erase.q == pytest.approx([0.75, 0.25])
    assert by_id(report.bounds)["eras_general"].passed


def test_runs_are_deterministic():
    a, _ = run_scenario(chain_scenario(9))
    b, _ = run_scenario(chain_scenario(9))
    assert a.to_dict() == b.to_dict()


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31))
def test_chain_invariants_hold(seed):
    report, _ = run_scenario(chain_scenario(seed))
    failed = [c.id for c in report.all_checks() if c.passed is False]
    assert not failed
    e = report.erase
    assert abs(sum(e.q) - 1) < 1e-10
    inv = by_id(report.invariants)
    assert inv["inv:keyeras"].passed and inv["inv:purity_SMBR1"].passed


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.5, 1.0, 2.0]))
def test_energy_conserving_erase_costs_no_work(seed, beta):
    # a unitary diagonal in the energy basis moves no energy
    layout = MemoryLayout.from_spectra([0.0, 0.3], [0.7])
    phases = np.exp(1j * np.random.default_rng(seed).uniform(0, 2 * np.pi, 6))
    s = Scenario(layout=layout, beta=beta, H_B=np.diag([0.0, 0.5]),
                 erase=EraseConfig("canonical_product", np.diag(phases), [0.4, 0.6]))
    e = run_erase(s)
    assert abs(e.W_eras) < 1e-12 and abs(e.dF_eras) < 1e-12
