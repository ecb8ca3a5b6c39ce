"""Seeded scenario families and the randomized verification loop."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eof import Bipartition, EofConfig, lemma1_gap
from .protocol import (
    BOUND_IDS,
    Check,
    EraseConfig,
    Scenario,
    lemma2_cross_check,
    run_scenario,
)
from .qcore import CompositeSpace, MemoryLayout, derive_seed, random_state, random_unitary
from .report import fmt_float

BETAS = (0.5, 1.0, 2.0)
# (memory block dims, d_B); blocks (2,2) with d_B = 2 would give rank 8 for E_F(rho_SR1)
MEASUREMENT_SHAPES = (((1, 1), 1), ((1, 1), 2), ((2, 2), 1))
ERASE_SHAPES = ((1, 1), (2, 1), (1, 2), (2, 2), (2, 1, 1), (3, 2))
LEMMA1_TOL = 1e-6


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**32))


def _spectrum(rng, d: int) -> np.ndarray:
    return np.sort(rng.uniform(0.0, 1.0, d))


def measurement_scenario(seed: int, eof: EofConfig | None = None) -> Scenario:
    """d_S = 2, Haar U_SMB and Haar V^(k), random spectra and rho_S."""
    rng = np.random.default_rng(seed)
    blocks, d_b = MEASUREMENT_SHAPES[rng.integers(len(MEASUREMENT_SHAPES))]
    beta = float(BETAS[rng.integers(len(BETAS))])
    layout = MemoryLayout.from_spectra(*[_spectrum(rng, d) for d in blocks])
    h_b = np.diag(_spectrum(rng, d_b))
    rho_s = random_state(2, int(rng.integers(1, 3)), _seed(rng))
    d_total = 2 * layout.dim * d_b
    u = random_unitary(d_total, _seed(rng))
    therm = [random_unitary(d * d_b, _seed(rng)) for d in blocks]
    return Scenario(layout=layout, beta=beta, H_B=h_b, d_S=2, rho_S=rho_s, U_SMB=u,
                    thermalization=therm, seed=seed, eof=eof or EofConfig(seed=seed),
                    description=f"measurement family, seed {seed}")


def chain_scenario(seed: int, eof: EofConfig | None = None) -> Scenario:
    s = measurement_scenario(seed, eof)
    rng = np.random.default_rng(derive_seed(seed, 1))
    s.erase = EraseConfig("from_measurement", random_unitary(s.d_M * s.d_B, _seed(rng)))
    s.description = f"measurement followed by erase, seed {seed}"
    return s


def erase_canonical_scenario(seed: int, eof: EofConfig | None = None) -> Scenario:
    rng = np.random.default_rng(seed)
    blocks = ERASE_SHAPES[rng.integers(len(ERASE_SHAPES))]
    d_b = int(rng.integers(1, 4))
    beta = float(BETAS[rng.integers(len(BETAS))])
    layout = MemoryLayout.from_spectra(*[_spectrum(rng, d) for d in blocks])
    p = rng.dirichlet(np.ones(len(blocks)))
    u = random_unitary(layout.dim * d_b, _seed(rng))
    return Scenario(layout=layout, beta=beta, H_B=np.diag(_spectrum(rng, d_b)),
                    erase=EraseConfig("canonical_product", u, [float(x) for x in p]),
                    seed=seed, eof=eof or EofConfig(seed=seed),
                    description=f"canonical-product erase, seed {seed}")


def complete_erase_permutations() -> tuple[np.ndarray, np.ndarray]:
    """(U_SMB, U_eras) for d_S = 2, memory blocks (2, 1), d_B = 2.

    U_SMB swaps the outcome into the memory: |s, m> -> |m, f(s)> for m in
    block 0 with f(0) = 0, f(1) = 2, and |s, 2> -> |s, 1>. Each branch then
    leaves a pure memory level (0 or 2). U_eras exchanges memory levels 1 and
    2, so every branch ends inside block 0.
    """
    d_s, d_m, d_b = 2, 3, 2
    f = {0: 0, 1: 2}
    perm = np.empty(d_s * d_m, dtype=int)
    for s in range(d_s):
        for m in range(d_m):
            out = (m, f[s]) if m < 2 else (s, 1)
            perm[s * d_m + m] = out[0] * d_m + out[1]
    u_sm = np.zeros((d_s * d_m,) * 2)
    u_sm[perm, np.arange(d_s * d_m)] = 1
    swap = np.eye(d_m)[[0, 2, 1]]
    return np.kron(u_sm, np.eye(d_b)).astype(complex), np.kron(swap, np.eye(d_b)).astype(complex)


def complete_erase_scenario(seed: int = 0, eof: EofConfig | None = None, randomize: bool = True) -> Scenario:
    """Exact complete-erase chain; ``randomize`` draws beta, spectra and rho_S."""
    u_smb, u_eras = complete_erase_permutations()
    if randomize:
        rng = np.random.default_rng(seed)
        beta = float(BETAS[rng.integers(len(BETAS))])
        layout = MemoryLayout.from_spectra(_spectrum(rng, 2), _spectrum(rng, 1))
        h_b = np.diag(_spectrum(rng, 2))
        rho_s = random_state(2, 2, _seed(rng))
    else:
        beta = 1.0
        layout = MemoryLayout.from_spectra([0.0, 0.5], [0.25])
        h_b = np.diag([0.0, 1.0])
        rho_s = np.array([[0.7, 0.2], [0.2, 0.3]], dtype=complex)
    return Scenario(layout=layout, beta=beta, H_B=h_b, d_S=2, rho_S=rho_s, U_SMB=u_smb,
                    erase=EraseConfig("from_measurement", u_eras), seed=seed,
                    eof=eof or EofConfig(seed=seed), description=f"exact complete erase, seed {seed}")


FAMILIES = {
    "default": chain_scenario,
    "chain": chain_scenario,
    "measurement": measurement_scenario,
    "erase-canonical": erase_canonical_scenario,
    "complete-erase": complete_erase_scenario,
}


def lemma1_random_check(seed: int, config: EofConfig | None = None) -> Check:
    """lemma1_gap on one random bipartite state, dims up to 3x3 and rank <= 4."""
    rng = np.random.default_rng(seed)
    da, db = (int(x) for x in rng.integers(2, 4, size=2))
    rank = int(rng.integers(1, min(4, da * db) + 1))
    rho = random_state(da * db, rank, _seed(rng))
    cut = Bipartition(CompositeSpace.of(A=da, B=db), "A")
    side = "A" if rng.integers(2) == 0 else "B"
    gap = lemma1_gap(rho, cut, side, config or EofConfig(seed=seed))
    return Check("inv:lemma1_random", "ge", gap, 0.0, LEMMA1_TOL, note=f"{da}x{db} rank {rank} side {side}")


# --- verification loop ----------------------------------------------------------------

@dataclass
class CampaignConfig:
    trials: int
    master_seed: int
    family: str = "default"
    bounds: tuple[str, ...] = BOUND_IDS
    flip: frozenset = frozenset()
    lemma1: bool = True
    lemma2: bool = True
    seeds: tuple[int, ...] | None = None
    workers: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")
        bad = [b for b in self.bounds if b not in BOUND_IDS]
        if bad:
            raise ValueError(f"unknown bound ids {bad}; valid ids are {list(BOUND_IDS)}")
        if self.seeds is None and self.trials < 1:
            raise ValueError("trials must be >= 1")

    def trial_seeds(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [derive_seed(self.master_seed, i) for i in range(self.trials)]


@dataclass
class TrialResult:
    trial: int
    seed: int
    checks: list[Check] = field(default_factory=list)
    error: str | None = None


class TrialError(RuntimeError):
    def __init__(self, trial: int, seed: int, cause: BaseException):
        super().__init__(f"trial {trial} (seed {seed}) failed: {type(cause).__name__}: {cause}")
        self.trial, self.seed, self.cause = trial, seed, cause


def run_trial(cfg: CampaignConfig, trial: int, seed: int) -> TrialResult:
    try:
        s = FAMILIES[cfg.family](seed)
        report, records = run_scenario(s, cfg.flip)
        checks = [c for c in report.bounds if c.id in cfg.bounds] + report.invariants
        if cfg.lemma2 and records is not None:
            checks.append(lemma2_cross_check(records, s))
        if cfg.lemma1:
            checks.append(lemma1_random_check(derive_seed(seed, 2)))
    except Exception as e:  # surfaced with the seed for replay
        raise TrialError(trial, seed, e) from e
    return TrialResult(trial, seed, checks)


def _run_indexed(args):
    cfg, i, seed = args
    return run_trial(cfg, i, seed)


def run_campaign(cfg: CampaignConfig) -> list[TrialResult]:
    jobs = [(cfg, i, s) for i, s in enumerate(cfg.trial_seeds())]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(j) for j in jobs]


def summarize(cfg: CampaignConfig, results: list[TrialResult]) -> dict:
    stats: dict = {}
    failures = []
    for r in results:
        for c in r.checks:
            st = stats.setdefault(c.id, {"evaluated": 0, "passed": 0, "failed": 0,
                                         "not_applicable": 0, "min_slack": None})
            if not c.applicable:
                st["not_applicable"] += 1
                continue
            st["evaluated"] += 1
            if c.passed:
                st["passed"] += 1
            else:
                st["failed"] += 1
                failures.append({"trial": r.trial, "seed": r.seed, "check": c.id,
                                 "slack": c.slack, "tolerance": c.tolerance})
            if st["min_slack"] is None or c.slack < st["min_slack"]:
                st["min_slack"] = c.slack
    seeds = sorted({f["seed"] for f in failures})
    return {
        "family": cfg.family, "master_seed": cfg.master_seed, "trials": len(results),
        "bounds": list(cfg.bounds), "flipped": sorted(cfg.flip),
        "checks": stats, "failures": failures, "failing_seeds": seeds, "ok": not failures,
    }


SLACK_COLUMNS = ("bound_id", "trial", "seed", "lhs", "rhs", "slack", "tolerance", "pass")


def slacks_csv(results: list[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SLACK_COLUMNS)
    for r in results:
        for c in r.checks:
            if c.applicable:
                w.writerow([c.id, r.trial, r.seed, fmt_float(c.lhs), fmt_float(c.rhs),
                            fmt_float(c.slack), fmt_float(c.tolerance), "true" if c.passed else "false"])
            else:
                w.writerow([c.id, r.trial, r.seed, "", "", "", fmt_float(c.tolerance), "n/a"])
    return buf.getvalue()
