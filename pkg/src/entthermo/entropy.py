"""Entropies, relative entropy, Gibbs states and the memory work/free-energy accounting.

All logarithms are natural; k_B = 1, so energies are in units where the
temperature is ``1 / beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qcore import RANK_TOL, STRUCT_TOL, MemoryLayout, check_tag

PROB_TOL = 1e-10


def _eigvals(rho) -> np.ndarray:
    a = np.asarray(rho, dtype=complex)
    return np.linalg.eigvalsh((a + a.conj().T) / 2)


def von_neumann_entropy(rho, check: bool = True) -> float:
    """S(rho) = -tr[rho ln rho] in nats; eigenvalues <= 1e-12 contribute nothing."""
    if check:
        check_tag(np.asarray(rho, dtype=complex), "psd-unit-trace")
    w = _eigvals(rho)
    w = w[w > RANK_TOL]
    return float(-np.sum(w * np.log(w)))


def shannon_entropy(p: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a non-empty 1-d probability vector")
    if np.any(p < -PROB_TOL) or abs(p.sum() - 1) > PROB_TOL:
        raise ValueError(f"not a probability distribution: {p}")
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def relative_entropy(rho, sigma, support_tol: float = STRUCT_TOL) -> float:
    """D(rho||sigma) = tr[rho ln rho] - tr[rho ln sigma].

    Returns ``math.inf`` when rho has weight above ``support_tol`` outside the
    support of sigma; ln sigma is only ever taken on that support.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    check_tag(rho, "psd-unit-trace")
    check_tag(sigma, "psd-unit-trace")
    ws, vs = np.linalg.eigh((sigma + sigma.conj().T) / 2)
    on = ws > RANK_TOL
    # diagonal of rho in sigma's eigenbasis
    rho_diag = np.einsum("ij,jk,ki->i", vs.conj().T, rho, vs).real
    if rho_diag[~on].sum() > support_tol:
        return math.inf
    cross = float(np.sum(rho_diag[on] * np.log(ws[on])))
    return -von_neumann_entropy(rho, check=False) - cross


@dataclass(frozen=True)
class ThermoContext:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta


def log_partition(h, beta: float) -> float:
    """ln tr exp(-beta H), evaluated with the ground energy factored out."""
    e = _eigvals(h)
    e0 = e.min()
    return float(-beta * e0 + np.log(np.sum(np.exp(-beta * (e - e0)))))


def canonical_state(h, ctx: ThermoContext) -> tuple[np.ndarray, float, float]:
    """Gibbs state exp(-beta H)/Z together with Z and F = -ln Z / beta."""
    h = np.asarray(h, dtype=complex)
    check_tag(h, "hermitian")
    e, v = np.linalg.eigh((h + h.conj().T) / 2)
    weights = np.exp(-ctx.beta * (e - e.min()))
    rho = (v * (weights / weights.sum())) @ v.conj().T
    rho = (rho + rho.conj().T) / 2
    ln_z = log_partition(h, ctx.beta)
    return rho, math.exp(ln_z), -ln_z / ctx.beta


def free_energy(h, ctx: ThermoContext) -> float:
    return -log_partition(h, ctx.beta) / ctx.beta


def block_canonical(layout: MemoryLayout, k: int, ctx: ThermoContext) -> np.ndarray:
    """rho^M_{k,can} embedded in the full memory space (supported on block k)."""
    rho, _, _ = canonical_state(layout.block_hamiltonians[k], ctx)
    return layout.embed_block_operator(k, rho)


def block_free_energies(layout: MemoryLayout, ctx: ThermoContext) -> list[float]:
    """F^M_k = -k_B T ln tr exp(-beta H^M_(k)) for every block."""
    return [free_energy(h, ctx) for h in layout.block_hamiltonians]


def _energy(rho, h) -> float:
    return float(np.einsum("ij,ji->", np.asarray(rho), np.asarray(h)).real)


def _check_mb(rho, layout: MemoryLayout, h_b) -> None:
    n = layout.dim * np.asarray(h_b).shape[0]
    if np.asarray(rho).shape != (n, n):
        raise ValueError(f"M(x)B state has shape {np.asarray(rho).shape}, expected ({n}, {n})")


def measurement_work(final_branches, layout: MemoryLayout, h_b, initial) -> float:
    """Average energy flowing into MB over the measurement.

    ``final_branches`` is a sequence of ``(p_k, rho_k)`` on M(x)B (``rho_k`` may
    be ``None`` when ``p_k`` vanishes). Branch k is charged with the block
    Hamiltonian H^M_(k) embedded in its block plus H^B; the initial state with
    H^M_(0) + H^B.
    """
    h_b = np.asarray(h_b, dtype=complex)
    eye_b = np.eye(h_b.shape[0])
    eye_m = np.eye(layout.dim)
    _check_mb(initial, layout, h_b)
    total = 0.0
    for k, (p, rho) in enumerate(final_branches):
        if rho is None:
            continue
        _check_mb(rho, layout, h_b)
        h = np.kron(layout.embedded_hamiltonian(k), eye_b) + np.kron(eye_m, h_b)
        total += p * _energy(rho, h)
    h0 = np.kron(layout.embedded_hamiltonian(0), eye_b) + np.kron(eye_m, h_b)
    return total - _energy(initial, h0)


def erase_work(final, initial, h_m, h_b) -> float:
    """tr[rho_fin (H^M + H^B)] - tr[rho_ini (H^M + H^B)]."""
    h_m = np.asarray(h_m, dtype=complex)
    h_b = np.asarray(h_b, dtype=complex)
    h = np.kron(h_m, np.eye(h_b.shape[0])) + np.kron(np.eye(h_m.shape[0]), h_b)
    if np.asarray(final).shape != h.shape or np.asarray(initial).shape != h.shape:
        raise ValueError("state and Hamiltonian dimensions differ")
    return _energy(final, h) - _energy(initial, h)


@dataclass
class FreeEnergyLedger:
    F_initial: float
    F_per_outcome: list[float]
    probabilities_initial: list[float]
    probabilities_final: list[float] = field(default_factory=list)

    def __post_init__(self):
        for name in ("probabilities_initial", "probabilities_final"):
            p = np.asarray(getattr(self, name), dtype=float)
            if p.size == 0 and name == "probabilities_final":
                continue
            if p.size != len(self.F_per_outcome):
                raise ValueError(f"{name} has {p.size} entries for {len(self.F_per_outcome)} blocks")
            if np.any(p < -PROB_TOL) or abs(p.sum() - 1) > PROB_TOL:
                raise ValueError(f"{name} is not a probability distribution")


def delta_F(ledger: FreeEnergyLedger, which: str) -> float:
    """Average free-energy change of the memory.

    ``meas``: sum_k p_k F_k - F_0.  ``eras``: sum_l q_l F_l - sum_k p_k F_k.
    """
    f = np.asarray(ledger.F_per_outcome, dtype=float)
    p = np.asarray(ledger.probabilities_initial, dtype=float)
    if which == "meas":
        return float(p @ f - ledger.F_initial)
    if which == "eras":
        if not len(ledger.probabilities_final):
            raise ValueError("erase free-energy change needs final probabilities")
        q = np.asarray(ledger.probabilities_final, dtype=float)
        return float(q @ f - p @ f)
    raise ValueError(f"which must be 'meas' or 'eras', got {which!r}")
