"""Bipartite entanglement: entanglement entropy, entanglement of formation.

The general-purpose minimizer works over ensemble decompositions
``|phi~_j> = sum_i W_ji sqrt(l_i) |e_i>`` of ``rho = sum_i l_i |e_i><e_i|``,
where ``W`` is an ``m x r`` column isometry taken as the first ``r`` columns of
``U0 exp(A)`` with ``A`` anti-Hermitian. Each local run optimizes ``A`` with
L-BFGS around the current ``U0`` and then re-centres ``U0``. The gradient is
analytic, with the Frechet derivative of the exponential taken in the
eigenbasis of ``A``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .entropy import von_neumann_entropy
from .qcore import RANK_TOL, CompositeSpace, check_tag, derive_seed, eigh_canonical, random_unitary

NORM_TOL = 1e-10
ORTHO_TOL = 1e-8


class EofCapacityError(RuntimeError):
    """The state is too large for the configured optimizer."""


class OrthogonalityError(ValueError):
    """Branch reductions do not have mutually orthogonal supports."""


@dataclass(frozen=True)
class Bipartition:
    space: CompositeSpace
    side_A: frozenset
    side_B: frozenset

    def __init__(self, space: CompositeSpace, side_A, side_B=None):
        side_A = frozenset([side_A] if isinstance(side_A, str) else side_A)
        if side_B is None:
            side_B = frozenset(space.labels) - side_A
        side_B = frozenset([side_B] if isinstance(side_B, str) else side_B)
        if not side_A or not side_B:
            raise ValueError("both sides of a bipartition must be non-empty")
        if side_A & side_B or (side_A | side_B) != set(space.labels):
            raise ValueError(f"{sorted(side_A)} | {sorted(side_B)} does not partition {space.labels}")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "side_A", side_A)
        object.__setattr__(self, "side_B", side_B)

    @property
    def labels_A(self) -> list[str]:
        return self.space.ordered(self.side_A)

    @property
    def labels_B(self) -> list[str]:
        return self.space.ordered(self.side_B)

    @property
    def dims(self) -> tuple[int, int]:
        return self.space.dim_of(self.side_A), self.space.dim_of(self.side_B)

    def _perm(self) -> list[int]:
        return [self.space.index(l) for l in self.labels_A + self.labels_B]

    def vector_matrix(self, psi) -> np.ndarray:
        """Coefficients of ``psi`` as a dim(A) x dim(B) matrix."""
        da, db = self.dims
        v = np.asarray(psi, dtype=complex).reshape(self.space.dims)
        return v.transpose(self._perm()).reshape(da, db)

    def reorder(self, rho) -> np.ndarray:
        """``rho`` with factors permuted to (A..., B...)."""
        dims = self.space.dims
        perm = self._perm()
        nf = len(dims)
        n = self.space.total_dim
        t = np.asarray(rho, dtype=complex).reshape(dims + dims)
        return t.transpose(perm + [nf + i for i in perm]).reshape(n, n)


@dataclass
class EnsembleDecomposition:
    """Pure-state ensemble; states are given in the (A, B) factor order of the cut."""

    weights: np.ndarray
    states: np.ndarray
    mixing_isometry: np.ndarray | None = None

    def density(self) -> np.ndarray:
        return np.einsum("j,ja,jb->ab", self.weights, self.states, self.states.conj())


@dataclass
class EofResult:
    value: float
    lower_bound: float
    method: str
    decomposition: EnsembleDecomposition | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimizer_valued(self) -> bool:
        """True when the value is an optimizer upper estimate not certified exact."""
        return self.method == "optimizer" and not self.diagnostics.get("certified", False)


@dataclass(frozen=True)
class EofConfig:
    restarts: int = 16
    max_iter: int = 5000
    ftol: float = 1e-10
    gtol: float = 1e-9
    ensemble_size: int | None = None
    max_rank: int = 6
    max_side_dim: int = 8
    seed: int = 0
    recenter_rounds: int = 4
    certify_tol: float = 1e-11
    workers: int = 1
    # False: Haar starts only, no eigen-ensemble shortcut (for cross-checks)
    eigen_start: bool = True


def _entropy_from_schmidt(s: np.ndarray) -> float:
    p = s * s
    p = p[p > RANK_TOL]
    p = p / p.sum()
    return float(-np.sum(p * np.log(p)))


def entanglement_entropy(psi, cut: Bipartition) -> float:
    """S(tr_B |psi><psi|) from the Schmidt coefficients."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(psi) - 1) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm {np.linalg.norm(psi):.12g})")
    return _entropy_from_schmidt(np.linalg.svd(cut.vector_matrix(psi), compute_uv=False))


def _reduced_sides(rho_ab: np.ndarray, da: int, db: int) -> tuple[np.ndarray, np.ndarray]:
    t = rho_ab.reshape(da, db, da, db)
    return np.trace(t, axis1=1, axis2=3), np.trace(t, axis1=0, axis2=2)


def lemma1_lower_bound(rho_ab: np.ndarray, da: int, db: int) -> tuple[float, dict]:
    rho_a, rho_b = _reduced_sides(rho_ab, da, db)
    s_ab = von_neumann_entropy(rho_ab, check=False)
    s_a = von_neumann_entropy(rho_a, check=False)
    s_b = von_neumann_entropy(rho_b, check=False)
    return max(s_a - s_ab, s_b - s_ab, 0.0), {"S_AB": s_ab, "S_A": s_a, "S_B": s_b}


def _clean_branches(branches) -> list[tuple[float, np.ndarray]]:
    out = []
    for p, psi in branches:
        if psi is None or p <= RANK_TOL:
            continue
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        out.append((float(p), psi / np.linalg.norm(psi)))
    if not out:
        raise ValueError("no branch with positive weight")
    total = sum(p for p, _ in out)
    return [(p / total, psi) for p, psi in out]


def eof_closed_orthogonal(branches, cut: Bipartition) -> EofResult:
    """Average side-A entropy of an ensemble whose side-A reductions have
    mutually orthogonal supports (in which case it is the exact EoF).

    Raises :class:`OrthogonalityError` when the supports overlap.
    """
    branches = _clean_branches(branches)
    da, db = cut.dims
    mats = [cut.vector_matrix(psi) for _, psi in branches]
    reds = [m @ m.conj().T for m in mats]
    for i in range(len(reds)):
        for j in range(i + 1, len(reds)):
            overlap = float(np.einsum("ab,ba->", reds[i], reds[j]).real)
            if overlap > ORTHO_TOL:
                raise OrthogonalityError(
                    f"branches {i} and {j} overlap on side A (tr[rho_i rho_j] = {overlap:.3g})"
                )
    weights = np.array([p for p, _ in branches])
    entropies = [_entropy_from_schmidt(np.linalg.svd(m, compute_uv=False)) for m in mats]
    states = np.array([m.reshape(-1) for m in mats])
    rho_ab = np.einsum("j,ja,jb->ab", weights, states, states.conj())
    lb, ent = lemma1_lower_bound(rho_ab, da, db)
    return EofResult(
        value=float(weights @ entropies),
        lower_bound=lb,
        method="closed_form_orthogonal",
        decomposition=EnsembleDecomposition(weights, states),
        diagnostics={"branch_entropies": entropies, **ent},
    )


_SY2 = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def _binary_entropy(x: float) -> float:
    return -sum(t * math.log(t) for t in (x, 1 - x) if t > 0)


def concurrence(rho) -> float:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"concurrence needs a two-qubit state, got shape {rho.shape}")
    check_tag(rho, "psd-unit-trace")
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    sqrt_rho = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    tilde = _SY2 @ rho.conj() @ _SY2
    mu = np.linalg.eigvalsh(sqrt_rho @ tilde @ sqrt_rho)
    mu = np.sort(np.sqrt(np.clip(mu, 0, None)))[::-1]
    return float(max(0.0, mu[0] - mu[1] - mu[2] - mu[3]))


def eof_wootters(rho) -> float:
    """Two-qubit EoF in nats from the concurrence."""
    c = min(concurrence(rho), 1.0)
    return _binary_entropy((1 + math.sqrt(1 - c * c)) / 2)


# --- optimizer ----------------------------------------------------------------

def _support(h: np.ndarray) -> np.ndarray:
    w, v = eigh_canonical(h)
    return v[:, w > RANK_TOL]


class _Problem:
    """Weighted eigenvectors of rho compressed to the local supports."""

    def __init__(self, rho_ab: np.ndarray, da: int, db: int):
        w, v = eigh_canonical(rho_ab)
        keep = w > RANK_TOL
        self.lam = w[keep]
        self.vecs = v[:, keep]
        self.rank = int(keep.sum())
        b = (self.vecs * np.sqrt(self.lam)).T.reshape(self.rank, da, db)
        va = _support(np.einsum("iab,icb->ac", b, b.conj()))
        vb = _support(np.einsum("iab,iac->bc", b.conj(), b))
        self.bc = np.einsum("ax,iab,by->ixy", va.conj(), b, vb)
        self.compressed_dims = self.bc.shape[1:]

    def value_grad(self, W: np.ndarray) -> tuple[float, np.ndarray]:
        """Average entanglement entropy of the ensemble generated by ``W`` and
        its gradient ``g`` with ``df = Re tr(g^dag dW)``."""
        mats = np.einsum("ji,iab->jab", W, self.bc)
        u, s, vh = np.linalg.svd(mats, full_matrices=False)
        s2 = s * s
        q = s2.sum(axis=1)
        with np.errstate(divide="ignore"):
            ls2 = np.where(s2 > 0, np.log(np.where(s2 > 0, s2, 1.0)), 0.0)
            lq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), 0.0)
        f = float(-(s2 * ls2).sum() + (q * lq).sum())
        coef = s * (lq[:, None] - ls2)
        gamma = 2 * np.einsum("jak,jk,jkb->jab", u, coef, vh)
        g = np.einsum("iab,jab->ji", self.bc.conj(), gamma)
        return f, g

    def value(self, W: np.ndarray) -> float:
        return self.value_grad(W)[0]


class _ExpParam:
    """theta (m^2 reals) -> anti-Hermitian A -> exp(A), with the adjoint Frechet map."""

    def __init__(self, m: int):
        self.m = m
        self.iu = np.triu_indices(m, 1)
        self.nu = len(self.iu[0])

    def generator(self, theta: np.ndarray) -> np.ndarray:
        m, nu = self.m, self.nu
        a = np.zeros((m, m), dtype=complex)
        a[self.iu] = theta[:nu] + 1j * theta[nu:2 * nu]
        a = a - a.conj().T
        a[np.diag_indices(m)] = 1j * theta[2 * nu:]
        return a

    def expm(self, theta: np.ndarray):
        h = -1j * self.generator(theta)
        ang, v = np.linalg.eigh((h + h.conj().T) / 2)
        e = (v * np.exp(1j * ang)) @ v.conj().T
        return e, ang, v

    def pullback(self, x: np.ndarray, ang: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Gradient in theta of Re<x, exp(A)> style pairings: grad = L(A^dag, x)."""
        d = ang[:, None] - ang[None, :]
        phi = np.exp(0.5j * (ang[:, None] + ang[None, :])) * np.sinc(d / (2 * np.pi))
        gam = v @ (phi.conj() * (v.conj().T @ x @ v)) @ v.conj().T
        gu = gam[self.iu]
        gl = gam.T[self.iu]
        return np.concatenate([gu.real - gl.real, gu.imag + gl.imag, np.diag(gam).imag])


def _local_run(problem: _Problem, u0: np.ndarray, cfg: EofConfig) -> tuple[float, np.ndarray, int]:
    m = u0.shape[0]
    r = problem.rank
    param = _ExpParam(m)
    iters = 0
    best = problem.value(u0[:, :r])

    def fun(theta):
        e, ang, v = param.expm(theta)
        u = u0 @ e
        f, g = problem.value_grad(u[:, :r])
        g_full = np.zeros((m, m), dtype=complex)
        g_full[:, :r] = g
        return f, param.pullback(u0.conj().T @ g_full, ang, v)

    for _ in range(cfg.recenter_rounds):
        budget = cfg.max_iter - iters
        if budget <= 0:
            break
        res = minimize(
            fun, np.zeros(m * m), jac=True, method="L-BFGS-B",
            options={"maxiter": budget, "ftol": cfg.ftol, "gtol": cfg.gtol, "maxcor": 20},
        )
        iters += int(res.nit)
        if res.fun >= best - cfg.ftol:
            if res.fun < best:
                u0 = u0 @ param.expm(res.x)[0]
                best = float(res.fun)
            break
        u0 = u0 @ param.expm(res.x)[0]
        best = float(res.fun)
    # re-orthonormalize against drift from repeated products
    q, rr = np.linalg.qr(u0)
    u0 = q * (np.diag(rr) / np.abs(np.diag(rr)))
    return problem.value(u0[:, :r]), u0, iters


def _decomposition(problem: _Problem, W: np.ndarray) -> EnsembleDecomposition:
    tilde = W @ (problem.vecs * np.sqrt(problem.lam)).T
    q = np.einsum("ja,ja->j", tilde, tilde.conj()).real
    keep = q > 1e-15
    states = tilde[keep] / np.sqrt(q[keep])[:, None]
    return EnsembleDecomposition(q[keep], states, W)


def eof_optimize(rho, cut: Bipartition, config: EofConfig | None = None) -> EofResult:
    """Upper estimate of the entanglement of formation by multi-start local descent.

    Restart 0 starts from the eigen-ensemble; if that ensemble already meets
    the entropic lower bound the value is certified and no descent runs.
    """
    cfg = config or EofConfig()
    rho_ab = cut.reorder(rho)
    check_tag(rho_ab, "psd-unit-trace")
    da, db = cut.dims
    problem = _Problem(rho_ab, da, db)
    r = problem.rank
    lb, ent = lemma1_lower_bound(rho_ab, da, db)
    diag = {"rank": r, "compressed_dims": tuple(int(x) for x in problem.compressed_dims), **ent}

    if r == 1:
        psi = problem.vecs[:, 0]
        value = _entropy_from_schmidt(np.linalg.svd(psi.reshape(da, db), compute_uv=False))
        decomp = EnsembleDecomposition(np.ones(1), psi[None, :], np.eye(1))
        return EofResult(value, lb, "closed_form_pure", decomp,
                         {**diag, "restarts": 0, "iterations": 0, "certified": True})

    a, b = problem.compressed_dims
    if r > cfg.max_rank or max(a, b) > cfg.max_side_dim:
        raise EofCapacityError(
            f"rank {r} with local supports {a}x{b} exceeds capacity "
            f"(max rank {cfg.max_rank}, max side dim {cfg.max_side_dim})"
        )

    m = max(cfg.ensemble_size or r * r, r)
    eye = np.eye(m, dtype=complex)
    v0 = problem.value(eye[:, :r])
    if cfg.eigen_start and v0 - lb <= cfg.certify_tol:
        return EofResult(v0, lb, "optimizer", _decomposition(problem, eye[:, :r]),
                         {**diag, "restarts": 0, "iterations": 0, "certified": True,
                          "ensemble_size": m, "best_gap": math.inf})

    def start(i):
        if i == 0 and cfg.eigen_start:
            return eye
        return random_unitary(m, derive_seed(cfg.seed, i))

    def run(i):
        return _local_run(problem, start(i), cfg)

    idx = range(max(cfg.restarts, 1))
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            runs = list(pool.map(run, idx))
    else:
        runs = [run(i) for i in idx]
    order = sorted(range(len(runs)), key=lambda i: (runs[i][0], i))
    best_i = order[0]
    value, u, _ = runs[best_i]
    W = u[:, :r]
    gap = runs[order[1]][0] - value if len(order) > 1 else math.inf
    diag.update(
        restarts=len(runs), iterations=sum(x[2] for x in runs), best_restart=best_i,
        best_gap=gap, eigen_ensemble_value=v0, ensemble_size=m,
        certified=value - lb <= cfg.certify_tol,
    )
    if cfg.eigen_start and value > v0:
        value, W = v0, eye[:, :r]
    return EofResult(float(value), lb, "optimizer", _decomposition(problem, W), diag)


def _is_branch_list(x) -> bool:
    return isinstance(x, (list, tuple)) and len(x) > 0 and isinstance(x[0], tuple)


def eof_dispatch(state, cut: Bipartition, config: EofConfig | None = None,
                 cross_check: bool = False) -> EofResult:
    """Route to the cheapest exact method.

    ``state`` is a pure vector, a density operator, or a list of
    ``(p_k, psi_k)`` branches. Pure states use the Schmidt entropy; branch
    lists with orthogonal side-A supports use the orthogonal closed form;
    states whose local supports are both two-dimensional use the concurrence
    formula; everything else goes to the optimizer.
    """
    if _is_branch_list(state):
        try:
            return eof_closed_orthogonal(state, cut)
        except OrthogonalityError:
            branches = _clean_branches(state)
            rho = sum(p * np.outer(psi, psi.conj()) for p, psi in branches)
            return eof_dispatch(rho, cut, config, cross_check)
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        da, db = cut.dims
        rho_ab = cut.reorder(np.outer(arr, arr.conj()))
        lb, ent = lemma1_lower_bound(rho_ab, da, db)
        value = entanglement_entropy(arr, cut)
        return EofResult(value, lb, "closed_form_pure",
                         EnsembleDecomposition(np.ones(1), cut.vector_matrix(arr).reshape(1, -1)),
                         {**ent, "certified": True})
    rho_ab = cut.reorder(arr)
    check_tag(rho_ab, "psd-unit-trace")
    da, db = cut.dims
    problem = _Problem(rho_ab, da, db)
    if problem.rank == 1:
        return eof_optimize(arr, cut, config)
    if tuple(problem.compressed_dims) == (2, 2):
        vecs = problem.bc.reshape(problem.rank, 4)
        small = np.einsum("ia,ib->ab", vecs, vecs.conj())
        small = small / np.trace(small).real
        lb, ent = lemma1_lower_bound(rho_ab, da, db)
        res = EofResult(eof_wootters(small), lb, "wootters", None,
                        {**ent, "concurrence": concurrence(small), "certified": True})
        if cross_check:
            res.diagnostics["optimizer"] = eof_optimize(arr, cut, config).value
        return res
    return eof_optimize(arr, cut, config)


def lemma1_gap(rho, cut: Bipartition, side: str = "A", config: EofConfig | None = None) -> float:
    """E_F(rho) + S(rho) - S(rho_side); nonnegative for any ensemble value."""
    res = eof_dispatch(rho, cut, config)
    s_side = res.diagnostics["S_A" if side == "A" else "S_B"]
    return res.value + res.diagnostics["S_AB"] - s_side
