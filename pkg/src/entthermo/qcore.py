"""Dense-matrix quantum mechanics on small composite Hilbert spaces.

Operators are plain complex ``numpy`` arrays throughout the package.
:class:`OperatorMatrix` is a validated wrapper used where a structural tag
(Hermitian, unitary, density operator) has to be asserted, e.g. when a
scenario file is loaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

STRUCT_TOL = 1e-10
RANK_TOL = 1e-12

TAGS = ("general", "hermitian", "unitary", "psd-unit-trace")


class StructureError(ValueError):
    """An operator violates its declared structural tag."""


def hermiticity_error(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T)))


def unitarity_error(a: np.ndarray) -> float:
    return float(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0]))))


def check_tag(a: np.ndarray, tag: str, tol: float = STRUCT_TOL) -> None:
    """Raise :class:`StructureError` if ``a`` does not satisfy ``tag``."""
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise StructureError(f"expected a non-empty square matrix, got shape {a.shape}")
    if tag == "general":
        return
    if tag == "unitary":
        err = unitarity_error(a)
        if err > tol:
            raise StructureError(f"not unitary (max|U^dag U - I| = {err:.3g})")
        return
    err = hermiticity_error(a)
    if err > tol:
        raise StructureError(f"not Hermitian (max|A - A^dag| = {err:.3g})")
    if tag == "psd-unit-trace":
        evals = np.linalg.eigvalsh((a + a.conj().T) / 2)
        if evals[0] < -tol:
            raise StructureError(f"not positive semidefinite (min eigenvalue {evals[0]:.3g})")
        tr = np.trace(a).real
        if abs(tr - 1) > tol:
            raise StructureError(f"trace {tr:.12g} is not 1")
    elif tag != "hermitian":
        raise ValueError(f"unknown tag {tag!r}")


@dataclass(frozen=True)
class OperatorMatrix:
    """A square complex matrix with a checked structural tag."""

    data: np.ndarray
    tag: str = "general"

    def __post_init__(self):
        a = np.array(self.data, dtype=complex)
        check_tag(a, self.tag)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _combined_tag(tags: Sequence[str]) -> str:
    if len(set(tags)) == 1:
        return tags[0]
    # a unitary that is also Hermitian is not implied here; only equal tags survive
    if set(tags) <= {"hermitian", "psd-unit-trace"}:
        return "hermitian"
    return "general"


def tensor(ops):
    """Kronecker product in list order.

    If every input is an :class:`OperatorMatrix`, the result is one too, with
    the tags combined (equal tags are preserved).
    """
    if len(ops) == 0:
        raise ValueError("tensor() needs at least one operator")
    out = reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])
    if all(isinstance(o, OperatorMatrix) for o in ops):
        return OperatorMatrix(out, _combined_tag([o.tag for o in ops]))
    return out


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered, labeled tensor factors, e.g. ``(("S", 2), ("M", 3), ("B", 2))``."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(d)) for label, d in self.factors)
        labels = [f[0] for f in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate factor labels in {labels}")
        if any(d < 1 for _, d in factors):
            raise ValueError("factor dimensions must be positive")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, **dims: int) -> "CompositeSpace":
        return cls(tuple(dims.items()))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f[0] for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f[1] for f in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown factor label {label!r}; have {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def dim_of(self, labels: Iterable[str]) -> int:
        return int(np.prod([self.dim(l) for l in labels], dtype=np.int64))

    def append(self, label: str, dim: int) -> "CompositeSpace":
        return CompositeSpace(self.factors + ((label, dim),))

    def restrict(self, labels: Iterable[str]) -> "CompositeSpace":
        keep = set(labels)
        return CompositeSpace(tuple(f for f in self.factors if f[0] in keep))

    def ordered(self, labels: Iterable[str]) -> list[str]:
        """``labels`` sorted into this space's factor order."""
        want = set(labels)
        for l in want:
            self.index(l)
        return [l for l in self.labels if l in want]


def _split(space: CompositeSpace, keep) -> tuple[list[int], list[int]]:
    if isinstance(keep, str):
        keep = [keep]
    keep = set(keep)
    if not keep:
        raise ValueError("keep must name at least one factor")
    for label in keep:
        space.index(label)
    kept = [i for i, l in enumerate(space.labels) if l in keep]
    traced = [i for i, l in enumerate(space.labels) if l not in keep]
    return kept, traced


def partial_trace(op, space: CompositeSpace, keep) -> np.ndarray:
    """Trace out every factor not in ``keep``; kept factors stay in space order."""
    a = np.asarray(op, dtype=complex)
    n = space.total_dim
    if a.shape != (n, n):
        raise ValueError(f"operator shape {a.shape} does not match space dim {n}")
    kept, traced = _split(space, keep)
    dims = space.dims
    dk = int(np.prod([dims[i] for i in kept], dtype=np.int64))
    dt = int(np.prod([dims[i] for i in traced], dtype=np.int64))
    nf = len(dims)
    t = a.reshape(dims + dims)
    perm = kept + traced + [nf + i for i in kept] + [nf + i for i in traced]
    t = t.transpose(perm).reshape(dk, dt, dk, dt)
    return np.trace(t, axis1=1, axis2=3)


def vector_matrix(psi, space: CompositeSpace, side) -> np.ndarray:
    """Reshape a state vector into a (dim(side), dim(rest)) coefficient matrix."""
    v = np.asarray(psi, dtype=complex).reshape(space.dims)
    kept, traced = _split(space, side)
    dims = space.dims
    dk = int(np.prod([dims[i] for i in kept], dtype=np.int64))
    return v.transpose(kept + traced).reshape(dk, -1)


def reduce_vector(psi, space: CompositeSpace, keep) -> np.ndarray:
    """Reduced density operator of a pure state, without forming |psi><psi|."""
    m = vector_matrix(psi, space, keep)
    return m @ m.conj().T


def apply_local(op, psi, space: CompositeSpace, labels) -> np.ndarray:
    """Apply ``op`` acting on the (contiguous-in-order) factors ``labels`` to ``psi``."""
    labels = space.ordered(labels)
    idx = [space.index(l) for l in labels]
    others = [i for i in range(len(space.dims)) if i not in idx]
    dims = space.dims
    d = int(np.prod([dims[i] for i in idx], dtype=np.int64))
    a = np.asarray(op, dtype=complex)
    if a.shape != (d, d):
        raise ValueError(f"local operator shape {a.shape} does not match dim {d}")
    v = np.asarray(psi, dtype=complex).reshape(dims).transpose(idx + others).reshape(d, -1)
    v = (a @ v).reshape([dims[i] for i in idx] + [dims[i] for i in others])
    inv = np.argsort(idx + others)
    return v.transpose(inv).reshape(-1)


def embed(op, space: CompositeSpace, labels) -> np.ndarray:
    """Full-space operator acting as ``op`` on ``labels`` and identity elsewhere."""
    labels = space.ordered(labels)
    idx = [space.index(l) for l in labels]
    others = [i for i in range(len(space.dims)) if i not in idx]
    dims = space.dims
    d_rest = int(np.prod([dims[i] for i in others], dtype=np.int64))
    full = np.kron(np.asarray(op, dtype=complex), np.eye(d_rest))
    order = idx + others
    shape = [dims[i] for i in order]
    nf = len(dims)
    t = full.reshape(shape + shape)
    inv = list(np.argsort(order))
    t = t.transpose(inv + [nf + i for i in inv])
    n = space.total_dim
    return t.reshape(n, n)


# --- canonical eigendecomposition -------------------------------------------

def _rref_basis(q: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Canonical orthonormal basis for the column span of ``q``.

    Uses the reduced row echelon form of ``q^T`` (unique for the subspace), then
    Gram-Schmidt in pivot order, then a positive-real first entry per vector.
    """
    a = q.T.copy()
    k, n = a.shape
    row = 0
    for col in range(n):
        if row == k:
            break
        piv = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[piv, col]) < tol:
            continue
        a[[row, piv]] = a[[piv, row]]
        a[row] /= a[row, col]
        for r in range(k):
            if r != row:
                a[r] -= a[r, col] * a[row]
        row += 1
    basis, _ = np.linalg.qr(a[:row].T)
    return _fix_phases(basis)


def _fix_phases(vecs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size:
            c = col[nz[0]]
            out[:, j] = col * (abs(c) / c)
    return out


def eigh_canonical(h, degeneracy_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with eigenvalues in decreasing order and a
    reproducible basis inside degenerate eigenspaces."""
    h = np.asarray(h, dtype=complex)
    h = (h + h.conj().T) / 2
    w, v = np.linalg.eigh(h)
    w, v = w[::-1], v[:, ::-1]
    out = np.empty_like(v)
    i, n = 0, len(w)
    scale = max(1.0, float(np.max(np.abs(w)))) if n else 1.0
    while i < n:
        j = i + 1
        while j < n and abs(w[j] - w[i]) <= degeneracy_tol * scale:
            j += 1
        block = v[:, i:j]
        out[:, i:j] = _rref_basis(block) if j - i > 1 else _fix_phases(block)
        i = j
    return w, out


def numerical_rank(rho, tol: float = RANK_TOL) -> int:
    return int(np.sum(np.linalg.eigvalsh(np.asarray(rho, dtype=complex)) > tol))


# --- purification -------------------------------------------------------------

@dataclass(frozen=True)
class PurifiedState:
    state: np.ndarray
    space: CompositeSpace
    reference_label: str
    reference_dim: int

    def reduced(self, keep) -> np.ndarray:
        return reduce_vector(self.state, self.space, keep)


def purify(rho, space: CompositeSpace, reference_label: str = "R") -> PurifiedState:
    """Rank-sized purification sum_i sqrt(l_i) |e_i>|i>, reference appended last."""
    rho = np.asarray(rho, dtype=complex)
    check_tag(rho, "psd-unit-trace")
    if reference_label in space.labels:
        raise ValueError(f"reference label {reference_label!r} already used")
    w, v = eigh_canonical(rho)
    keep = w > RANK_TOL
    w, v = w[keep], v[:, keep]
    r = int(keep.sum())
    psi = (v * np.sqrt(w)).reshape(-1)  # row-major (system, reference)
    psi = psi / np.linalg.norm(psi)
    return PurifiedState(psi, space.append(reference_label, r), reference_label, r)


# --- memory blocks and measurement -------------------------------------------

@dataclass(frozen=True)
class MemoryLayout:
    """Orthogonal block decomposition of the memory space.

    Block ``k`` occupies the consecutive basis indices ``offsets[k]`` ...
    ``offsets[k] + block_dims[k] - 1`` of the memory factor; block 0 is the
    standard state.
    """

    block_hamiltonians: tuple[np.ndarray, ...]
    block_dims: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        hs = []
        for k, h in enumerate(self.block_hamiltonians):
            h = np.atleast_2d(np.asarray(h, dtype=complex))
            try:
                check_tag(h, "hermitian")
            except StructureError as e:
                raise StructureError(f"block {k} Hamiltonian: {e}") from None
            h.setflags(write=False)
            hs.append(h)
        if not hs:
            raise ValueError("memory layout needs at least one block")
        object.__setattr__(self, "block_hamiltonians", tuple(hs))
        object.__setattr__(self, "block_dims", tuple(h.shape[0] for h in hs))

    @classmethod
    def from_spectra(cls, *spectra) -> "MemoryLayout":
        return cls(tuple(np.diag(np.asarray(s, dtype=float)) for s in spectra))

    @classmethod
    def trivial(cls, *dims: int) -> "MemoryLayout":
        return cls(tuple(np.zeros((d, d)) for d in dims))

    @property
    def dim(self) -> int:
        return sum(self.block_dims)

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(x) for x in np.cumsum((0,) + self.block_dims[:-1]))

    def block_slice(self, k: int) -> slice:
        o = self.offsets[k]
        return slice(o, o + self.block_dims[k])

    def projector(self, k: int) -> np.ndarray:
        """P_(k) on the memory factor alone."""
        p = np.zeros((self.dim, self.dim), dtype=complex)
        s = self.block_slice(k)
        p[s, s] = np.eye(self.block_dims[k])
        return p

    def embedded_hamiltonian(self, k: int) -> np.ndarray:
        """H^M_(k) on the full memory space, zero outside block k."""
        h = np.zeros((self.dim, self.dim), dtype=complex)
        s = self.block_slice(k)
        h[s, s] = self.block_hamiltonians[k]
        return h

    def hamiltonian(self) -> np.ndarray:
        """The direct sum of all block Hamiltonians."""
        return sum(self.embedded_hamiltonian(k) for k in range(self.n_blocks))

    def embed_block_operator(self, k: int, op) -> np.ndarray:
        """Place an operator on block k into the full memory space (zero elsewhere)."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        s = self.block_slice(k)
        out[s, s] = op
        return out


def block_projectors(layout: MemoryLayout, space: CompositeSpace, label: str = "M") -> list[np.ndarray]:
    """Full-space projectors 1 (x) P_(k) (x) 1 for every memory block."""
    if space.dim(label) != layout.dim:
        raise ValueError(
            f"memory layout dim {layout.dim} does not match factor {label!r} dim {space.dim(label)}"
        )
    return [embed(layout.projector(k), space, [label]) for k in range(layout.n_blocks)]


def _check_projectors(projectors, n: int, tol: float = STRUCT_TOL) -> None:
    total = sum(projectors)
    if np.max(np.abs(total - np.eye(n))) > tol:
        raise ValueError("projectors do not sum to the identity")
    for i, p in enumerate(projectors):
        for q in projectors[i + 1:]:
            if np.max(np.abs(p @ q)) > tol:
                raise ValueError("projectors are not mutually orthogonal")


def measure_projective(state, projectors, tol: float = RANK_TOL) -> list[tuple[float, np.ndarray | None]]:
    """Outcome probabilities and post-measurement states.

    Outcomes with probability <= ``tol`` carry ``None`` instead of a state.
    """
    rho = np.asarray(state, dtype=complex)
    projectors = [np.asarray(p, dtype=complex) for p in projectors]
    _check_projectors(projectors, rho.shape[0])
    out = []
    for p in projectors:
        post = p @ rho @ p
        prob = float(np.trace(post).real)
        out.append((prob, post / prob) if prob > tol else (max(prob, 0.0), None))
    return out


def project_vector(psi, projectors, tol: float = RANK_TOL) -> list[tuple[float, np.ndarray | None]]:
    """Pure-state version of :func:`measure_projective`; branches are normalized vectors."""
    psi = np.asarray(psi, dtype=complex)
    out = []
    for p in projectors:
        v = np.asarray(p) @ psi
        prob = float(np.vdot(v, v).real)
        out.append((prob, v / np.sqrt(prob)) if prob > tol else (prob, None))
    return out


# --- seeded random generation -------------------------------------------------

def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ginibre(dim: int, cols: int, seed) -> np.ndarray:
    rng = _rng(seed)
    return (rng.standard_normal((dim, cols)) + 1j * rng.standard_normal((dim, cols))) / np.sqrt(2)


def random_unitary(dim: int, seed) -> np.ndarray:
    """Haar-random unitary: QR of a Ginibre matrix with the phases of R's diagonal removed."""
    q, r = np.linalg.qr(ginibre(dim, dim, seed))
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_pure(dim: int, seed) -> np.ndarray:
    v = ginibre(dim, 1, seed)[:, 0]
    return v / np.linalg.norm(v)


def random_state(dim: int, rank: int, seed) -> np.ndarray:
    """Density operator from the induced measure: trace out a Haar-random
    pure state on ``dim x rank``."""
    if not 1 <= rank <= dim:
        raise ValueError(f"need 1 <= rank <= dim, got rank={rank}, dim={dim}")
    g = random_pure(dim * rank, seed).reshape(dim, rank)
    rho = g @ g.conj().T
    return (rho + rho.conj().T) / 2


def random_hermitian(dim: int, seed, scale: float = 1.0) -> np.ndarray:
    g = ginibre(dim, dim, seed)
    return scale * (g + g.conj().T) / 2


def derive_seed(*keys: int) -> int:
    """A 32-bit seed derived deterministically from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])
