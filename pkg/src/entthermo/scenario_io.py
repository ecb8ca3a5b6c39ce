"""Scenario files: JSON documents describing a protocol run.

Layout::

    {"schema_version": "1", "description": "...", "scenario": {...}}

Complex matrices are row-major nested lists of ``[re, im]`` pairs (a bare
real number is accepted for a purely real entry). Hamiltonians are
``{"spectrum": [...]}`` or ``{"matrix": ...}``; unitaries are ``"identity"``,
``{"matrix": ...}``, ``{"generator": G}`` (U = exp(-iG)),
``{"haar_seed": n}`` or ``{"permutation": [...]}`` with U|i> = |perm[i]>.
Density operators are ``{"matrix": ...}`` or ``{"diagonal": [...]}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, fields
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .eof import EofConfig
from .protocol import EraseConfig, Scenario, ScenarioError
from .qcore import MemoryLayout, StructureError, check_tag, random_unitary
from .report import dumps

SCHEMA_VERSIONS = ("1",)
BUNDLED = ("null", "cnot", "complete_erase")


class ScenarioFileError(ValueError):
    """Parse or validation failure, anchored to a line of the source file."""

    def __init__(self, source: str, line: int | None, field: str, message: str):
        self.source, self.line, self.field = source, line, field
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {field}: {message}")


class _Err(Exception):
    def __init__(self, path: tuple, message: str):
        super().__init__(message)
        self.path = path


def _locate(text: str, path: tuple) -> int | None:
    """Line of the innermost key of ``path`` that can be found, walking
    forward from each enclosing key."""
    pos, line = 0, None
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.start()
        line = text.count("\n", 0, pos) + 1
    return line


def _field_path(name: str) -> tuple:
    """'erase.branches[1]' -> ('scenario', 'erase', 'branches', 1)."""
    out = ["scenario"]
    for part in name.split("."):
        m = re.fullmatch(r"(\w+)\[(\d+)\]", part)
        out += [m.group(1), int(m.group(2))] if m else [part]
    return tuple(out)


def _dotted(path: tuple) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else p)
    return s


# --- decoding -------------------------------------------------------------------------

def _complex(x, path):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise _Err(path, f"expected a number or [re, im] pair, got {x!r}")


def _matrix(x, path, dim: int) -> np.ndarray:
    if not isinstance(x, list) or any(not isinstance(r, list) for r in x):
        raise _Err(path, "expected a list of rows")
    shape = (len(x), len(x[0]) if x else 0)
    if shape != (dim, dim) or any(len(r) != dim for r in x):
        raise _Err(path, f"expected a {dim}x{dim} matrix")
    return np.array([[_complex(v, path) for v in row] for row in x], dtype=complex)


def _real_list(x, path, n: int | None = None) -> np.ndarray:
    if not isinstance(x, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
        raise _Err(path, "expected a list of real numbers")
    if n is not None and len(x) != n:
        raise _Err(path, f"expected {n} entries, got {len(x)}")
    return np.asarray(x, dtype=float)


def _checked(a, path, tag):
    try:
        check_tag(a, tag)
    except StructureError as e:
        raise _Err(path, str(e)) from None
    return a


def _hamiltonian(x, path, dim: int | None = None) -> np.ndarray:
    if isinstance(x, dict) and "spectrum" in x:
        h = np.diag(_real_list(x["spectrum"], path + ("spectrum",), dim)).astype(complex)
    elif isinstance(x, dict) and "matrix" in x:
        rows = x["matrix"]
        n = dim if dim is not None else (len(rows) if isinstance(rows, list) else 0)
        h = _matrix(rows, path + ("matrix",), n)
    else:
        raise _Err(path, 'expected {"spectrum": [...]} or {"matrix": [...]}')
    if h.shape[0] == 0:
        raise _Err(path, "empty Hamiltonian")
    return _checked(h, path, "hermitian")


def _unitary(x, path, dim: int) -> np.ndarray:
    if x == "identity" or x is None:
        return np.eye(dim, dtype=complex)
    if not isinstance(x, dict) or len(x) != 1:
        raise _Err(path, 'expected "identity" or one of matrix / generator / haar_seed / permutation')
    (kind, val), = x.items()
    if kind == "matrix":
        u = _matrix(val, path + ("matrix",), dim)
    elif kind == "generator":
        g = _checked(_matrix(val, path + ("generator",), dim), path + ("generator",), "hermitian")
        u = expm(-1j * g)
    elif kind == "haar_seed":
        if not isinstance(val, int) or isinstance(val, bool):
            raise _Err(path, "haar_seed must be an integer")
        u = random_unitary(dim, val)
    elif kind == "permutation":
        perm = val
        if not isinstance(perm, list) or sorted(perm) != list(range(dim)):
            raise _Err(path, f"permutation must list 0..{dim - 1} once each")
        u = np.zeros((dim, dim), dtype=complex)
        u[perm, np.arange(dim)] = 1
    else:
        raise _Err(path, f"unknown unitary form {kind!r}")
    return _checked(u, path, "unitary")


def _density(x, path, dim: int) -> np.ndarray:
    if isinstance(x, dict) and "diagonal" in x:
        rho = np.diag(_real_list(x["diagonal"], path + ("diagonal",), dim)).astype(complex)
    elif isinstance(x, dict) and "matrix" in x:
        rho = _matrix(x["matrix"], path + ("matrix",), dim)
    else:
        raise _Err(path, 'expected {"diagonal": [...]} or {"matrix": [...]}')
    return _checked(rho, path, "psd-unit-trace")


def _int(x, path, minimum=None) -> int:
    if not isinstance(x, int) or isinstance(x, bool) or (minimum is not None and x < minimum):
        raise _Err(path, f"expected an integer{'' if minimum is None else f' >= {minimum}'}")
    return x


_KNOWN = {"beta", "d_S", "memory_blocks", "H_B", "rho_S", "U_SMB", "thermalization", "erase", "seed", "eof"}


def _scenario(d: dict, description: str) -> Scenario:
    P = ("scenario",)
    if not isinstance(d, dict):
        raise _Err(P, "expected an object")
    unknown = sorted(set(d) - _KNOWN)
    if unknown:
        raise _Err(P + (unknown[0],), "unknown field")
    for req in ("beta", "memory_blocks", "H_B"):
        if req not in d:
            raise _Err(P, f"missing required field {req!r}")

    beta = d["beta"]
    if not isinstance(beta, (int, float)) or isinstance(beta, bool) or not beta > 0:
        raise _Err(P + ("beta",), "must be a positive number")
    blocks = d["memory_blocks"]
    if not isinstance(blocks, list) or not blocks:
        raise _Err(P + ("memory_blocks",), "expected a non-empty list of block Hamiltonians")
    layout = MemoryLayout(tuple(_hamiltonian(b, P + ("memory_blocks", k)) for k, b in enumerate(blocks)))
    h_b = _hamiltonian(d["H_B"], P + ("H_B",))
    d_b, d_m = h_b.shape[0], layout.dim
    d_s = _int(d.get("d_S", 1), P + ("d_S",), 1)
    seed = _int(d.get("seed", 0), P + ("seed",))

    rho_s = u_smb = therm = None
    if d.get("rho_S") is not None:
        rho_s = _density(d["rho_S"], P + ("rho_S",), d_s)
        u_smb = _unitary(d.get("U_SMB", "identity"), P + ("U_SMB",), d_s * d_m * d_b)
        if d.get("thermalization") is not None:
            t = d["thermalization"]
            if not isinstance(t, list) or len(t) != layout.n_blocks:
                raise _Err(P + ("thermalization",), f"need one unitary per memory block ({layout.n_blocks})")
            therm = [_unitary(v, P + ("thermalization", k), layout.block_dims[k] * d_b) for k, v in enumerate(t)]
    elif d.get("U_SMB") is not None or d.get("thermalization") is not None:
        raise _Err(P + ("rho_S",), "U_SMB / thermalization given without rho_S")

    erase = None
    if d.get("erase") is not None:
        e, E = d["erase"], P + ("erase",)
        if not isinstance(e, dict) or "initial_mode" not in e:
            raise _Err(E, "expected an object with initial_mode")
        probs = branches = None
        if e.get("probabilities") is not None:
            probs = [float(v) for v in _real_list(e["probabilities"], E + ("probabilities",))]
        if e.get("branches") is not None:
            if not isinstance(e["branches"], list):
                raise _Err(E + ("branches",), "expected a list of {p, rho} objects")
            branches = []
            for k, b in enumerate(e["branches"]):
                bp = E + ("branches", k)
                if not isinstance(b, dict) or "p" not in b or "rho" not in b:
                    raise _Err(bp, "expected {p, rho}")
                branches.append((float(b["p"]), _density(b["rho"], bp + ("rho",), d_m * d_b)))
        erase = EraseConfig(e["initial_mode"], _unitary(e.get("U_eras", "identity"), E + ("U_eras",), d_m * d_b),
                            probs, branches)

    eof = EofConfig()
    if d.get("eof") is not None:
        names = {f.name for f in fields(EofConfig)}
        bad = sorted(set(d["eof"]) - names)
        if bad:
            raise _Err(P + ("eof", bad[0]), "unknown optimizer setting")
        eof = EofConfig(**d["eof"])

    s = Scenario(layout=layout, beta=float(beta), H_B=h_b, d_S=d_s, rho_S=rho_s, U_SMB=u_smb,
                 thermalization=therm, erase=erase, seed=seed, eof=eof, description=description)
    try:
        return s.validate()
    except ScenarioError as e:
        raise _Err(_field_path(e.field), str(e).split(": ", 1)[1]) from None


def loads(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFileError(source, e.lineno, "json", e.msg) from None
    try:
        if not isinstance(doc, dict):
            raise _Err((), "top level must be an object")
        version = doc.get("schema_version")
        if version not in SCHEMA_VERSIONS:
            raise _Err(("schema_version",), f"unrecognized schema version {version!r}")
        if "scenario" not in doc:
            raise _Err(("scenario",), "missing")
        return _scenario(doc["scenario"], str(doc.get("description", "")))
    except _Err as e:
        raise ScenarioFileError(source, _locate(text, e.path), _dotted(e.path), str(e)) from None
    except (StructureError, ScenarioError, TypeError, ValueError) as e:
        raise ScenarioFileError(source, None, "scenario", str(e)) from None


def load(path) -> Scenario:
    """Read a scenario file; a bare bundled name such as ``cnot`` also works."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return loads(bundled_text(str(path)), f"<bundled:{path}>")
    return loads(p.read_text(), str(path))


def bundled_text(name: str) -> str:
    return resources.files("entthermo").joinpath("scenarios", f"{name}.json").read_text()


# --- encoding -------------------------------------------------------------------------

def _enc_matrix(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(v.real) + 0.0, float(v.imag) + 0.0] for v in row] for row in a]


def _enc_hamiltonian(h) -> dict:
    h = np.asarray(h, dtype=complex)
    if np.array_equal(h, np.diag(np.diag(h))) and not np.any(np.diag(h).imag):
        return {"spectrum": [float(x) + 0.0 for x in np.diag(h).real]}
    return {"matrix": _enc_matrix(h)}


def _enc_unitary(u) -> dict | str:
    u = np.asarray(u, dtype=complex)
    if np.array_equal(u, np.eye(u.shape[0])):
        return "identity"
    return {"matrix": _enc_matrix(u)}


def scenario_to_dict(s: Scenario) -> dict:
    d: dict = {"beta": float(s.beta), "d_S": int(s.d_S),
               "memory_blocks": [_enc_hamiltonian(h) for h in s.layout.block_hamiltonians],
               "H_B": _enc_hamiltonian(s.H_B)}
    if s.rho_S is not None:
        d["rho_S"] = {"matrix": _enc_matrix(s.rho_S)}
        d["U_SMB"] = _enc_unitary(s.U_SMB)
        if s.thermalization is not None:
            d["thermalization"] = [_enc_unitary(v) for v in s.thermalization]
    if s.erase is not None:
        e = s.erase
        ed: dict = {"initial_mode": e.initial_mode, "U_eras": _enc_unitary(e.U_eras)}
        if e.probabilities is not None:
            ed["probabilities"] = [float(x) for x in e.probabilities]
        if e.branches is not None:
            ed["branches"] = [{"p": float(p), "rho": {"matrix": _enc_matrix(r)}} for p, r in e.branches]
        d["erase"] = ed
    d["seed"] = int(s.seed)
    if s.eof != EofConfig():
        d["eof"] = asdict(s.eof)
    return d


def dumps_scenario(s: Scenario) -> str:
    return dumps({"schema_version": SCHEMA_VERSIONS[-1], "description": s.description,
                  "scenario": scenario_to_dict(s)})
