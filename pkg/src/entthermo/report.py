"""Serialization and rendering of reports.

Machine formats (json, csv) carry floats with 17 significant digits so that
they round-trip exactly; the markdown rendering uses 9.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any

MACHINE_DIGITS = 17
HUMAN_DIGITS = 9
HUMAN_ZERO = 1e-12


def fmt_float(x: float, digits: int = MACHINE_DIGITS) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == 0:
        return "0.0"
    text = f"{x:.{digits}g}"
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def fmt_human(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isfinite(x) and abs(x) < HUMAN_ZERO:
            return "0.0"
        return fmt_float(x, HUMAN_DIGITS)
    return str(x)


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with fixed key order and 17-significant-digit floats."""
    out = io.StringIO()
    _dump(obj, out, 0, indent)
    out.write("\n")
    return out.getvalue()


def _dump(obj, out, level, indent):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.write("null")
    elif isinstance(obj, bool):
        out.write("true" if obj else "false")
    elif isinstance(obj, int):
        out.write(str(obj))
    elif isinstance(obj, float):
        out.write(fmt_float(obj))
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.write(f"{pad}{json.dumps(str(k))}: ")
            _dump(v, out, level + 1, indent)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.write("[" + ", ".join(fmt_float(v) if isinstance(v, float) else str(v) for v in obj) + "]")
            return
        out.write("[\n")
        for i, v in enumerate(obj):
            out.write(pad)
            _dump(v, out, level + 1, indent)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "]")
    else:
        # numpy scalars
        if hasattr(obj, "item"):
            _dump(obj.item(), out, level, indent)
        else:
            raise TypeError(f"cannot serialize {type(obj).__name__}")


def clean(obj):
    """Plain-Python copy: numpy scalars unwrapped, -0.0 normalized."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float):
        return obj + 0.0
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# --- flat csv --------------------------------------------------------------------------

CSV_HEADER = ("path", "type", "value")


def _flatten(obj, prefix, rows):
    if isinstance(obj, dict):
        if not obj:
            rows.append((prefix, "dict", ""))
        for k, v in obj.items():
            _flatten(v, f"{prefix}/{k}" if prefix else str(k), rows)
    elif isinstance(obj, list):
        if not obj:
            rows.append((prefix, "list", ""))
        for i, v in enumerate(obj):
            _flatten(v, f"{prefix}/{i}", rows)
    elif obj is None:
        rows.append((prefix, "null", ""))
    elif isinstance(obj, bool):
        rows.append((prefix, "bool", "true" if obj else "false"))
    elif isinstance(obj, int):
        rows.append((prefix, "int", str(obj)))
    elif isinstance(obj, float):
        rows.append((prefix, "float", fmt_float(obj)))
    else:
        rows.append((prefix, "str", str(obj)))


def to_csv(obj: dict) -> str:
    """One row per leaf: ``path,type,value`` with '/'-separated paths."""
    rows: list = []
    _flatten(clean(obj), "", rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def _parse_leaf(kind: str, value: str):
    if kind == "float":
        return float({"NaN": "nan", "Infinity": "inf", "-Infinity": "-inf"}.get(value, value))
    if kind == "int":
        return int(value)
    if kind == "bool":
        return value == "true"
    if kind == "null":
        return None
    if kind == "dict":
        return {}
    if kind == "list":
        return []
    return value


def from_csv(text: str) -> dict:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected csv header {header}")
    root: dict = {}
    for path, kind, value in reader:
        parts = path.split("/")
        node = root
        for i, part in enumerate(parts):
            last = i == len(parts) - 1
            key = int(part) if isinstance(node, list) else part
            if last:
                leaf = _parse_leaf(kind, value)
                if isinstance(node, list):
                    node.append(leaf)
                else:
                    node[key] = leaf
                break
            nxt_is_list = parts[i + 1].isdigit()
            if isinstance(node, list):
                if key == len(node):
                    node.append([] if nxt_is_list else {})
                node = node[key]
            else:
                if key not in node:
                    node[key] = [] if nxt_is_list else {}
                node = node[key]
    return root


# --- markdown --------------------------------------------------------------------------

QUANTITY_ORDER = {
    "measurement": ("W_meas", "dF_meas", "F_M0", "dU_EF", "EF_SR1", "EF_SR1_method", "EF_SR_ini",
                    "dP_EF", "EF_SMBR2", "S_MB1", "S_MB2", "I_QC", "H_p", "rel_ent",
                    "lemma1_gap_SR1", "n_opt_terms", "p", "F_Mk"),
    "erase": ("initial_mode", "W_eras", "dF_eras", "dif_ini", "dif_fin", "ddif", "H_p",
              "rel_ent_ini", "rel_ent_fin", "S_MB_ini", "S_MB_fin", "complete", "p", "q"),
    "comparison": ("ours_rhs", "sagawa_ueda_rhs", "difference", "gap_U", "gap_P", "tolerance", "pass"),
}


def _cell(v) -> str:
    if isinstance(v, list):
        return "(" + ", ".join(fmt_human(x) for x in v) + ")"
    return fmt_human(v)


def _check_table(title: str, rows: list[dict]) -> list[str]:
    lines = [f"## {title}", "", "| id | LHS | RHS | slack | tolerance | pass |", "|---|---|---|---|---|---|"]
    for c in rows:
        status = "n/a" if not c.get("applicable", True) else ("PASS" if c["pass"] else "FAIL")
        lines.append(f"| {c['id']} | {fmt_human(c['lhs'])} | {fmt_human(c['rhs'])} | "
                     f"{fmt_human(c['slack'])} | {fmt_human(c['tolerance'])} | {status} |")
    return lines + [""]


def report_markdown(d: dict) -> str:
    lines = ["# Process report", ""]
    if d.get("description"):
        lines += [d["description"], ""]
    lines += [f"beta = {fmt_human(d['beta'])}", ""]
    for section in ("measurement", "erase", "comparison"):
        data = d.get(section)
        if not data:
            continue
        lines += [f"## {section}", "", "| quantity | value |", "|---|---|"]
        for key in QUANTITY_ORDER[section]:
            if key in data:
                lines.append(f"| {key} | {_cell(data[key])} |")
        lines.append("")
    lines += _check_table("bounds", d.get("bounds", []))
    lines += _check_table("invariants", d.get("invariants", []))
    return "\n".join(lines)


def summary_markdown(summary: dict) -> str:
    lines = ["# Verification summary", "",
             f"family = {summary['family']}, master seed = {summary['master_seed']}, "
             f"trials = {summary['trials']}", "",
             "| check | evaluated | passed | failed | n/a | min slack |", "|---|---|---|---|---|---|"]
    for cid, s in summary["checks"].items():
        lines.append(f"| {cid} | {s['evaluated']} | {s['passed']} | {s['failed']} | "
                     f"{s['not_applicable']} | {fmt_human(s['min_slack'])} |")
    lines.append("")
    if summary["failures"]:
        lines += ["## failures", ""]
        lines += [f"- trial {f['trial']} seed {f['seed']}: {f['check']}" for f in summary["failures"]]
        lines.append("")
    return "\n".join(lines)


def render(d: dict, fmt: str) -> str:
    d = clean(d)
    if fmt == "json":
        return dumps(d)
    if fmt == "csv":
        return to_csv(d)
    if fmt == "md":
        return summary_markdown(d) if "checks" in d and "family" in d else report_markdown(d)
    raise ValueError(f"unknown format {fmt!r}")
