"""Command-line driver: ``run``, ``verify`` and ``report``.

Exit codes: 0 success, 2 validation error, 3 bound violation, 4 internal or
capacity error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import campaign, report
from .eof import EofCapacityError
from .protocol import BOUND_IDS, run_scenario
from .scenario_io import ScenarioFileError, load

EXIT_OK, EXIT_VALIDATION, EXIT_BOUND, EXIT_INTERNAL = 0, 2, 3, 4
OUT_DIR_ENV = "ENTTHERMO_OUT_DIR"
DEFAULT_OUT_DIR = "entthermo_out"
FORMATS = ("json", "csv", "md")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _err(msg: str) -> None:
    print(f"entthermo: {msg}", file=sys.stderr)


def _bound_list(text: str) -> tuple[str, ...]:
    ids = tuple(b.strip() for b in text.split(",") if b.strip())
    bad = [b for b in ids if b not in BOUND_IDS]
    if bad or not ids:
        raise argparse.ArgumentTypeError(f"unknown bound ids {bad}; valid: {','.join(BOUND_IDS)}")
    return ids


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be comma-separated integers") from None


def cmd_run(args) -> int:
    try:
        s = load(args.file)
    except ScenarioFileError as e:
        _err(str(e))
        return EXIT_VALIDATION
    try:
        rep, _ = run_scenario(s)
    except EofCapacityError as e:
        _err(f"capacity: {e}")
        return EXIT_INTERNAL
    _emit(report.render(rep.to_dict(), args.format), args.out)
    return EXIT_OK if all(c.passed is not False for c in rep.bounds) else EXIT_BOUND


def cmd_verify(args) -> int:
    try:
        cfg = campaign.CampaignConfig(
            trials=args.trials, master_seed=args.seed, family=args.family, bounds=args.bounds,
            flip=frozenset(args.flip_bound or ()), lemma1=not args.no_lemma1,
            lemma2=not args.no_lemma2, seeds=args.replay, workers=args.workers)
    except ValueError as e:
        _err(str(e))
        return EXIT_VALIDATION
    try:
        results = campaign.run_campaign(cfg)
    except campaign.TrialError as e:
        _err(str(e))
        return EXIT_INTERNAL
    summary = campaign.summarize(cfg, results)
    out = Path(args.out or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(report.dumps(report.clean(summary)))
    (out / "slacks.csv").write_text(campaign.slacks_csv(results))
    (out / "failing_seeds.txt").write_text("".join(f"{s}\n" for s in summary["failing_seeds"]))
    sys.stdout.write(report.summary_markdown(report.clean(summary)))
    if summary["failing_seeds"]:
        print("failing seeds (replay with --replay): " + ",".join(str(s) for s in summary["failing_seeds"]))
    return EXIT_OK if summary["ok"] else EXIT_BOUND


def _load_artifact(path: Path) -> dict:
    if path.is_dir():
        for name in ("summary.json", "report.json"):
            if (path / name).exists():
                return _load_artifact(path / name)
        raise FileNotFoundError(f"no summary.json or report.json in {path}")
    text = path.read_text()
    if path.suffix == ".csv":
        return report.from_csv(text)
    return json.loads(text)


def cmd_report(args) -> int:
    try:
        data = _load_artifact(Path(args.path))
    except FileNotFoundError as e:
        _err(f"missing artifact: {e}")
        return EXIT_VALIDATION
    except (ValueError, json.JSONDecodeError) as e:
        _err(f"{args.path}: {e}")
        return EXIT_VALIDATION
    _emit(report.render(data, args.format), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entthermo", description="Entanglement-of-formation bounds for "
                                "measurement and erasure of a quantum memory.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file and emit its report")
    r.add_argument("file", help="scenario JSON file, or a bundled name (null, cnot, complete_erase)")
    r.add_argument("--format", choices=FORMATS, default="json")
    r.add_argument("--out", help="output file (default: stdout)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="randomized verification campaign")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0, help="master seed")
    v.add_argument("--family", choices=sorted(campaign.FAMILIES), default="default")
    v.add_argument("--bounds", type=_bound_list, default=BOUND_IDS, help="comma-separated bound ids")
    v.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    v.add_argument("--replay", type=_seed_list, help="comma-separated trial seeds to rerun")
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--no-lemma1", action="store_true", help="skip the per-trial random lemma1_gap check")
    v.add_argument("--no-lemma2", action="store_true", help="skip the per-trial closed-form cross-check")
    v.add_argument("--flip-bound", action="append", choices=BOUND_IDS, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    rp = sub.add_parser("report", help="render stored artifacts")
    rp.add_argument("path", help="verify output directory, report .json or .csv")
    rp.add_argument("--format", choices=FORMATS, default="md")
    rp.add_argument("--out", help="output file (default: stdout)")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EofCapacityError as e:
        _err(f"capacity: {e}")
        return EXIT_INTERNAL
    except Exception as e:  # last-resort guard so scripts see code 4
        _err(f"internal error: {type(e).__name__}: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
