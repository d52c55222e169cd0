"""Command-line front end: ``threshold-lab <subcommand> ...``.

Exit codes: 0 success, 1 a certified check failed (or a theorem hypothesis
does not hold), 2 bad input, 3 only non-certifying (sampled) evidence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import setfam
from .cover import CoverBudgetExceeded, cover_bruteforce, cover_cost, q_value, threshold_report
from .fragmentation import (
    ProfileError,
    Sampling,
    build_profile,
    constant_objective,
    load_trace,
    optimize_constants,
    recheck_trace,
    run_induction,
    verify_covering_theorem,
)
from .generators import KINDS, make_family
from .measures import DEFAULT_TOL, p_critical, p_expectation
from .setfam import Family, load_family, save_family

log = logging.getLogger("threshold_lab")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_UNCERTIFIED = 0, 1, 2, 3
SIG_DIGITS = 12

SWEEP_COLUMNS = ["family", "kind", "n", "N", "l", "members", "p_E", "q", "p_c", "ratio",
                 "sandwich", "status"]


def fmt(obj):
    """Round every float in a JSON-able structure to 12 significant digits."""
    if isinstance(obj, float):
        return obj if not math.isfinite(obj) else float(f"{obj:.{SIG_DIGITS}g}")
    if isinstance(obj, dict):
        return {k: fmt(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [fmt(v) for v in obj]
    return obj


def emit(obj) -> None:
    json.dump(fmt(obj), sys.stdout, indent=2)
    sys.stdout.write("\n")


class InputError(Exception):
    pass


def _load(path) -> Family:
    try:
        return load_family(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read family from {path}: {exc}") from exc


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("THRESHOLD_LAB_THREADS", "1")))


def _profile(args):
    return build_profile(args.mode, args.L, args.delta, args.epsilon1,
                         strict=not args.allow_small_L)


# ---------------------------------------------------------------- subcommands


def cmd_generate(args) -> int:
    fam = make_family(args.kind, args.n, k=args.k, l=args.l, count=args.count, seed=args.seed)
    if args.out:
        save_family(fam, args.out)
    else:
        print(fam.to_json())
    return EXIT_OK


def cmd_thresholds(args) -> int:
    F = _load(args.family)
    report = threshold_report(F, args.tol)
    emit(report.to_dict())
    return EXIT_OK


def cmd_cover(args) -> int:
    H = _load(args.family)
    sol = cover_bruteforce(H, args.p) if args.bruteforce else cover_cost(H, args.p)
    emit(sol.to_dict())
    return EXIT_OK if sol.optimal else EXIT_FAIL


def cmd_qvalue(args) -> int:
    F = _load(args.family)
    emit(q_value(F, args.tol).to_dict())
    return EXIT_OK


def cmd_constants(args) -> int:
    L_star, delta_star = optimize_constants(args.grid)
    table = [{"delta": d, "g": constant_objective(d)} for d in np.linspace(0.1, 0.9, 17)]
    emit({"L_star": L_star, "delta_star": delta_star, "g_table": table})
    return EXIT_OK


def _sampling(args) -> Optional[Sampling]:
    return Sampling(args.sample, args.seed) if args.sample else None


def cmd_fragment(args) -> int:
    H = _load(args.family)
    profile = _profile(args)
    l = H.bound_l if args.l is None else args.l
    trace = run_induction(H, args.p, profile, l, args.depth, _sampling(args), args.exact_cap)
    if args.out:
        Path(args.out).write_text(trace.to_json() + "\n")
        emit({"trace": args.out, "depth": trace.depth,
              "statuses": [n.status for n in trace.root.nodes()]})
    else:
        print(trace.to_json())
    return EXIT_OK


def _trace_certified_ok(trace) -> tuple[bool, str]:
    for node in trace.root.nodes():
        if node.status in ("stuck", "step_failed") or node.status.startswith("scan_failed"):
            return False, f"depth {node.depth}: {node.status}"
        if node.dcl is not None and not node.dcl["holds"]:
            return False, f"depth {node.depth}: double-counting bound fails"
    return True, ""


def cmd_verify(args) -> int:
    if args.recheck:
        result = recheck_trace(load_trace(args.recheck))
        emit(asdict(result) | {"ok": result.ok})
        return EXIT_OK if result.ok else EXIT_FAIL
    if not args.family or args.p is None or not args.mode:
        raise InputError("verify needs --family, --p and --mode (or --recheck)")
    H = _load(args.family)
    profile = _profile(args)
    l = H.bound_l if args.l is None else args.l
    verdict = verify_covering_theorem(H, args.p, profile, l, args.exact_cap, args.seed)
    trace = run_induction(H, args.p, profile, l, args.depth, _sampling(args), args.exact_cap)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verdict.json").write_text(json.dumps(fmt(verdict.to_dict()), indent=2) + "\n")
    (out / "trace.json").write_text(trace.to_json() + "\n")
    trace_ok, reason = _trace_certified_ok(trace)
    if not verdict.hypothesis_holds:
        reason = "theorem hypothesis fails"
    elif not verdict.passed:
        reason = "conclusion not reached"
    emit({"verdict": verdict.to_dict(), "trace_ok": trace_ok, "reason": reason,
          "certifying": trace.certifying and verdict.exact,
          "verdict_file": str(out / "verdict.json"), "trace_file": str(out / "trace.json")})
    if not verdict.passed or not trace_ok:
        return EXIT_FAIL
    if not (trace.certifying and verdict.exact):
        return EXIT_UNCERTIFIED
    return EXIT_OK


# ---------------------------------------------------------------- sweep


@dataclass
class SweepRow:
    family: str
    kind: str
    n: int
    N: int
    l: int
    members: int
    p_E: Optional[float]
    q: Optional[float]
    p_c: Optional[float]
    ratio: Optional[float]
    sandwich: Optional[bool]
    status: str


def _parse_kind(token: str) -> tuple[str, Optional[int]]:
    name, _, arg = token.partition(":")
    if name not in KINDS:
        raise InputError(f"unknown kind {name!r}")
    return name, int(arg) if arg else None


def _sweep_row(task) -> SweepRow:
    kind, k, n, tol, exact_cap = task
    setfam.EXACT_CAP = exact_cap
    label = f"{kind}({'k=%d,' % k if k is not None else ''}n={n})"
    try:
        F = make_family(kind, n, k=k if k is not None else 3)
    except ValueError as exc:
        return SweepRow(label, kind, n, 0, 0, 0, None, None, None, None, None, f"skipped: {exc}")
    try:
        rep = threshold_report(F, tol)
    except (CoverBudgetExceeded, setfam.GroundTooLarge) as exc:
        pe = p_expectation(F, tol).value
        return SweepRow(label, kind, n, F.ground_size, F.bound_l, len(F), pe, None, None, None,
                        None, f"skipped: {exc}")
    vals = [rep.p_E, rep.q, rep.p_c]
    status = "ok" if all(v.status == "ok" for v in vals) else ",".join(v.status for v in vals)
    ratio = None
    if all(v.defined for v in vals) and rep.q.value > 0 and F.bound_l > 0:
        ratio = rep.p_c.value / (rep.q.value * math.log2(F.bound_l + 1))
    return SweepRow(label, kind, n, F.ground_size, F.bound_l, len(F), rep.p_E.value,
                    rep.q.value, rep.p_c.value, ratio, rep.sandwich_holds(), status)


def kk_sweep(kinds: list[str], n_values: list[int], tol: float = DEFAULT_TOL,
             threads: int = 1, exact_cap: int = setfam.EXACT_CAP) -> list[SweepRow]:
    tasks = [(*_parse_kind(t), n, tol, exact_cap) for t in kinds for n in n_values]
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    for row in rows:
        if row.status.startswith("skipped"):
            log.warning("%s %s", row.family, row.status)
    return rows


def write_sweep_csv(rows: list[SweepRow], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        d = asdict(row)
        writer.writerow({k: (f"{v:.{SIG_DIGITS}g}" if isinstance(v, float) else
                             "" if v is None else v) for k, v in d.items()})


def _n_range(text: str) -> list[int]:
    lo, sep, hi = text.partition(":")
    return list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]


def cmd_kk_sweep(args) -> int:
    rows = kk_sweep(args.kinds.split(","), _n_range(args.n_range), args.tol, _threads(args),
                    args.exact_cap)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_sweep_csv(rows, fh)
    else:
        write_sweep_csv(rows, sys.stdout)
    return EXIT_OK if all(r.sandwich is not False for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------- parser


def _add_profile_args(p):
    p.add_argument("--family")
    p.add_argument("--p", type=float)
    p.add_argument("--mode", choices=["main3", "main4", "bell"])
    p.add_argument("--L", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon1", type=float)
    p.add_argument("--l", type=int, help="boundedness level (default: largest member size)")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--sample", type=int, default=0, help="sample this many W instead of all")
    p.add_argument("--allow-small-L", action="store_true",
                   help="permit main3 with L < 1000 (non-nominal constants)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="threshold-lab",
                                     description="Exact expectation thresholds on small ground sets.")
    parser.add_argument("--tol", type=float, default=DEFAULT_TOL)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--exact-cap", type=int, default=setfam.EXACT_CAP)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a family as JSON")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--l", type=int, default=3)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("thresholds", help="p_E, q and p_c of a family")
    p.add_argument("--family", required=True)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("cover", help="minimum-expectation cover at a given p")
    p.add_argument("--family", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--bruteforce", action="store_true", help="use the dynamic-programming oracle")
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("qvalue", help="q(F) with its witness cover")
    p.add_argument("--family", required=True)
    p.set_defaults(func=cmd_qvalue)

    p = sub.add_parser("fragment", help="run the fragmentation induction and dump its trace")
    _add_profile_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fragment)

    p = sub.add_parser("verify", help="theorem verdict plus trace files")
    _add_profile_args(p)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--recheck", help="re-verify a trace JSON instead")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("constants", help="optimise L over delta")
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--grid", type=int, default=1000)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("kk-sweep", help="CSV of thresholds over generated families")
    p.add_argument("--kinds", default="hamiltonian,clique:2,triangle")
    p.add_argument("--n-range", default="4:5")
    p.add_argument("--out")
    p.set_defaults(func=cmd_kk_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    setfam.EXACT_CAP = args.exact_cap
    try:
        return args.func(args)
    except (InputError, ProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
