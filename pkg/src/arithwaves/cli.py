"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 domain error, 3 suite failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from .correlations import S6_CAP, CapExceededError, count_s6, s6_decay_scan
from .identities import run_identities
from .kacrice import K2_exact, K2_taylor, covariance_jet, perturbation, singular_set
from .lattice import NotSumOfTwoSquaresError, build_sequence, enumerate_lambda
from .records import (
    RunManifest, append_line, csv_manifest_line, dumps_line, read_lines, record_from_data,
    record_to_data,
)
from .sampler import ExperimentFailedError, default_grid, run_experiment
from .spectral import c_n, c_n_exact, mu_hat, mu_hat_exact

__all__ = ["main", "build_parser", "MAX_MC_GRID"]

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_SUITE = 0, 1, 2, 3
# beyond this grid size a single Monte Carlo trial no longer fits a desk budget
MAX_MC_GRID = 4096
S6_HEADER = ["n", "N", "s6", "s6_over_N4", "s6_over_N3"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="arithwaves", description="Arithmetic random waves on the 2-torus.")
    p.add_argument("--config", help="flat key=value file; command-line flags override it")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, n_many=False):
        if n_many:
            sp.add_argument("n_list", nargs="*", type=int, metavar="n")
        sp.add_argument("--n", type=int, action="append", dest="n_flag")
        sp.add_argument("--sequence", choices=["generic", "cilleruelo", "nu_a"])
        sp.add_argument("--a", type=float)
        sp.add_argument("--terms", type=int)
        sp.add_argument("--cap", type=int)
        sp.add_argument("--out")
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("lambda", help="frequency set and spectral summary")
    common(sp, n_many=True)

    sp = sub.add_parser("identities", help="exact identity suites")
    common(sp, n_many=True)

    sp = sub.add_parser("scan-s6", help="S_6 decay table as CSV")
    common(sp, n_many=True)

    sp = sub.add_parser("experiment", help="Monte Carlo nodal-length experiments")
    common(sp)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--manifest", help="re-run the experiment described by a record file")

    sp = sub.add_parser("singular-set", help="singular squares and their measure")
    common(sp, n_many=True)
    sp.add_argument("--grid", type=int)

    sp = sub.add_parser("k2-probe", help="K2 exact and Taylor at one point")
    common(sp)
    sp.add_argument("--x", type=float, nargs=2, required=False, metavar=("X1", "X2"))
    return p


def _read_config(path: str) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


_CONFIG_TYPES = {"n": int, "a": float, "terms": int, "cap": int, "trials": int, "grid": int,
                 "seed": int, "threads": int, "sequence": str, "out": str}


def _apply_config(args: argparse.Namespace) -> None:
    if not args.config:
        return
    for k, v in _read_config(args.config).items():
        if k not in _CONFIG_TYPES:
            raise UsageError(f"unknown config key {k!r}")
        dest = "n_flag" if k == "n" else k
        if not hasattr(args, dest) or getattr(args, dest) not in (None, [], False):
            continue
        val = _CONFIG_TYPES[k](v)
        setattr(args, dest, [val] if dest == "n_flag" else val)


def _levels(args, allow_empty=False) -> list[int]:
    ns = list(getattr(args, "n_list", None) or []) + list(args.n_flag or [])
    if args.sequence:
        if not args.terms:
            raise UsageError("--sequence needs --terms")
        ns += list(build_sequence(args.sequence, args.terms, a=args.a).terms)
    if not ns and not allow_empty:
        raise UsageError("no levels given (positional n, --n or --sequence)")
    return ns


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# lambda


def cmd_lambda(args) -> int:
    rows = []
    for n in _levels(args):
        fs = enumerate_lambda(n)
        rows.append({"n": n, "N": fs.N, "points": [list(p) for p in fs.points],
                     "mu4": mu_hat(fs, 4), "mu4_exact": str(mu_hat_exact(fs, 4)),
                     "c_n": c_n(fs), "c_n_exact": str(c_n_exact(fs))})
    if args.json:
        _emit("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), args.out)
        return EXIT_OK
    buf = io.StringIO()
    for r in rows:
        buf.write(f"n = {r['n']}  N = {r['N']}  mu_hat(4) = {r['mu4']:.6f} ({r['mu4_exact']})  "
                  f"c_n = {r['c_n']:.8f} ({r['c_n_exact']})\n")
        for a, b in r["points"]:
            buf.write(f"  ({a}, {b})\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# identities


def cmd_identities(args) -> int:
    ns = _levels(args)
    cap = args.cap or S6_CAP
    failed = False
    lines = []
    for n in ns:
        for res in run_identities(n, cap=cap, lemmas=True):
            failed |= res.status == "FAIL"
            lines.append(f"{res.status} n={res.n} {res.name} {res.detail}".rstrip() + "\n")
    _emit("".join(lines), args.out)
    return EXIT_SUITE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# scan-s6


def _existing_rows(path: Path) -> dict[int, list[str]]:
    rows: dict[int, list[str]] = {}
    if not path.exists():
        return rows
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    for rec in csv.reader(lines[1:]):
        if rec:
            rows[int(rec[0])] = rec
    return rows


def cmd_scan_s6(args) -> int:
    ns = _levels(args)
    cap = args.cap or S6_CAP
    manifest = RunManifest("scan-s6", {"levels": ns, "cap": cap},
                           outputs=(args.out,) if args.out else ())
    done = _existing_rows(Path(args.out)) if args.out else {}
    rows = []
    for n in ns:
        if n in done:
            rows.append(done[n])
            continue
        (row,) = s6_decay_scan([n], cap=cap)
        rows.append([str(row.n), str(row.N), str(row.s6), repr(row.s6_over_N4), repr(row.s6_over_N3)])
    buf = io.StringIO()
    buf.write(csv_manifest_line(manifest) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(S6_HEADER)
    w.writerows(rows)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment


def experiment_lines(params: dict, manifest: RunManifest | None = None) -> list[str]:
    """Record lines for an experiment parameter set, one per level."""
    manifest = manifest or RunManifest("experiment", params,
                                       outputs=(params["out"],) if params.get("out") else ())
    lines = []
    for n in params["levels"]:
        fs = enumerate_lambda(n)
        M = params["grid"] or default_grid(n)
        if M > MAX_MC_GRID or M <= 2 * fs.max_coordinate:
            data = {"n": n, "N": fs.N, "mu4": mu_hat(fs, 4), "c_n": c_n(fs), "grid_M": M,
                    "reason": f"grid {M} outside the Monte Carlo range (<= {MAX_MC_GRID}, "
                              f"> 2 max|l_i| = {2 * fs.max_coordinate})"}
            lines.append(dumps_line("skipped", manifest, data))
            continue
        rec = run_experiment(fs, params["trials"], M, params["seed"], params["threads"])
        lines.append(dumps_line("experiment", manifest, record_to_data(rec),
                                {"wall_time": rec.wall_time}))
    return lines


def cmd_experiment(args) -> int:
    if args.manifest:
        first = next(read_lines(args.manifest), None)
        if first is None:
            raise UsageError(f"{args.manifest} holds no records")
        params = dict(first["manifest"].params)
        if args.threads:
            params["threads"] = args.threads
        params["out"] = args.out
    else:
        params = {"levels": _levels(args), "trials": args.trials or 500, "grid": args.grid,
                  "seed": 0 if args.seed is None else args.seed, "threads": args.threads or 1,
                  "out": args.out}
    if params["trials"] < 2:
        raise UsageError("--trials must be at least 2")
    lines = experiment_lines(params)
    for line in lines:
        if args.out:
            append_line(args.out, line)
        else:
            print(line)
        obj = json.loads(line)
        d = obj["data"]
        if obj["kind"] == "skipped":
            print(f"n={d['n']} N={d['N']} skipped: {d['reason']}", file=sys.stderr)
            continue
        rec = record_from_data(d)
        print(f"n={rec.n} N={rec.N} M={rec.grid_M} mean={rec.sample_mean_L:.4f}+-{rec.se_mean:.4f} "
              f"(theory {rec.theory_mean:.4f}) var={rec.sample_var_L:.5f}+-{rec.se_var:.5f} "
              f"ratio={rec.var_ratio:.3f}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# singular-set and k2-probe


def cmd_singular_set(args) -> int:
    lines = []
    for n in _levels(args):
        fs = enumerate_lambda(n)
        rep = singular_set(fs, args.grid)
        R6 = count_s6(fs, args.cap or S6_CAP) / fs.N**6
        d = {"n": n, "N": fs.N, "M": rep.M, "squares": rep.singular_square_count,
             "positive": rep.positive_count, "negative": rep.negative_count,
             "measure": rep.measure_estimate, "min_abs_r": rep.min_abs_r_on_B,
             "R6": R6, "measure_over_R6": rep.measure_estimate / R6}
        lines.append(json.dumps(d, sort_keys=True) + "\n" if args.json else
                     " ".join(f"{k}={v}" for k, v in d.items()) + "\n")
    _emit("".join(lines), args.out)
    return EXIT_OK


def cmd_k2_probe(args) -> int:
    ns = _levels(args)
    if args.x is None:
        raise UsageError("k2-probe needs --x X1 X2")
    lines = []
    for n in ns:
        fs = enumerate_lambda(n)
        jet = covariance_jet(fs, args.x)
        pert = perturbation(jet, fs.E)
        exact = K2_exact(pert, jet.r)
        taylor = K2_taylor(pert, jet.r)
        d = {"n": n, "x": list(args.x), "r": jet.r, "K2_exact": exact, "K2_taylor": taylor,
             "difference": exact - taylor}
        lines.append(json.dumps(d, sort_keys=True) + "\n" if args.json else
                     " ".join(f"{k}={v}" for k, v in d.items()) + "\n")
    _emit("".join(lines), args.out)
    return EXIT_OK


_COMMANDS = {"lambda": cmd_lambda, "identities": cmd_identities, "scan-s6": cmd_scan_s6,
             "experiment": cmd_experiment, "singular-set": cmd_singular_set,
             "k2-probe": cmd_k2_probe}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        _apply_config(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NotSumOfTwoSquaresError, CapExceededError, ExperimentFailedError, ValueError,
            ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
