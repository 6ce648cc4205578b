"""Command-line front end.

Exit codes: 0 success, 1 input/validation error (also a failed
reproduction), 2 characterizing-axiom violation under ``--strict``,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Any, Sequence

from apusp.analysis import compromise_test, fit_cost_family, parse_grid, sample_draws
from apusp.axioms import CHARACTERIZING, audit_all
from apusp.dataset import DEFAULT_EPS_TIE, read_dataset_csv
from apusp.errors import ApuspError, NumericalError, SpecError
from apusp.model import Menu, load_model
from apusp.presets import FAMILIES, PRESETS, get_preset
from apusp.reference import DEFAULT_TOLERANCES, TABLE_NAMES, reproduce
from apusp.solver import DEFAULT_TOL, PRINT_ZERO, SolveResult, solve_menu

EXIT_OK, EXIT_INPUT, EXIT_STRICT, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for --strict here
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--format", choices=("json", "csv", "md"), default="md")
    g.add_argument("--tolerance", type=float, default=None,
                   help="solver tolerance (solve/simulate/fit), tie tolerance (audit) "
                        "or comparison tolerance (reproduce)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--quiet", action="store_true", help="do not print the resolved configuration")
    return p


def _add_model_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="model JSON file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--menu", required=True, help='menu literal, e.g. "4:4,5:2"')


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="apusp", description="Stochastic choice with norm-weighted perturbation costs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="optimal choice probabilities on one menu")
    _add_model_args(p)

    p = sub.add_parser("audit", parents=[common], help="check a dataset against the axioms")
    p.add_argument("--data", required=True)
    p.add_argument("--strict", action="store_true", help="exit 2 if a characterizing axiom is violated")

    p = sub.add_parser("reproduce", parents=[common], help="diff built-in models against reference tables")
    p.add_argument("--table", required=True, choices=TABLE_NAMES)

    p = sub.add_parser("simulate", parents=[common], help="sample choices from a solved menu")
    _add_model_args(p)
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("test", parents=[common], help="one-sided compromise-effect test")
    p.add_argument("--counts", required=True, help="n_x,n_y")
    p.add_argument("--sig", type=float, default=0.05)

    p = sub.add_parser("fit", parents=[common], help="grid-fit a cost family to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--family", required=True, choices=sorted(FAMILIES))
    p.add_argument("--grid", required=True, help='e.g. "gamma=50:150:5;eta=2"')
    return parser


# ---------------------------------------------------------------------------
# rendering helpers


def _csv(rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _json(obj: Any) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _render_solve(res: SolveResult, fmt: str) -> str:
    d = res.to_dict()
    if fmt == "json":
        return _json(d)
    if fmt == "csv":
        return _csv([["menu_id", "x1", "x2", "p"]]
                     + [[d["menu_id"], repr(r["x1"]), repr(r["x2"]), repr(r["p"])] for r in d["probs"]])
    lines = [f"# Solution for menu {d['menu_id']}", "", "| allocation | p |", "|---|---|"]
    for a, p in res.distribution.items():
        lines.append(f"| {a} | {0.0 if p < PRINT_ZERO else p:.6f} |")
    lines += ["", f"lambda: {res.lam:.10g}", f"iterations: {res.iterations}",
              f"max FOC residual: {res.max_foc_residual:.3g}"]
    return "\n".join(lines) + "\n"


def _load_model(args):
    if args.preset:
        return get_preset(args.preset)
    try:
        return load_model(args.config)
    except OSError as exc:
        raise SpecError(f"cannot read config: {exc}", field="config") from None


def _read_data(path: str, eps_tie: float):
    try:
        return read_dataset_csv(path, eps_tie)
    except OSError as exc:
        raise SpecError(f"cannot read data: {exc}", field="data") from None


def _solver_tol(args) -> float:
    return DEFAULT_TOL if args.tolerance is None else args.tolerance


def _parse_menu(literal: str) -> Menu:
    try:
        return Menu.parse(literal)
    except SpecError as exc:
        raise SpecError(f"--menu: {exc}", field=exc.field) from None


# ---------------------------------------------------------------------------
# subcommands; each returns (stdout text, exit code)


def cmd_solve(args) -> tuple[str, int]:
    model = _load_model(args)
    res = solve_menu(model, _parse_menu(args.menu), _solver_tol(args))
    return _render_solve(res, args.format), EXIT_OK


def cmd_audit(args) -> tuple[str, int]:
    eps = DEFAULT_EPS_TIE if args.tolerance is None else args.tolerance
    report = audit_all(_read_data(args.data, eps))
    code = EXIT_STRICT if args.strict and report.characterization_violated else EXIT_OK
    if args.format == "json":
        return report.to_json() + "\n", code
    if args.format == "csv":
        rows = [["axiom", "role", "status", "checked", "witnesses"]]
        for v in report.verdicts:
            role = "characterizing" if v.axiom in CHARACTERIZING else "diagnostic"
            rows.append([v.axiom, role, v.status, v.checked, len(v.witnesses)])
        return _csv(rows), code
    return report.to_markdown(), code


def cmd_reproduce(args) -> tuple[str, int]:
    report = reproduce(args.table, args.tolerance)
    code = EXIT_OK if report.passed else EXIT_INPUT
    if args.format == "json":
        return report.to_json() + "\n", code
    if args.format == "csv":
        return report.to_csv(), code
    return report.to_markdown(), code


def cmd_simulate(args) -> tuple[str, int]:
    if args.n < 0:
        raise SpecError("--n must be >= 0", field="n")
    model = _load_model(args)
    res = solve_menu(model, _parse_menu(args.menu), _solver_tol(args))
    counts = sample_draws(res.distribution, args.n, args.seed)
    rows = [(a, p, c) for (a, p), c in zip(res.distribution.items(), counts)]
    if args.format == "json":
        return _json({"menu_id": res.menu.id, "n": args.n, "seed": args.seed,
                      "counts": [{"x1": a.x1, "x2": a.x2, "p": p, "count": c} for a, p, c in rows]}), EXIT_OK
    if args.format == "csv":
        return _csv([["menu_id", "x1", "x2", "p", "count"]]
                    + [[res.menu.id, repr(a.x1), repr(a.x2), repr(p), c] for a, p, c in rows]), EXIT_OK
    lines = [f"# {args.n} draws from menu {res.menu.id} (seed {args.seed})", "",
             "| allocation | p | count |", "|---|---|---|"]
    lines += [f"| {a} | {p:.6f} | {c} |" for a, p, c in rows]
    return "\n".join(lines) + "\n", EXIT_OK


def _parse_counts(text: str) -> tuple[int, int]:
    parts = text.split(",")
    try:
        if len(parts) != 2:
            raise ValueError
        n_x, n_y = (int(s) for s in parts)
    except ValueError:
        raise SpecError(f"--counts must be two integers n_x,n_y, got {text!r}", field="counts") from None
    return n_x, n_y


def cmd_test(args) -> tuple[str, int]:
    res = compromise_test(*_parse_counts(args.counts), sig=args.sig)
    d = res.to_dict()
    if args.format == "json":
        return _json(d), EXIT_OK
    if args.format == "csv":
        return _csv([["n_x", "n_y", "p_value", "reject", "sig"],
                     [res.n_x, res.n_y, repr(res.p_value), res.reject, res.sig]]), EXIT_OK
    decision = "reject H0" if res.reject else "fail to reject H0"
    lines = ["# Compromise-effect test", "",
             f"H0: {d['null']}", f"statistic: {d['statistic']}", "",
             f"n_x = {res.n_x}, n_y = {res.n_y}", f"p-value = {res.p_value:.6g}",
             f"decision at {res.sig:g}: {decision}"]
    return "\n".join(lines) + "\n", EXIT_OK


def cmd_fit(args) -> tuple[str, int]:
    grid = parse_grid(args.grid)
    ds = _read_data(args.data, DEFAULT_EPS_TIE)
    res = fit_cost_family(ds, args.family, grid)
    if args.format == "json":
        return res.to_json() + "\n", EXIT_OK
    if args.format == "csv":
        return res.to_csv(), EXIT_OK
    return res.to_markdown(), EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "audit": cmd_audit,
    "reproduce": cmd_reproduce,
    "simulate": cmd_simulate,
    "test": cmd_test,
    "fit": cmd_fit,
}


def _resolved(args) -> dict[str, Any]:
    cfg = {k: v for k, v in sorted(vars(args).items())}
    if cfg["command"] == "reproduce" and cfg["tolerance"] is None:
        cfg["tolerance"] = DEFAULT_TOLERANCES[args.table]
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not args.quiet:
        print("config: " + json.dumps(_resolved(args), sort_keys=True), file=sys.stderr)
    try:
        out, code = COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ApuspError as exc:
        field = getattr(exc, "field", None)
        prefix = f"error [{field}]" if field else "error"
        print(f"{prefix}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
