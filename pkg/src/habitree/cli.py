"""Command line entry point.

Every subcommand reads a scenario file and writes a JSON results document
(stdout or ``--out``). Path exports go to ``--csv-out`` and figures to
``--fig-out``. Exit codes: 0 ok, 1 parse/schema/stale file, 2 domain or
assumption violated, 3 solver failure, 4 a verification check failed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import habit as hb
from . import scenario as scn
from .closed_form import (IsomorphismError, LogPolicyInputs, build_isomorphic_scenario,
                          check_policy_properties, export_policy_csv, initial_consumption,
                          log_policy, verify_isomorphism)
from .cps import CpsInfeasible, CpsSolveError, eps_ladder, export_csv, sample_price_systems
from .preferences import DomainError
from .scenario import SchemaError
from .solver import (DomainBoundaryError, Solution, SolverError, rebuild_cuts, solve_primal,
                     verify_first_order)
from .superhedge import (budget_feasible, call_claim, cash_claim, hedge_cost, self_financing_check,
                         share_claim, superhedge_price)

RESULTS_VERSION = 1
EXIT_SCHEMA, EXIT_DOMAIN, EXIT_SOLVER, EXIT_CHECK = 1, 2, 3, 4

log = logging.getLogger("habitree")


class CliError(Exception):
    def __init__(self, code: int, msg: str, doc: dict | None = None):
        super().__init__(msg)
        self.code = code
        self.doc = doc


# helpers ------------------------------------------------------------------

def _digest(sc) -> str:
    return hashlib.sha256(scn.dumps(sc).encode()).hexdigest()


def _load(path):
    try:
        return scn.load(path)
    except OSError as e:
        raise CliError(EXIT_SCHEMA, f"cannot read {path}: {e.strerror}") from None
    except SchemaError as e:
        raise CliError(EXIT_SCHEMA, f"{path}: {e}") from None


def _with_flags(sc, args):
    changes = {}
    if args.eps is not None:
        changes["eps"] = args.eps
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.max_cuts is not None:
        changes["max_cuts"] = args.max_cuts
    try:
        return sc.replace(**changes) if changes else sc
    except SchemaError as e:
        raise CliError(EXIT_SCHEMA, str(e)) from None


def _lst(a):
    return np.asarray(a, dtype=float).tolist()


def _header(name, args, sc) -> dict:
    return {
        "version": RESULTS_VERSION,
        "package_version": __version__,
        "command": {"name": name, "scenario": str(args.scenario), "eps": sc.eps, "tol": sc.tol,
                    "max_cuts": sc.max_cuts, "seed": args.seed},
        "scenario_digest": _digest(sc),
    }


def _emit(doc: dict, args) -> None:
    text = json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _fig_path(args, default_name):
    p = Path(args.fig_out)
    return p / default_name if p.suffix == "" else p


def _domain_doc(rep) -> dict:
    return {"status": rep.status, "margin": rep.value, "interior": rep.interior,
            "certificate": {"eps": rep.certificate.eps, "Z": _lst(rep.certificate.Z)}}


def solution_csv(tree, sol: Solution) -> str:
    """Columns ``node_id, point, t, c, F, c_tilde, gamma`` on the quadrature grid."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "point", "t", "c", "F", "c_tilde", "gamma"])
    t = tree.point_times()
    for i in range(tree.n):
        pts = range(1) if tree.is_leaf[i] else range(tree.Q)
        for k in pts:
            w.writerow([tree.ids[i], k, repr(float(t[i, k])), repr(float(sol.c[i, k])),
                        repr(float(sol.habit[i, k])), repr(float(sol.c_tilde[i, k])),
                        repr(float(sol.gamma_star[i, k]))])
    return buf.getvalue()


def _solve(sc):
    try:
        return solve_primal(sc)
    except DomainBoundaryError as e:
        raise CliError(EXIT_DOMAIN, str(e), {"domain": _domain_doc(e.report)}) from None
    except DomainError as e:
        raise CliError(EXIT_DOMAIN, str(e)) from None
    except (SolverError, CpsSolveError, CpsInfeasible) as e:
        raise CliError(EXIT_SOLVER, str(e)) from None


# commands -----------------------------------------------------------------

def cmd_solve(args) -> int:
    sc = _with_flags(_load(args.scenario), args)
    doc = _header("solve", args, sc)
    try:
        sol = _solve(sc)
    except CliError as e:
        doc.update(e.doc or {})
        doc["error"] = str(e)
        _emit(doc, args)
        raise
    rep = verify_first_order(sol, sc, tol=args.check_tol)
    bud = budget_feasible(sol.c, sc, sc.eps)
    tree = sc.tree
    doc["node_ids"] = list(tree.ids)
    doc["solution"] = {
        "value": sol.value, "dual_value": sol.dual_value, "phi": sol.phi, "gap": sol.gap,
        "y": sol.y, "r": _lst(sol.r), "lam": _lst(sol.lam), "iterations": sol.iterations,
        "violation": sol.violation, "converged": sol.converged,
        "c_tilde": _lst(sol.c_tilde), "c": _lst(sol.c), "habit": _lst(sol.habit),
        "gamma_star": _lst(sol.gamma_star),
    }
    doc["cuts"] = [{"eps": k.ps.eps, "Z": _lst(k.ps.Z)} for k in sol.cuts]
    doc["duality"] = asdict(rep)
    doc["budget"] = {"feasible": bud.feasible, "value": bud.value, "slack": bud.slack}
    doc["diagnostics"] = dict(sol.diagnostics)
    doc["checks"] = {
        "converged": sol.converged,
        "gap": bool(sol.gap <= 1e-6 * (1.0 + abs(sol.value))),
        "first_order": rep.passed,
        "budget": bud.feasible,
    }
    if args.csv_out:
        _write_text(args.csv_out, solution_csv(tree, sol))
    if args.fig_out:
        from .plotting import plot_consumption
        plot_consumption(tree, sol.c, sol.habit, sol.c_tilde, _fig_path(args, "consumption.png"))
    if args.timing:
        doc["wall_clock_s"] = time.perf_counter() - args.t0
    _emit(doc, args)
    return 0 if sol.converged else EXIT_SOLVER


def parse_claim(sc, spec: str) -> np.ndarray:
    """``cash:K``, ``share:I[:UNITS]``, ``call:K[:I]`` or a JSON file with
    ``{"payoffs": {leaf_id: [g0, ..., gd]}}``."""
    kind, _, rest = spec.partition(":")
    parts = rest.split(":") if rest else []
    try:
        if kind == "cash" and len(parts) == 1:
            return cash_claim(sc, float(parts[0]))
        if kind == "share" and len(parts) in (1, 2):
            units = float(parts[1]) if len(parts) == 2 else 1.0
            return share_claim(sc, int(parts[0]), units)
        if kind == "call" and len(parts) in (1, 2):
            i = int(parts[1]) if len(parts) == 2 else 1
            return call_claim(sc, float(parts[0]), i)
    except (ValueError, IndexError) as e:
        raise CliError(EXIT_SCHEMA, f"bad claim {spec!r}: {e}") from None
    path = Path(spec)
    if not path.exists():
        raise CliError(EXIT_SCHEMA, f"bad claim {spec!r}: expected cash:K, share:I, call:K or a file")
    try:
        d = json.loads(path.read_text())["payoffs"]
        tree = sc.tree
        g = np.zeros((len(tree.leaves), 1 + sc.d))
        for k, leaf in enumerate(tree.leaves):
            g[k] = np.asarray(d[str(tree.ids[leaf])], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise CliError(EXIT_SCHEMA, f"bad claim file {spec}: {e}") from None
    if not np.all(np.isfinite(g)):
        raise CliError(EXIT_SCHEMA, f"bad claim file {spec}: non-finite payoff")
    return g


def _ladder(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("ladder values must be nonnegative")
    return vals


def cmd_price(args) -> int:
    sc = _with_flags(_load(args.scenario), args)
    g = parse_claim(sc, args.claim)
    doc = _header("price", args, sc)
    doc["command"]["claim"] = args.claim
    tree = sc.tree
    try:
        value, ps = superhedge_price(sc, g, sc.eps, args.with_endowment)
        lad = eps_ladder(lambda e: superhedge_price(sc, g, e, args.with_endowment)[0],
                         args.eps_ladder, "up")
        samples = sample_price_systems(sc, args.samples, sc.eps, args.seed)
    except CpsInfeasible as e:
        raise CliError(EXIT_DOMAIN, f"no strictly consistent price system: {e}") from None
    except CpsSolveError as e:
        raise CliError(EXIT_SOLVER, str(e)) from None
    hedge = hedge_cost(sc, g)
    leaf_w = tree.prob[tree.leaves][:, None]
    sampled = [float(np.sum(leaf_w * g * s.Z[tree.leaves])) for s in samples]
    doc["price"] = value
    doc["certificate"] = {"eps": ps.eps, "Z": _lst(ps.Z)}
    doc["eps_ladder"] = {"eps": lad.eps, "values": lad.values, "monotone": lad.monotone,
                         "final": lad.final}
    doc["hedge"] = {"status": hedge.status, "cost": hedge.cost if np.isfinite(hedge.cost) else None}
    checks = {"ladder_monotone": lad.monotone}
    if hedge.portfolio is not None:
        sf = self_financing_check(hedge.portfolio, sc, terminal=g)
        doc["hedge"]["portfolio"] = _lst(hedge.portfolio.V)
        doc["hedge"]["self_financing"] = sf.ok
        checks["hedge_self_financing"] = sf.ok
        checks["price_below_hedge_cost"] = bool(value <= hedge.cost + 1e-9 * (1 + abs(hedge.cost)))
    doc["sampled"] = {"seed": args.seed, "values": sampled, "max": max(sampled) if sampled else None}
    checks["sampled_below_price"] = bool(not sampled or max(sampled) <= value + 1e-9 * (1 + abs(value)))
    doc["checks"] = checks
    if args.csv_out:
        _write_text(args.csv_out, export_csv(tree, ps))
    if args.fig_out:
        from .plotting import plot_ladder
        plot_ladder(lad.eps, lad.values, _fig_path(args, "eps_ladder.png"), doc["hedge"]["cost"])
    if args.timing:
        doc["wall_clock_s"] = time.perf_counter() - args.t0
    _emit(doc, args)
    return 0


def _results(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise CliError(EXIT_SCHEMA, f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise CliError(EXIT_SCHEMA, f"{path}: not valid JSON: {e}") from None
    if not isinstance(doc, dict) or doc.get("version") != RESULTS_VERSION:
        raise CliError(EXIT_SCHEMA, f"{path}: unsupported results version "
                                    f"{doc.get('version') if isinstance(doc, dict) else None!r}")
    if "solution" not in doc or "cuts" not in doc:
        raise CliError(EXIT_SCHEMA, f"{path}: not a solve results file")
    return doc


def cmd_verify(args) -> int:
    doc_in = _results(args.results)
    sc = _with_flags(_load(args.scenario), args)
    if doc_in.get("scenario_digest") != _digest(sc):
        raise CliError(EXIT_SCHEMA, "results were produced for a different scenario (digest mismatch)")
    tree = sc.tree
    s = doc_in["solution"]
    try:
        eps = float(doc_in["cuts"][0]["eps"])
        cuts = rebuild_cuts(sc, [c["Z"] for c in doc_in["cuts"]], eps)
        c = np.asarray(s["c"], dtype=float).reshape(tree.n, tree.Q)
        ct_stored = np.asarray(s["c_tilde"], dtype=float).reshape(tree.n, tree.Q)
        lam = np.asarray(s["lam"], dtype=float)
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise CliError(EXIT_SCHEMA, f"{args.results}: malformed solution: {e}") from None
    if lam.size != len(cuts):
        raise CliError(EXIT_SCHEMA, f"{args.results}: {lam.size} multipliers for {len(cuts)} cuts")
    # c~ is re-derived from the stored c, so a tampered plan shows up in the residuals
    red = hb.reduce(tree, c, sc.habit)
    sol = Solution(red.c_tilde, c, c - red.c_tilde, float(s["value"]), lam, float(lam.sum()),
                   np.asarray(s["r"], dtype=float), np.asarray(s["gamma_star"], dtype=float),
                   float(s["dual_value"]), float(s["phi"]), float(s["gap"]), cuts,
                   int(s["iterations"]), float(s["violation"]), bool(s["converged"]))
    rep = verify_first_order(sol, sc, tol=args.check_tol)
    try:
        bud = budget_feasible(np.maximum(c, 0.0), sc, eps)
    except CpsInfeasible as e:
        raise CliError(EXIT_DOMAIN, str(e)) from None
    w = tree.point_weights() > 0
    consistency = float(np.max(np.abs(red.c_tilde - ct_stored)[w])) if w.any() else 0.0
    doc = _header("verify", args, sc)
    doc["command"]["results"] = str(args.results)
    doc["duality"] = asdict(rep)
    doc["budget"] = {"feasible": bud.feasible, "value": bud.value, "slack": bud.slack}
    doc["reduction"] = {"feasible": red.feasible, "violations": red.violations,
                        "stored_c_tilde_residual": consistency}
    doc["checks"] = {
        "gap": bool(rep.gap <= args.check_tol),
        "first_order": bool(rep.foc_residual <= args.check_tol),
        "pairing": bool(rep.pairing_residual <= args.check_tol),
        "budget": bud.feasible,
        "addictive": red.feasible,
        "stored_c_tilde": bool(consistency <= args.check_tol),
    }
    doc["passed"] = all(doc["checks"].values())
    if args.timing:
        doc["wall_clock_s"] = time.perf_counter() - args.t0
    _emit(doc, args)
    return 0 if doc["passed"] else EXIT_CHECK


def _constant(v, inner) -> float | None:
    v = np.asarray(v, dtype=float)[inner]
    return float(v[0]) if v.size and np.ptp(v) == 0 else None


def cmd_closed_form(args) -> int:
    sc = _with_flags(_load(args.scenario), args)
    tree, h = sc.tree, sc.habit
    inner = ~tree.is_leaf
    a, d = _constant(h.alpha, inner), _constant(h.delta, inner)
    if sc.utility.kind != "log" or sc.utility.discount is not None or a is None or d is None \
            or sc.numeraire is not None:
        raise CliError(EXIT_DOMAIN, "closed form needs undiscounted log utility and constant alpha, delta")
    sol = _solve(sc)
    Z0 = np.array([k.ps.Z0 for k in sol.cuts])
    Y = sol.lam @ Z0 / sol.y
    try:
        inp = LogPolicyInputs(tree, d, a, h.z, Y, sol.y, sol.r, sc.x, sc.q)
    except ValueError as e:
        raise CliError(EXIT_SOLVER, f"solver output does not fit the closed form: {e}") from None
    c, F = log_policy(inp)
    props = check_policy_properties(inp, c, F)
    c0 = h.z + (initial_consumption(d, a, 0.0, tree.T)) / sol.y
    diff = float(np.max(np.abs(c - sol.c)))
    doc = _header("closed-form", args, sc)
    doc["node_ids"] = list(tree.ids)
    doc["closed_form"] = {
        "delta": d, "alpha": a, "z": h.z, "y": sol.y, "Y": _lst(Y), "c": _lst(c), "F": _lst(F),
        "initial_consumption": c0, "normalization_residual": inp.normalization_residual(),
    }
    doc["comparison"] = {"max_abs_diff": diff, "solver_initial": float(sol.c[0, 0]),
                         "initial_diff": abs(float(sol.c[0, 0]) - c0)}
    doc["properties"] = asdict(props)
    doc["checks"] = {
        "matches_solver": bool(diff <= 1e-4),
        "initial_consumption": bool(abs(float(c[0, 0]) - c0) <= 1e-8),
        "normalization": bool(inp.normalization_residual() <= 1e-6),
        "properties": props.ok,
    }
    if args.csv_out:
        _write_text(args.csv_out, export_policy_csv(inp, c, F))
    if args.fig_out:
        from .plotting import plot_policy_comparison
        plot_policy_comparison(tree, sol.c, c, _fig_path(args, "closed_form.png"))
    if args.timing:
        doc["wall_clock_s"] = time.perf_counter() - args.t0
    _emit(doc, args)
    return 0


def cmd_isomorphize(args) -> int:
    sc = _with_flags(_load(args.scenario), args)
    try:
        iso = build_isomorphic_scenario(sc)
    except IsomorphismError as e:
        raise CliError(EXIT_DOMAIN, str(e)) from None
    if args.scenario_out:
        _write_text(args.scenario_out, scn.dumps(iso.transformed))
    doc = _header("isomorphize", args, sc)
    doc["branch"] = iso.branch
    doc["offset"] = iso.offset
    doc["transformed_digest"] = _digest(iso.transformed)
    if args.scenario_out:
        doc["command"]["scenario_out"] = str(args.scenario_out)
    if not args.no_verify:
        rep = verify_isomorphism(sc, tol=args.iso_tol, solve=lambda s: _solve(s))
        doc["back_map"] = asdict(rep)
        doc["back_map"]["ok"] = rep.ok
        doc["checks"] = {"back_map": rep.ok}
    if args.timing:
        doc["wall_clock_s"] = time.perf_counter() - args.t0
    _emit(doc, args)
    return 0


def cmd_domain_check(args) -> int:
    sc = _with_flags(_load(args.scenario), args)
    try:
        rep = hb.effective_domain_check(sc, sc.eps)
    except CpsInfeasible as e:
        raise CliError(EXIT_DOMAIN, f"no strictly consistent price system: {e}") from None
    doc = _header("domain-check", args, sc)
    doc["domain"] = _domain_doc(rep)
    if args.csv_out:
        _write_text(args.csv_out, export_csv(sc.tree, rep.certificate))
    if args.timing:
        doc["wall_clock_s"] = time.perf_counter() - args.t0
    _emit(doc, args)
    return 0 if rep.interior else EXIT_DOMAIN


# parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eps", type=float, help="strictness margin (overrides the scenario)")
    common.add_argument("--tol", type=float, help="cutting-plane tolerance (overrides the scenario)")
    common.add_argument("--max-cuts", type=int, help="cut budget (overrides the scenario)")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled price systems")
    common.add_argument("--out", help="results file (default: stdout)")
    common.add_argument("--csv-out", help="CSV export path")
    common.add_argument("--fig-out", help="figure file or directory")
    common.add_argument("--timing", action="store_true", help="record wall-clock time in the results")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="habitree",
        description="Habit-formation consumption with transaction costs on finite event trees.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve the consumption problem")
    s.add_argument("scenario")
    s.add_argument("--check-tol", type=float, default=1e-8)
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("price", parents=[common], help="superhedging price of a claim")
    s.add_argument("scenario")
    s.add_argument("--claim", required=True, help="cash:K, share:I[:UNITS], call:K[:I] or a JSON file")
    s.add_argument("--eps-ladder", type=_ladder, default=[1e-3, 1e-4, 1e-5])
    s.add_argument("--samples", type=int, default=8)
    s.add_argument("--with-endowment", action="store_true", help="net the scenario endowment")
    s.set_defaults(fn=cmd_price)

    s = sub.add_parser("verify", parents=[common], help="re-check a stored solution")
    s.add_argument("scenario")
    s.add_argument("results")
    s.add_argument("--check-tol", type=float, default=1e-8)
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("closed-form", parents=[common], help="log-utility closed form vs solver")
    s.add_argument("scenario")
    s.set_defaults(fn=cmd_closed_form)

    s = sub.add_parser("isomorphize", parents=[common], help="habit-free equivalent scenario")
    s.add_argument("scenario")
    s.add_argument("--scenario-out", help="where to write the transformed scenario")
    s.add_argument("--no-verify", action="store_true", help="skip the solve-both back-map test")
    s.add_argument("--iso-tol", type=float, default=1e-6)
    s.set_defaults(fn=cmd_isomorphize)

    s = sub.add_parser("domain-check", parents=[common], help="effective-domain classification")
    s.add_argument("scenario")
    s.set_defaults(fn=cmd_domain_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.t0 = time.perf_counter()
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CliError as e:
        print(f"habitree {args.command}: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
