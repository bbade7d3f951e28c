"""Command-line front end: ``wow <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 usage or parse error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import certificates, lifting, monge
from .errors import BudgetExceeded, NotEqualSize, NumericalFailure, WowError
from .io import Tolerances, dumps, load_instance, parse_random_coupling
from .measures import make_nested, measure_eq, validate_random_coupling
from .nested import random_coupling_cost, solve_nested, verify_outer_gap

SUITES = ("coupling", "monotone", "potential", "lifting", "monge")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- #
# subcommands
# --------------------------------------------------------------------------- #

def cmd_dist(inst, args):
    sol = solve_nested(inst.m1, inst.m2, inst.cost, jobs=args.jobs)
    p = float(inst.cost.p)
    dist = float(sol.cost) ** (1.0 / p) if sol.cost > 0 else 0.0
    return {"cost": sol.cost, "wow_distance": dist}, EXIT_OK


def cmd_plan(inst, args):
    return solve_nested(inst.m1, inst.m2, inst.cost, jobs=args.jobs).to_json(), EXIT_OK


def cmd_potentials(inst, args):
    sol = solve_nested(inst.m1, inst.m2, inst.cost, jobs=args.jobs)
    C = [[sol.inner_solutions[i, j].cost for j in range(len(inst.m2))] for i in range(len(inst.m1))]
    inner_duals = [
        {"source_index": i, "target_index": j, "phi": list(s.duals.phi), "psi": list(s.duals.psi)}
        for (i, j), s in sorted(sol.inner_solutions.items())
    ]
    return {
        "cost": sol.cost,
        "phi_outer": list(sol.outer_duals.phi),
        "psi_outer": list(sol.outer_duals.psi),
        "outer_cost_matrix": C,
        "inner": inner_duals,
    }, EXIT_OK


def _check(name, passed, detail=None):
    return {"name": name, "passed": bool(passed), "detail": detail}


def _suite_coupling(inst, P, sol, tol):
    checks = [_check("marginal laws", validate_random_coupling(P, inst.m1, inst.m2, tol.sum or None))]
    rep = verify_outer_gap(P, inst.cost, tol.gap)
    checks.append(_check("induced outer objective below random-coupling objective", rep.inequality, rep.to_json()))
    cost = random_coupling_cost(P, inst.cost)
    checks.append(
        _check("cost equals nested optimum", abs(cost - sol.cost) <= tol.gap, {"cost": cost, "optimum": sol.cost})
    )
    return checks


def _suite_monotone(inst, P, sol, tol, seed):
    rep = certificates.check_total_monotone(P.atoms, inst.cost, tol=tol.gap)
    checks = [_check("total cyclical monotonicity", rep.passed, rep.to_json())]
    sampled = certificates.falsify_total_monotone_sampled(
        P.atoms, inst.cost, N=min(3, max(1, len(P))), samples=200, seed=seed, tol=max(tol.gap, 1e-12)
    )
    checks.append(_check("sampled gluings", sampled.passed, sampled.to_json()))
    return checks


def _suite_potential(inst, P, sol, tol):
    C = [[sol.inner_solutions[i, j].cost for j in range(len(inst.m2))] for i in range(len(inst.m1))]
    rep = certificates.check_superdifferential_certificate(
        P, sol.outer_duals.phi, sol.outer_duals.psi, inst.m1, inst.m2, inst.cost, tol.gap, C
    )
    checks = [_check("outer potential identity", rep.passed, rep.to_json())]
    worst = max(abs(s.gap) for s in sol.inner_solutions.values())
    feas = all(
        s.duals.feasible([[inst.cost(x, y) for y in s.plan.target.atoms] for x in s.plan.source.atoms], tol.feas)
        for s in sol.inner_solutions.values()
    )
    checks.append(_check("inner duality gap", worst <= tol.gap, {"max_gap": worst}))
    checks.append(_check("inner dual feasibility", feas))
    return checks


def _suite_lifting(inst, P, sol, tol, seed):
    checks = []
    rt = all(
        measure_eq(lifting.law(lifting.lift_measure(mu)), mu, tol.sum)
        for M in (inst.m1, inst.m2)
        for mu in M.atoms
    )
    checks.append(_check("law of lift round trip", rt))
    lc = lifting.lifted_nested_cost(inst.m1, inst.m2, inst.cost)
    checks.append(_check("lifted nested cost", abs(lc - sol.cost) <= tol.gap, {"lifted": lc, "optimum": sol.cost}))
    below = True
    for pi in P.atoms:
        Z1 = lifting.lift_measure(pi.source)
        Z2 = lifting.rearrange_to_coupling(Z1, pi)
        below &= abs(lifting.lifted_cost(Z1, Z2, inst.cost) - pi.cost(inst.cost)) <= tol.gap
    checks.append(_check("rearranged lifts reproduce plan costs", below))
    rep = lifting.lift_potential_check(sol.outer_duals.phi, inst.m1, seed=seed)
    checks.append(_check("lifted potential law invariance", rep.passed, rep.to_json()))
    return checks


def _suite_monge(inst, P, sol, tol):
    checks = []
    nmap = monge.is_fully_deterministic(P, tol.sum)
    if nmap is not None:
        image = monge.make_random_coupling(nmap, inst.m1)
        M2 = make_nested([pi.target for pi in image.atoms], list(inst.m1.weights))
        kant = solve_nested(inst.m1, M2, inst.cost).cost
        val = random_coupling_cost(image, inst.cost)
        checks.append(_check("map cost above nested optimum", val >= kant - tol.gap, {"map": val, "optimum": kant}))
    else:
        checks.append(_check("map cost above nested optimum", True, "random coupling is not fully deterministic"))
    try:
        sm = monge.strict_monge_equal_size(inst.m1, inst.m2, inst.cost)
        checks.append(_check("strict Monge attains optimum", sm.gap <= max(tol.gap, 1e-9), sm.to_json()))
    except NotEqualSize as exc:
        checks.append(_check("strict Monge attains optimum", True, f"not applicable: {exc}"))
    return checks


def cmd_verify(inst, args):
    names = [s.strip() for s in (args.suite or "").split(",") if s.strip()]
    if not names:
        raise UsageError("--suite needs at least one of " + ", ".join(SUITES))
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(unknown)}")
    tol = args.tolerances
    sol = solve_nested(inst.m1, inst.m2, inst.cost, jobs=args.jobs)
    if args.plan:
        with open(args.plan) as fh:
            P = parse_random_coupling(json.load(fh), inst)
    else:
        P = sol.random_coupling
    report = {"suites": {}}
    for name in names:
        if name == "coupling":
            checks = _suite_coupling(inst, P, sol, tol)
        elif name == "monotone":
            checks = _suite_monotone(inst, P, sol, tol, args.seed)
        elif name == "potential":
            checks = _suite_potential(inst, P, sol, tol)
        elif name == "lifting":
            checks = _suite_lifting(inst, P, sol, tol, args.seed)
        else:
            checks = _suite_monge(inst, P, sol, tol)
        report["suites"][name] = {"passed": all(c["passed"] for c in checks), "checks": checks}
    report["passed"] = all(s["passed"] for s in report["suites"].values())
    return report, EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_lift(inst, args):
    lifts = {
        "m1": [lifting.lift_measure(mu).to_json() for mu in inst.m1.atoms],
        "m2": [lifting.lift_measure(nu).to_json() for nu in inst.m2.atoms],
    }
    cost = solve_nested(inst.m1, inst.m2, inst.cost, jobs=args.jobs).cost
    return {"lifts": lifts, "lifted_cost": lifting.lifted_nested_cost(inst.m1, inst.m2, inst.cost), "cost": cost}, EXIT_OK


def cmd_monge(inst, args):
    if args.levels:
        rows = monge.pratelli_refinement_experiment(inst.m1, inst.m2, inst.cost, args.levels)
        if args.format == "csv":
            return monge.table_to_csv(rows), EXIT_OK
        return {"table": rows}, EXIT_OK
    return monge.strict_monge_equal_size(inst.m1, inst.m2, inst.cost).to_json(), EXIT_OK


def cmd_counterexample(args):
    if args.grid < 2 or args.grid % 2:
        raise UsageError("--grid must be an even integer >= 2")
    rep = monge.linfty_counterexample(args.grid, args.p, exact=args.mode == "rational")
    return rep.to_json(), EXIT_OK


# --------------------------------------------------------------------------- #
# argument parsing
# --------------------------------------------------------------------------- #

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=("float", "rational"), default=None, help="arithmetic mode")
    common.add_argument("--tol", type=float, default=None, help="override all tolerances")
    common.add_argument("--tol-sum", type=float, default=None)
    common.add_argument("--tol-feas", type=float, default=None)
    common.add_argument("--tol-gap", type=float, default=None)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--jobs", type=int, default=None, help="parallel inner solves (env WOW_JOBS)")
    common.add_argument("-o", "--output", default=None, help="write the report to a file")

    parser = argparse.ArgumentParser(prog="wow", description="Nested optimal transport between laws of random measures.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("dist", "nested cost and Wasserstein-on-Wasserstein distance"),
        ("plan", "optimal outer plan, potentials and random coupling"),
        ("potentials", "outer and inner dual potentials"),
        ("lift", "step-function lifts and the lifted nested cost"),
    ]:
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("instance")
    p = sub.add_parser("verify", parents=[common], help="run verification suites")
    p.add_argument("instance")
    p.add_argument("--suite", default=",".join(SUITES), help="comma-separated: " + ",".join(SUITES))
    p.add_argument("--plan", default=None, help="plan JSON (wow plan output) to verify instead of the solver's")
    p = sub.add_parser("monge", parents=[common], help="strict Monge solution or refinement table")
    p.add_argument("instance")
    p.add_argument("--levels", type=int, default=0, help="run the refinement experiment up to this level")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p = sub.add_parser("counterexample", parents=[common], help="sup-norm non-uniqueness example")
    p.add_argument("--grid", type=int, default=4)
    p.add_argument("--p", type=float, default=2.0)
    return parser


def _emit(result, exact, output):
    text = result if isinstance(result, str) else dumps(result, exact) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "dist": cmd_dist,
        "plan": cmd_plan,
        "potentials": cmd_potentials,
        "verify": cmd_verify,
        "lift": cmd_lift,
        "monge": cmd_monge,
    }
    try:
        if args.command == "counterexample":
            if args.seed is None:
                args.seed = 0
            result, code = cmd_counterexample(args)
            _emit(result, args.mode == "rational", args.output)
            return code
        inst = load_instance(args.instance, args.mode)
        if args.seed is None:
            args.seed = inst.seed
        args.tolerances = Tolerances.resolve(inst.exact, args.tol, args.tol_sum, args.tol_feas, args.tol_gap)
        result, code = handlers[args.command](inst, args)
        _emit(result, inst.exact, args.output)
        return code
    except UsageError as exc:
        print(f"wow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, BudgetExceeded) as exc:
        print(f"wow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NotEqualSize as exc:
        print(f"wow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, TypeError, WowError) as exc:
        print(f"wow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
