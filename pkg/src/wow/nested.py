"""Optimal transport between laws of random measures.

The outer cost between two inner atoms is their optimal inner transport cost;
the outer problem is again a discrete transportation problem. An optimal
random coupling is assembled by selecting, for every cell of the optimal
outer plan, the inner solver's optimal vertex plan.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from . import inner
from .errors import NumericalFailure
from .measures import (
    TAU_GAP,
    CostSpec,
    DualPotentials,
    NestedMeasure,
    OuterCoupling,
    RandomCoupling,
    all_exact,
    num,
    induced_outer_coupling,
    tsum,
)


@dataclass(frozen=True)
class NestedSolution:
    cost: object
    outer_plan: OuterCoupling
    outer_duals: DualPotentials
    random_coupling: RandomCoupling
    inner_solutions: dict = field(repr=False)
    cells: tuple = ()

    def to_json(self):
        return {
            "cost": num(self.cost),
            "outer_plan": [[num(v) for v in r] for r in self.outer_plan.matrix],
            "phi_outer": [num(v) for v in self.outer_duals.phi],
            "psi_outer": [num(v) for v in self.outer_duals.psi],
            "random_coupling": [
                {
                    "weight": num(w),
                    "plan": [[num(v) for v in r] for r in pi.matrix],
                    "source_index": i,
                    "target_index": j,
                }
                for (i, j), pi, w in zip(
                    self.cells, self.random_coupling.atoms, self.random_coupling.weights
                )
            ],
        }


def _solver(method, mu, nu):
    if method == "auto" and mu.dim == 1:
        return inner.solve_1d_monotone
    if method == "monotone":
        return inner.solve_1d_monotone
    return inner.solve


def _solve_cell(args):
    i, j, mu, nu, c, method = args
    try:
        return i, j, _solver(method, mu, nu)(mu, nu, c)
    except NumericalFailure as exc:
        raise NumericalFailure(f"inner problem ({i}, {j}): {exc}") from exc


def _jobs(jobs):
    if jobs is None:
        jobs = int(os.environ.get("WOW_JOBS", "1") or 1)
    return max(1, int(jobs))


def inner_table(M1: NestedMeasure, M2: NestedMeasure, c: CostSpec, jobs=None, method="simplex") -> dict:
    """All inner solutions keyed by ``(i, j)``; evaluated in parallel when ``jobs > 1``."""
    tasks = [(i, j, mu, nu, c, method) for i, mu in enumerate(M1.atoms) for j, nu in enumerate(M2.atoms)]
    jobs = _jobs(jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_cell, tasks))
    else:
        results = [_solve_cell(t) for t in tasks]
    return {(i, j): sol for i, j, sol in results}


def outer_cost_matrix(M1: NestedMeasure, M2: NestedMeasure, c: CostSpec, jobs=None, method="simplex") -> list:
    table = inner_table(M1, M2, c, jobs, method)
    return [[table[i, j].cost for j in range(len(M2))] for i in range(len(M1))]


def solve_nested(M1: NestedMeasure, M2: NestedMeasure, c: CostSpec, jobs=None, method="simplex") -> NestedSolution:
    """Nested transport value, optimal outer plan, outer potentials and an optimal random coupling.

    ``method`` selects the inner solver: ``"simplex"`` (default) always runs
    the network simplex; ``"auto"`` uses the monotone sweep for 1-D inner
    measures, which returns the same values.
    """
    table = inner_table(M1, M2, c, jobs, method)
    C = [[table[i, j].cost for j in range(len(M2))] for i in range(len(M1))]
    plan, u, v, _ = inner.transport_simplex(list(M1.weights), list(M2.weights), C)
    cost = tsum(plan[i][j] * C[i][j] for i in range(len(M1)) for j in range(len(M2)) if plan[i][j] != 0)
    cells, atoms, weights = [], [], []
    for i, row in enumerate(plan):
        for j, w in enumerate(row):
            if w > 0:
                cells.append((i, j))
                atoms.append(table[i, j].plan)
                weights.append(w)
    if not all_exact(weights):
        total = tsum(weights)
        weights = [w / total for w in weights]
    return NestedSolution(
        cost=cost,
        outer_plan=OuterCoupling(M1, M2, plan),
        outer_duals=DualPotentials(u, v, "outer"),
        random_coupling=RandomCoupling(tuple(atoms), tuple(weights)),
        inner_solutions=table,
        cells=tuple(cells),
    )


def wow_distance(M1: NestedMeasure, M2: NestedMeasure, c: CostSpec, **kw) -> float:
    """Wasserstein-on-Wasserstein distance: nested cost to the power 1/p."""
    cost = solve_nested(M1, M2, c, **kw).cost
    return float(cost) ** (1.0 / float(c.p)) if cost > 0 else 0.0


def random_coupling_cost(P: RandomCoupling, c: CostSpec):
    return tsum(w * pi.cost(c) for pi, w in zip(P.atoms, P.weights))


@dataclass(frozen=True)
class OuterGapReport:
    lhs: object
    rhs: object
    gap: object
    inequality: bool
    equality: bool

    def to_json(self):
        return {
            "lhs": num(self.lhs),
            "rhs": num(self.rhs),
            "gap": num(self.gap),
            "inequality": self.inequality,
            "equality": self.equality,
        }


def verify_outer_gap(P: RandomCoupling, c: CostSpec, tol=None) -> OuterGapReport:
    """Compare the induced outer objective with the random-coupling objective.

    The outer objective never exceeds the random-coupling objective; the two
    coincide exactly when every atom of P is an optimal inner plan.
    """
    exact = all_exact(P.weights) and all(pi.source.exact and pi.target.exact for pi in P.atoms)
    if tol is None:
        tol = 0 if exact else TAU_GAP
    outer = induced_outer_coupling(P)
    lhs = tsum(
        outer.matrix[i][j] * inner.solve(outer.source.atoms[i], outer.target.atoms[j], c).cost
        for (i, j) in outer.support()
    )
    rhs = random_coupling_cost(P, c)
    gap = rhs - lhs
    equality = all(inner.is_optimal(pi, c, tol) for pi in P.atoms)
    return OuterGapReport(lhs, rhs, gap, lhs <= rhs + tol, equality)
