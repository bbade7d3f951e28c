"""Step random variables on ([0,1], Lebesgue) and the lifting of measures.

A :class:`StepRandomVariable` is constant on the cells of a finite partition
of the unit interval. Its law is the push-forward of Lebesgue measure; every
discrete measure is the law of some step variable, and every coupling of two
laws is the joint law of a suitable pair (see :func:`rearrange_to_coupling`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import inner
from .errors import IndexMismatch, InvalidMeasure, MarginalMismatch
from .measures import (
    CostSpec,
    Coupling,
    DiscreteMeasure,
    NestedMeasure,
    _as_point,
    all_exact,
    num,
    canonicalize,
    make_measure,
    measure_eq,
    tsum,
)
from .nested import solve_nested


@dataclass(frozen=True)
class Partition:
    breakpoints: tuple

    def __post_init__(self):
        bp = tuple(self.breakpoints)
        if len(bp) < 2 or bp[0] != 0 or bp[-1] != 1:
            raise InvalidMeasure("breakpoints must run from 0 to 1")
        if any(not bp[k] < bp[k + 1] for k in range(len(bp) - 1)):
            raise InvalidMeasure("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)

    def __len__(self):
        return len(self.breakpoints) - 1

    @property
    def lengths(self):
        bp = self.breakpoints
        return [bp[k + 1] - bp[k] for k in range(len(self))]


@dataclass(frozen=True)
class StepRandomVariable:
    partition: Partition
    values: tuple

    def __post_init__(self):
        vals = tuple(_as_point(v) for v in self.values)
        if len(vals) != len(self.partition):
            raise InvalidMeasure("one value per cell is required")
        if len({len(v) for v in vals}) != 1:
            raise InvalidMeasure("values of different dimensions")
        object.__setattr__(self, "values", vals)

    @property
    def cells(self):
        bp = self.partition.breakpoints
        return [(bp[k], bp[k + 1], v) for k, v in enumerate(self.values)]

    def __call__(self, q):
        bp = self.partition.breakpoints
        for k in range(len(self.values)):
            if q < bp[k + 1]:
                return self.values[k]
        return self.values[-1]

    def to_json(self):
        return {
            "breakpoints": [num(t) for t in self.partition.breakpoints],
            "values": [[num(x) for x in v] for v in self.values],
        }

    @classmethod
    def from_json(cls, data, exact=False):
        from .measures import to_fraction

        conv = to_fraction if exact else float
        return cls(
            Partition(tuple(conv(t) for t in data["breakpoints"])),
            tuple(tuple(conv(x) for x in v) for v in data["values"]),
        )


def step_variable(breakpoints, values) -> StepRandomVariable:
    return StepRandomVariable(Partition(tuple(breakpoints)), tuple(values))


def law(Z: StepRandomVariable) -> DiscreteMeasure:
    """Push-forward of Lebesgue measure under Z (canonical form)."""
    return make_measure(Z.values, Z.partition.lengths)


def _cumulative(weights):
    exact = all_exact(weights)
    acc = Fraction(0) if exact else 0.0
    out = [acc]
    for w in weights[:-1]:
        acc = acc + w
        out.append(acc)
    out.append(Fraction(1) if exact else 1.0)
    return out


def lift_measure(mu: DiscreteMeasure) -> StepRandomVariable:
    """Canonical lift: consecutive cells of length ``w_k`` carrying the atoms in order."""
    return step_variable(_cumulative(list(mu.weights)), mu.atoms)


def permute_cells(Z: StepRandomVariable, perm) -> StepRandomVariable:
    """Same law, cells laid out in the order ``perm``."""
    lengths = Z.partition.lengths
    return step_variable(_cumulative([lengths[k] for k in perm]), [Z.values[k] for k in perm])


def _value_at_cells(Z: StepRandomVariable, grid):
    vals = []
    k = 0
    bp = Z.partition.breakpoints
    for t in grid[:-1]:
        while bp[k + 1] <= t:
            k += 1
        vals.append(Z.values[k])
    return vals


def common_refinement(Z1: StepRandomVariable, Z2: StepRandomVariable):
    """Both variables rewritten on the union of their breakpoints."""
    grid = sorted(set(Z1.partition.breakpoints) | set(Z2.partition.breakpoints))
    return (
        step_variable(grid, _value_at_cells(Z1, grid)),
        step_variable(grid, _value_at_cells(Z2, grid)),
    )


def joint_law(Z1: StepRandomVariable, Z2: StepRandomVariable) -> Coupling:
    """Law of the pair ``(Z1, Z2)`` as a coupling of the two canonical laws."""
    A, B = common_refinement(Z1, Z2)
    mu, nu = law(Z1), law(Z2)
    ia = {x: k for k, x in enumerate(mu.atoms)}
    ib = {y: k for k, y in enumerate(nu.atoms)}
    lengths = A.partition.lengths
    zero = Fraction(0) if all_exact(lengths) else 0.0
    mat = [[zero] * len(nu) for _ in range(len(mu))]
    for length, x, y in zip(lengths, A.values, B.values):
        mat[ia[x]][ib[y]] += length
    return Coupling(mu, nu, mat)


def lifted_cost(Z1: StepRandomVariable, Z2: StepRandomVariable, c: CostSpec):
    """``∫ c(Z1(q), Z2(q)) dq``."""
    A, B = common_refinement(Z1, Z2)
    return tsum(L * c(x, y) for L, x, y in zip(A.partition.lengths, A.values, B.values))


def rearrange_to_coupling(Z1: StepRandomVariable, pi: Coupling) -> StepRandomVariable:
    """A step variable Z2 with ``joint_law(Z1, Z2) == pi``.

    Each level set ``{Z1 = x_i}`` is filled from left to right with the
    targets of row ``i`` of ``pi`` (targets in canonical order), each taking a
    total length equal to its plan entry.
    """
    mu = law(Z1)
    exact = mu.exact and pi.source.exact
    tol = 0 if exact else 1e-9
    if not measure_eq(mu, pi.source, tol):
        raise MarginalMismatch("first marginal of the plan is not the law of Z1")
    tgt_order = sorted(range(len(pi.target)), key=lambda j: pi.target.atoms[j])
    queues = {}
    for i, x in enumerate(pi.source.atoms):
        key = _match(x, mu.atoms, tol)
        q = [[pi.target.atoms[j], pi.matrix[i][j]] for j in tgt_order if pi.matrix[i][j] > 0]
        queues.setdefault(key, []).extend(q)
    eps = 0 if exact else 1e-15
    bps = [Fraction(0) if exact else 0.0]
    vals = []
    for lo, hi, x in Z1.cells:
        q = queues[_match(x, mu.atoms, tol)]
        cur = lo
        while cur < hi - eps:
            if not q:
                raise MarginalMismatch("plan row mass does not cover its level set")
            y, r = q[0]
            piece = min(r, hi - cur)
            # in float mode absorb round-off into the last piece of the cell
            if not exact and (hi - cur) - piece <= 1e-15:
                piece = hi - cur
            nxt = hi if piece == hi - cur else cur + piece
            if nxt > bps[-1]:
                if vals and vals[-1] == y and not exact:
                    bps[-1] = nxt
                else:
                    bps.append(nxt)
                    vals.append(y)
            q[0][1] = r - piece
            if q[0][1] <= eps or (not exact and q[0][1] <= 1e-15):
                q.pop(0)
            cur = nxt
    bps[-1] = Fraction(1) if exact else 1.0
    return step_variable(bps, vals)


def _match(x, atoms, tol):
    for a in atoms:
        if (tol == 0 and a == x) or (tol and max(abs(u - v) for u, v in zip(a, x)) <= tol):
            return a
    raise MarginalMismatch(f"atom {x} has no counterpart")


def lifted_nested_cost(M1: NestedMeasure, M2: NestedMeasure, c: CostSpec, **kw):
    """Nested cost rebuilt from lifts.

    Every cell ``(i, j)`` of an optimal outer plan contributes its weight
    times the lifted cost between the canonical lift of ``mu_i`` and the
    rearrangement realizing the optimal inner plan.
    """
    sol = solve_nested(M1, M2, c, **kw)
    total = []
    for (i, j), pi, w in zip(sol.cells, sol.random_coupling.atoms, sol.random_coupling.weights):
        Z1 = lift_measure(M1.atoms[i])
        Z2 = rearrange_to_coupling(Z1, pi)
        if not measure_eq(law(Z2), M2.atoms[j], 0 if M2.exact else 1e-9):
            raise MarginalMismatch("rearranged lift does not reproduce the target atom")
        total.append(w * lifted_cost(Z1, Z2, c))
    return tsum(total)


# --------------------------------------------------------------------------- #
# law invariance of lifted potentials
# --------------------------------------------------------------------------- #

@dataclass
class LiftPotentialReport:
    passed: bool
    evaluations: int
    discrepancies: list

    def to_json(self):
        return {"passed": self.passed, "evaluations": self.evaluations, "witness": self.discrepancies}


def lifted_potential(phi, M: NestedMeasure, Z: StepRandomVariable, tol=None):
    """``phi`` evaluated at the law of Z (the lifted function ``phi ∘ law``)."""
    if tol is None:
        tol = 0 if M.exact else 1e-9
    k = M.index_of(law(Z), tol)
    if k is None:
        raise IndexMismatch("law of the step variable is not an atom of the nested measure")
    return phi[k]


def lift_potential_check(phi, M: NestedMeasure, samples=None, permutations: int = 5, seed: int = 0):
    """Check that ``phi ∘ law`` depends only on the law.

    Compares the canonical lift of every atom with randomly cell-permuted
    lifts; extra step variables in ``samples`` are evaluated too (they must
    have a law among M's atoms).
    """
    rng = np.random.default_rng(seed)
    bad, count = [], 0
    for i, mu in enumerate(M.atoms):
        base = lift_measure(mu)
        ref = lifted_potential(phi, M, base)
        count += 1
        for _ in range(permutations):
            Z = permute_cells(base, [int(k) for k in rng.permutation(len(base.values))])
            val = lifted_potential(phi, M, Z)
            count += 1
            if val != ref:
                bad.append({"atom": i, "canonical": ref, "permuted": val})
    for Z in samples or ():
        lifted_potential(phi, M, Z)
        count += 1
    return LiftPotentialReport(not bad, count, bad)


# --------------------------------------------------------------------------- #
# distance in probability
# --------------------------------------------------------------------------- #

def _dist(norm: str, q=None):
    metric = CostSpec(p=1, norm=norm, q=q)
    return lambda x, y: metric(x, y)


def probability_distance(Z: StepRandomVariable, W: StepRandomVariable, norm: str = "euclidean", q=None):
    """``∫ min(1, d(Z, W)) dq``: metrizes convergence in probability."""
    d = _dist(norm, q)
    A, B = common_refinement(Z, W)
    return tsum(L * min(1, d(x, y)) for L, x, y in zip(A.partition.lengths, A.values, B.values))


def truncated_w1(mu: DiscreteMeasure, nu: DiscreteMeasure, norm: str = "euclidean", q=None):
    """Transport cost between the laws for the bounded metric ``min(1, d)``."""
    d = _dist(norm, q)
    C = [[min(1, d(x, y)) for y in nu.atoms] for x in mu.atoms]
    plan, _, _, _ = inner.transport_simplex(list(mu.weights), list(nu.weights), C)
    return tsum(plan[i][j] * C[i][j] for i in range(len(mu)) for j in range(len(nu)) if plan[i][j] != 0)
