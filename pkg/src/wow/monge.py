"""Deterministic couplings, strict Monge maps and uniqueness phenomena.

A two-level map sends every inner atom ``mu_i`` of M1 to a target measure via
a point map ``T_i``; the induced random coupling carries the deterministic
plan ``(id, T_i)_# mu_i`` with weight ``M1(mu_i)``. On equal-size uniform
instances the optimal outer plan is a permutation and the optimal inner plans
are permutations too, so the strict Monge value equals the nested Kantorovich
value.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import inner
from .errors import BudgetExceeded, NotEqualSize, PushforwardMismatch, UnsupportedNorm
from .measures import (
    NORMS,
    TAU_GAP,
    CostSpec,
    Coupling,
    DiscreteMeasure,
    NestedMeasure,
    RandomCoupling,
    all_exact,
    num,
    induced_outer_coupling,
    make_measure,
    make_nested,
    measure_eq,
    nested_eq,
    tsum,
)
from .nested import random_coupling_cost, solve_nested


# --------------------------------------------------------------------------- #
# deterministic plans and two-level maps
# --------------------------------------------------------------------------- #

def is_deterministic(pi: Coupling, tol=0):
    """The point map ``x_i -> y_j`` if every row carries mass on a single cell, else None."""
    out = {}
    for x, row in zip(pi.source.atoms, pi.matrix):
        hits = [j for j, v in enumerate(row) if v > tol]
        if len(hits) != 1:
            return None
        out[x] = pi.target.atoms[hits[0]]
    return out


@dataclass(frozen=True)
class NestedMap:
    """``inner_maps[i]`` maps the support of ``M1.atoms[i]`` to points; ``outer_assignment[i]``
    is the index of its image among the target nested measure's atoms (None if unknown)."""

    inner_maps: tuple
    outer_assignment: tuple | None = None

    def to_json(self):
        return {
            "outer_assignment": None if self.outer_assignment is None else list(self.outer_assignment),
            "inner_maps": [
                [{"from": [num(v) for v in x], "to": [num(v) for v in y]} for x, y in m.items()]
                for m in self.inner_maps
            ],
        }


def pushforward(mu: DiscreteMeasure, T: dict) -> DiscreteMeasure:
    return make_measure([T[x] for x in mu.atoms], list(mu.weights))


def _map_plan(mu: DiscreteMeasure, T: dict) -> Coupling:
    nu = pushforward(mu, T)
    index = {y: k for k, y in enumerate(nu.atoms)}
    zero = Fraction(0) if mu.exact else 0.0
    mat = [[zero] * len(nu) for _ in range(len(mu))]
    for i, x in enumerate(mu.atoms):
        mat[i][index[T[x]]] = mu.weights[i]
    return Coupling(mu, nu, mat)


def make_random_coupling(nmap: NestedMap, M1: NestedMeasure, M2: NestedMeasure | None = None) -> RandomCoupling:
    """Fully deterministic random coupling induced by a two-level map.

    If ``M2`` is given, the image of M1 must equal it (and match
    ``outer_assignment`` when present), else :class:`PushforwardMismatch`.
    """
    if len(nmap.inner_maps) != len(M1):
        raise PushforwardMismatch("one inner map per atom of M1 is required")
    try:
        plans = [_map_plan(mu, T) for mu, T in zip(M1.atoms, nmap.inner_maps)]
    except KeyError as exc:
        raise PushforwardMismatch(f"inner map undefined at {exc.args[0]}") from None
    P = RandomCoupling(tuple(plans), tuple(M1.weights))
    if M2 is not None:
        tol = 0 if (M1.exact and M2.exact) else 1e-9
        image = make_nested([pi.target for pi in plans], list(M1.weights), tol)
        if not nested_eq(image, M2, tol):
            raise PushforwardMismatch("the map does not push M1 onto M2")
        if nmap.outer_assignment is not None:
            for pi, j in zip(plans, nmap.outer_assignment):
                if not measure_eq(pi.target, M2.atoms[j], tol):
                    raise PushforwardMismatch("outer assignment disagrees with the inner maps")
    return P


def is_fully_deterministic(P: RandomCoupling, tol=0):
    """The two-level map behind P, or None.

    Requires the induced outer plan to be deterministic, every atom to be a
    deterministic plan, and a single plan per first marginal.
    """
    outer = induced_outer_coupling(P)
    assignment = []
    for row in outer.matrix:
        hits = [j for j, v in enumerate(row) if v > tol]
        if len(hits) != 1:
            return None
        assignment.append(hits[0])
    mtol = 0 if all_exact(P.weights) else 1e-9
    maps = [None] * len(outer.source)
    for pi in P.atoms:
        T = is_deterministic(pi, tol)
        if T is None:
            return None
        i = outer.source.index_of(pi.source, mtol)
        # map keyed by the canonical atoms of the outer source
        T = {a: T[b] for a, b in zip(outer.source.atoms[i].atoms, _align_points(outer.source.atoms[i], pi.source))}
        if maps[i] is None:
            maps[i] = T
        elif maps[i] != T:
            return None
    return NestedMap(tuple(maps), tuple(assignment))


def _align_points(canon: DiscreteMeasure, mu: DiscreteMeasure):
    out = []
    for a in canon.atoms:
        out.append(min(mu.atoms, key=lambda b: max(abs(u - v) for u, v in zip(a, b))))
    return out


# --------------------------------------------------------------------------- #
# strict Monge on equal-size instances
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class StrictMongeSolution:
    map: NestedMap
    value: object
    kantorovich_value: object
    gap: object
    random_coupling: RandomCoupling = field(repr=False, default=None)

    def to_json(self):
        return {
            "value": num(self.value),
            "kantorovich_value": num(self.kantorovich_value),
            "gap": num(self.gap),
            "map": self.map.to_json(),
        }


def _uniform(weights) -> bool:
    if all_exact(weights):
        return len(set(weights)) == 1
    return max(weights) - min(weights) <= 1e-12


def _permutation(C):
    """Optimal assignment of an n x n cost matrix via the transportation simplex on unit supplies."""
    n = len(C)
    plan, _, _, _ = inner.transport_simplex([1] * n, [1] * n, C)
    sigma = []
    for row in plan:
        hits = [j for j, v in enumerate(row) if v > 0.5]
        if len(hits) != 1 or any(abs(v - round(v)) > 1e-9 for v in row):
            raise AssertionError("assignment vertex is not a permutation")
        sigma.append(hits[0])
    return sigma


def _inner_map(mu: DiscreteMeasure, nu: DiscreteMeasure, c: CostSpec):
    """Optimal point map from mu onto nu, or None if none exists among optimal plans we can build."""
    if len(mu) == len(nu) and _uniform(mu.weights) and _uniform(nu.weights):
        C = inner.cost_matrix(mu, nu, c)
        sigma = _permutation(C)
        return {x: nu.atoms[j] for x, j in zip(mu.atoms, sigma)}
    if mu.dim == 1:
        return is_deterministic(inner.solve_1d_monotone(mu, nu, c).plan)
    return None


def _map_cost(mu: DiscreteMeasure, T: dict, c: CostSpec):
    return tsum(w * c(x, T[x]) for x, w in zip(mu.atoms, mu.weights))


def strict_monge_equal_size(M1: NestedMeasure, M2: NestedMeasure, c: CostSpec) -> StrictMongeSolution:
    """Optimal two-level map on equal-size uniform instances.

    Preconditions: M1 and M2 have the same number of atoms with uniform
    weights, and every pair of inner atoms admits an optimal point map
    (equal-size uniform supports, or 1-D supports whose monotone plan is
    deterministic). Otherwise :class:`NotEqualSize` is raised.
    """
    n = len(M1)
    if len(M2) != n or not _uniform(M1.weights) or not _uniform(M2.weights):
        raise NotEqualSize("outer measures must have equally many atoms with uniform weights")
    maps = {}
    for i, mu in enumerate(M1.atoms):
        for j, nu in enumerate(M2.atoms):
            T = _inner_map(mu, nu, c)
            if T is None:
                raise NotEqualSize(f"no optimal point map between inner atoms {i} and {j}")
            maps[i, j] = T
    S = [[_map_cost(mu, maps[i, j], c) for j in range(n)] for i, mu in enumerate(M1.atoms)]
    sigma = _permutation(S)
    nmap = NestedMap(tuple(maps[i, sigma[i]] for i in range(n)), tuple(sigma))
    P = make_random_coupling(nmap, M1, M2)
    value = random_coupling_cost(P, c)
    kant = solve_nested(M1, M2, c).cost
    return StrictMongeSolution(nmap, value, kant, value - kant, P)


# --------------------------------------------------------------------------- #
# refinement experiment
# --------------------------------------------------------------------------- #

def _bisect(points, masses, axis):
    """Split a weighted point cloud into two halves of equal mass along ``axis``."""
    order = sorted(range(len(points)), key=lambda k: (points[k][axis], points[k]))
    total = sum(masses, 0 * masses[0])
    half = total / 2
    left, right = ([], []), ([], [])
    acc = 0 * total
    for k in order:
        m = masses[k]
        if acc + m <= half:
            left[0].append(points[k]); left[1].append(m)
        elif acc >= half:
            right[0].append(points[k]); right[1].append(m)
        else:
            a = half - acc
            left[0].append(points[k]); left[1].append(a)
            right[0].append(points[k]); right[1].append(m - a)
        acc += m
    return left, right


def quantize(mu: DiscreteMeasure, level: int) -> list:
    """``2**level`` equal-mass points: recursive equal-mass bisection, alternating axes, cell means.

    In 1-D the cells are the dyadic quantile intervals and each point is the
    mean of the quantile function over its interval.
    """
    cells = [(list(mu.atoms), list(mu.weights))]
    for k in range(level):
        axis = k % mu.dim
        nxt = []
        for pts, ms in cells:
            a, b = _bisect(pts, ms, axis)
            nxt.extend([a, b])
        cells = nxt
    out = []
    for pts, ms in cells:
        tot = sum(ms, 0 * ms[0])
        out.append(tuple(sum((m * p[d] for p, m in zip(pts, ms)), 0 * tot) / tot for d in range(mu.dim)))
    return out


def _replicate(M: NestedMeasure, slots: int) -> list:
    """Outer quantile at the slot midpoints ``(s + 1/2) / slots``."""
    cum, acc = [], 0
    for w in M.weights:
        acc += w
        cum.append(acc)
    out = []
    for s in range(slots):
        t = Fraction(2 * s + 1, 2 * slots)
        k = next((i for i, v in enumerate(cum) if t <= v), len(cum) - 1)
        out.append(k)
    return out


def _slot_cost(xs, ys, c: CostSpec):
    """Optimal cost between two equal-size uniform point lists (duplicates allowed)."""
    n = len(xs)
    if len(xs[0]) == 1:
        a = sorted(xs)
        b = sorted(ys)
        return tsum(c(x, y) for x, y in zip(a, b)) / n
    C = [[c(x, y) for y in ys] for x in xs]
    sigma = _permutation(C)
    return tsum(C[i][sigma[i]] for i in range(n)) / n


def pratelli_refinement_experiment(M1: NestedMeasure, M2: NestedMeasure, c: CostSpec, levels: int = 6):
    """Strict Monge values of quantized instances against the nested cost of the original.

    Level ``k`` quantizes every inner atom to ``2**k`` equal-mass points and
    replicates each outer measure into ``2**k`` equal-weight slots; the strict
    Monge value is the optimal slot assignment with optimal point assignments
    inside. Replicated slots and coinciding points count as distinct.
    Returns rows ``{"level", "kantorovich", "strict_monge", "gap"}``.
    """
    if levels > 8:
        raise BudgetExceeded("at most 8 refinement levels")
    if M1.dim > 2:
        raise ValueError("refinement experiments support 1-D and 2-D inner measures")
    kant = solve_nested(M1, M2, c, method="auto").cost
    rows = []
    for k in range(1, levels + 1):
        n = 2 ** k
        q1 = [quantize(mu, k) for mu in M1.atoms]
        q2 = [quantize(nu, k) for nu in M2.atoms]
        C = [[_slot_cost(a, b, c) for b in q2] for a in q1]
        s1, s2 = _replicate(M1, n), _replicate(M2, n)
        S = [[C[i][j] for j in s2] for i in s1]
        sigma = _permutation(S)
        value = tsum(S[s][sigma[s]] for s in range(n)) / n
        gap = abs(value - kant)
        rows.append({"level": k, "kantorovich": kant, "strict_monge": value, "gap": gap})
    return rows


def table_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "kantorovich", "strict_monge", "gap"])
    for r in rows:
        w.writerow([r["level"], repr(float(r["kantorovich"])), repr(float(r["strict_monge"])), repr(float(r["gap"]))])
    return buf.getvalue()


# --------------------------------------------------------------------------- #
# strict convexity and uniqueness
# --------------------------------------------------------------------------- #

def _norm_name(norm):
    if isinstance(norm, CostSpec):
        return norm.norm
    if isinstance(norm, dict):
        return "ell_q"
    return norm


def strict_convexity_witness(norm, dim: int = 2):
    """Unit vectors ``x != y`` with a unit-norm midpoint, or None for strictly convex norms."""
    name = _norm_name(norm)
    if name not in NORMS:
        raise UnsupportedNorm(f"unknown norm {name!r}")
    if dim < 2:
        raise UnsupportedNorm("witness search needs dimension at least 2")
    pad = (0,) * (dim - 2)
    if name == "ell_inf":
        return (1, 1) + pad, (1, -1) + pad
    if name == "ell_1":
        return (1, 0) + pad, (0, 1) + pad
    return None


def midpoint_norm_scan(c: CostSpec, dim: int = 2, samples: int = 1000, separation: float = 1e-2, seed: int = 0):
    """Largest midpoint norm over random pairs of unit vectors at least ``separation`` apart."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    while count < samples:
        x, y = rng.normal(size=dim), rng.normal(size=dim)
        x = x / c.norm_of(tuple(x))
        y = y / c.norm_of(tuple(y))
        if c.norm_of(tuple(x - y)) < separation:
            continue
        worst = max(worst, c.norm_of(tuple((x + y) / 2)))
        count += 1
    return worst


@dataclass(frozen=True)
class CounterexampleReport:
    grid_n: int
    p: float
    plan_a: Coupling
    plan_b: Coupling
    cost_a: object
    cost_b: object
    plan_distance: object
    optimal_a: bool
    optimal_b: bool
    euclidean_cost_a: object
    euclidean_cost_b: object

    def to_json(self):
        return {
            "grid_n": self.grid_n,
            "p": num(self.p),
            "cost_a": num(self.cost_a),
            "cost_b": num(self.cost_b),
            "plan_distance": num(self.plan_distance),
            "optimal_a": self.optimal_a,
            "optimal_b": self.optimal_b,
            "euclidean_cost_a": num(self.euclidean_cost_a),
            "euclidean_cost_b": num(self.euclidean_cost_b),
            "plan_a": [[num(v) for v in r] for r in self.plan_a.matrix],
            "plan_b": [[num(v) for v in r] for r in self.plan_b.matrix],
        }


def rectangle_grid(grid_n: int, offset=0, exact: bool = True) -> DiscreteMeasure:
    """Uniform measure on the cell centres of ``[0,1] x [0,2]`` (shifted by ``offset`` in x)."""
    frac = Fraction if exact else (lambda a, b=1: a / b)
    pts = [
        (frac(2 * a + 1, 2 * grid_n) + offset, frac(2 * b + 1, 2 * grid_n))
        for a in range(grid_n)
        for b in range(2 * grid_n)
    ]
    n = len(pts)
    return make_measure(pts, [frac(1, n)] * n)


def linfty_counterexample(grid_n: int, p=2, exact: bool = True) -> CounterexampleReport:
    """Two distinct optimal plans for the sup-norm cost between shifted rectangles.

    The shift ``(x, y) -> (x + 2, y)`` and the split map ``(x, y) -> (x + 2, y + 1)``
    for ``y < 1``, ``(x + 2, y - 1)`` otherwise, both move every point by
    sup-norm distance 2.
    """
    if grid_n < 2 or grid_n % 2:
        raise ValueError("grid_n must be an even integer >= 2")
    mu = rectangle_grid(grid_n, 0, exact)
    nu = rectangle_grid(grid_n, 2, exact)
    shift = {x: (x[0] + 2, x[1]) for x in mu.atoms}
    split = {x: (x[0] + 2, x[1] + 1 if x[1] < 1 else x[1] - 1) for x in mu.atoms}
    A, B = _map_plan(mu, shift), _map_plan(mu, split)
    assert A.target == nu and B.target == nu
    c = CostSpec(p=p, norm="ell_inf")
    ca, cb = A.cost(c), B.cost(c)
    tv = tsum(abs(u - v) for ra, rb in zip(A.matrix, B.matrix) for u, v in zip(ra, rb)) / 2
    opt = inner.solve(mu, nu, c).cost
    tol = 0 if exact else 1e-9
    e = CostSpec(p=p, norm="euclidean")
    return CounterexampleReport(
        grid_n, p, A, B, ca, cb, tv, ca <= opt + tol, cb <= opt + tol, A.cost(e), B.cost(e)
    )


@dataclass(frozen=True)
class UniquenessReport:
    consistent_with_uniqueness: bool
    max_distance: float
    deterministic_fraction: float
    runs: int
    note: str = "probe only: agreement across shuffled solver runs is evidence, not a certificate"

    def to_json(self):
        return {
            "consistent_with_uniqueness": self.consistent_with_uniqueness,
            "max_distance": self.max_distance,
            "deterministic_fraction": self.deterministic_fraction,
            "runs": self.runs,
            "note": self.note,
        }


def _shuffled(M: NestedMeasure, rng):
    outer = rng.permutation(len(M))
    atoms = []
    for k in outer:
        mu = M.atoms[k]
        perm = rng.permutation(len(mu))
        atoms.append(DiscreteMeasure(tuple(mu.atoms[i] for i in perm), tuple(mu.weights[i] for i in perm)))
    return NestedMeasure(tuple(atoms), tuple(M.weights[k] for k in outer)), [int(k) for k in outer]


def _canonical_tensor(sol, M1, M2, o1, o2):
    """Random coupling as ``{(i, j): weight * plan}`` in canonical indices, dense float arrays."""
    out = {}
    for (a, b), pi, w in zip(sol.cells, sol.random_coupling.atoms, sol.random_coupling.weights):
        i, j = o1[a], o2[b]
        mu, nu = M1.atoms[i], M2.atoms[j]
        ri = {x: k for k, x in enumerate(mu.atoms)}
        rj = {y: k for k, y in enumerate(nu.atoms)}
        W = np.zeros((len(mu), len(nu)))
        for x, row in zip(pi.source.atoms, pi.matrix):
            for y, v in zip(pi.target.atoms, row):
                W[ri[x], rj[y]] += float(w) * float(v)
        out[i, j] = out.get((i, j), 0) + W
    return out


def _tensor_distance(A, B):
    total = 0.0
    for key in set(A) | set(B):
        if key in A and key in B:
            total += float(np.abs(A[key] - B[key]).sum())
        else:
            total += float(np.abs(A.get(key, B.get(key))).sum())
    return total


def uniqueness_probe(
    M1: NestedMeasure,
    M2: NestedMeasure,
    c: CostSpec,
    perturbations: int = 8,
    seed: int = 0,
    allow_nonstrict: bool = False,
    tol: float = TAU_GAP,
) -> UniquenessReport:
    """Re-solve under shuffled atom orders and compare the optimal random couplings.

    Flags ``consistent_with_uniqueness`` when every run returns the same
    random coupling within ``tol`` and all its atoms are deterministic plans.
    Norms that are not strictly convex (or p = 1) are refused unless
    ``allow_nonstrict`` is set.
    """
    if not allow_nonstrict and (not c.strictly_convex or not c.p > 1):
        raise UnsupportedNorm("uniqueness probing needs a strictly convex norm and p > 1")
    rng = np.random.default_rng(seed)
    base = solve_nested(M1, M2, c)
    ref = _canonical_tensor(base, M1, M2, list(range(len(M1))), list(range(len(M2))))
    dist = 0.0
    tensors = [ref]
    for _ in range(perturbations):
        S1, o1 = _shuffled(M1, rng)
        S2, o2 = _shuffled(M2, rng)
        sol = solve_nested(S1, S2, c)
        T = _canonical_tensor(sol, M1, M2, o1, o2)
        for U in tensors:
            dist = max(dist, _tensor_distance(T, U))
        tensors.append(T)
    det = [is_deterministic(pi, 1e-12) is not None for pi in base.random_coupling.atoms]
    frac = sum(det) / len(det)
    return UniquenessReport(dist <= tol and frac == 1.0, dist, frac, perturbations + 1)
