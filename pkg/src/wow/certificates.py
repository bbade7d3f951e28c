"""Optimality certificates for random couplings.

Three computable checks, each equivalent to optimality at finite support:

* total cyclical monotonicity of the atoms, reduced to inner optimality of
  every atom plus cyclical monotonicity of the marginal pairs under the
  inner-cost ``C``;
* a sampled, direct test of the defining inequality over gluings, which can
  only falsify;
* the potential identity ``phi(first marginal) + psi(second marginal) =
  plan cost`` for a feasible outer potential pair.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import inner
from .errors import BudgetExceeded, IndexMismatch
from .measures import (
    TAU_FEAS,
    TAU_GAP,
    CostSpec,
    Coupling,
    DiscreteMeasure,
    NestedMeasure,
    RandomCoupling,
    all_exact,
    measure_eq,
    product_coupling,
)

MAX_CYCLE = 4
MAX_EXHAUSTIVE_PAIRS = 8
CYCLE_BUDGET = 500_000


@dataclass
class MonotoneReport:
    passed: bool
    witness: dict | None = None
    exhaustive: bool = True
    note: str = ""

    def to_json(self):
        return {
            "passed": self.passed,
            "exhaustive": self.exhaustive,
            "note": self.note,
            "witness": _jsonable(self.witness),
        }


@dataclass
class CertificateReport:
    passed: bool
    feasible: bool
    failures: list = field(default_factory=list)

    def to_json(self):
        return {"passed": self.passed, "feasible": self.feasible, "witness": _jsonable(self.failures)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return obj
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _tol(values, tol):
    if tol is not None:
        return tol
    return 0 if all_exact(values) else TAU_GAP


def _distinct(measures, tol):
    reps, index = [], []
    for mu in measures:
        for k, r in enumerate(reps):
            if measure_eq(r, mu, tol):
                index.append(k)
                break
        else:
            index.append(len(reps))
            reps.append(mu)
    return reps, index


def pair_cost_table(pairs, c: CostSpec, tol=0):
    """Distinct first/second measures of ``pairs`` and the inner-cost matrix between them."""
    firsts, fi = _distinct([a for a, _ in pairs], tol)
    seconds, si = _distinct([b for _, b in pairs], tol)
    C = [[inner.solve(a, b, c).cost for b in seconds] for a in firsts]
    return firsts, seconds, fi, si, C


def _cycles(n, max_cycle):
    """Index sequences of length 2..max_cycle, first entry minimal (rotations skipped)."""
    for k in range(2, max_cycle + 1):
        for seq in itertools.product(range(n), repeat=k):
            if seq[0] == min(seq):
                yield seq


def check_c_cyclical_monotone(
    pairs,
    c: CostSpec,
    max_cycle: int = MAX_CYCLE,
    tol=None,
    budget: int = CYCLE_BUDGET,
    samples: int = 20_000,
    seed: int = 0,
) -> MonotoneReport:
    """Cyclical monotonicity of measure pairs under the inner optimal cost.

    For every cycle ``i_1..i_k`` (repetitions allowed) checks
    ``sum C(mu1_{i_t}, mu2_{i_{t-1}}) >= sum C(mu1_{i_t}, mu2_{i_t}) - tol``.
    With more than ``MAX_EXHAUSTIVE_PAIRS`` pairs, cycles are sampled and a
    pass is not a proof.
    """
    pairs = list(pairs)
    n = len(pairs)
    exact = all(a.exact and b.exact for a, b in pairs)
    tol = (0 if exact else TAU_GAP) if tol is None else tol
    if n <= 1:
        return MonotoneReport(True, note="cycles of length one are tautological")
    _, _, fi, si, C = pair_cost_table(pairs, c, 0 if exact else 1e-12)

    def test(seq):
        k = len(seq)
        diag = sum((C[fi[seq[t]]][si[seq[t]]] for t in range(k)), 0 * C[0][0])
        shifted = sum((C[fi[seq[t]]][si[seq[t - 1]]] for t in range(k)), 0 * C[0][0])
        if shifted < diag - tol:
            return {
                "cycle": list(seq),
                "paired_cost": diag,
                "shifted_cost": shifted,
            }
        return None

    exhaustive = n <= MAX_EXHAUSTIVE_PAIRS
    if exhaustive:
        count = sum(n ** k for k in range(2, max_cycle + 1))
        if count > budget:
            raise BudgetExceeded(f"{count} cycles exceed the budget of {budget}")
        seqs = _cycles(n, max_cycle)
        note = f"all cycles up to length {max_cycle}"
    else:
        rng = np.random.default_rng(seed)
        seqs = (
            tuple(int(x) for x in rng.integers(0, n, size=int(rng.integers(2, max_cycle + 1))))
            for _ in range(samples)
        )
        note = f"{samples} random cycles; passing is not a proof"
    for seq in seqs:
        w = test(seq)
        if w is not None:
            return MonotoneReport(False, w, exhaustive, note)
    return MonotoneReport(True, None, exhaustive, note)


def check_total_monotone(F, c: CostSpec, max_cycle: int = MAX_CYCLE, tol=None, **kw) -> MonotoneReport:
    """Total cyclical monotonicity of a finite family of plans.

    Equivalent to (a) every plan being an optimal inner plan and (b) the
    marginal pairs being cyclically monotone for the inner cost.
    """
    F = list(F)
    exact = all(pi.source.exact and pi.target.exact for pi in F)
    tol = (0 if exact else TAU_GAP) if tol is None else tol
    for k, pi in enumerate(F):
        opt = inner.solve(pi.source, pi.target, c).cost
        val = pi.cost(c)
        if val > opt + tol:
            return MonotoneReport(
                False,
                {"clause": "a", "index": k, "plan_cost": val, "optimal_cost": opt},
                note="an atom is not an optimal inner plan",
            )
    rep = check_c_cyclical_monotone([(pi.source, pi.target) for pi in F], c, max_cycle, tol, **kw)
    if not rep.passed:
        rep.witness = {"clause": "b", **rep.witness}
    return rep


# --------------------------------------------------------------------------- #
# sampled falsification over gluings
# --------------------------------------------------------------------------- #

def _kernel(pi: Coupling) -> np.ndarray:
    """Row-stochastic transition matrix of a plan."""
    P = np.asarray(pi.matrix, dtype=float)
    return P / P.sum(axis=1, keepdims=True)


def _random_vertex_plan(mu: DiscreteMeasure, nu: DiscreteMeasure, rng) -> Coupling:
    ri = rng.permutation(len(mu))
    rj = rng.permutation(len(nu))
    a = [float(mu.weights[i]) for i in ri]
    b = [float(nu.weights[j]) for j in rj]
    cells, flows = inner.northwest_corner(a, b, 1e-13)
    M = np.zeros((len(mu), len(nu)))
    for (i, j), x in zip(cells, flows):
        M[ri[i], rj[j]] += max(x, 0.0)
    # rescale rows to the exact float marginal
    M *= (np.asarray(mu.weights, dtype=float) / M.sum(axis=1))[:, None]
    return M


def _glue_plan(mu, nu, rng, c):
    """A coupling of ``mu`` (rows) and ``nu`` (columns) used to chain consecutive pairs."""
    kind = rng.integers(0, 3)
    if kind == 0:
        return np.outer(np.asarray(mu.weights, float), np.asarray(nu.weights, float))
    if kind == 1:
        return np.asarray(inner.solve(nu, mu, c).plan.matrix, dtype=float).T
    return _random_vertex_plan(mu, nu, rng)


def _pair_laws(plans, glue_kind, rng, c):
    """Joint laws of ``(x1_i, x2_j)`` for every ``i, j`` under one gluing of ``plans``."""
    N = len(plans)
    mu1 = [np.asarray(p.source.weights, float) for p in plans]
    mu2 = [np.asarray(p.target.weights, float) for p in plans]
    laws = {}
    for i, p in enumerate(plans):
        laws[i, i] = np.asarray(p.matrix, dtype=float)
    if glue_kind == "product":
        for i in range(N):
            for j in range(N):
                if i != j:
                    laws[i, j] = np.outer(mu1[i], mu2[j])
        return laws
    K = [_kernel(p) for p in plans]
    G = []
    for i in range(N - 1):
        g = _glue_plan(plans[i].target, plans[i + 1].source, rng, c)
        G.append(g / g.sum(axis=1, keepdims=True))
    for i in range(N):
        # forward chain x1_i -> x2_i -> x1_{i+1} -> x2_{i+1} -> ...
        T = K[i]
        for j in range(i + 1, N):
            T = T @ G[j - 1] @ K[j]
            laws[i, j] = mu1[i][:, None] * T
    for j in range(N):
        # x2_j -> x1_{j+1} -> x2_{j+1} -> ... -> x1_i, then transpose
        T = None
        for i in range(j + 1, N):
            T = G[i - 1] if T is None else T @ K[i - 1] @ G[i - 1]
            laws[i, j] = (mu2[j][:, None] * T).T
    return laws


def falsify_total_monotone_sampled(
    F,
    c: CostSpec,
    N: int = 3,
    samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-9,
    sigma=None,
    gluings=("product", "chain"),
) -> MonotoneReport:
    """Search for a gluing and a permutation violating total cyclical monotonicity.

    Each sample draws N plans from F (with repetition), a gluing (independent
    product or a chain through couplings of consecutive marginals) and a
    permutation, then compares the exact integrals of both sides. A pass only
    means no counterexample was found.
    """
    F = list(F)
    if not 1 <= N <= 4:
        raise ValueError("N must lie in 1..4")
    rng = np.random.default_rng(seed)
    cache = {}

    def cmat(a: DiscreteMeasure, b: DiscreteMeasure):
        key = (id(a), id(b))
        if key not in cache:
            cache[key] = np.asarray(inner.cost_matrix(a, b, c), dtype=float)
        return cache[key]

    for s in range(samples):
        idx = [int(k) for k in rng.integers(0, len(F), size=N)]
        plans = [F[k] for k in idx]
        kind = gluings[int(rng.integers(0, len(gluings)))]
        perm = list(sigma) if sigma is not None else [int(x) for x in rng.permutation(N)]
        laws = _pair_laws(plans, kind, rng, c)
        lhs = sum(float((laws[i, i] * cmat(plans[i].source, plans[i].target)).sum()) for i in range(N))
        rhs = sum(
            float((laws[i, perm[i]] * cmat(plans[i].source, plans[perm[i]].target)).sum())
            for i in range(N)
        )
        if lhs > rhs + tol:
            return MonotoneReport(
                False,
                {"sample": s, "plans": idx, "gluing": kind, "sigma": perm, "lhs": lhs, "rhs": rhs},
                exhaustive=False,
                note="violating gluing found",
            )
    return MonotoneReport(
        True, None, exhaustive=False, note=f"no violation in {samples} sampled gluings; not a proof"
    )


# --------------------------------------------------------------------------- #
# potentials
# --------------------------------------------------------------------------- #

def c_transform(phi, C):
    """``psi_j = min_i (C_ij - phi_i)``."""
    return [min(C[i][j] - phi[i] for i in range(len(phi))) for j in range(len(C[0]))]


def _locate(M: NestedMeasure, mu: DiscreteMeasure, tol, what):
    k = M.index_of(mu, tol)
    if k is None:
        raise IndexMismatch(f"{what} marginal {mu!r} is not an atom of the nested measure")
    return k


def check_superdifferential_certificate(
    P: RandomCoupling,
    phi,
    psi,
    M1: NestedMeasure,
    M2: NestedMeasure,
    c: CostSpec,
    tol=None,
    C=None,
) -> CertificateReport:
    """Potential identity for every atom: ``phi(first) + psi(second) == <pi, c>``.

    ``psi=None`` uses the transform of ``phi``. The pair must be feasible
    (``phi_i + psi_j <= C_ij``); infeasibility fails the certificate.
    """
    exact = M1.exact and M2.exact and all_exact(P.weights)
    if tol is None:
        tol = 0 if exact else TAU_GAP
    if C is None:
        C = [[inner.solve(a, b, c).cost for b in M2.atoms] for a in M1.atoms]
    if psi is None:
        psi = c_transform(phi, C)
    lookup_tol = 0 if exact else 1e-9
    failures = []
    feasible = True
    for i in range(len(M1)):
        for j in range(len(M2)):
            if phi[i] + psi[j] > C[i][j] + (tol if tol else 0) + (0 if exact else TAU_FEAS):
                feasible = False
                failures.append({"kind": "infeasible", "i": i, "j": j, "phi+psi": phi[i] + psi[j], "C": C[i][j]})
    for k, (pi, w) in enumerate(zip(P.atoms, P.weights)):
        if not w > 0:
            continue
        i = _locate(M1, pi.source, lookup_tol, "first")
        j = _locate(M2, pi.target, lookup_tol, "second")
        val = pi.cost(c)
        if abs(phi[i] + psi[j] - val) > tol:
            failures.append({"kind": "not tight", "atom": k, "i": i, "j": j, "phi+psi": phi[i] + psi[j], "plan_cost": val})
    return CertificateReport(feasible and not failures, feasible, failures)


def check_total_superdiff_membership(
    pi: Coupling, phi, psi, M1: NestedMeasure, M2: NestedMeasure, c: CostSpec, tol=None, C=None
) -> bool:
    """Membership of a plan in the total superdifferential of ``phi``.

    Holds iff the plan is inner-optimal and ``phi + psi`` touches the inner
    cost at its marginal pair while staying below it everywhere else.
    """
    exact = M1.exact and M2.exact and pi.source.exact
    if tol is None:
        tol = 0 if exact else TAU_GAP
    lookup_tol = 0 if exact else 1e-9
    i = _locate(M1, pi.source, lookup_tol, "first")
    j = _locate(M2, pi.target, lookup_tol, "second")
    if C is None:
        C = [[inner.solve(a, b, c).cost for b in M2.atoms] for a in M1.atoms]
    if psi is None:
        psi = c_transform(phi, C)
    if not inner.is_optimal(pi, c, tol):
        return False
    if any(phi[a] + psi[b] > C[a][b] + tol for a in range(len(M1)) for b in range(len(M2))):
        return False
    return abs(phi[i] + psi[j] - C[i][j]) <= tol


def rr_potentials(pairs, c: CostSpec, tol=None):
    """Potentials tight on ``pairs`` and feasible on all their cross pairs, or None.

    Feasibility of ``phi_a + psi_b <= C_ab`` with equality on the given pairs
    is a system of difference constraints; Bellman-Ford either returns a
    solution or finds a negative cycle (i.e. a violated cyclical monotonicity).
    """
    pairs = list(pairs)
    exact = all(a.exact and b.exact for a, b in pairs)
    if tol is None:
        tol = 0 if exact else TAU_GAP
    firsts, seconds, fi, si, C = pair_cost_table(pairs, c, 0 if exact else 1e-12)
    m, n = len(firsts), len(seconds)
    # variables: x_a = phi_a (nodes 0..m-1), y_b = -psi_b (nodes m..m+n-1)
    # x_a - y_b <= C_ab  -> edge y_b -> x_a, weight C_ab
    # y_b - x_a <= -C_ab on paired cells -> edge x_a -> y_b, weight -C_ab
    edges = [(m + b, a, C[a][b]) for a in range(m) for b in range(n)]
    edges += [(fi[k], m + si[k], -C[fi[k]][si[k]]) for k in range(len(pairs))]
    zero = 0 * C[0][0]
    dist = [zero] * (m + n)
    for _ in range(m + n):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v] - (tol if not exact else 0):
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            break
    else:
        if any(dist[u] + w < dist[v] - tol for u, v, w in edges):
            return None
    phi = dist[:m]
    psi = [-d for d in dist[m:]]
    return firsts, seconds, phi, psi
