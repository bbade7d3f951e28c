"""Exact discrete transport between two DiscreteMeasures.

The solver is a network simplex on the bipartite transportation graph:
northwest-corner start, most-negative reduced cost pricing that falls back to
Bland's lowest-index rule after a run of degenerate pivots (the leaving cell
is always the lowest-index candidate), and potentials normalized so that the
first target atom has ``psi = 0``. Arithmetic is generic: Fraction inputs give an exact vertex and
exact duals, float inputs run with small pivoting tolerances.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimMismatch, DimNotOne, NumericalFailure
from .measures import (
    TAU_FEAS,
    TAU_GAP,
    CostSpec,
    Coupling,
    DiscreteMeasure,
    DualPotentials,
    all_exact,
    num,
    tsum,
)

__all__ = [
    "InnerSolution",
    "cost_matrix",
    "transport_simplex",
    "northwest_corner",
    "solve",
    "solve_1d_monotone",
    "is_optimal",
    "wasserstein",
]


@dataclass(frozen=True)
class InnerSolution:
    cost: object
    plan: Coupling
    duals: DualPotentials
    iterations: int

    @property
    def gap(self):
        return self.cost - self.duals.value(self.plan.source.weights, self.plan.target.weights)

    def to_json(self):
        return {
            "cost": num(self.cost),
            "plan": [[num(v) for v in r] for r in self.plan.matrix],
            "phi": [num(v) for v in self.duals.phi],
            "psi": [num(v) for v in self.duals.psi],
        }


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, c: CostSpec) -> list[list]:
    if mu.dim != nu.dim:
        raise DimMismatch(f"dimension {mu.dim} vs {nu.dim}")
    return [[c(x, y) for y in nu.atoms] for x in mu.atoms]


# --------------------------------------------------------------------------- #
# spanning-tree helpers; nodes 0..m-1 are rows, m..m+n-1 are columns
# --------------------------------------------------------------------------- #

def northwest_corner(a, b, eps=0):
    """Staircase basis of exactly m+n-1 cells and its flows.

    When a row and a column are exhausted together only the row index
    advances, so the next cell carries a degenerate zero flow and the basis
    stays a spanning tree.
    """
    m, n = len(a), len(b)
    ra, rb = list(a), list(b)
    cells, flows = [], []
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        if x < 0:
            x = 0 * x
        cells.append((i, j))
        flows.append(x)
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif ra[i] <= eps:
            i += 1
        else:
            j += 1
    return cells, flows


def _adjacency(cells, m, n):
    adj = [[] for _ in range(m + n)]
    for (i, j) in cells:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _tree_flows(cells, a, b):
    """Flows on a spanning tree basis, recomputed from the supplies by leaf elimination."""
    m, n = len(a), len(b)
    exact = all_exact(a) and all_exact(b)
    rem = [Fraction(x) if exact else float(x) for x in (*a, *b)]
    adj = [set() for _ in range(m + n)]
    for (i, j) in cells:
        adj[i].add(m + j)
        adj[m + j].add(i)
    flow = {}
    leaves = deque(v for v in range(m + n) if len(adj[v]) == 1)
    while leaves:
        v = leaves.popleft()
        if len(adj[v]) != 1:
            continue
        w = adj[v].pop()
        adj[w].discard(v)
        x = rem[v]
        cell = (v, w - m) if v < m else (w, v - m)
        flow[cell] = x
        rem[w] -= x
        if len(adj[w]) == 1:
            leaves.append(w)
    return flow


def _potentials(cells, C, m, n):
    adj = _adjacency(cells, m, n)
    u = [None] * m
    v = [None] * n
    exact = isinstance(C[cells[0][0]][cells[0][1]], Fraction) or all_exact(
        C[i][j] for (i, j) in cells
    )
    v[0] = Fraction(0) if exact else 0.0
    stack = [m]
    seen = {m}
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if nb in seen:
                continue
            seen.add(nb)
            if nb < m:
                u[nb] = C[nb][node - m] - v[node - m]
            else:
                v[nb - m] = C[node][nb - m] - u[node]
            stack.append(nb)
    return u, v


def _tree_path(cells, m, n, start, goal):
    """Cells on the unique tree path from node ``start`` to node ``goal``."""
    adj = _adjacency(cells, m, n)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        path.append((prev, node - m) if prev < m else (node, prev - m))
        node = prev
    path.reverse()
    return path


def transport_simplex(a, b, C, max_iter: int | None = None, start=None):
    """Solve ``min <P, C>`` over plans with row sums ``a`` and column sums ``b``.

    Returns ``(plan, u, v, iterations)``. ``plan`` is a list of lists with zeros
    off the basis; ``u``/``v`` satisfy ``u_i + v_j = C_ij`` on the basis and
    ``u_i + v_j <= C_ij`` elsewhere (exactly for Fraction data).
    """
    m, n = len(a), len(b)
    exact = all_exact(a) and all_exact(b) and all(all_exact(r) for r in C)
    eps_flow = 0 if exact else 1e-13
    if exact:
        eps_red = 0
    else:
        scale = max((abs(float(x)) for r in C for x in r), default=1.0)
        eps_red = 1e-12 * max(1.0, scale)
    if start is None:
        cells, flows = northwest_corner(a, b, eps_flow)
    else:
        cells, flows = start
    flow = dict(zip(cells, flows))
    basis = set(cells)
    if max_iter is None:
        max_iter = 50 * (m + n) ** 2 + 1000
    Cf = None if exact else np.asarray(C, dtype=float)

    it = 0
    degenerate_run = 0
    bland_after = 2 * (m + n)
    while True:
        cells = sorted(basis)
        u, v = _potentials(cells, C, m, n)
        bland = degenerate_run >= bland_after
        entering = None
        if exact:
            best = 0
            for i in range(m):
                ui = u[i]
                row = C[i]
                for j in range(n):
                    r = row[j] - ui - v[j]
                    if r < best and (i, j) not in basis:
                        entering, best = (i, j), r
                        if bland:
                            break
                if bland and entering is not None:
                    break
        else:
            red = Cf - np.asarray(u, dtype=float)[:, None] - np.asarray(v, dtype=float)[None, :]
            for (i, j) in basis:
                red[i, j] = 0.0
            flat = red.ravel()
            if bland:
                hits = np.flatnonzero(flat < -eps_red)
                k = int(hits[0]) if hits.size else -1
            else:
                k = int(np.argmin(flat))
                if not flat[k] < -eps_red:
                    k = -1
            if k >= 0:
                entering = (k // n, k % n)
        if entering is None:
            break
        it += 1
        if it > max_iter:
            raise NumericalFailure(f"network simplex exceeded {max_iter} pivots on a {m}x{n} problem")
        i0, j0 = entering
        path = _tree_path(cells, m, n, i0, m + j0)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flow[e] for e in minus)
        if theta < 0:
            theta = 0 * theta
        leaving = min(e for e in minus if flow[e] <= theta + eps_flow)
        degenerate_run = degenerate_run + 1 if theta <= eps_flow else 0
        for e in minus:
            flow[e] -= theta
        for e in plus:
            flow[e] += theta
        flow[entering] = theta
        basis.add(entering)
        basis.discard(leaving)
        del flow[leaving]

    cells = sorted(basis)
    u, v = _potentials(cells, C, m, n)
    flow = _tree_flows(cells, a, b)
    zero = Fraction(0) if exact else 0.0
    plan = [[zero] * n for _ in range(m)]
    for (i, j), x in flow.items():
        if not exact and x < 1e-15:
            x = 0.0
        plan[i][j] = x
    if not exact:
        _repair_marginals(plan, a, b)
    return plan, u, v, it


def _repair_marginals(plan, a, b):
    """Push float round-off of a tree solution into its largest cell per row."""
    for i, row in enumerate(plan):
        s = math.fsum(row)
        if s != a[i] and s > 0:
            k = max(range(len(row)), key=lambda j: row[j])
            row[k] = max(0.0, row[k] + (a[i] - s))


def _finalize(mu, nu, C, plan, u, v, it) -> InnerSolution:
    cost = tsum(plan[i][j] * C[i][j] for i in range(len(mu)) for j in range(len(nu)) if plan[i][j] != 0)
    return InnerSolution(
        cost=cost,
        plan=Coupling(mu, nu, plan),
        duals=DualPotentials(u, v, "inner"),
        iterations=it,
    )


def solve(mu: DiscreteMeasure, nu: DiscreteMeasure, c: CostSpec, max_iter: int | None = None) -> InnerSolution:
    """Optimal plan, value and Kantorovich potentials for the cost ``c``."""
    C = cost_matrix(mu, nu, c)
    plan, u, v, it = transport_simplex(list(mu.weights), list(nu.weights), C, max_iter)
    return _finalize(mu, nu, C, plan, u, v, it)


def solve_1d_monotone(mu: DiscreteMeasure, nu: DiscreteMeasure, c: CostSpec) -> InnerSolution:
    """Quantile (comonotone) coupling on the real line by a CDF sweep.

    For sorted atoms the sweep is the northwest-corner staircase; its tree
    potentials certify optimality for every convex cost ``|x - y|**p``.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise DimNotOne("solve_1d_monotone needs one-dimensional measures")
    ia = sorted(range(len(mu)), key=lambda k: mu.atoms[k])
    ib = sorted(range(len(nu)), key=lambda k: nu.atoms[k])
    a = [mu.weights[k] for k in ia]
    b = [nu.weights[k] for k in ib]
    exact = all_exact(a) and all_exact(b)
    cells, _ = northwest_corner(a, b, 0 if exact else 1e-13)
    C = cost_matrix(mu, nu, c)
    Cs = [[C[i][j] for j in ib] for i in ia]
    flow = _tree_flows(cells, a, b)
    us, vs = _potentials(cells, Cs, len(a), len(b))
    zero = Fraction(0) if exact else 0.0
    plan = [[zero] * len(nu) for _ in range(len(mu))]
    for (i, j), x in flow.items():
        plan[ia[i]][ib[j]] = max(x, zero)
    if not exact:
        _repair_marginals(plan, list(mu.weights), list(nu.weights))
    u = [None] * len(mu)
    v = [None] * len(nu)
    for k, i in enumerate(ia):
        u[i] = us[k]
    for k, j in enumerate(ib):
        v[j] = vs[k]
    # renormalize so that psi vanishes at the first target atom
    shift = v[0]
    u = [x + shift for x in u]
    v = [x - shift for x in v]
    return _finalize(mu, nu, C, plan, u, v, 0)


def is_optimal(pi: Coupling, c: CostSpec, tol=None) -> bool:
    if tol is None:
        tol = 0 if (pi.source.exact and pi.target.exact) else TAU_GAP
    return pi.cost(c) <= solve(pi.source, pi.target, c).cost + tol


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, c: CostSpec) -> float:
    """``W_p(mu, nu)`` = optimal cost to the power 1/p."""
    return float(solve(mu, nu, c).cost) ** (1.0 / float(c.p))
