from fractions import Fraction as F

import numpy as np
import pytest

from conftest import dirac, unif
from oracles import brute_inner, brute_min_cost, transport_vertices
from wow import inner
from wow.errors import DimMismatch, DimNotOne
from wow.fixtures import random_measure
from wow.measures import CostSpec, Coupling, make_measure, rationalize


def test_cost_matrix_examples():
    assert inner.cost_matrix(dirac(0), dirac(3), CostSpec(2)) == [[9]]
    C = inner.cost_matrix(unif(0, 1), unif(0, 1), CostSpec(1))
    assert C == [[0, 1], [1, 0]]
    with pytest.raises(DimMismatch):
        inner.cost_matrix(dirac(0), make_measure([[0, 0]], [1]), CostSpec(2))


def test_solve_examples():
    c2 = CostSpec(2)
    sol = inner.solve(dirac(0), dirac(3), c2)
    assert sol.cost == 9
    sol = inner.solve(unif(0, 1), unif(2, 3), c2)
    assert sol.cost == 4
    assert sol.plan.matrix == ((F(1, 2), 0), (0, F(1, 2)))
    mu = make_measure([[F(0)], [F(1)]], [F(1, 3), F(2, 3)])
    nu = make_measure([[F(0)], [F(1)]], [F(2, 3), F(1, 3)])
    assert inner.solve(mu, nu, CostSpec(1)).cost == F(1, 3)


def test_solve_exact_duals_are_certificates():
    rng = np.random.default_rng(11)
    for _ in range(60):
        mu = random_measure(rng, 5, dim=2, exact=True)
        nu = random_measure(rng, 5, dim=2, exact=True)
        c = CostSpec(2)
        sol = inner.solve(mu, nu, c)
        C = inner.cost_matrix(mu, nu, c)
        phi, psi = sol.duals.phi, sol.duals.psi
        assert psi[0] == 0
        for i in range(len(mu)):
            for j in range(len(nu)):
                assert phi[i] + psi[j] <= C[i][j]
                if sol.plan.matrix[i][j] > 0:
                    assert phi[i] + psi[j] == C[i][j]
        assert sol.gap == 0


def test_solve_float_duality_gap():
    rng = np.random.default_rng(12)
    for _ in range(60):
        mu = random_measure(rng, 6, dim=2)
        nu = random_measure(rng, 6, dim=2)
        sol = inner.solve(mu, nu, CostSpec(1.5))
        assert abs(sol.gap) <= 1e-9 * max(1.0, abs(sol.cost))


def test_solution_is_a_vertex():
    rng = np.random.default_rng(13)
    for _ in range(40):
        mu = random_measure(rng, 4, exact=True)
        nu = random_measure(rng, 4, exact=True)
        plan = inner.solve(mu, nu, CostSpec(2)).plan
        support = {(i, j): x for i, r in enumerate(plan.matrix) for j, x in enumerate(r) if x > 0}
        assert support in transport_vertices(mu.weights, nu.weights)


def test_solve_matches_brute_force_small():
    rng = np.random.default_rng(14)
    for _ in range(60):
        mu = random_measure(rng, 4, exact=True)
        nu = random_measure(rng, 4, exact=True)
        for p in (1, 2, 3):
            assert inner.solve(mu, nu, CostSpec(p)).cost == brute_inner(mu, nu, CostSpec(p))


def test_oracle_hint_semantics():
    a = [F(1, 2), F(1, 2)]
    C = [[0, 1], [1, 0]]
    assert brute_min_cost(a, a, C) == 0
    assert brute_min_cost(a, a, C, upper=F(1)) == 0
    assert brute_min_cost(a, a, [[1, 1], [1, 1]], upper=F(1, 2)) is None
    with pytest.raises(ValueError):
        brute_min_cost(a, a, C, prices=([1, 1], [0, 0]))


@pytest.mark.parametrize("p", [1, 1.5, 2, 3])
def test_1d_monotone_agrees_with_simplex(p):
    rng = np.random.default_rng(int(p * 10))
    c = CostSpec(p)
    for _ in range(80):
        mu = random_measure(rng, 6)
        nu = random_measure(rng, 6)
        a = inner.solve(mu, nu, c).cost
        b = inner.solve_1d_monotone(mu, nu, c).cost
        assert abs(a - b) <= 1e-9 * max(1.0, a)


def test_1d_monotone_exact_and_potentials():
    rng = np.random.default_rng(15)
    for _ in range(40):
        mu = random_measure(rng, 5, exact=True)
        nu = random_measure(rng, 5, exact=True)
        c = CostSpec(2)
        sol = inner.solve_1d_monotone(mu, nu, c)
        assert sol.cost == inner.solve(mu, nu, c).cost
        assert sol.duals.psi[0] == 0
        assert sol.gap == 0


def test_1d_monotone_rejects_higher_dimensions():
    m = make_measure([[0, 0]], [1])
    with pytest.raises(DimNotOne):
        inner.solve_1d_monotone(m, m, CostSpec(2))
    assert issubclass(DimNotOne, DimMismatch)


def test_is_optimal():
    mu = unif(0, 1)
    swap = Coupling(mu, mu, [[0, F(1, 2)], [F(1, 2), 0]])
    ident = Coupling(mu, mu, [[F(1, 2), 0], [0, F(1, 2)]])
    assert not inner.is_optimal(swap, CostSpec(2))
    assert inner.is_optimal(ident, CostSpec(2))


def test_degenerate_instances_terminate():
    # many ties: uniform weights on a lattice with equal distances
    pts = [F(k) for k in range(6)]
    mu = unif(*pts)
    for p in (1, 2):
        sol = inner.solve(mu, mu, CostSpec(p))
        assert sol.cost == 0
    rng = np.random.default_rng(16)
    for _ in range(30):
        mu = random_measure(rng, 6, exact=True)
        sol = inner.solve(mu, mu, CostSpec(1))
        assert sol.cost == 0


def test_wasserstein_is_a_metric():
    rng = np.random.default_rng(17)
    for p in (1, 2, 3):
        c = CostSpec(p)
        for _ in range(40):
            a, b, d = (random_measure(rng, 4, dim=2) for _ in range(3))
            ab, bd, ad = inner.wasserstein(a, b, c), inner.wasserstein(b, d, c), inner.wasserstein(a, d, c)
            assert abs(ab - inner.wasserstein(b, a, c)) <= 1e-12
            assert ad <= ab + bd + 1e-9
            assert inner.wasserstein(a, a, c) == 0


def test_float_and_exact_agree():
    rng = np.random.default_rng(18)
    for _ in range(30):
        mu = random_measure(rng, 5)
        nu = random_measure(rng, 5)
        fl = inner.solve(mu, nu, CostSpec(2)).cost
        ex = inner.solve(rationalize(mu), rationalize(nu), CostSpec(2)).cost
        assert abs(fl - float(ex)) <= 1e-9 * max(1.0, fl)


def test_marginals_exact_in_float_mode():
    import math

    rng = np.random.default_rng(19)
    for _ in range(30):
        mu = random_measure(rng, 6)
        nu = random_measure(rng, 6)
        plan = inner.solve(mu, nu, CostSpec(2)).plan
        for i, row in enumerate(plan.matrix):
            assert abs(math.fsum(row) - mu.weights[i]) <= 1e-12
            assert min(row) >= 0
