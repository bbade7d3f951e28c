from fractions import Fraction as F

import numpy as np
import pytest

from conftest import dirac, unif
from oracles import dense, transport_vertices
from wow import inner
from wow.errors import IndexMismatch, InvalidMeasure, MarginalMismatch
from wow.fixtures import random_measure, random_nested
from wow.lifting import (
    Partition,
    StepRandomVariable,
    common_refinement,
    joint_law,
    law,
    lift_measure,
    lift_potential_check,
    lifted_cost,
    lifted_nested_cost,
    permute_cells,
    probability_distance,
    rearrange_to_coupling,
    step_variable,
    truncated_w1,
)
from wow.measures import CostSpec, Coupling, identity_coupling, make_measure, make_nested, measure_eq, product_coupling
from wow.nested import solve_nested

C2 = CostSpec(2)
H = F(1, 2)


def test_partition_validation():
    with pytest.raises(InvalidMeasure):
        Partition((0, H, H, 1))
    with pytest.raises(InvalidMeasure):
        Partition((F(1, 4), 1))
    with pytest.raises(InvalidMeasure):
        step_variable((0, H, 1), [(0,)])
    assert Partition((0, F(1, 4), 1)).lengths == [F(1, 4), F(3, 4)]


def test_law_examples():
    assert measure_eq(law(step_variable((0, H, 1), [(0,), (1,)])), unif(0, 1))
    assert measure_eq(law(step_variable((0, 1), [(F(7),)])), dirac(7))
    Z = step_variable((0, F(1, 4), 1), [(F(1),), (F(0),)])
    assert measure_eq(law(Z), make_measure([[F(0)], [F(1)]], [F(3, 4), F(1, 4)]))


def test_lift_examples():
    Z = lift_measure(unif(0, 1))
    assert Z.partition.breakpoints == (0, H, 1) and Z.values == ((0,), (1,))
    assert lift_measure(dirac(3)).values == ((3,),)
    Z = lift_measure(make_measure([[F(0)], [F(5)]], [F(1, 3), F(2, 3)]))
    assert Z.partition.breakpoints == (0, F(1, 3), 1) and Z.values == ((0,), (5,))


def test_round_trip():
    rng = np.random.default_rng(0)
    for exact in (True, False):
        for _ in range(50):
            mu = random_measure(rng, 6, dim=2, exact=exact)
            assert measure_eq(law(lift_measure(mu)), mu, 0 if exact else 1e-12)


def test_common_refinement_examples():
    A = step_variable((0, H, 1), [(0,), (1,)])
    B = step_variable((0, F(1, 3), 1), [(2,), (3,)])
    a, b = common_refinement(A, B)
    assert a.partition.breakpoints == (0, F(1, 3), H, 1)
    assert a.values == ((0,), (0,), (1,)) and b.values == ((2,), (3,), (3,))
    assert common_refinement(A, A) == (A, A)
    C = step_variable((0, 1), [(4,)])
    D = step_variable((0, F(1, 4), F(3, 4), 1), [(0,), (1,), (2,)])
    c, d = common_refinement(C, D)
    assert c.values == ((4,),) * 3 and d == D
    assert measure_eq(law(c), law(C))


def test_joint_law_examples():
    Z1, Z2 = lift_measure(unif(0, 1)), lift_measure(unif(2, 3))
    assert joint_law(Z1, Z2).matrix == ((H, 0), (0, H))
    sw = permute_cells(Z2, [1, 0])
    assert joint_law(Z1, sw).matrix == ((0, H), (H, 0))
    const = step_variable((0, 1), [(F(9),)])
    assert joint_law(Z1, const).matrix == product_coupling(unif(0, 1), dirac(9)).matrix


def test_lifted_cost_examples():
    Z1, Z2 = lift_measure(unif(0, 1)), lift_measure(unif(2, 3))
    assert lifted_cost(Z1, Z2, C2) == 4
    assert lifted_cost(Z1, permute_cells(Z2, [1, 0]), C2) == 5
    assert lifted_cost(Z1, Z1, C2) == 0


def test_lifted_cost_equals_joint_law_cost():
    rng = np.random.default_rng(1)
    for _ in range(50):
        Z1 = lift_measure(random_measure(rng, 4, exact=True))
        Z2 = lift_measure(random_measure(rng, 4, exact=True))
        Z2 = permute_cells(Z2, [int(k) for k in rng.permutation(len(Z2.values))])
        assert lifted_cost(Z1, Z2, C2) == joint_law(Z1, Z2).cost(C2)


def test_rearrange_examples():
    mu, nu = unif(0, 1), unif(2, 3)
    Z1 = lift_measure(mu)
    mono = inner.solve(mu, nu, C2).plan
    Z2 = rearrange_to_coupling(Z1, mono)
    assert lifted_cost(Z1, Z2, C2) == 4
    prod = product_coupling(mu, nu)
    Z2 = rearrange_to_coupling(Z1, prod)
    assert Z2.values == ((2,), (3,), (2,), (3,))
    assert joint_law(Z1, Z2).matrix == prod.matrix
    assert rearrange_to_coupling(Z1, identity_coupling(mu)) == Z1


def test_rearrange_rejects_wrong_marginal():
    with pytest.raises(MarginalMismatch):
        rearrange_to_coupling(lift_measure(unif(0, 1)), Coupling(dirac(0), dirac(1), [[1]]))


def test_rearrange_realizes_every_vertex():
    rng = np.random.default_rng(2)
    for _ in range(30):
        mu, nu = random_measure(rng, 4, exact=True), random_measure(rng, 4, exact=True)
        Z1 = lift_measure(mu)
        for v in transport_vertices(mu.weights, nu.weights):
            pi = Coupling(mu, nu, dense(v, len(mu), len(nu)))
            Z2 = rearrange_to_coupling(Z1, pi)
            assert joint_law(Z1, Z2).matrix == pi.matrix
            assert lifted_cost(Z1, Z2, C2) == pi.cost(C2)


def test_rearrange_float_mode():
    rng = np.random.default_rng(3)
    for _ in range(30):
        mu, nu = random_measure(rng, 5, dim=2), random_measure(rng, 5, dim=2)
        sol = inner.solve(mu, nu, C2)
        Z2 = rearrange_to_coupling(lift_measure(mu), sol.plan)
        assert abs(lifted_cost(lift_measure(mu), Z2, C2) - sol.cost) <= 1e-9
        assert measure_eq(law(Z2), nu, 1e-9)


def test_lifted_cost_dominates_inner_cost():
    rng = np.random.default_rng(4)
    for _ in range(60):
        mu, nu = random_measure(rng, 4, exact=True), random_measure(rng, 4, exact=True)
        Z1 = permute_cells(lift_measure(mu), [int(k) for k in rng.permutation(len(mu))])
        Z2 = permute_cells(lift_measure(nu), [int(k) for k in rng.permutation(len(nu))])
        opt = inner.solve(mu, nu, C2).cost
        val = lifted_cost(Z1, Z2, C2)
        assert opt <= val
        assert (opt == val) == inner.is_optimal(joint_law(Z1, Z2), C2)


def test_lifted_nested_cost_reproduces_optimum():
    rng = np.random.default_rng(5)
    for exact in (True, False):
        for _ in range(15):
            M1, M2 = random_nested(rng, 3, 3, exact=exact), random_nested(rng, 3, 3, exact=exact)
            a = lifted_nested_cost(M1, M2, C2)
            b = solve_nested(M1, M2, C2).cost
            assert abs(a - b) <= (0 if exact else 1e-9)


def test_lift_potential_examples():
    mu = unif(0, 1)
    M = make_nested([mu], [F(1)])
    rep = lift_potential_check([F(3)], M, samples=[permute_cells(lift_measure(mu), [1, 0])])
    assert rep.passed and rep.evaluations == 7
    with pytest.raises(IndexMismatch):
        lift_potential_check([F(3)], M, samples=[lift_measure(dirac(5))])
    rng = np.random.default_rng(6)
    M3 = make_nested([random_measure(rng, 4, exact=True, n=3 + k) for k in range(3)], [F(1, 3)] * 3)
    assert lift_potential_check([F(1), F(2), F(3)], M3, permutations=5, seed=1).passed


def test_json_round_trip():
    Z = lift_measure(make_measure([[F(0)], [F(5)]], [F(1, 3), F(2, 3)]))
    assert StepRandomVariable.from_json(Z.to_json(), exact=True) == Z
    assert Z.to_json()["breakpoints"] == [0, F(1, 3), 1]


def test_probability_distance_metric_and_contraction():
    rng = np.random.default_rng(7)
    for _ in range(60):
        Zs = []
        for _ in range(3):
            mu = random_measure(rng, 4, dim=2, exact=True)
            Z = lift_measure(mu)
            Zs.append(permute_cells(Z, [int(k) for k in rng.permutation(len(mu))]))
        A, B, D = Zs
        ab = probability_distance(A, B)
        assert probability_distance(A, A) == 0
        assert abs(ab - probability_distance(B, A)) <= 1e-12
        assert probability_distance(A, D) <= ab + probability_distance(B, D) + 1e-12
        assert truncated_w1(law(A), law(B)) <= ab + 1e-12
