from fractions import Fraction as F

import numpy as np
import pytest

from conftest import dirac, unif
from oracles import dense, transport_vertices
from wow import inner
from wow.certificates import (
    MonotoneReport,
    c_transform,
    check_c_cyclical_monotone,
    check_superdifferential_certificate,
    check_total_monotone,
    check_total_superdiff_membership,
    falsify_total_monotone_sampled,
    pair_cost_table,
    rr_potentials,
)
from wow.errors import BudgetExceeded, IndexMismatch
from wow.fixtures import random_measure, random_nested
from wow.measures import CostSpec, Coupling, RandomCoupling, identity_coupling, make_nested
from wow.nested import solve_nested

C2 = CostSpec(2)


def _dd(x, y):
    return Coupling(dirac(x), dirac(y), [[1]])


SWAP = Coupling(unif(0, 1), unif(0, 1), [[0, F(1, 2)], [F(1, 2), 0]])


# --------------------------------------------------------------------------- #
# cyclical monotonicity at the measure level
# --------------------------------------------------------------------------- #

def test_cyclical_optimal_support_passes(crossed_pair):
    M1, M2 = crossed_pair
    sol = solve_nested(M1, M2, C2)
    pairs = [(pi.source, pi.target) for pi in sol.random_coupling.atoms]
    assert check_c_cyclical_monotone(pairs, C2).passed


def test_cyclical_crossed_matching_fails_with_two_cycle():
    rep = check_c_cyclical_monotone([(dirac(0), dirac(3)), (dirac(4), dirac(1))], C2)
    assert not rep.passed
    w = rep.witness
    assert len(w["cycle"]) == 2
    assert (w["paired_cost"], w["shifted_cost"]) == (18, 2)


def test_cyclical_single_pair_passes():
    assert check_c_cyclical_monotone([(dirac(0), dirac(7))], C2).passed


def test_cyclical_budget():
    pairs = [(dirac(k), dirac(k + 1)) for k in range(8)]
    with pytest.raises(BudgetExceeded):
        check_c_cyclical_monotone(pairs, C2, max_cycle=4, budget=100)


def test_cyclical_sampled_mode_is_flagged():
    pairs = [(dirac(k), dirac(k + 1)) for k in range(10)]
    rep = check_c_cyclical_monotone(pairs, C2, samples=500)
    assert rep.passed and not rep.exhaustive and "not a proof" in rep.note


# --------------------------------------------------------------------------- #
# total monotonicity
# --------------------------------------------------------------------------- #

def test_total_monotone_solver_atoms_pass():
    rng = np.random.default_rng(0)
    for _ in range(20):
        M1, M2 = random_nested(rng, 3, 3, exact=True), random_nested(rng, 3, 3, exact=True)
        assert check_total_monotone(solve_nested(M1, M2, C2).random_coupling.atoms, C2).passed


def test_total_monotone_clause_a():
    rep = check_total_monotone([SWAP], C2)
    assert not rep.passed
    assert rep.witness["clause"] == "a"
    assert (rep.witness["plan_cost"], rep.witness["optimal_cost"]) == (1, 0)


def test_total_monotone_clause_b():
    rep = check_total_monotone([_dd(0, 3), _dd(4, 1)], C2)
    assert not rep.passed and rep.witness["clause"] == "b"


def test_report_json():
    js = check_total_monotone([SWAP], C2).to_json()
    assert js["passed"] is False and js["witness"]["clause"] == "a"
    assert MonotoneReport(True).to_json()["witness"] is None


# --------------------------------------------------------------------------- #
# sampled falsification
# --------------------------------------------------------------------------- #

def test_sampled_never_flags_solver_atoms():
    rng = np.random.default_rng(1)
    M1, M2 = random_nested(rng, 3, 3, dim=2), random_nested(rng, 3, 3, dim=2)
    atoms = solve_nested(M1, M2, C2).random_coupling.atoms
    for seed in range(10):
        rep = falsify_total_monotone_sampled(atoms, C2, N=3, samples=1000, seed=seed)
        assert rep.passed
        assert "not a proof" in rep.note


def test_sampled_catches_swap_with_product_gluing():
    rep = falsify_total_monotone_sampled([SWAP], C2, N=2, samples=50, sigma=(1, 0), gluings=("product",))
    assert not rep.passed
    assert rep.witness["lhs"] == pytest.approx(2.0)
    assert rep.witness["rhs"] == pytest.approx(1.0)


def test_sampled_dirac_plans_pass():
    assert falsify_total_monotone_sampled([_dd(0, 5)], C2, N=4, samples=200).passed


def test_sampled_catches_crossed_pairs():
    rep = falsify_total_monotone_sampled([_dd(0, 3), _dd(4, 1)], C2, N=2, samples=200)
    assert not rep.passed


def test_sampled_rejects_bad_n():
    with pytest.raises(ValueError):
        falsify_total_monotone_sampled([SWAP], C2, N=5)


# --------------------------------------------------------------------------- #
# potentials
# --------------------------------------------------------------------------- #

def test_superdifferential_examples(crossed_pair):
    M1, M2 = crossed_pair
    diag = RandomCoupling((_dd(0, 1), _dd(4, 3)), (F(1, 2), F(1, 2)))
    assert check_superdifferential_certificate(diag, [1, 1], [0, 0], M1, M2, C2).passed
    anti = RandomCoupling((_dd(0, 3), _dd(4, 1)), (F(1, 2), F(1, 2)))
    rep = check_superdifferential_certificate(anti, [1, 1], [0, 0], M1, M2, C2)
    assert not rep.passed and rep.feasible
    assert rep.failures[0]["plan_cost"] == 9
    mu = unif(0, 1)
    M = make_nested([mu], [F(1)])
    assert check_superdifferential_certificate(RandomCoupling((identity_coupling(mu),), (F(1),)), [0], [0], M, M, C2).passed


def test_superdifferential_infeasible_and_transform(crossed_pair):
    M1, M2 = crossed_pair
    diag = RandomCoupling((_dd(0, 1), _dd(4, 3)), (F(1, 2), F(1, 2)))
    rep = check_superdifferential_certificate(diag, [5, 1], [0, 0], M1, M2, C2)
    assert not rep.feasible and not rep.passed
    assert check_superdifferential_certificate(diag, [1, 1], None, M1, M2, C2).passed
    assert c_transform([1, 1], [[1, 9], [9, 1]]) == [0, 0]


def test_superdifferential_index_mismatch(crossed_pair):
    M1, M2 = crossed_pair
    P = RandomCoupling((_dd(2, 1),), (F(1),))
    with pytest.raises(IndexMismatch):
        check_superdifferential_certificate(P, [1, 1], [0, 0], M1, M2, C2)


def test_superdifferential_with_solver_duals():
    rng = np.random.default_rng(2)
    for _ in range(20):
        M1, M2 = random_nested(rng, 3, 3, exact=True), random_nested(rng, 3, 3, exact=True)
        sol = solve_nested(M1, M2, C2)
        d = sol.outer_duals
        assert check_superdifferential_certificate(sol.random_coupling, d.phi, d.psi, M1, M2, C2).passed


def test_membership_examples(crossed_pair):
    M1, M2 = crossed_pair
    assert check_total_superdiff_membership(_dd(0, 1), [1, 1], [0, 0], M1, M2, C2)
    assert not check_total_superdiff_membership(_dd(0, 3), [1, 1], [0, 0], M1, M2, C2)
    mu = unif(0, 1)
    M = make_nested([mu], [F(1)])
    assert check_total_superdiff_membership(identity_coupling(mu), [0], [0], M, M, C2)
    # same marginals as the optimal atom, but a perturbed (suboptimal) plan
    A = make_nested([unif(0, 1)], [F(1)])
    B = make_nested([unif(2, 3)], [F(1)])
    opt = inner.solve(A.atoms[0], B.atoms[0], C2)
    pert = Coupling(A.atoms[0], B.atoms[0], [[F(1, 4), F(1, 4)], [F(1, 4), F(1, 4)]])
    phi, psi = [opt.cost], [0]
    assert check_total_superdiff_membership(opt.plan, phi, psi, A, B, C2)
    assert not check_total_superdiff_membership(pert, phi, psi, A, B, C2)


def test_membership_set_is_totally_monotone():
    """Plans in the total superdifferential form a totally monotone family."""
    rng = np.random.default_rng(3)
    for _ in range(15):
        M1, M2 = random_nested(rng, 3, 3, exact=True), random_nested(rng, 3, 3, exact=True)
        d = solve_nested(M1, M2, C2).outer_duals
        members = []
        for mu in M1.atoms:
            for nu in M2.atoms:
                for v in transport_vertices(mu.weights, nu.weights):
                    pi = Coupling(mu, nu, dense(v, len(mu), len(nu)))
                    if check_total_superdiff_membership(pi, d.phi, d.psi, M1, M2, C2):
                        members.append(pi)
        assert members
        assert check_total_monotone(members, C2, max_cycle=3).passed


# --------------------------------------------------------------------------- #
# Rockafellar-Rueschendorf potentials
# --------------------------------------------------------------------------- #

def test_rr_feasible_on_monotone_sets():
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(60):
        pairs = [(random_measure(rng, 2, exact=True), random_measure(rng, 2, exact=True)) for _ in range(3)]
        mono = check_c_cyclical_monotone(pairs, C2, max_cycle=3).passed
        out = rr_potentials(pairs, C2)
        assert (out is not None) == mono
        if out is None:
            continue
        hits += 1
        firsts, seconds, phi, psi = out
        _, _, fi, si, C = pair_cost_table(pairs, C2)
        for a in range(len(firsts)):
            for b in range(len(seconds)):
                assert phi[a] + psi[b] <= C[a][b]
        for k in range(len(pairs)):
            assert phi[fi[k]] + psi[si[k]] == C[fi[k]][si[k]]
    assert hits > 0


def test_rr_detects_crossed_pairs():
    assert rr_potentials([(dirac(0), dirac(3)), (dirac(4), dirac(1))], C2) is None
