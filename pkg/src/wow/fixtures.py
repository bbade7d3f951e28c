"""Seeded instance generators shared by tests, the CLI and experiments."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .measures import (
    Coupling,
    DiscreteMeasure,
    NestedMeasure,
    RandomCoupling,
    make_measure,
    make_nested,
)


def random_weights(rng, n: int, exact: bool = False, denom: int = 12):
    """Strictly positive weights summing to one; rational with small denominators when exact."""
    if exact:
        raw = [int(k) for k in rng.integers(1, denom + 1, size=n)]
        total = sum(raw)
        return [Fraction(r, total) for r in raw]
    w = rng.uniform(0.1, 1.0, size=n)
    return list(w / w.sum())


def random_points(rng, n: int, dim: int = 1, exact: bool = False, span: int = 10):
    """Pairwise distinct points; small integers (or halves) in exact mode."""
    out = set()
    while len(out) < n:
        if exact:
            out.add(tuple(Fraction(int(v), 2) for v in rng.integers(-2 * span, 2 * span + 1, size=dim)))
        else:
            out.add(tuple(float(v) for v in rng.uniform(-span, span, size=dim)))
    return list(out)


def random_measure(rng, max_n: int = 4, dim: int = 1, exact: bool = False, n: int | None = None) -> DiscreteMeasure:
    n = n if n is not None else int(rng.integers(1, max_n + 1))
    return make_measure(random_points(rng, n, dim, exact), random_weights(rng, n, exact))


def random_nested(rng, max_outer: int = 3, max_inner: int = 3, dim: int = 1, exact: bool = False) -> NestedMeasure:
    k = int(rng.integers(1, max_outer + 1))
    while True:
        atoms = [random_measure(rng, max_inner, dim, exact) for _ in range(k)]
        M = make_nested(atoms, random_weights(rng, k, exact))
        if len(M) == k:
            return M


def uniform_measure(points) -> DiscreteMeasure:
    n = len(points)
    exact = all(isinstance(v, (int, Fraction)) for p in points for v in (p if isinstance(p, tuple) else (p,)))
    w = Fraction(1, n) if exact else 1.0 / n
    return make_measure([p if isinstance(p, tuple) else (p,) for p in points], [w] * n)


def uniform_nested(atoms) -> NestedMeasure:
    n = len(atoms)
    exact = all(a.exact for a in atoms)
    return make_nested(atoms, [Fraction(1, n) if exact else 1.0 / n] * n)


def jittered_grid(rng, n: int, lo: float = 0.0, hi: float = 1.0, jitter: float = 0.4) -> DiscreteMeasure:
    """Uniform measure on ``n`` grid points of ``[lo, hi]``, each moved randomly within its cell."""
    h = (hi - lo) / n
    pts = [lo + (k + 0.5 + jitter * float(rng.uniform(-1, 1))) * h for k in range(n)]
    return uniform_measure(pts)


def jittered_instance(rng, outer: int = 3, inner: int = 6):
    """Pair of 1-D nested measures whose inner atoms are jittered grids on random intervals."""

    def one():
        atoms = []
        while len(atoms) < outer:
            lo = float(rng.uniform(-3, 3))
            atoms.append(jittered_grid(rng, inner, lo, lo + float(rng.uniform(0.5, 2.0))))
        return make_nested(atoms, random_weights(rng, outer))

    return one(), one()


def equal_size_instance(rng, outer: int, inner: int, exact: bool = False):
    """Equal-size uniform 1-D nested pair with distinct inner points."""

    def one():
        while True:
            atoms = [make_measure(random_points(rng, inner, 1, exact), _uniform_w(inner, exact)) for _ in range(outer)]
            M = make_nested(atoms, _uniform_w(outer, exact))
            if len(M) == outer:
                return M

    return one(), one()


def _uniform_w(n, exact):
    return [Fraction(1, n)] * n if exact else [1.0 / n] * n


def corrupt_random_coupling(P: RandomCoupling, index: int = 0) -> RandomCoupling:
    """Replace one atom by the product plan of its marginals (suboptimal unless trivial)."""
    atoms = list(P.atoms)
    pi = atoms[index]
    atoms[index] = Coupling(
        pi.source, pi.target, [[a * b for b in pi.target.weights] for a in pi.source.weights]
    )
    return RandomCoupling(tuple(atoms), P.weights)


# --------------------------------------------------------------------------- #
# refinement fixtures (all p = 2, dyadic outer weights)
# --------------------------------------------------------------------------- #

def _grid_1d(n, lo=0.0, hi=1.0):
    return uniform_measure([lo + (k + 0.5) * (hi - lo) / n for k in range(n)])


def _grid_2d(n, A, b):
    pts = []
    for i in range(n):
        for j in range(n):
            u, v = (i + 0.5) / n, (j + 0.5) / n
            pts.append((A[0][0] * u + A[0][1] * v + b[0], A[1][0] * u + A[1][1] * v + b[1]))
    return uniform_measure(pts)


def pratelli_fixtures() -> dict:
    """Five fixed nested pairs for the refinement experiment."""
    fx = {}
    fx["shift-1d"] = (
        make_nested([_grid_1d(256)], [1.0]),
        make_nested([_grid_1d(256, 2.0, 3.0)], [1.0]),
    )
    fx["two-atom-1d"] = (
        make_nested([_grid_1d(256, 0.0, 1.0), _grid_1d(256, 3.0, 5.0)], [0.5, 0.5]),
        make_nested([_grid_1d(256, 0.5, 1.0), _grid_1d(256, 2.0, 3.0)], [0.5, 0.5]),
    )
    mix = make_measure(
        [(float(x),) for x in np.linspace(0.0, 1.0, 128)] + [(float(x),) for x in np.linspace(4.0, 4.5, 128)],
        [0.75 / 128] * 128 + [0.25 / 128] * 128,
    )
    fx["mixture-1d"] = (
        make_nested([mix, _grid_1d(256, -1.0, 0.0)], [0.5, 0.5]),
        make_nested([_grid_1d(256, 0.0, 2.0), _grid_1d(256, 1.0, 1.5)], [0.5, 0.5]),
    )
    ident = make_nested([_grid_1d(64, 0.0, 1.0), _grid_1d(64, 2.0, 4.0)], [0.5, 0.5])
    fx["identical"] = (ident, ident)
    I = ((1.0, 0.0), (0.0, 1.0))
    fx["two-atom-2d"] = (
        make_nested([_grid_2d(8, I, (0.0, 0.0)), _grid_2d(8, ((2.0, 0.0), (0.0, 0.5)), (3.0, 0.0))], [0.5, 0.5]),
        make_nested(
            [_grid_2d(8, ((1.0, 0.0), (0.0, 2.0)), (1.0, 1.0)), _grid_2d(8, ((0.5, 0.0), (0.0, 1.5)), (3.0, -1.0))],
            [0.5, 0.5],
        ),
    )
    return fx
