"""Value types for finitely supported measures, nested measures and couplings.

Every numeric field holds either Python floats (the default IEEE mode) or
``fractions.Fraction`` values (exact-rational mode). Kernels never mix the two
on purpose: a measure built from Fractions stays exact through every
operation that does not need an irrational cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

from .errors import (
    DimMismatch,
    EmptyMeasure,
    InvalidMeasure,
    MarginalMismatch,
)

TAU_SUM = 1e-9
TAU_FEAS = 1e-9
TAU_GAP = 1e-8

NORMS = ("euclidean", "ell_q", "ell_1", "ell_inf")


# --------------------------------------------------------------------------- #
# number helpers
# --------------------------------------------------------------------------- #

def is_exact(x) -> bool:
    return isinstance(x, Rational) and not isinstance(x, bool)


def all_exact(values: Iterable) -> bool:
    return all(is_exact(v) for v in values)


def to_fraction(x) -> Fraction:
    """Exact rational from a float, int, Fraction or a ``"p/q"`` string.

    Floats go through their shortest repr so that ``0.1`` becomes ``1/10``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise InvalidMeasure(f"non-finite value {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


def num(x):
    """Serializable scalar: Fractions stay exact, everything else becomes a float."""
    return x if isinstance(x, Fraction) else float(x)


def tsum(values: Iterable):
    """Sum that is exact for Fractions and compensated for floats."""
    values = list(values)
    if all_exact(values):
        return sum(values, Fraction(0))
    return math.fsum(float(v) for v in values)


def default_tol(*values) -> float | int:
    """0 when every value is exact, otherwise the float tolerance ``TAU_SUM``."""
    return 0 if all_exact(values) else TAU_SUM


# --------------------------------------------------------------------------- #
# ground cost
# --------------------------------------------------------------------------- #

def _exact_sqrt(x: Fraction) -> Fraction | None:
    if x < 0:
        return None
    n, d = x.numerator, x.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def _int_exponent(p) -> int | None:
    if is_exact(p) and Fraction(p).denominator == 1:
        return int(p)
    if isinstance(p, float) and p.is_integer():
        return int(p)
    return None


@dataclass(frozen=True)
class CostSpec:
    """Ground cost ``c(x, y) = ||x - y||**p`` for a norm on R^d.

    ``norm`` is one of ``euclidean``, ``ell_q`` (with exponent ``q > 1``),
    ``ell_1`` or ``ell_inf``.
    """

    p: float = 2.0
    norm: str = "euclidean"
    q: float | None = None

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if not math.isfinite(float(self.p)) or self.p < 1:
            raise ValueError(f"exponent p must be finite and >= 1, got {self.p}")
        if self.norm == "ell_q":
            if self.q is None or not self.q > 1 or not math.isfinite(float(self.q)):
                raise ValueError("ell_q needs a finite q > 1")
        elif self.q is not None:
            raise ValueError("q is only meaningful for ell_q")

    @property
    def strictly_convex(self) -> bool:
        return self.norm in ("euclidean", "ell_q")

    def norm_of(self, v: Sequence):
        """Norm of a vector; exact whenever the result is rational."""
        exact = all_exact(v)
        if self.norm == "ell_1":
            return sum((abs(x) for x in v), Fraction(0) if exact else 0.0)
        if self.norm == "ell_inf":
            return max((abs(x) for x in v), default=Fraction(0) if exact else 0.0)
        if self.norm == "euclidean":
            s2 = sum((x * x for x in v), Fraction(0) if exact else 0.0)
            if exact:
                r = _exact_sqrt(s2)
                return r if r is not None else Fraction(math.sqrt(s2))
            return math.sqrt(s2)
        q = float(self.q)
        s = math.fsum(abs(float(x)) ** q for x in v)
        return s ** (1.0 / q)

    def __call__(self, x: Sequence, y: Sequence):
        if len(x) != len(y):
            raise DimMismatch(f"points of dimension {len(x)} and {len(y)}")
        d = [a - b for a, b in zip(x, y)]
        exact = all_exact(d)
        k = _int_exponent(self.p)
        if self.norm == "euclidean" and k is not None and k % 2 == 0:
            s2 = sum((a * a for a in d), Fraction(0) if exact else 0.0)
            return s2 ** (k // 2)
        n = self.norm_of(d)
        if k is not None and (is_exact(n) or not exact):
            return n ** k
        val = float(n) ** float(self.p)
        return Fraction(val) if exact else val

    def a_p(self, x: Sequence):
        """Integrability bound ``2**(p-1) * ||x||**p`` (so that c(x,y) <= a_p(x) + a_p(y))."""
        k = _int_exponent(self.p)
        n = self.norm_of(x)
        if k is not None and is_exact(n):
            return Fraction(2) ** (k - 1) * n ** k
        return 2.0 ** (float(self.p) - 1) * float(n) ** float(self.p)

    def to_json(self):
        norm = {"ell_q": num(self.q)} if self.norm == "ell_q" else self.norm
        return {"p": num(self.p), "norm": norm}

    @classmethod
    def from_json(cls, data) -> "CostSpec":
        norm = data.get("norm", "euclidean")
        p = data.get("p", 2.0)
        if isinstance(norm, dict):
            if set(norm) != {"ell_q"}:
                raise ValueError(f"bad norm object {norm!r}")
            return cls(p=p, norm="ell_q", q=float(norm["ell_q"]))
        return cls(p=p, norm=norm)


# --------------------------------------------------------------------------- #
# discrete measures
# --------------------------------------------------------------------------- #

def _as_point(x) -> tuple:
    if isinstance(x, (int, float, Fraction)):
        x = (x,)
    pt = tuple(x)
    for v in pt:
        if isinstance(v, bool) or not isinstance(v, (int, float, Fraction)):
            raise InvalidMeasure(f"coordinate {v!r} is not a real number")
        if isinstance(v, float) and not math.isfinite(v):
            raise InvalidMeasure(f"non-finite coordinate in {pt!r}")
    return pt


def _linf(x, y):
    return max((abs(a - b) for a, b in zip(x, y)), default=0)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure on R^d.

    Construction validates the data (finite coordinates, a common dimension,
    strictly positive weights summing to one within ``TAU_SUM``) but does not
    reorder it; use :func:`canonicalize` for the sorted, merged form.
    """

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(_as_point(a) for a in self.atoms)
        weights = tuple(self.weights)
        if not atoms:
            raise EmptyMeasure("a measure needs at least one atom")
        if len(atoms) != len(weights):
            raise InvalidMeasure("atoms and weights differ in length")
        dims = {len(a) for a in atoms}
        if len(dims) != 1 or 0 in dims:
            raise DimMismatch(f"atoms have dimensions {sorted(dims)}")
        for w in weights:
            if isinstance(w, bool) or not isinstance(w, (int, float, Fraction)):
                raise InvalidMeasure(f"weight {w!r} is not a real number")
            if not w > 0 or (isinstance(w, float) and not math.isfinite(w)):
                raise InvalidMeasure(f"weights must be strictly positive, got {w!r}")
        total = tsum(weights)
        if abs(total - 1) > TAU_SUM:
            raise InvalidMeasure(f"weights sum to {total}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return len(self.atoms[0])

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def exact(self) -> bool:
        return all_exact(self.weights) and all(all_exact(a) for a in self.atoms)

    @property
    def is_canonical(self) -> bool:
        return all(self.atoms[k] < self.atoms[k + 1] for k in range(len(self) - 1))

    def sort_key(self):
        return (self.atoms, self.weights)

    def moment(self, cost: CostSpec):
        """Integral of ``cost.a_p`` against the measure (finite at finite support)."""
        return tsum(w * cost.a_p(x) for x, w in zip(self.atoms, self.weights))

    def to_json(self):
        return {
            "atoms": [[num(v) for v in a] for a in self.atoms],
            "weights": [num(w) for w in self.weights],
        }

    @classmethod
    def from_json(cls, data, exact: bool = False) -> "DiscreteMeasure":
        conv = to_fraction if exact else float
        atoms = [[conv(v) for v in a] for a in data["atoms"]]
        weights = [conv(w) for w in data["weights"]]
        return make_measure(atoms, weights, tol=0)

    def __repr__(self):
        parts = ", ".join(f"{w}@{a}" for a, w in zip(self.atoms, self.weights))
        return f"DiscreteMeasure({parts})"


def dirac(x) -> DiscreteMeasure:
    return DiscreteMeasure((_as_point(x),), (Fraction(1) if all_exact(_as_point(x)) else 1.0,))


def _normalize(weights: list) -> list:
    """Rescale to total mass exactly one (bit-exact in float via fsum)."""
    if all_exact(weights):
        total = sum(weights, Fraction(0))
        return [Fraction(w) / total for w in weights]
    total = math.fsum(weights)
    if total == 1.0:
        return [float(w) for w in weights]
    out = [float(w) / total for w in weights]
    big = max(range(len(out)), key=lambda k: out[k])
    for _ in range(64):
        s = math.fsum(out)
        if s == 1.0:
            break
        out[big] = math.nextafter(out[big], math.inf if s < 1.0 else -math.inf)
    return out


def make_measure(atoms, weights, tol=0) -> DiscreteMeasure:
    """Build a canonical measure from raw data.

    Zero weights are dropped, atoms within ``tol`` (max-coordinate distance)
    are merged, the result is sorted lexicographically and renormalized.
    Raises :class:`EmptyMeasure` if no mass remains.
    """
    pts = [_as_point(a) for a in atoms]
    ws = list(weights)
    if len(pts) != len(ws):
        raise InvalidMeasure("atoms and weights differ in length")
    if any(w < 0 for w in ws):
        raise InvalidMeasure("negative weight")
    pairs = sorted((p, w) for p, w in zip(pts, ws) if w > 0)
    if not pairs:
        raise EmptyMeasure("all weights vanish")
    if len({len(p) for p, _ in pairs}) != 1:
        raise DimMismatch("atoms of different dimensions")
    reps: list = []
    mass: list = []
    for p, w in pairs:
        for k, r in enumerate(reps):
            if (tol == 0 and p == r) or (tol and _linf(p, r) <= tol):
                mass[k] = mass[k] + w
                break
        else:
            reps.append(p)
            mass.append(w)
    order = sorted(range(len(reps)), key=lambda k: reps[k])
    reps = [reps[k] for k in order]
    mass = _normalize([mass[k] for k in order])
    return DiscreteMeasure(tuple(reps), tuple(mass))


def canonicalize(m: DiscreteMeasure, tol=0) -> DiscreteMeasure:
    return make_measure(m.atoms, m.weights, tol)


def measure_eq(a: DiscreteMeasure, b: DiscreteMeasure, tol=0) -> bool:
    if a.dim != b.dim:
        raise DimMismatch(f"dimension {a.dim} vs {b.dim}")
    a, b = canonicalize(a, tol), canonicalize(b, tol)
    if len(a) != len(b):
        return False
    for x, y in zip(a.atoms, b.atoms):
        if _linf(x, y) > tol:
            return False
    return all(abs(u - v) <= tol for u, v in zip(a.weights, b.weights))


def rationalize(m: DiscreteMeasure) -> DiscreteMeasure:
    return make_measure(
        [[to_fraction(v) for v in a] for a in m.atoms], [to_fraction(w) for w in m.weights]
    )


# --------------------------------------------------------------------------- #
# nested measures
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class NestedMeasure:
    """Finitely supported probability measure whose atoms are DiscreteMeasures."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        weights = tuple(self.weights)
        if not atoms:
            raise EmptyMeasure("a nested measure needs at least one atom")
        if len(atoms) != len(weights):
            raise InvalidMeasure("atoms and weights differ in length")
        if not all(isinstance(a, DiscreteMeasure) for a in atoms):
            raise InvalidMeasure("atoms of a nested measure must be DiscreteMeasures")
        if len({a.dim for a in atoms}) != 1:
            raise DimMismatch("inner atoms of different dimensions")
        if any(not w > 0 for w in weights):
            raise InvalidMeasure("weights must be strictly positive")
        total = tsum(weights)
        if abs(total - 1) > TAU_SUM:
            raise InvalidMeasure(f"weights sum to {total}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms[0].dim

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def exact(self) -> bool:
        return all_exact(self.weights) and all(a.exact for a in self.atoms)

    def index_of(self, mu: DiscreteMeasure, tol=0) -> int | None:
        for k, a in enumerate(self.atoms):
            if a.dim == mu.dim and measure_eq(a, mu, tol):
                return k
        return None

    def to_json(self):
        return {
            "atoms": [a.to_json() for a in self.atoms],
            "weights": [num(w) for w in self.weights],
        }

    @classmethod
    def from_json(cls, data, exact: bool = False) -> "NestedMeasure":
        conv = to_fraction if exact else float
        atoms = [DiscreteMeasure.from_json(a, exact) for a in data["atoms"]]
        return make_nested(atoms, [conv(w) for w in data["weights"]])


def make_nested(atoms, weights, tol=0) -> NestedMeasure:
    """Canonical nested measure: inner atoms canonical, merged, sorted; weights normalized."""
    atoms = [canonicalize(a, tol) for a in atoms]
    ws = list(weights)
    if len(atoms) != len(ws):
        raise InvalidMeasure("atoms and weights differ in length")
    if any(w < 0 for w in ws):
        raise InvalidMeasure("negative weight")
    reps: list = []
    mass: list = []
    for a, w in zip(atoms, ws):
        if not w > 0:
            continue
        for k, r in enumerate(reps):
            if r.dim == a.dim and measure_eq(r, a, tol):
                mass[k] = mass[k] + w
                break
        else:
            reps.append(a)
            mass.append(w)
    if not reps:
        raise EmptyMeasure("all weights vanish")
    order = sorted(range(len(reps)), key=lambda k: reps[k].sort_key())
    return NestedMeasure(
        tuple(reps[k] for k in order), tuple(_normalize([mass[k] for k in order]))
    )


def canonicalize_nested(M: NestedMeasure, tol=0) -> NestedMeasure:
    return make_nested(M.atoms, M.weights, tol)


def nested_eq(A: NestedMeasure, B: NestedMeasure, tol=0) -> bool:
    A, B = canonicalize_nested(A, tol), canonicalize_nested(B, tol)
    if len(A) != len(B):
        return False
    if any(not measure_eq(a, b, tol) for a, b in zip(A.atoms, B.atoms)):
        return False
    return all(abs(u - v) <= tol for u, v in zip(A.weights, B.weights))


def intensity(M: NestedMeasure) -> DiscreteMeasure:
    """Mixture of the inner atoms weighted by M."""
    atoms, weights = [], []
    for mu, w in zip(M.atoms, M.weights):
        atoms.extend(mu.atoms)
        weights.extend(w * v for v in mu.weights)
    return make_measure(atoms, weights)


# --------------------------------------------------------------------------- #
# couplings
# --------------------------------------------------------------------------- #

def _as_matrix(matrix) -> tuple:
    return tuple(tuple(row) for row in matrix)


@dataclass(frozen=True)
class Coupling:
    """Transport plan between two discrete measures, ``matrix[i][j]`` = mass moved from atom i to atom j."""

    source: DiscreteMeasure
    target: DiscreteMeasure
    matrix: tuple

    def __post_init__(self):
        mat = _as_matrix(self.matrix)
        m, n = len(self.source), len(self.target)
        if len(mat) != m or any(len(r) != n for r in mat):
            raise MarginalMismatch(f"plan shape does not match {m}x{n}")
        if self.source.dim != self.target.dim:
            raise DimMismatch("source and target live in different dimensions")
        if any(v < 0 for r in mat for v in r):
            raise MarginalMismatch("negative plan entry")
        for i, r in enumerate(mat):
            if abs(tsum(r) - self.source.weights[i]) > TAU_SUM:
                raise MarginalMismatch(f"row {i} does not sum to the source weight")
        for j in range(n):
            if abs(tsum(r[j] for r in mat) - self.target.weights[j]) > TAU_SUM:
                raise MarginalMismatch(f"column {j} does not sum to the target weight")
        object.__setattr__(self, "matrix", mat)

    @property
    def shape(self):
        return len(self.source), len(self.target)

    def cost(self, c: CostSpec):
        return tsum(
            v * c(x, y)
            for x, row in zip(self.source.atoms, self.matrix)
            for y, v in zip(self.target.atoms, row)
            if v != 0
        )

    def support(self, eps=0):
        return [(i, j) for i, r in enumerate(self.matrix) for j, v in enumerate(r) if v > eps]

    def transpose(self) -> "Coupling":
        return Coupling(self.target, self.source, tuple(zip(*self.matrix)))

    def to_json(self):
        return {
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "plan": [[num(v) for v in r] for r in self.matrix],
        }


def product_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    return Coupling(mu, nu, tuple(tuple(a * b for b in nu.weights) for a in mu.weights))


def identity_coupling(mu: DiscreteMeasure) -> Coupling:
    n = len(mu)
    zero = Fraction(0) if mu.exact else 0.0
    return Coupling(
        mu, mu, tuple(tuple(mu.weights[i] if i == j else zero for j in range(n)) for i in range(n))
    )


@dataclass(frozen=True)
class RandomCoupling:
    """Finitely supported law over couplings."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        weights = tuple(self.weights)
        if not atoms or len(atoms) != len(weights):
            raise InvalidMeasure("random coupling needs matching, non-empty atoms and weights")
        if not all(isinstance(a, Coupling) for a in atoms):
            raise InvalidMeasure("atoms of a random coupling must be Couplings")
        if any(not w > 0 for w in weights):
            raise InvalidMeasure("weights must be strictly positive")
        if abs(tsum(weights) - 1) > TAU_SUM:
            raise InvalidMeasure("weights do not sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.atoms)


@dataclass(frozen=True)
class OuterCoupling:
    """Plan between two nested measures (a coupling at measure level)."""

    source: NestedMeasure
    target: NestedMeasure
    matrix: tuple

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_matrix(self.matrix))

    def support(self, eps=0):
        return [(i, j) for i, r in enumerate(self.matrix) for j, v in enumerate(r) if v > eps]


@dataclass(frozen=True)
class DualPotentials:
    phi: tuple
    psi: tuple
    level: str = "inner"

    def __post_init__(self):
        if self.level not in ("inner", "outer"):
            raise ValueError("level must be 'inner' or 'outer'")
        object.__setattr__(self, "phi", tuple(self.phi))
        object.__setattr__(self, "psi", tuple(self.psi))

    def feasible(self, cost_matrix, tol=TAU_FEAS) -> bool:
        return all(
            self.phi[i] + self.psi[j] <= cost_matrix[i][j] + tol
            for i in range(len(self.phi))
            for j in range(len(self.psi))
        )

    def value(self, a, b):
        return tsum([*(u * w for u, w in zip(self.phi, a)), *(v * w for v, w in zip(self.psi, b))])


# --------------------------------------------------------------------------- #
# gluing and random-coupling bookkeeping
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Gluing:
    """Three-way plan on X1 x X2 x X1'; ``tensor[i][k][j]`` is the mass at (x_i, y_k, x'_j)."""

    first: DiscreteMeasure
    middle: DiscreteMeasure
    third: DiscreteMeasure
    tensor: tuple

    def marginal_12(self):
        return [[tsum(row) for row in plane] for plane in self.tensor]

    def marginal_32(self):
        m3, n2 = len(self.third), len(self.middle)
        return [
            [tsum(self.tensor[i][k][j] for i in range(len(self.first))) for k in range(n2)]
            for j in range(m3)
        ]


def glue(pi: Coupling, pi2: Coupling, tol=None) -> Gluing:
    """Glue ``pi`` on X1 x X2 and ``pi2`` on X1' x X2 along the shared X2 marginal.

    The conditional-independence gluing is used:
    ``theta[i][k][j] = pi[i][k] * pi2[j][k] / nu[k]``.
    """
    if tol is None:
        tol = default_tol(*pi.target.weights, *pi2.target.weights)
    if not measure_eq(pi.target, pi2.target, tol):
        raise MarginalMismatch("the two plans do not share their second marginal")
    nu = pi.target.weights
    # pi2's target may list atoms in a different order; align by canonical position
    order2 = _alignment(pi.target, pi2.target, tol)
    m, n, m2 = len(pi.source), len(nu), len(pi2.source)
    tensor = tuple(
        tuple(
            tuple(pi.matrix[i][k] * pi2.matrix[j][order2[k]] / nu[k] for j in range(m2))
            for k in range(n)
        )
        for i in range(m)
    )
    return Gluing(pi.source, pi.target, pi2.source, tensor)


def _alignment(a: DiscreteMeasure, b: DiscreteMeasure, tol) -> list[int]:
    out = []
    for x in a.atoms:
        for k, y in enumerate(b.atoms):
            if _linf(x, y) <= tol:
                out.append(k)
                break
        else:
            raise MarginalMismatch(f"atom {x} missing from the other marginal")
    return out


def _group_marginals(P: RandomCoupling, side: int, tol):
    laws = [pi.source if side == 1 else pi.target for pi in P.atoms]
    return make_nested(laws, list(P.weights), tol)


def validate_random_coupling(P: RandomCoupling, M1: NestedMeasure, M2: NestedMeasure, tol=None) -> bool:
    """True iff the double push-forwards of P's marginal projections equal M1 and M2."""
    if tol is None:
        tol = 0 if (M1.exact and M2.exact and all_exact(P.weights)) else TAU_SUM
    try:
        first = _group_marginals(P, 1, tol)
        second = _group_marginals(P, 2, tol)
        return nested_eq(first, M1, tol) and nested_eq(second, M2, tol)
    except (DimMismatch, InvalidMeasure):
        return False


def induced_outer_coupling(P: RandomCoupling, tol=None) -> OuterCoupling:
    """Push P through (first marginal, second marginal): the induced plan between nested measures."""
    if tol is None:
        tol = 0 if all_exact(P.weights) and all(pi.source.exact for pi in P.atoms) else TAU_SUM
    M1 = _group_marginals(P, 1, tol)
    M2 = _group_marginals(P, 2, tol)
    zero = Fraction(0) if all_exact(P.weights) else 0.0
    mat = [[zero] * len(M2) for _ in range(len(M1))]
    for pi, w in zip(P.atoms, P.weights):
        i = M1.index_of(pi.source, tol)
        j = M2.index_of(pi.target, tol)
        mat[i][j] = mat[i][j] + w
    return OuterCoupling(M1, M2, mat)
