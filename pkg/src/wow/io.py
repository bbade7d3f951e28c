"""JSON instances and deterministic report serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .measures import (
    TAU_FEAS,
    TAU_GAP,
    TAU_SUM,
    CostSpec,
    Coupling,
    NestedMeasure,
    RandomCoupling,
    to_fraction,
)


@dataclass
class Tolerances:
    sum: float = TAU_SUM
    feas: float = TAU_FEAS
    gap: float = TAU_GAP

    @classmethod
    def resolve(cls, exact: bool, tol=None, tol_sum=None, tol_feas=None, tol_gap=None) -> "Tolerances":
        """Exact mode defaults to zero tolerance; ``tol`` overrides all three unless a specific one is set."""
        base = cls(0, 0, 0) if exact else cls()
        if tol is not None:
            base = cls(tol, tol, tol)
        return cls(
            base.sum if tol_sum is None else tol_sum,
            base.feas if tol_feas is None else tol_feas,
            base.gap if tol_gap is None else tol_gap,
        )


@dataclass
class Instance:
    m1: NestedMeasure
    m2: NestedMeasure
    cost: CostSpec
    options: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.options.get("mode", "float") == "rational"

    @property
    def seed(self) -> int:
        return int(self.options.get("seed", 0))


def parse_instance(data: dict, mode: str | None = None) -> Instance:
    """Build an Instance from its JSON object; ``mode`` overrides ``options.mode``."""
    if not isinstance(data, dict) or "m1" not in data or "m2" not in data:
        raise ValueError('an instance needs "m1" and "m2"')
    options = dict(data.get("options") or {})
    if mode is not None:
        options["mode"] = mode
    if options.get("mode", "float") not in ("float", "rational"):
        raise ValueError(f"unknown mode {options['mode']!r}")
    exact = options.get("mode") == "rational"
    cost = CostSpec.from_json(data.get("cost") or {})
    m1 = NestedMeasure.from_json(data["m1"], exact)
    m2 = NestedMeasure.from_json(data["m2"], exact)
    if m1.dim != m2.dim:
        from .errors import DimMismatch

        raise DimMismatch(f"m1 lives in dimension {m1.dim}, m2 in {m2.dim}")
    return Instance(m1, m2, cost, options)


def load_instance(path: str, mode: str | None = None) -> Instance:
    with open(path) as fh:
        return parse_instance(json.load(fh), mode)


def instance_to_json(inst: Instance) -> dict:
    return {
        "m1": inst.m1.to_json(),
        "m2": inst.m2.to_json(),
        "cost": inst.cost.to_json(),
        "options": dict(inst.options),
    }


def parse_random_coupling(data: dict, inst: Instance) -> RandomCoupling:
    """Random coupling from a plan document (``wow plan`` output) against the instance's atoms."""
    conv = to_fraction if inst.exact else float
    atoms, weights = [], []
    for entry in data["random_coupling"]:
        mu = inst.m1.atoms[int(entry["source_index"])]
        nu = inst.m2.atoms[int(entry["target_index"])]
        atoms.append(Coupling(mu, nu, [[conv(v) for v in row] for row in entry["plan"]]))
        weights.append(conv(entry["weight"]))
    return RandomCoupling(tuple(atoms), tuple(weights))


def _encode(obj, exact: bool):
    if isinstance(obj, dict):
        return {str(k): _encode(v, exact) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v, exact) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Fraction):
        if exact:
            return obj.numerator if obj.denominator == 1 else f"{obj.numerator}/{obj.denominator}"
        return float(obj)
    if isinstance(obj, int):
        return obj
    if hasattr(obj, "item"):
        obj = obj.item()
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return 0.0 if obj == 0 else obj
    return obj


def dumps(obj, exact: bool = False) -> str:
    """Deterministic JSON: sorted keys, fixed separators; exact values as ``"p/q"`` strings when ``exact``."""
    return json.dumps(_encode(obj, exact), sort_keys=True, indent=2)
