"""Nested optimal transport between finitely supported laws of random measures."""

from .errors import (
    BudgetExceeded,
    DimMismatch,
    DimNotOne,
    EmptyMeasure,
    IndexMismatch,
    InvalidMeasure,
    MarginalMismatch,
    NotEqualSize,
    NumericalFailure,
    PushforwardMismatch,
    UnsupportedNorm,
    WowError,
)
from .measures import (
    CostSpec,
    Coupling,
    DiscreteMeasure,
    DualPotentials,
    NestedMeasure,
    OuterCoupling,
    RandomCoupling,
    canonicalize,
    dirac,
    glue,
    induced_outer_coupling,
    intensity,
    make_measure,
    make_nested,
    measure_eq,
    nested_eq,
    validate_random_coupling,
)
from .inner import is_optimal, solve, solve_1d_monotone, wasserstein
from .nested import NestedSolution, random_coupling_cost, solve_nested, verify_outer_gap, wow_distance
from .certificates import (
    check_c_cyclical_monotone,
    check_superdifferential_certificate,
    check_total_monotone,
    check_total_superdiff_membership,
    falsify_total_monotone_sampled,
    rr_potentials,
)
from .lifting import (
    StepRandomVariable,
    common_refinement,
    joint_law,
    law,
    lift_measure,
    lift_potential_check,
    lifted_cost,
    rearrange_to_coupling,
)
from .monge import (
    NestedMap,
    is_deterministic,
    is_fully_deterministic,
    linfty_counterexample,
    make_random_coupling,
    pratelli_refinement_experiment,
    strict_convexity_witness,
    strict_monge_equal_size,
    uniqueness_probe,
)

__version__ = "0.1.0"
