"""Conditional risk measures, duality and attainment diagnostics on finite filtered probability spaces."""

__version__ = "0.1.0"

from .measure_algebra import (Condition, PartitionOfUnity, ProbSpace, SubAlgebra, complement,
                              condition_from_predicate, join, meet, validate_partition)
from .risk import (AVaR, CustomRisk, EntropicRisk, PenaltyRisk, PolyhedralPenalty, RiskMeasure,
                   SmoothPenalty, WorstCaseRisk, check_axioms)
from .duality import (attainment_check, conjugate, represent, scalar_conjugate_identity_check,
                      scalarize, sublevel_diagnostics)
from .conditional import cond_dual_norm, cond_expectation, cond_norm
from .diagnostics import (BlockPolytope, ProperConvexBlockFn, PerturbationSpec, fatou_lebesgue_harness,
                          james_check, james_perturbed_check, simons_check)
from .scenario import load_scenario, parse_scenario, serialize_scenario
from . import errors

__all__ = [
    "AVaR", "BlockPolytope", "Condition", "CustomRisk", "EntropicRisk", "PartitionOfUnity",
    "PenaltyRisk", "PerturbationSpec", "PolyhedralPenalty", "ProbSpace", "ProperConvexBlockFn",
    "RiskMeasure", "SmoothPenalty", "SubAlgebra", "WorstCaseRisk", "attainment_check", "check_axioms",
    "complement", "cond_dual_norm", "cond_expectation", "cond_norm", "condition_from_predicate",
    "conjugate", "errors", "fatou_lebesgue_harness", "james_check", "james_perturbed_check", "join",
    "load_scenario", "meet", "parse_scenario", "represent", "scalar_conjugate_identity_check",
    "scalarize", "serialize_scenario", "simons_check", "sublevel_diagnostics", "validate_partition",
]
