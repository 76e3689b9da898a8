"""Hölder-space invariance principle toolkit."""
from ._accel import backend
from .counterexample import build_schedule, f_l_weak_power_exact, kappa_prime, lower_bound_chain, modulus_event_prob, validate_schedule
from .harness import ExperimentConfig, ExperimentReport, run_experiment
from .holder import (
    PolygonalPath,
    build_polygonal,
    grid_coefficients,
    holder_modulus,
    increment_seq_bound,
    schauder_coefficients,
    sequential_norm,
    tightness_statistic,
    vertex_norm,
)
from .processes import GeneratorSpec, generate
from .weak_lp import SimpleFunction, kappa, np_norm, weak_norm_exact

__all__ = [
    "backend",
    "PolygonalPath",
    "build_polygonal",
    "schauder_coefficients",
    "sequential_norm",
    "vertex_norm",
    "holder_modulus",
    "tightness_statistic",
    "increment_seq_bound",
    "grid_coefficients",
    "SimpleFunction",
    "weak_norm_exact",
    "np_norm",
    "kappa",
    "GeneratorSpec",
    "generate",
    "build_schedule",
    "validate_schedule",
    "kappa_prime",
    "f_l_weak_power_exact",
    "lower_bound_chain",
    "modulus_event_prob",
    "ExperimentConfig",
    "ExperimentReport",
    "run_experiment",
]
