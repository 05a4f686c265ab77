"""Regeneration of finite-activity, possibly killed Lévy processes on a time grid."""
from .decompose import add_killing, convolve_laws, reconcile
from .levy_core import (CEMETERY, UNOBSERVED, AtomicJumpMeasure, LevyModel, SamplePath, make_path,
                        restrict, simulate, splice)
from .regen import concatenate, strong_markov_diagnostic
from .scenarios import ConfigError, run_scenario
from .stats import TestReport
from .stopping import (CappedAt, Deterministic, FirstExit, FirstJump, HalfFirstJump, InfimumTime,
                       LastZero, MinOf, adaptedness_harness)

__version__ = "0.1.0"

__all__ = [
    "AtomicJumpMeasure", "CEMETERY", "CappedAt", "ConfigError", "Deterministic", "FirstExit",
    "FirstJump", "HalfFirstJump", "InfimumTime", "LastZero", "LevyModel", "MinOf", "SamplePath",
    "TestReport", "UNOBSERVED", "adaptedness_harness", "add_killing", "concatenate", "convolve_laws",
    "make_path", "reconcile", "restrict", "run_scenario", "simulate", "splice",
    "strong_markov_diagnostic",
]
