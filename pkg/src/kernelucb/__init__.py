"""Kernelised upper-confidence-bound contextual bandits.

KernelUCB and SupKernelUCB with an exactly updated regularised Gram
inverse, Gram-spectrum diagnostics, synthetic environments and a seeded
experiment harness.
"""
from .diagnostics import (PrimalLinUCB, SpectrumReport, effective_dimension, gram_spectrum,
                          information_gain, linucb_oracle, spectrum_report, theorem1_bound)
from .env import LinearEnv, NoiseModel, RkhsEnv, Round, ScriptedEnv
from .gram import GramState, NumericalBreakdown
from .harness import ConfigError, ExperimentConfig, RegretTrace, run_experiment, summarize
from .kernels import KernelError, KernelSpec, gram_matrix, gram_vector
from .policy import ArmScore, ConstantEta, KernelUCB, PolicyConfig, TheoryEta
from .sup_policy import LevelSets, SupKernelUCB

__version__ = "0.1.0"

__all__ = [
    "ArmScore", "ConfigError", "ConstantEta", "ExperimentConfig", "GramState", "KernelError",
    "KernelSpec", "KernelUCB", "LevelSets", "LinearEnv", "NoiseModel", "NumericalBreakdown",
    "PolicyConfig", "PrimalLinUCB", "RegretTrace", "RkhsEnv", "Round", "ScriptedEnv",
    "SpectrumReport", "SupKernelUCB", "TheoryEta", "effective_dimension", "gram_matrix",
    "gram_spectrum", "gram_vector", "information_gain", "linucb_oracle", "run_experiment",
    "spectrum_report", "summarize", "theorem1_bound",
]
