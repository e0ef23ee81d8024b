# -*- coding: utf-8 -*-
"""
twogridcdm - 問題モジュール

製造解と Allen–Cahn 問題のカタログ、離散エネルギーを提供します。
"""

from src.problems.catalog import (
    ProblemError,
    ProblemSpec,
    allen_cahn,
    case_I,
    case_II,
    case_III,
    check_source_consistency,
    get_problem,
    problem_names,
    resolve_problem_name,
    sine_decay_problem,
    two_peak_problem,
)
from src.problems.energy import discrete_energy

__all__ = [
    "ProblemError",
    "ProblemSpec",
    "allen_cahn",
    "case_I",
    "case_II",
    "case_III",
    "check_source_consistency",
    "discrete_energy",
    "get_problem",
    "problem_names",
    "resolve_problem_name",
    "sine_decay_problem",
    "two_peak_problem",
]
