"""Precoder design for the interference channel."""
from .closed_form import closed_form_ia
from .greedy import greedy_avoidance
from .iterative import iterative_ia
from .maxsinr import max_sinr, sinr_objective
from .solution import (EQUAL_NORM, STRATEGIES, Diagnostics, PrecoderSolution, SolverError,
                       random_precoders)
from .tdma import TdmaSchedule, tdma
from .verify import AlignmentReport, verify_alignment

__all__ = [
    "AlignmentReport", "Diagnostics", "EQUAL_NORM", "PrecoderSolution", "STRATEGIES",
    "SolverError", "TdmaSchedule", "closed_form_ia", "greedy_avoidance", "iterative_ia",
    "max_sinr", "random_precoders", "sinr_objective", "tdma", "verify_alignment",
]
