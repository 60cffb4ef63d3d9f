"""Lambda-Fleming-Viot processes with Lévy mutation: coalescents, lookdown and experiments."""
from __future__ import annotations

__version__ = "0.1.0"

from .coalescent import CoalescentPath, Partition, simulate_block_counts, simulate_coalescent
from .empirical import BallQuery, Constant, Coordinate, EmpiricalMeasure, Enlargement
from .errors import DomainError, EventCapExceeded, SpecParseError, UndeterminedError
from .levy import LevySpec, parse_levy, sample_increments
from .lookdown import simulate_lookdown
from .measure import LambdaMeasure, parse_lambda
from .rates import merger_rate, rate_table
from .speed import Classification, c_lambda, comes_down_from_infinity, has_dust, psi, v_of_t

__all__ = [
    "__version__",
    "BallQuery", "Classification", "CoalescentPath", "Constant", "Coordinate", "DomainError",
    "EmpiricalMeasure", "Enlargement", "EventCapExceeded", "LambdaMeasure", "LevySpec", "Partition",
    "SpecParseError", "UndeterminedError",
    "c_lambda", "comes_down_from_infinity", "has_dust", "merger_rate", "parse_lambda", "parse_levy",
    "psi", "rate_table", "sample_increments", "simulate_block_counts", "simulate_coalescent",
    "simulate_lookdown", "v_of_t",
]
