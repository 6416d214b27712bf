"""Evolutionary search over optimizer source code with controlled mutation rates.

An LLM (or a deterministic mock) rewrites a Python optimizer under prompts that
pin how much of the code may change per step. Mutation sizes are drawn from a
discrete power law, candidates are scored on a small black-box benchmark suite
over a line-oriented stdio protocol, and adherence between requested and
delivered change is quantified with log-ratio errors.
"""

from .codediff import SourceText, diff_percent, normalize
from .evolution import (
    DynamicRate,
    EvolutionConfig,
    EvolutionResult,
    FixedRate,
    InitialGenerationError,
    evolve,
)
from .metrics import aocc, mean_aocc, mse, tdw_score
from .powerlaw import PowerLawConfig, pmf, sample_alpha, sample_rate_percent
from .seeding import derive_seed

__version__ = "0.1.0"

__all__ = [
    "DynamicRate",
    "EvolutionConfig",
    "EvolutionResult",
    "FixedRate",
    "InitialGenerationError",
    "PowerLawConfig",
    "SourceText",
    "aocc",
    "derive_seed",
    "diff_percent",
    "evolve",
    "mean_aocc",
    "mse",
    "normalize",
    "pmf",
    "sample_alpha",
    "sample_rate_percent",
    "tdw_score",
    "__version__",
]
