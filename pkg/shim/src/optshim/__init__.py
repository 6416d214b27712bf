"""Subprocess shim that runs generated optimizer sources over stdio ask/tell."""

from .shim import BudgetExhausted, main, run_shim

__all__ = ["BudgetExhausted", "main", "run_shim"]
__version__ = "0.1.0"
