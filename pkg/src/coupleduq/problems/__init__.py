"""Benchmark problem families for the propagation drivers."""

from .klfield import KlField, kl_roots
from .synthetic import linear_problem

__all__ = ["KlField", "kl_roots", "linear_problem"]
