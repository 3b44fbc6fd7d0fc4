"""Proximal shuffling gradient methods with last-iterate diagnostics."""

from . import analysis, io, optimizer, permutations, problems, prox, schedules

__all__ = [
    "analysis",
    "io",
    "optimizer",
    "permutations",
    "problems",
    "prox",
    "schedules",
]

__version__ = "0.1.0"
