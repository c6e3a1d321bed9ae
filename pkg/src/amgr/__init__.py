"""Generalized reduction-based algebraic multigrid with SPAI components."""

__version__ = "0.1.0"
