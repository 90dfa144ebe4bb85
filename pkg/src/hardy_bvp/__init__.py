"""First-order Hardy-space solvers for divergence-form boundary value problems."""

__version__ = "0.1.0"
