"""Result containers returned by the solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def round_sig(x, digits=10):
    """Round to significant digits so reports are stable across BLAS builds."""
    if x is None:
        return None
    x = float(x)
    if not np.isfinite(x) or x == 0.0:
        return x if np.isfinite(x) else str(x)
    return float(f"{x:.{digits}g}")


def jsonable(obj, digits=10):
    if isinstance(obj, dict):
        return {str(k): jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v, digits) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(obj, digits)
    if isinstance(obj, (complex, np.complexfloating)):
        return [round_sig(obj.real, digits), round_sig(obj.imag, digits)]
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict(), digits)
    return obj


@dataclass
class NormBundle:
    """Norms of a solution F_t = exp(-t|T|) f+ in L2(torus) units."""

    trace_norm: float
    sup_norm: float
    square_function: float
    ntmax: float | None = None
    input_norm: float | None = None

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SolveReport:
    """Outcome of a boundary value solve.

    ``trace`` has shape (components, *grid); ``fields`` and ``potentials``
    map t-levels to grid arrays of the conormal field F_t and the scalar
    potential U_t.
    """

    which: str
    trace: np.ndarray
    cond: float
    sigma_min: float
    sigma_max: float
    t_levels: tuple = ()
    fields: dict = field(default_factory=dict)
    potentials: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    norms: NormBundle | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "which": self.which,
            "cond": self.cond,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "t_levels": list(self.t_levels),
            "residuals": self.residuals,
            "norms": self.norms.to_dict() if self.norms else None,
            "meta": self.meta,
        }
