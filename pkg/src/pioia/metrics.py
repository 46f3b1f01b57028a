"""Run quality measures: bound gap, gap to a known optimum, feasibility
violation of a returned point, and first-crossing times."""

from __future__ import annotations

import math

import numpy as np

from .backend import point_violation
from .formulation import Variant, build_outer_base, cone_residual, nonlinear_cones
from .model import UcInstance

OPTG_ZERO = 1e-4
MILESTONES = (("Gap-1", "gap", 1e-2), ("Gap-0.1", "gap", 1e-3),
              ("OptG-0.1", "optg", 1e-3), ("OptG-0", "optg", OPTG_ZERO))


def gap(ub: float, lb: float) -> float:
    """(UB - LB) / UB."""
    if math.isinf(ub) and ub > 0:
        return math.inf
    if ub == 0:
        return 0.0 if lb >= 0 else math.inf
    return (ub - lb) / ub


def optg(ub: float, obj_star: float) -> float:
    """(UB - obj*) / UB with tiny negative round-off clamped to 0."""
    if math.isinf(ub) and ub > 0:
        return math.inf
    if ub == 0:
        return 0.0 if obj_star >= 0 else math.inf
    v = (ub - obj_star) / ub
    return 0.0 if -1e-9 <= v < 0 else v


def violation(inst: UcInstance, variant, solution) -> float:
    """Largest violation of the full model, cones included, at ``solution``.

    Covers variable bounds, every linear row, integrality of the commitment
    block, the rotated cones and the line capacity disks.
    """
    base = build_outer_base(inst, Variant.parse(variant))
    v = np.asarray(solution, dtype=float)
    if v.shape[0] < base.n_vars:
        raise ValueError(f"solution has {v.shape[0]} values, model needs {base.n_vars}")
    v = v[: base.n_vars]
    if not np.all(np.isfinite(v)):
        raise ValueError("solution has missing (non-finite) values")
    worst = point_violation(base, v, integral=True)
    for cone in nonlinear_cones(inst, base.index):
        worst = max(worst, cone_residual(cone, v))
    return float(worst)


def milestones(trace, obj_star: float | None = None) -> dict[str, float | None]:
    """Earliest wall time at which each threshold holds; None if never."""
    out: dict[str, float | None] = {name: None for name, _, _ in MILESTONES}
    for row in trace:
        vals = {"gap": gap(row.ub, row.lb),
                "optg": optg(row.ub, obj_star) if obj_star is not None else math.inf}
        for name, kind, thr in MILESTONES:
            if out[name] is None and vals[kind] <= thr:
                out[name] = row.wall_time_s
    return out
