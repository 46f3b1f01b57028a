"""Per-period recourse subproblems and the optimality cuts built from them.

psi_t(p) is the cheapest period-t dispatch plus penalty cost reachable when
the active injections are pinned to ``p``. Commitment is not involved: every
reactive output ranges over the hull of its on/off intervals, so psi_t is a
convex function of p alone and its subgradient cuts are globally valid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .backend import OPTIMAL, solve_continuous
from .cuts import BENDERS, Cut
from .formulation import ModelSpec, Variant, VariableIndex, build_outer_base, nonlinear_cones
from .model import UcInstance

NETWORK_TAGS = ("pflow", "qflow", "pbal", "qbal")


class BendersError(RuntimeError):
    """Subproblem did not reach an optimal solution; no cut for that period."""


@dataclass(frozen=True)
class TimeBlockDual:
    period: int
    psi_star: float
    pi_star: np.ndarray  # one entry per generator
    p_anchor: np.ndarray


def _period_instance(inst: UcInstance, t: int) -> UcInstance:
    return replace(inst, horizon=1, p_demand=np.array(inst.p_demand[:, t:t + 1]),
                   q_demand=np.array(inst.q_demand[:, t:t + 1]), reserves=())


def time_block_model(inst: UcInstance, variant, t: int, p_anchor: Sequence[float]) -> ModelSpec:
    """Single-period conic model whose optimum is psi_t(p_anchor)."""
    variant = Variant.parse(variant)
    if variant is Variant.F1:
        raise BendersError("time-block subproblems need slack variables; use f2 or f3")
    anchor = np.asarray(p_anchor, dtype=float)
    if anchor.shape != (inst.n_gens,):
        raise ValueError(f"p_anchor needs {inst.n_gens} entries, got shape {anchor.shape}")
    sub = _period_instance(inst, t)
    base = build_outer_base(sub, variant)
    ix = base.index
    keep = np.flatnonzero([tag in NETWORK_TAGS for tag in base.row_tags])
    lb, ub = base.lb.copy(), base.ub.copy()
    lb[ix.x_ids], ub[ix.x_ids] = 0.0, 0.0
    lb[ix.p_bar], ub[ix.p_bar] = 0.0, 0.0
    for g, gen in enumerate(inst.generators):
        lb[ix.q[g]] = min(gen.q_min, 0.0)
        ub[ix.q[g]] = max(gen.q_max, 0.0)
    obj = base.obj.copy()
    obj[ix.x_ids] = 0.0
    spec = replace(base, lb=lb, ub=ub, obj=obj, A=base.A[keep], row_lo=base.row_lo[keep],
                   row_hi=base.row_hi[keep], row_tags=tuple(base.row_tags[i] for i in keep),
                   cones=nonlinear_cones(sub, ix), integer=frozenset())
    return spec.with_rows([({int(ix.p[g, 0]): 1.0}, float(a), float(a), "coupling")
                           for g, a in enumerate(anchor)])


def solve_time_block(inst: UcInstance, variant, t: int, p_anchor, backend=None,
                     conic: str | None = None) -> TimeBlockDual:
    spec = time_block_model(inst, variant, t, p_anchor)
    out = solve_continuous(spec, backend=backend, conic=conic)
    if out.status != OPTIMAL:
        raise BendersError(f"period {t}: subproblem {out.status} {out.message}".rstrip())
    rows = [i for i, tag in enumerate(spec.row_tags) if tag == "coupling"]
    return TimeBlockDual(t, float(out.objective), np.asarray(out.duals[rows], dtype=float),
                         np.asarray(p_anchor, dtype=float))


def benders_cut(dual: TimeBlockDual, index: VariableIndex | None = None, margin: float = 0.0,
                **meta) -> Cut:
    """psi_t >= psi* + pi.(p - p*), stored as pi.p - psi_t <= pi.p* - psi*.

    Without ``index`` the coefficients are keyed ``"psi"`` and ``("p", g)``.
    A positive ``margin`` loosens the cut by that amount.
    """
    t = dual.period
    rhs = float(dual.pi_star @ dual.p_anchor - dual.psi_star) + margin
    coeffs: dict = {("p", g): float(a) for g, a in enumerate(dual.pi_star)}
    coeffs["psi"] = -1.0
    cut = Cut(BENDERS, coeffs, rhs, key=(t,))
    if index is None:
        return cut
    if index.psi is None:
        raise ValueError("benders cuts need an epigraph index")
    ids = {("p", g): int(index.p[g, t]) for g in range(index.n_gens)}
    ids["psi"] = int(index.psi[t])
    return cut.relabel(ids, **meta)


def safety_margin(dual: TimeBlockDual, rel: float) -> float:
    """``rel`` times the magnitude of the cut's terms at its anchor."""
    return rel * float(abs(dual.psi_star) + np.abs(dual.pi_star * dual.p_anchor).sum())


def cut_value(dual: TimeBlockDual, p: Mapping[int, float] | Sequence[float]) -> float:
    """Right-hand side of the cut in its >= form evaluated at injections ``p``."""
    p = np.asarray(p, dtype=float)
    return float(dual.psi_star + dual.pi_star @ (p - dual.p_anchor))
