"""Alternating outer-inner loop.

Each iteration solves the cut-based MILP relaxation for a lower bound and a
commitment, solves the conic model at that commitment for an upper bound, and
adds supporting cuts at the relaxation point.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .backend import (INFEASIBLE, NUMERIC_ERROR, OPTIMAL, UNBOUNDED, SolveControls,
                      restrict_integrality, solve_continuous, solve_mixed)
from .benders import BendersError, benders_cut, safety_margin, solve_time_block
from .cuts import BENDERS, CAP, SOC, Cut, CutError, CutPool, line_capacity_cut, select_violated, soc_cut
from .formulation import (ModelSpec, Variant, VariableIndex, build_inner, build_outer_base,
                          cap_residuals, period_cost_coeffs, soc_residuals)
from .metrics import gap
from .model import CommitmentSchedule, UcInstance
from .trace import RunTrace, TraceRow

log = logging.getLogger(__name__)


class OiaError(RuntimeError):
    pass


@dataclass
class AlgoParams:
    eps: float = 1e-4
    eps_tol: float = 1e-5
    eps_par: float = 5e-6
    p_cut: float = 0.55
    mip_gap_init: float = 0.01
    solver_time_init: float = 200.0
    eps_lp: float = 0.05
    eps_ig: float = 0.01
    k_ig: int | None = None  # None: ceil(|G| / 4)
    max_iter: int = 100
    gap_shrink: float = 0.9
    gap_quarter: float = 4.0
    time_growth: float = 1.1
    time_budget: float = math.inf
    delta_tol: float = 1e-3  # accepted for completeness; unused
    literal_norm: bool = False
    force_on_stall: bool = True
    eps_tol_min: float = 1e-9  # stalls divide eps_tol by 10 down to this floor
    benders_margin: float = 1e-7  # relative slack absorbing conic solver error
    seed: int = 0
    threads: int = 1
    backend: str | None = None
    conic: str | None = None

    def __post_init__(self):
        positive = ("eps", "eps_tol", "eps_par", "p_cut", "mip_gap_init", "solver_time_init",
                    "eps_lp", "eps_ig", "max_iter", "gap_shrink", "gap_quarter", "time_growth",
                    "time_budget", "delta_tol")
        bad = [n for n in positive if not getattr(self, n) > 0]
        if self.k_ig is not None and self.k_ig < 1:
            bad.append("k_ig")
        if bad:
            raise ValueError(f"parameters must be positive: {', '.join(bad)}")
        if not self.eps < 1:
            raise ValueError("eps must be < 1")
        if not self.p_cut <= 1:
            raise ValueError("p_cut must lie in (0, 1]")

    def ig_width(self, n_gens: int) -> int:
        return self.k_ig if self.k_ig is not None else max(1, math.ceil(n_gens / 4))

    @property
    def mip_gap_floor(self) -> float:
        return self.eps / 10


@dataclass
class SolverState:
    """Everything that carries across stages and iterations."""

    pool: CutPool
    outer: ModelSpec
    plain: ModelSpec
    B: frozenset = frozenset()
    UB: float = math.inf
    LB: float = -math.inf
    incumbent: np.ndarray | None = None
    schedule: CommitmentSchedule | None = None
    trace: RunTrace = field(default_factory=RunTrace)
    mip_gap: float = 0.01
    solver_limit: float = 200.0
    started: float = field(default_factory=time.perf_counter)
    iterations: int = 0
    reason: str = ""
    events: list[str] = field(default_factory=list)
    warm_violations: list[float] = field(default_factory=list)
    lb_history: list[float] = field(default_factory=list)

    @classmethod
    def fresh(cls, inst: UcInstance, variant, params: AlgoParams, epigraph: bool = False) -> "SolverState":
        variant = Variant.parse(variant)
        plain = build_outer_base(inst, variant)
        outer = build_outer_base(inst, variant, epigraph=True) if epigraph else plain
        return cls(pool=CutPool(params.eps_par), outer=outer, plain=plain,
                   mip_gap=params.mip_gap_init, solver_limit=params.solver_time_init)

    @property
    def index(self) -> VariableIndex:
        return self.outer.index

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.started

    @property
    def gap(self) -> float:
        return gap(self.UB, self.LB)

    def raise_lb(self, bound: float) -> None:
        if bound > self.LB:
            self.LB = float(bound)
        self.lb_history.append(self.LB)

    def record(self, stage: str, status: str, mip_gap=None, solver_limit=None) -> None:
        self.iterations += 1
        self.trace.append(TraceRow(
            self.iterations, stage, self.elapsed, self.LB, self.UB, self.gap,
            self.pool.count(SOC), self.pool.count(CAP), self.pool.count(BENDERS),
            len(self.B), mip_gap, solver_limit, status))


def _decimal_product(a: float, b: float) -> float:
    if not (math.isfinite(a) and math.isfinite(b)):
        return a * b
    return float(Fraction(repr(float(a))) * Fraction(repr(float(b))))


def update_controls(mip_gap: float, solver_limit: float, ub: float, lb: float,
                    params: AlgoParams) -> tuple[float, float]:
    """Shrink the MIP gap toward a quarter of the current bound gap and grow the time limit.

    Products are taken exactly on the shortest decimal forms of the operands
    and rounded once, so 200 * 1.1 gives 220.0 and 0.9 * 0.01 gives 0.009.
    """
    t_new = _decimal_product(params.time_growth, solver_limit)
    if not (math.isfinite(ub) and ub > 0):
        return mip_gap, t_new
    shrunk = _decimal_product(params.gap_shrink, mip_gap)
    target = (ub - lb) / (params.gap_quarter * ub)
    return max(min(shrunk, target), params.mip_gap_floor), t_new


def active_capacity_keys(index: VariableIndex, inner_vals, s_max, eps_tol: float) -> set:
    """(line, direction, t) keys whose capacity residual is >= -eps_tol at the inner point."""
    return {k for k, r in cap_residuals(index, inner_vals, s_max).items() if r >= -eps_tol}


def soc_cuts_at(index: VariableIndex, vals, params: AlgoParams, iteration: int, stage: str) -> list[Cut]:
    v = np.asarray(vals, dtype=float)
    out = []
    for k, t in select_violated(soc_residuals(index, v), params.eps_tol, params.p_cut):
        n, m = index.line_ends[k]
        ids = {"c": int(index.c_line[k, t]), "s": int(index.s_line[k, t]),
               "cnn": int(index.c_bus[n, t]), "cmm": int(index.c_bus[m, t])}
        try:
            cut = soc_cut(v[ids["c"]], v[ids["s"]], v[ids["cnn"]], v[ids["cmm"]], params.literal_norm)
        except CutError:
            continue
        out.append(cut.relabel(ids, key=(k, t), iteration=iteration, stage=stage))
    return out


def cap_cuts_at(index: VariableIndex, vals, s_max, params: AlgoParams, iteration: int, stage: str,
                keys=None) -> list[Cut]:
    v = np.asarray(vals, dtype=float)
    res = cap_residuals(index, v, s_max)
    if keys is not None:
        res = {k: r for k, r in res.items() if k in keys}
    out = []
    for k, d, t in select_violated(res, params.eps_tol, params.p_cut):
        ids = {"p": int(index.p_flow[k, d, t]), "q": int(index.q_flow[k, d, t])}
        try:
            cut = line_capacity_cut(v[ids["p"]], v[ids["q"]], s_max[k])
        except CutError:
            continue
        out.append(cut.relabel(ids, key=(k, d, t), iteration=iteration, stage=stage))
    return out


def add_cuts(pool: CutPool, cuts, force: bool = False) -> int:
    return sum(pool.try_add(c, force) for c in cuts)


def epigraph_point(inst: UcInstance, outer: ModelSpec, plain_vals: np.ndarray,
                   pool: CutPool | None = None) -> np.ndarray:
    """Lift a plain-layout point into ``outer``'s layout (psi_t at its period cost).

    With ``pool``, each psi_t is raised to the least value its benders cuts
    allow. A conic solution that meets balance only to solver tolerance can
    otherwise sit a hair below a cut once the shedding penalty scales it up.
    """
    ix = outer.index
    if ix.psi is None:
        return np.asarray(plain_vals, dtype=float).copy()
    v = np.zeros(ix.n_vars)
    v[: plain_vals.size] = plain_vals
    for t in range(inst.horizon):
        v[ix.psi[t]] = sum(a * plain_vals[j] for j, a in period_cost_coeffs(inst, ix, t))
    for cut in pool.cuts[BENDERS] if pool is not None else ():
        j = int(ix.psi[cut.key[0]])
        a = cut.coeffs[j]
        rest = sum(c * v[i] for i, c in cut.coeffs.items() if i != j)
        v[j] = max(v[j], (cut.rhs - rest) / a)
    return v


def pool_violation(pool: CutPool, v: np.ndarray) -> float:
    return max((c.violation(v) for c in pool.all()), default=0.0)


def run_oia(state: SolverState, inst: UcInstance, variant, params: AlgoParams,
            benders: bool = False) -> SolverState:
    """Alternate MILP relaxations and fixed-commitment conic solves until the bounds meet."""
    variant = Variant.parse(variant)
    if benders and state.outer.index.psi is None:
        raise OiaError("benders cuts need a state built with epigraph=True")
    ix = state.index
    s_max = [ln.s_max for ln in inst.lines]
    state.B = frozenset(int(i) for i in ix.x_ids)
    warm = None
    if state.incumbent is not None:
        warm = epigraph_point(inst, state.outer, state.incumbent, state.pool)
    state.reason = "max_iter"
    base_params = params
    for it in range(1, base_params.max_iter + 1):
        remaining = params.time_budget - state.elapsed
        if remaining <= 0:
            state.reason = "time_budget"
            break
        if warm is not None:
            state.warm_violations.append(pool_violation(state.pool, warm))
        spec = restrict_integrality(state.outer.with_cuts(state.pool.all()), state.B)
        used_gap, used_limit = state.mip_gap, state.solver_limit
        ctl = SolveControls(mip_gap=used_gap, time_limit=min(used_limit, remaining), warm_start=warm,
                            threads=params.threads, seed=params.seed)
        out = solve_mixed(spec, ctl, backend=params.backend)
        if not out.has_solution:
            if out.status in (INFEASIBLE, UNBOUNDED, NUMERIC_ERROR):
                raise OiaError(f"outer model {out.status} at iteration {it}: {out.message}")
            state.events.append(f"iteration {it}: outer solve stopped without a solution ({out.status})")
            state.reason = "time_budget"
            break
        state.raise_lb(out.dual_bound)
        z = out.primal
        sched = ix.schedule_from(z)
        inner = solve_continuous(build_inner(inst, sched, variant, base=state.plain),
                                 backend=params.backend, conic=params.conic)
        cap_keys = None
        if inner.status == OPTIMAL:
            if inner.objective < state.UB:
                state.UB, state.incumbent, state.schedule = float(inner.objective), inner.primal, sched
            cap_keys = active_capacity_keys(ix, inner.primal, s_max, params.eps_tol)
        else:
            state.events.append(f"iteration {it}: inner solve {inner.status}; upper bound not updated")
        added = add_cuts(state.pool, soc_cuts_at(ix, z, params, it, "oia"))
        added += add_cuts(state.pool, cap_cuts_at(ix, z, s_max, params, it, "oia", cap_keys))
        if benders and inner.status == OPTIMAL:
            for t in range(inst.horizon):
                try:
                    dual = solve_time_block(inst, variant, t, inner.primal[ix.p[:, t]],
                                            backend=params.backend, conic=params.conic)
                except BendersError as exc:
                    state.events.append(f"iteration {it}: {exc}")
                    continue
                margin = safety_margin(dual, params.benders_margin)
                added += state.pool.try_add(benders_cut(dual, ix, margin, iteration=it, stage="oia"))
        converged = state.gap <= params.eps
        if not added and cap_keys is not None and not converged:
            # active set exhausted while the bounds are still apart
            added = add_cuts(state.pool, cap_cuts_at(ix, z, s_max, params, it, "oia"))
            if added:
                state.events.append(f"iteration {it}: capacity cuts taken outside the active set")
        if not added and not converged and params.force_on_stall:
            # every violated cut was filtered as near-parallel; admit them anyway
            added = add_cuts(state.pool, soc_cuts_at(ix, z, params, it, "oia")
                             + cap_cuts_at(ix, z, s_max, params, it, "oia"), force=True)
            if added:
                state.events.append(f"iteration {it}: {added} near-parallel cuts admitted to break a stall")
        if state.LB > state.UB + 1e-6 * max(1.0, abs(state.UB)):
            state.events.append(f"iteration {it}: LB {state.LB!r} above UB {state.UB!r}")
        state.record("oia", out.status, used_gap, used_limit)
        if converged:
            state.reason = "converged"
            break
        if not added and (out.status == OPTIMAL or used_gap <= params.mip_gap_floor):
            if params.eps_tol <= params.eps_tol_min:
                state.reason = "stalled"
                break
            # nothing is eps_tol-violated yet the bounds are apart: look closer
            params = replace(params, eps_tol=max(params.eps_tol / 10, params.eps_tol_min))
            state.events.append(f"iteration {it}: violation tolerance lowered to {params.eps_tol:g}")
        state.mip_gap, state.solver_limit = update_controls(state.mip_gap, state.solver_limit,
                                                            state.UB, state.LB, params)
        if state.incumbent is not None:
            warm = epigraph_point(inst, state.outer, state.incumbent, state.pool)
    return state
