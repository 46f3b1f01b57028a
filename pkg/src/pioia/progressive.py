"""Staged integrality: LP relaxation rounds, partial-integrality rounds picked by
fractionalness score, then the full outer-inner loop."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .backend import INFEASIBLE, OPTIMAL, UNBOUNDED, SolveControls, point_violation, \
    restrict_integrality, solve_continuous, solve_mixed
from .cuts import CutPool
from .formulation import Variant
from .model import UcInstance
from .oia import AlgoParams, OiaError, SolverState, add_cuts, run_oia, soc_cuts_at


class Method(str, enum.Enum):
    M1 = "m1"  # outer-inner loop only
    M2 = "m2"  # LP stage, then the loop
    M3 = "m3"  # LP and IG stages, then the loop
    M4 = "m4"  # M3 plus time-block Benders cuts

    @classmethod
    def parse(cls, v) -> "Method":
        return v if isinstance(v, cls) else cls(str(v).lower())


@dataclass
class StageResult:
    pool: CutPool
    x_relaxed: np.ndarray
    LB: float
    iterations: int
    reason: str
    B: frozenset = frozenset()


def _improvement(lb: float, lb_old: float) -> float:
    return (lb - lb_old) / max(abs(lb), 1.0)


def _u_values(state: SolverState, vals: np.ndarray) -> np.ndarray:
    return np.asarray(vals, dtype=float)[state.index.u]


def run_lp_stage(inst: UcInstance, variant, params: AlgoParams, state: SolverState | None = None) -> StageResult:
    """Tighten the LP relaxation with cone cuts until the bound stops improving."""
    state = state or SolverState.fresh(inst, variant, params)
    ix = state.index

    def solve():
        out = solve_continuous(state.outer.with_cuts(state.pool.all()), backend=params.backend, relax=True)
        if out.status != OPTIMAL:
            raise OiaError(f"LP relaxation {out.status}: {out.message}")
        state.raise_lb(out.objective)
        state.record("lp", out.status)
        return out

    out = solve()
    lb, lb_old = out.objective, 0.0
    iters, reason = 1, "max_iter"
    while _improvement(lb, lb_old) > params.eps_lp:
        if iters >= params.max_iter or state.elapsed >= params.time_budget:
            reason = "max_iter"
            break
        if not add_cuts(state.pool, soc_cuts_at(ix, out.primal, params, iters, "lp")):
            reason = "improvement_stalled"
            break
        lb_old = lb
        out = solve()
        lb = out.objective
        iters += 1
    else:
        reason = "improvement_stalled"
    return StageResult(state.pool, _u_values(state, out.primal), lb, iters, reason, state.B)


def generator_scores(u_relaxed, inst: UcInstance | None = None) -> np.ndarray:
    """score_g = sum_t min(u_gt, 1 - u_gt) for a (G, T) array of relaxed statuses."""
    u = np.atleast_2d(np.asarray(u_relaxed, dtype=float))
    if inst is not None and u.shape != (inst.n_gens, inst.horizon):
        raise ValueError(f"expected u of shape {(inst.n_gens, inst.horizon)}, got {u.shape}")
    # correctly rounded sums, so the result does not depend on summation order
    return np.array([math.fsum(row) for row in np.minimum(u, 1.0 - u)])


def pick_generators(scores, already: set[int], k: int) -> list[int]:
    """Up to k generators outside ``already``, highest score first, ties by id."""
    order = sorted((g for g in range(len(scores)) if g not in already), key=lambda g: (-scores[g], g))
    return order[:k]


def run_ig_stage(inst: UcInstance, variant, params: AlgoParams, prior: StageResult,
                 state: SolverState | None = None) -> StageResult:
    """Make the most fractional generators binary a few at a time."""
    state = state or SolverState.fresh(inst, variant, params)
    state.pool = prior.pool
    ix = state.index
    k = params.ig_width(inst.n_gens)
    all_x = frozenset(int(i) for i in ix.x_ids)
    chosen: set[int] = set()
    u_rel, lb, lb_old = prior.x_relaxed, prior.LB, 0.0
    warm, iters, reason = None, 0, "max_iter"
    while True:
        if state.B == all_x:
            reason = "all_binary"
            break
        if _improvement(lb, lb_old) <= params.eps_ig:
            reason = "improvement_stalled"
            break
        if iters >= params.max_iter or state.elapsed >= params.time_budget:
            reason = "max_iter"
            break
        picks = pick_generators(generator_scores(u_rel, inst), chosen, k)
        chosen.update(picks)
        state.B = state.B | frozenset(i for g in picks for i in ix.generator_x_ids(g))
        spec = restrict_integrality(state.outer.with_cuts(state.pool.all()), state.B)
        if warm is not None and point_violation(spec, _rounded(warm, state.B)) > 1e-6:
            warm = None
        ctl = SolveControls(mip_gap=params.mip_gap_init,
                            time_limit=min(params.solver_time_init, params.time_budget - state.elapsed),
                            warm_start=warm, threads=params.threads, seed=params.seed)
        out = solve_mixed(spec, ctl, backend=params.backend)
        iters += 1
        if not out.has_solution:
            if out.status in (INFEASIBLE, UNBOUNDED):
                raise OiaError(f"partial MILP {out.status}: {out.message}")
            state.record("ig", out.status, params.mip_gap_init, params.solver_time_init)
            reason = "max_iter"
            break
        lb_old = lb
        state.raise_lb(out.dual_bound)
        lb = state.LB
        add_cuts(state.pool, soc_cuts_at(ix, out.primal, params, iters, "ig"))
        state.record("ig", out.status, params.mip_gap_init, params.solver_time_init)
        u_rel, warm = _u_values(state, out.primal), out.primal
    return StageResult(state.pool, u_rel, lb, iters, reason, state.B)


def _rounded(v: np.ndarray, ids) -> np.ndarray:
    w = np.asarray(v, dtype=float).copy()
    idx = np.fromiter(ids, dtype=int)
    w[idx] = np.rint(w[idx])
    return w


def run_pioia(inst: UcInstance, variant=Variant.F2, params: AlgoParams | None = None,
              method=Method.M4) -> SolverState:
    """Run the method ladder: M1 loop only, M2 adds the LP stage, M3 the IG
    stage, M4 the Benders cuts on the epigraph model."""
    params = params or AlgoParams()
    method, variant = Method.parse(method), Variant.parse(variant)
    benders = method is Method.M4
    if benders and variant is Variant.F1:
        raise OiaError("method m4 needs slack variables for its subproblems; use variant f2 or f3")
    state = SolverState.fresh(inst, variant, params, epigraph=benders)
    if method is not Method.M1:
        lp = run_lp_stage(inst, variant, params, state)
        state.events.append(f"lp stage: {lp.iterations} solves, {lp.reason}")
        if method in (Method.M3, Method.M4):
            ig = run_ig_stage(inst, variant, params, lp, state)
            state.events.append(f"ig stage: {ig.iterations} solves, {ig.reason}")
    return run_oia(state, inst, variant, params, benders=benders)


def exit_code(state: SolverState) -> int:
    if state.reason == "converged":
        return 0
    return 2 if state.incumbent is not None else 1

