"""Uniform solve contract over open-source engines.

``highs`` (default): HiGHS for LP/MILP, Clarabel for conic models.
``reference``: a small best-bound branch-and-bound over SciPy LP relaxations,
and CVXOPT for conic models. Meant for tiny models and cross-checks.

Row duals are reported as sensitivities d(optimal value)/d(row bound) of the
active side, so for an equality row ``a.v = b`` the dual pi satisfies
obj(b + db) ~ obj(b) + pi*db.
"""

from __future__ import annotations

import heapq
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .formulation import ModelSpec

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
GAP_REACHED = "gap_reached"
TIME_LIMIT = "time_limit"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERIC_ERROR = "numeric_error"

FEAS_TOL = 1e-7


@dataclass
class SolveControls:
    mip_gap: float = 0.01
    time_limit: float = 200.0
    warm_start: np.ndarray | None = None
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mip_gap < 0:
            raise ValueError("mip_gap must be >= 0")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be > 0")


@dataclass
class SolveOutcome:
    status: str
    primal: np.ndarray | None = None
    objective: float = math.inf
    dual_bound: float = -math.inf
    duals: np.ndarray | None = None
    message: str = ""
    warnings: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.primal is not None and self.status in (OPTIMAL, GAP_REACHED, TIME_LIMIT)


def restrict_integrality(spec: ModelSpec, B: Iterable[int]) -> ModelSpec:
    """Return ``spec`` with integrality required on exactly the ids in ``B``."""
    B = frozenset(int(i) for i in B)
    allowed = set(int(i) for i in spec.index.x_ids)
    if not B <= allowed:
        raise ValueError(f"integrality set contains non-commitment ids: {sorted(B - allowed)[:5]}")
    return replace(spec, integer=B)


def point_violation(spec: ModelSpec, v: np.ndarray, integral: bool = True) -> float:
    """Largest violation of bounds, linear rows and (optionally) integrality."""
    worst = 0.0
    worst = max(worst, float(np.max(spec.lb - v, initial=0.0)), float(np.max(v - spec.ub, initial=0.0)))
    if spec.n_rows:
        worst = max(worst, float(spec.row_violations(v).max()))
    if integral and spec.integer:
        ids = np.fromiter(spec.integer, dtype=int)
        worst = max(worst, float(np.max(np.abs(v[ids] - np.rint(v[ids])))))
    return worst


# ---------------------------------------------------------------------------
# HiGHS

def _highs_model(spec: ModelSpec, integral: bool):
    import highspy

    lp = highspy.HighsLp()
    lp.num_col_ = spec.n_vars
    lp.num_row_ = spec.n_rows
    lp.col_cost_ = spec.obj.astype(float)
    lp.col_lower_ = spec.lb.astype(float)
    lp.col_upper_ = spec.ub.astype(float)
    lp.row_lower_ = spec.row_lo.astype(float)
    lp.row_upper_ = spec.row_hi.astype(float)
    lp.offset_ = float(spec.obj_offset)
    A = spec.A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    if integral and spec.integer:
        kinds = [highspy.HighsVarType.kContinuous] * spec.n_vars
        for i in spec.integer:
            kinds[i] = highspy.HighsVarType.kInteger
        lp.integrality_ = kinds
    return lp


def _highs(threads: int = 1, seed: int = 0):
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", int(seed))
    h.setOptionValue("threads", max(1, int(threads)))
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    h.setOptionValue("dual_feasibility_tolerance", 1e-9)
    return h


def _highs_lp(spec: ModelSpec) -> SolveOutcome:
    import highspy

    t0 = time.perf_counter()
    h = _highs()
    h.passModel(_highs_model(spec, integral=False))
    h.run()
    st = h.getModelStatus()
    dt = time.perf_counter() - t0
    if st == highspy.HighsModelStatus.kOptimal:
        sol = h.getSolution()
        obj = h.getInfo().objective_function_value
        duals = np.asarray(sol.row_dual, dtype=float)
        return SolveOutcome(OPTIMAL, np.asarray(sol.col_value, dtype=float), obj, obj, duals, seconds=dt)
    return SolveOutcome(_highs_status(st), message=h.modelStatusToString(st), seconds=dt)


def _highs_status(st) -> str:
    import highspy

    S = highspy.HighsModelStatus
    if st == S.kInfeasible:
        return INFEASIBLE
    if st in (S.kUnbounded, S.kUnboundedOrInfeasible):
        return UNBOUNDED
    if st == S.kTimeLimit:
        return TIME_LIMIT
    return NUMERIC_ERROR


def _highs_milp(spec: ModelSpec, ctl: SolveControls, warm: np.ndarray | None) -> SolveOutcome:
    import highspy

    t0 = time.perf_counter()
    h = _highs(ctl.threads, ctl.seed)
    h.setOptionValue("mip_rel_gap", float(ctl.mip_gap))
    h.setOptionValue("mip_abs_gap", 0.0)
    h.setOptionValue("time_limit", float(ctl.time_limit))
    h.setOptionValue("mip_feasibility_tolerance", 1e-9)
    h.passModel(_highs_model(spec, integral=True))
    if warm is not None:
        sol = highspy.HighsSolution()
        sol.col_value = list(map(float, warm))
        sol.value_valid = True
        h.setSolution(sol)
    h.run()
    st = h.getModelStatus()
    info = h.getInfo()
    dt = time.perf_counter() - t0
    has_sol = info.primal_solution_status == 2
    primal = np.asarray(h.getSolution().col_value, dtype=float) if has_sol else None
    obj = info.objective_function_value if has_sol else math.inf
    bound = info.mip_dual_bound
    if st == highspy.HighsModelStatus.kOptimal:
        status = OPTIMAL if info.mip_gap <= 1e-9 else GAP_REACHED
        return SolveOutcome(status, primal, obj, min(bound, obj), seconds=dt)
    if st == highspy.HighsModelStatus.kTimeLimit:
        return SolveOutcome(TIME_LIMIT, primal, obj, min(bound, obj) if np.isfinite(bound) else -math.inf,
                            message="time limit", seconds=dt)
    return SolveOutcome(_highs_status(st), message=h.modelStatusToString(st), seconds=dt)


# ---------------------------------------------------------------------------
# Reference branch and bound

def _scipy_lp(spec: ModelSpec, lb: np.ndarray, ub: np.ndarray):
    from scipy.optimize import linprog

    lo, hi, A = spec.row_lo, spec.row_hi, spec.A
    eq = lo == hi
    le = ~eq & np.isfinite(hi)
    ge = ~eq & np.isfinite(lo)
    A_ub = sp.vstack([A[le], -A[ge]], format="csr")
    b_ub = np.concatenate([hi[le], -lo[ge]])
    bounds = list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)))
    res = linprog(spec.obj, A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
                  A_eq=A[eq] if eq.any() else None, b_eq=lo[eq] if eq.any() else None,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return res.status, None, math.inf, None
    duals = np.zeros(spec.n_rows)
    if eq.any():
        duals[np.flatnonzero(eq)] = res.eqlin.marginals
    if le.any():
        duals[np.flatnonzero(le)] += res.ineqlin.marginals[: le.sum()]
    if ge.any():
        duals[np.flatnonzero(ge)] -= res.ineqlin.marginals[le.sum():]
    return 0, res.x, float(res.fun + spec.obj_offset), duals


def _reference_lp(spec: ModelSpec) -> SolveOutcome:
    t0 = time.perf_counter()
    code, x, obj, duals = _scipy_lp(spec, spec.lb, spec.ub)
    dt = time.perf_counter() - t0
    if code == 0:
        return SolveOutcome(OPTIMAL, x, obj, obj, duals, seconds=dt)
    return SolveOutcome({2: INFEASIBLE, 3: UNBOUNDED}.get(code, NUMERIC_ERROR), seconds=dt)


def _reference_milp(spec: ModelSpec, ctl: SolveControls, warm: np.ndarray | None) -> SolveOutcome:
    t0 = time.perf_counter()
    ints = sorted(spec.integer)
    best_x, best = (warm.copy(), spec.objective_value(warm)) if warm is not None else (None, math.inf)
    code, x, obj, _ = _scipy_lp(spec, spec.lb, spec.ub)
    if code == 2:
        return SolveOutcome(INFEASIBLE, seconds=time.perf_counter() - t0)
    if code != 0:
        return SolveOutcome(UNBOUNDED if code == 3 else NUMERIC_ERROR, seconds=time.perf_counter() - t0)
    heap = [(obj, 0, spec.lb.copy(), spec.ub.copy(), x)]
    tick = 1
    status = OPTIMAL
    while heap:
        bound = heap[0][0]
        if best < math.inf and best - bound <= ctl.mip_gap * abs(best) + 1e-12:
            break
        if time.perf_counter() - t0 > ctl.time_limit:
            status = TIME_LIMIT
            break
        obj, _, lb, ub, x = heapq.heappop(heap)
        if obj >= best:
            continue
        frac = [(abs(x[i] - round(x[i])), i) for i in ints if abs(x[i] - round(x[i])) > 1e-7]
        if not frac:
            best, best_x = obj, x.copy()
            best_x[ints] = np.rint(best_x[ints])
            continue
        _, i = max(frac)
        for lo_i, hi_i in ((lb[i], math.floor(x[i])), (math.ceil(x[i]), ub[i])):
            nlb, nub = lb.copy(), ub.copy()
            nlb[i], nub[i] = lo_i, hi_i
            c, xx, oo, _ = _scipy_lp(spec, nlb, nub)
            if c == 0 and oo < best:
                heapq.heappush(heap, (oo, tick, nlb, nub, xx))
                tick += 1
    dt = time.perf_counter() - t0
    bound = min([h[0] for h in heap] + [best])
    if best_x is None:
        return SolveOutcome(INFEASIBLE if status == OPTIMAL else TIME_LIMIT, dual_bound=bound, seconds=dt)
    if status == OPTIMAL and best - bound > 1e-9 * max(1.0, abs(best)):
        status = GAP_REACHED
    return SolveOutcome(status, best_x, best, bound, seconds=dt)


# ---------------------------------------------------------------------------
# Conic standard form shared by Clarabel and CVXOPT

@dataclass
class _ConicForm:
    c: np.ndarray
    offset: float
    free: np.ndarray
    fixed: np.ndarray
    fixed_vals: np.ndarray
    Aeq: sp.csr_matrix
    beq: np.ndarray
    eq_rows: np.ndarray  # spec row id per equality row
    G: sp.csr_matrix  # nonnegative block, then SOC blocks
    h: np.ndarray
    n_nonneg: int
    soc_dims: list[int]
    ineq_rows: np.ndarray  # spec row id per nonnegative row, -1 for bounds
    ineq_sign: np.ndarray  # +1 for an upper side, -1 for a lower side
    n_spec: int


def _conic_form(spec: ModelSpec) -> _ConicForm | str:
    n = spec.n_vars
    fixed_mask = spec.lb == spec.ub
    free = np.flatnonzero(~fixed_mask)
    fixed = np.flatnonzero(fixed_mask)
    vfix = spec.lb[fixed]
    col = -np.ones(n, dtype=int)
    col[free] = np.arange(free.size)
    A = spec.A.tocsc()
    Af = A[:, free].tocsr()
    shift = A[:, fixed] @ vfix if fixed.size else np.zeros(spec.n_rows)
    lo, hi = spec.row_lo - shift, spec.row_hi - shift
    nnz_row = np.diff(Af.indptr) > 0
    for i in np.flatnonzero(~nnz_row):
        if lo[i] > FEAS_TOL * (1 + abs(lo[i])) or hi[i] < -FEAS_TOL * (1 + abs(hi[i])):
            return f"row {i} ({spec.row_tags[i]}) infeasible after fixing variables"
    eq = (lo == hi) & nnz_row
    eq_rows = np.flatnonzero(eq)
    g_blocks, h_parts, rows, signs = [], [], [], []
    up = np.flatnonzero(~eq & nnz_row & np.isfinite(hi))
    dn = np.flatnonzero(~eq & nnz_row & np.isfinite(lo))
    g_blocks += [Af[up], -Af[dn]]
    h_parts += [hi[up], -lo[dn]]
    rows += [up, dn]
    signs += [np.ones(up.size), -np.ones(dn.size)]
    m = free.size
    lbf, ubf = spec.lb[free], spec.ub[free]
    ui, li = np.flatnonzero(np.isfinite(ubf)), np.flatnonzero(np.isfinite(lbf))
    g_blocks += [sp.csr_matrix((np.ones(ui.size), (np.arange(ui.size), ui)), shape=(ui.size, m)),
                 sp.csr_matrix((-np.ones(li.size), (np.arange(li.size), li)), shape=(li.size, m))]
    h_parts += [ubf[ui], -lbf[li]]
    rows += [-np.ones(ui.size + li.size, dtype=int)]
    signs += [np.zeros(ui.size + li.size)]
    n_nonneg = sum(b.shape[0] for b in g_blocks)
    soc_dims = []
    val = np.zeros(n)
    val[fixed] = vfix
    for cone in spec.cones:
        # each cone row is written as h_k - G_k x with the fixed part folded into h
        if cone.kind == "rsoc":
            a, b, cc, d = cone.ids
            exprs = [{cc: 1.0, d: 1.0}, {cc: 1.0, d: -1.0}, {a: 2.0}, {b: 2.0}]
        else:
            a, b = cone.ids
            exprs = [{}, {a: 1.0}, {b: 1.0}]
        Gk = np.zeros((len(exprs), m))
        hk = np.zeros(len(exprs))
        if cone.kind == "disk":
            hk[0] = cone.radius
        for r, expr in enumerate(exprs):
            for j, coef in expr.items():
                if col[j] >= 0:
                    Gk[r, col[j]] -= coef
                else:
                    hk[r] += coef * val[j]
        g_blocks.append(sp.csr_matrix(Gk))
        h_parts.append(hk)
        soc_dims.append(len(exprs))
    G = sp.vstack(g_blocks, format="csr") if g_blocks else sp.csr_matrix((0, m))
    return _ConicForm(
        c=spec.obj[free].astype(float), offset=float(spec.obj_offset + spec.obj[fixed] @ vfix),
        free=free, fixed=fixed, fixed_vals=vfix, Aeq=Af[eq_rows], beq=lo[eq_rows], eq_rows=eq_rows,
        G=G, h=np.concatenate(h_parts) if h_parts else np.zeros(0), n_nonneg=n_nonneg,
        soc_dims=soc_dims, ineq_rows=np.concatenate(rows), ineq_sign=np.concatenate(signs), n_spec=n,
    )


def _unpack(form: _ConicForm, spec: ModelSpec, x, y_eq, z) -> tuple[np.ndarray, np.ndarray]:
    v = np.zeros(form.n_spec)
    v[form.free] = x
    v[form.fixed] = form.fixed_vals
    duals = np.zeros(spec.n_rows)
    duals[form.eq_rows] = -np.asarray(y_eq)
    zn = np.asarray(z[: form.n_nonneg])
    mask = form.ineq_rows >= 0
    np.add.at(duals, form.ineq_rows[mask], -form.ineq_sign[mask] * zn[mask])
    return v, duals


def _clarabel(spec: ModelSpec) -> SolveOutcome:
    import clarabel

    t0 = time.perf_counter()
    form = _conic_form(spec)
    if isinstance(form, str):
        return SolveOutcome(INFEASIBLE, message=form)
    m = form.free.size
    A = sp.vstack([form.Aeq, form.G], format="csc")
    b = np.concatenate([form.beq, form.h])
    cones = []
    if form.Aeq.shape[0]:
        cones.append(clarabel.ZeroConeT(form.Aeq.shape[0]))
    if form.n_nonneg:
        cones.append(clarabel.NonnegativeConeT(form.n_nonneg))
    cones += [clarabel.SecondOrderConeT(d) for d in form.soc_dims]
    # light regularisation first; it reaches full accuracy on the poorly scaled
    # penalty models where the default stops at "almost solved"
    sol = name = None
    for reg in (1e-10, 1e-8):
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.tol_gap_abs = 1e-10
        st.tol_gap_rel = 1e-10
        st.tol_feas = 1e-10
        st.tol_ktratio = 1e-8
        st.max_iter = 400
        st.static_regularization_constant = reg
        attempt = clarabel.DefaultSolver(sp.csc_matrix((m, m)), form.c, A, b, cones, st).solve()
        if sol is None or str(attempt.status) == "Solved":
            sol, name = attempt, str(attempt.status)
        if name == "Solved":
            break
    dt = time.perf_counter() - t0
    if name in ("Solved", "AlmostSolved"):
        meq = form.Aeq.shape[0]
        z = np.asarray(sol.z)
        v, duals = _unpack(form, spec, np.asarray(sol.x), z[:meq], z[meq:])
        obj = float(form.c @ np.asarray(sol.x) + form.offset)
        warn = [] if name == "Solved" else ["clarabel: almost solved"]
        return SolveOutcome(OPTIMAL, v, obj, obj, duals, warnings=warn, seconds=dt)
    if "PrimalInfeasible" in name:
        return SolveOutcome(INFEASIBLE, message=name, seconds=dt)
    if "DualInfeasible" in name:
        return SolveOutcome(UNBOUNDED, message=name, seconds=dt)
    return SolveOutcome(NUMERIC_ERROR, message=name, seconds=dt)


def _cvxopt(spec: ModelSpec) -> SolveOutcome:
    import cvxopt
    from cvxopt import solvers

    t0 = time.perf_counter()
    form = _conic_form(spec)
    if isinstance(form, str):
        return SolveOutcome(INFEASIBLE, message=form)

    def M(a):
        a = sp.coo_matrix(a)
        return cvxopt.spmatrix(a.data.tolist(), a.row.tolist(), a.col.tolist(), size=a.shape)

    kw = {}
    if form.Aeq.shape[0]:
        kw = dict(A=M(form.Aeq), b=cvxopt.matrix(form.beq.astype(float)))
    status, res = "unknown", None
    dims = {"l": form.n_nonneg, "q": form.soc_dims, "s": []}
    for tol in (1e-10, 1e-9, 1e-8):
        opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol, "maxiters": 200}
        try:
            res = solvers.conelp(cvxopt.matrix(form.c), M(form.G), cvxopt.matrix(form.h.astype(float)),
                                 dims=dims, options=opts, **kw)
        except (ValueError, ArithmeticError) as exc:
            status, res = f"error: {exc}", None
            continue
        status = res["status"]
        if status in ("optimal", "primal infeasible", "dual infeasible"):
            break
    dt = time.perf_counter() - t0
    if status == "primal infeasible":
        return SolveOutcome(INFEASIBLE, message=status, seconds=dt)
    if status == "dual infeasible":
        return SolveOutcome(UNBOUNDED, message=status, seconds=dt)
    if status != "optimal":
        return SolveOutcome(NUMERIC_ERROR, message=status, seconds=dt)
    x = np.asarray(res["x"]).ravel()
    y = np.asarray(res["y"]).ravel() if form.Aeq.shape[0] else np.zeros(0)
    v, duals = _unpack(form, spec, x, y, np.asarray(res["z"]).ravel())
    obj = float(form.c @ x + form.offset)
    return SolveOutcome(OPTIMAL, v, obj, obj, duals, seconds=dt)


CONIC_ENGINES = {"clarabel": _clarabel, "cvxopt": _cvxopt}


@dataclass(frozen=True)
class Backend:
    name: str
    lp: callable
    milp: callable
    conic: callable


BACKENDS = {
    "highs": Backend("highs", _highs_lp, _highs_milp, _clarabel),
    "reference": Backend("reference", _reference_lp, _reference_milp, _cvxopt),
}


def get_backend(name: str | None = None) -> Backend:
    name = name or os.environ.get("PIOIA_BACKEND") or "highs"
    try:
        return BACKENDS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None


def solve_continuous(spec: ModelSpec, backend: str | Backend | None = None, relax: bool = False,
                     conic: str | None = None) -> SolveOutcome:
    """Solve an LP or SOCP. Integrality must be empty unless ``relax`` is set."""
    if spec.integer and not relax:
        raise ValueError("model has integer variables; pass relax=True to drop them")
    be = backend if isinstance(backend, Backend) else get_backend(backend)
    if spec.cones:
        engine = CONIC_ENGINES[conic] if conic else be.conic
        return engine(spec)
    return be.lp(replace(spec, integer=frozenset()))


def solve_mixed(spec: ModelSpec, controls: SolveControls | None = None,
                backend: str | Backend | None = None) -> SolveOutcome:
    """Solve a MILP to the relative gap and time limit in ``controls``."""
    if spec.cones:
        raise ValueError("mixed-integer solves take outer (cone-free) models only")
    ctl = controls or SolveControls()
    be = backend if isinstance(backend, Backend) else get_backend(backend)
    warm = None
    notes = []
    if ctl.warm_start is not None:
        w = np.asarray(ctl.warm_start, dtype=float).copy()
        if w.shape != (spec.n_vars,):
            notes.append("warm start has wrong length; solving cold")
        else:
            ids = np.fromiter(spec.integer, dtype=int) if spec.integer else np.zeros(0, dtype=int)
            w[ids] = np.rint(w[ids])
            viol = point_violation(spec, w)
            if viol > 1e-6:
                notes.append(f"warm start infeasible (max violation {viol:.2e}); solving cold")
            else:
                warm = w
    for n in notes:
        log.warning(n)
    if not spec.integer:
        out = be.lp(spec)
    else:
        out = be.milp(spec, ctl, warm)
    out.warnings = notes + out.warnings
    if warm is not None and out.has_solution is False and out.status == TIME_LIMIT:
        out.primal, out.objective = warm, spec.objective_value(warm)
    if warm is not None and out.primal is not None:
        wobj = spec.objective_value(warm)
        if wobj < out.objective:
            out.primal, out.objective = warm, wobj
    return out
