"""Solver-neutral models of the SOC-relaxed network-constrained UC.

The same column layout is shared by every model built from one instance:
commitment block x = (u, y, z), dispatch block (p, p_bar, q), network block
(line c/s, directed flows, bus c_nn, slacks) and, in epigraph mode, one
cost variable psi_t per period.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .model import CommitmentSchedule, UcInstance, commitment_violations, validate_instance

INF = np.inf


class Variant(str, enum.Enum):
    """Slack handling: F1 none, F2 shedding only, F3 shedding and over-generation."""

    F1 = "f1"
    F2 = "f2"
    F3 = "f3"

    @classmethod
    def parse(cls, v) -> "Variant":
        return v if isinstance(v, cls) else cls(str(v).lower())


class FormulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VariableIndex:
    """Bijection between semantic coordinates and column ids.

    Arrays hold ids. ``c_line``/``s_line`` are per unordered line; the reverse
    direction reuses the same ids with c_mn = c_nm and s_mn = -s_nm.
    ``p_flow``/``q_flow`` have shape (n_lines, 2, T) with direction 0 = from->to.
    """

    n_gens: int
    n_buses: int
    n_lines: int
    horizon: int
    u: np.ndarray
    y: np.ndarray
    z: np.ndarray
    p: np.ndarray
    p_bar: np.ndarray
    q: np.ndarray
    c_line: np.ndarray
    s_line: np.ndarray
    p_flow: np.ndarray
    q_flow: np.ndarray
    c_bus: np.ndarray
    p_unserved: np.ndarray
    q_unserved: np.ndarray
    p_over: np.ndarray
    q_over: np.ndarray
    psi: np.ndarray | None
    n_vars: int
    line_ends: tuple[tuple[int, int], ...]

    @classmethod
    def build(cls, inst: UcInstance, epigraph: bool = False) -> "VariableIndex":
        G, N, E, T = inst.n_gens, inst.n_buses, len(inst.lines), inst.horizon
        counter = [0]

        def take(*shape):
            size = int(np.prod(shape))
            ids = np.arange(counter[0], counter[0] + size).reshape(shape)
            counter[0] += size
            ids.flags.writeable = False
            return ids

        kw = dict(u=take(G, T), y=take(G, T), z=take(G, T),
                  p=take(G, T), p_bar=take(G, T), q=take(G, T),
                  c_line=take(E, T), s_line=take(E, T),
                  p_flow=take(E, 2, T), q_flow=take(E, 2, T),
                  c_bus=take(N, T),
                  p_unserved=take(N, T), q_unserved=take(N, T),
                  p_over=take(N, T), q_over=take(N, T))
        kw["psi"] = take(T) if epigraph else None
        ends = tuple(inst.line_ends(k) for k in range(E))
        return cls(G, N, E, T, n_vars=counter[0], line_ends=ends, **kw)

    @property
    def x_ids(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.y.ravel(), self.z.ravel()])

    @property
    def n_x(self) -> int:
        return 3 * self.n_gens * self.horizon

    def generator_x_ids(self, g: int) -> list[int]:
        return sorted(int(i) for i in np.concatenate([self.u[g], self.y[g], self.z[g]]))

    def schedule_from(self, vals: np.ndarray) -> CommitmentSchedule:
        r = lambda a: np.rint(np.asarray(vals)[a]).astype(int)  # noqa: E731
        return CommitmentSchedule(u=r(self.u), y=r(self.y), z=r(self.z))


@dataclass(frozen=True)
class Cone:
    """Quadratic constraint kept out of outer models.

    ``rsoc``: ids (a, b, c, d) with a^2 + b^2 <= c*d, c, d >= 0.
    ``disk``: ids (a, b) with a^2 + b^2 <= radius^2.
    """

    kind: str
    ids: tuple[int, ...]
    radius: float = 0.0
    key: tuple = ()


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """min obj.v + obj_offset  s.t.  row_lo <= A v <= row_hi, lb <= v <= ub, cones,
    v_i integral for i in ``integer``."""

    index: VariableIndex
    lb: np.ndarray
    ub: np.ndarray
    obj: np.ndarray
    obj_offset: float
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    row_tags: tuple[str, ...]
    cones: tuple[Cone, ...] = ()
    integer: frozenset = field(default_factory=frozenset)

    @property
    def n_vars(self) -> int:
        return self.lb.size

    @property
    def n_rows(self) -> int:
        return self.row_lo.size

    def count_rows(self, prefix: str) -> int:
        return sum(1 for t in self.row_tags if t.startswith(prefix))

    def with_rows(self, rows: Sequence[tuple[Mapping[int, float], float, float, str]]) -> "ModelSpec":
        """Append rows given as (coeffs, lo, hi, tag)."""
        if not rows:
            return self
        r, c, v = [], [], []
        for i, (coeffs, _, _, _) in enumerate(rows):
            for j, a in coeffs.items():
                r.append(i)
                c.append(int(j))
                v.append(float(a))
        extra = sp.csr_matrix((v, (r, c)), shape=(len(rows), self.n_vars))
        return replace(
            self,
            A=sp.vstack([self.A, extra], format="csr"),
            row_lo=np.concatenate([self.row_lo, [lo for _, lo, _, _ in rows]]),
            row_hi=np.concatenate([self.row_hi, [hi for _, _, hi, _ in rows]]),
            row_tags=self.row_tags + tuple(tag for *_, tag in rows),
        )

    def with_cuts(self, cuts: Iterable) -> "ModelSpec":
        return self.with_rows([(c.coeffs, -INF, c.rhs, f"cut:{c.kind}") for c in cuts])

    def with_bounds(self, ids, lb, ub) -> "ModelSpec":
        lo, hi = self.lb.copy(), self.ub.copy()
        lo[ids], hi[ids] = lb, ub
        return replace(self, lb=lo, ub=hi)

    def objective_value(self, v: np.ndarray) -> float:
        return float(self.obj @ v + self.obj_offset)

    def row_violations(self, v: np.ndarray) -> np.ndarray:
        act = self.A @ v
        return np.maximum(np.maximum(self.row_lo - act, act - self.row_hi), 0.0)


class _Rows:
    def __init__(self):
        self.r, self.c, self.v = [], [], []
        self.lo, self.hi, self.tags = [], [], []

    def add(self, coeffs: Iterable[tuple[int, float]], lo: float, hi: float, tag: str):
        i = len(self.lo)
        for j, a in coeffs:
            if a != 0.0:
                self.r.append(i)
                self.c.append(int(j))
                self.v.append(float(a))
        self.lo.append(lo)
        self.hi.append(hi)
        self.tags.append(tag)

    def le(self, coeffs, rhs, tag):
        self.add(coeffs, -INF, rhs, tag)

    def ge(self, coeffs, rhs, tag):
        self.add(coeffs, rhs, INF, tag)

    def eq(self, coeffs, rhs, tag):
        self.add(coeffs, rhs, rhs, tag)

    def matrix(self, n):
        return sp.csr_matrix((self.v, (self.r, self.c)), shape=(len(self.lo), n))


def _commitment_rows(inst: UcInstance, ix: VariableIndex, R: _Rows) -> None:
    T = inst.horizon
    for g, gen in enumerate(inst.generators):
        u, y, z = ix.u[g], ix.y[g], ix.z[g]
        for t in range(T):
            if t == 0:
                R.eq([(y[0], 1), (z[0], -1), (u[0], -1)], -gen.u0, "logic")
            else:
                R.eq([(y[t], 1), (z[t], -1), (u[t], -1), (u[t - 1], 1)], 0.0, "logic")
            R.le([(y[t], 1), (z[t], 1)], 1.0, "logic")
        if not gen.is_thermal:
            continue
        L, F = min(gen.init_up_time, T), min(gen.init_down_time, T)
        if L:
            R.eq([(u[t], 1) for t in range(L)], float(L), "minup")
        if F:
            R.eq([(u[t], 1) for t in range(F)], 0.0, "mindown")
        TU, TD = gen.min_up, gen.min_down
        if TU > 0:
            # 1-based t~ = L+1 .. T-TU+1, then the tail T-TU+2 .. T
            for tt in range(L, T - TU + 1):
                R.ge([(u[t], 1) for t in range(tt, tt + TU)] + [(y[tt], -TU)], 0.0, "minup")
            for tt in range(max(0, T - TU + 1), T):
                R.ge([(u[t], 1) for t in range(tt, T)] + [(y[tt], -(T - tt))], 0.0, "minup")
        if TD > 0:
            for tt in range(F, T - TD + 1):
                R.ge([(u[t], -1) for t in range(tt, tt + TD)] + [(z[tt], -TD)], -float(TD), "mindown")
            for tt in range(max(0, T - TD + 1), T):
                R.ge([(u[t], -1) for t in range(tt, T)] + [(z[tt], -(T - tt))], -float(T - tt), "mindown")


def _dispatch_rows(inst: UcInstance, ix: VariableIndex, R: _Rows) -> None:
    T = inst.horizon
    for g, gen in enumerate(inst.generators):
        u, y, z = ix.u[g], ix.y[g], ix.z[g]
        p, pb, q = ix.p[g], ix.p_bar[g], ix.q[g]
        for t in range(T):
            R.ge([(p[t], 1), (u[t], -gen.p_min)], 0.0, "pbound")
            R.le([(p[t], 1), (u[t], -gen.p_max)], 0.0, "pbound")
            R.le([(p[t], 1), (pb[t], -1)], 0.0, "pbar")
            R.le([(pb[t], 1), (u[t], -gen.p_max)], 0.0, "pbar")
            R.ge([(q[t], 1), (u[t], -gen.q_min)], 0.0, "qbound")
            R.le([(q[t], 1), (u[t], -gen.q_max)], 0.0, "qbound")
        if not gen.is_thermal:
            continue
        RU, RD, RSU, RSD = gen.ramp_up, gen.ramp_down, gen.ramp_startup, gen.ramp_shutdown
        for t in range(T):
            if t == 0:
                # previous-period quantities are the constants u_{g,0}, p_{g,0}
                R.le([(p[0], 1), (y[0], -RSU)], gen.p0 + RU * gen.u0, "ramp")
                R.le([(pb[0], 1), (y[0], -RSU)], gen.p0 + RU * gen.u0, "ramp")
                R.le([(p[0], -1), (z[0], -RSD)], -gen.p0 + RD * gen.u0, "ramp")
            else:
                R.le([(p[t], 1), (p[t - 1], -1), (u[t - 1], -RU), (y[t], -RSU)], 0.0, "ramp")
                R.le([(pb[t], 1), (p[t - 1], -1), (u[t - 1], -RU), (y[t], -RSU)], 0.0, "ramp")
                R.le([(p[t - 1], 1), (p[t], -1), (u[t - 1], -RD), (z[t], -RSD)], 0.0, "ramp")
            if t + 1 < T:
                R.le([(pb[t], 1), (u[t], -gen.p_max), (z[t + 1], gen.p_max - RSD)], 0.0, "ramp")
            else:
                # z_{g,T+1} := 0
                R.le([(pb[t], 1), (u[t], -gen.p_max)], 0.0, "ramp")
    for area in inst.reserves:
        for t in range(T):
            coeffs = [(ix.p_bar[g, t], 1) for g in area.members] + [(ix.p[g, t], -1) for g in area.members]
            R.ge(coeffs, float(area.requirement[t]), "reserve")


def _network_rows(inst: UcInstance, ix: VariableIndex, R: _Rows, periods: Iterable[int]) -> None:
    for t in periods:
        for k, ln in enumerate(inst.lines):
            n, m = ix.line_ends[k]
            G, B, bsh = ln.g, ln.b, ln.b_shunt
            c, s = ix.c_line[k, t], ix.s_line[k, t]
            for d, (a, sgn) in enumerate(((n, 1.0), (m, -1.0))):
                caa = ix.c_bus[a, t]
                # p_ab = -G c_aa + G c_ab - B s_ab ; q_ab = (B - bsh) c_aa - G s_ab - B c_ab
                R.eq([(ix.p_flow[k, d, t], 1), (caa, G), (c, -G), (s, sgn * B)], 0.0, "pflow")
                R.eq([(ix.q_flow[k, d, t], 1), (caa, -(B - bsh)), (s, sgn * G), (c, B)], 0.0, "qflow")
        for nb in range(inst.n_buses):
            out_p, out_q = [], []
            for k in range(len(inst.lines)):
                a, b = ix.line_ends[k]
                if a == nb:
                    out_p.append((ix.p_flow[k, 0, t], -1))
                    out_q.append((ix.q_flow[k, 0, t], -1))
                elif b == nb:
                    out_p.append((ix.p_flow[k, 1, t], -1))
                    out_q.append((ix.q_flow[k, 1, t], -1))
            gens = inst.gens_at(nb)
            R.eq([(ix.p[g, t], 1) for g in gens] + [(ix.p_unserved[nb, t], 1), (ix.p_over[nb, t], -1)] + out_p,
                 float(inst.p_demand[nb, t]), "pbal")
            R.eq([(ix.q[g, t], 1) for g in gens] + [(ix.q_unserved[nb, t], 1), (ix.q_over[nb, t], -1)] + out_q,
                 float(inst.q_demand[nb, t]), "qbal")


def _bounds(inst: UcInstance, ix: VariableIndex, variant: Variant):
    lb = np.full(ix.n_vars, -INF)
    ub = np.full(ix.n_vars, INF)
    xs = ix.x_ids
    lb[xs], ub[xs] = 0.0, 1.0
    # p, p_bar, q and flows are left free; rows carry their limits
    for k in range(ix.n_lines):
        n, m = ix.line_ends[k]
        vv = inst.buses[n].v_max * inst.buses[m].v_max
        lb[ix.c_line[k]], ub[ix.c_line[k]] = -vv, vv
        lb[ix.s_line[k]], ub[ix.s_line[k]] = -vv, vv
    for n, bus in enumerate(inst.buses):
        lb[ix.c_bus[n]], ub[ix.c_bus[n]] = bus.v_min ** 2, bus.v_max ** 2
        lb[ix.p_unserved[n]] = 0.0
        ub[ix.p_unserved[n]] = np.maximum(inst.p_demand[n], 0.0)
        lb[ix.q_unserved[n]] = 0.0
        ub[ix.q_unserved[n]] = np.maximum(inst.q_demand[n], 0.0)
        lb[ix.p_over[n]], lb[ix.q_over[n]] = 0.0, 0.0
    if variant is Variant.F1:
        for arr in (ix.p_unserved, ix.q_unserved):
            ub[arr] = 0.0
    if variant in (Variant.F1, Variant.F2):
        for arr in (ix.p_over, ix.q_over):
            ub[arr] = 0.0
    return lb, ub


def _objective(inst: UcInstance, ix: VariableIndex, epigraph: bool) -> np.ndarray:
    obj = np.zeros(ix.n_vars)
    for g, gen in enumerate(inst.generators):
        obj[ix.u[g]] = gen.cost_fixed
        obj[ix.y[g]] = gen.cost_startup
        obj[ix.z[g]] = gen.cost_shutdown
        if not epigraph:
            obj[ix.p[g]] = gen.cost_variable
    if not epigraph:
        for arr in (ix.p_unserved, ix.q_unserved, ix.p_over, ix.q_over):
            obj[arr] = inst.penalty
    else:
        obj[ix.psi] = 1.0
    return obj


def period_cost_coeffs(inst: UcInstance, ix: VariableIndex, t: int) -> list[tuple[int, float]]:
    """Dispatch plus penalty cost of period t as (id, coefficient) pairs."""
    out = [(int(ix.p[g, t]), gen.cost_variable) for g, gen in enumerate(inst.generators)]
    for arr in (ix.p_unserved, ix.q_unserved, ix.p_over, ix.q_over):
        out += [(int(arr[n, t]), inst.penalty) for n in range(inst.n_buses)]
    return out


def build_outer_base(inst: UcInstance, variant=Variant.F2, epigraph: bool = False) -> ModelSpec:
    """Linear part of the model with every x binary and no cuts or cones.

    In epigraph mode the per-period dispatch and penalty cost is moved into
    psi_t with a linking row psi_t >= cost_t, which leaves the optimum unchanged.
    """
    variant = Variant.parse(variant)
    problems = validate_instance(inst)
    if problems:
        raise FormulationError("; ".join(problems))
    ix = VariableIndex.build(inst, epigraph)
    R = _Rows()
    _commitment_rows(inst, ix, R)
    _dispatch_rows(inst, ix, R)
    _network_rows(inst, ix, R, range(inst.horizon))
    if epigraph:
        for t in range(inst.horizon):
            R.ge([(int(ix.psi[t]), 1.0)] + [(j, -a) for j, a in period_cost_coeffs(inst, ix, t)],
                 0.0, "epigraph")
    lb, ub = _bounds(inst, ix, variant)
    return ModelSpec(
        index=ix, lb=lb, ub=ub, obj=_objective(inst, ix, epigraph), obj_offset=0.0,
        A=R.matrix(ix.n_vars), row_lo=np.array(R.lo, dtype=float), row_hi=np.array(R.hi, dtype=float),
        row_tags=tuple(R.tags), cones=(), integer=frozenset(int(i) for i in ix.x_ids),
    )


def nonlinear_cones(inst: UcInstance, ix: VariableIndex) -> tuple[Cone, ...]:
    out = []
    for t in range(inst.horizon):
        for k, ln in enumerate(inst.lines):
            n, m = ix.line_ends[k]
            out.append(Cone("rsoc", (int(ix.c_line[k, t]), int(ix.s_line[k, t]),
                                     int(ix.c_bus[n, t]), int(ix.c_bus[m, t])), key=(k, t)))
            for d in range(2):
                out.append(Cone("disk", (int(ix.p_flow[k, d, t]), int(ix.q_flow[k, d, t])),
                                radius=ln.s_max, key=(k, d, t)))
    return tuple(out)


def build_inner(inst: UcInstance, schedule: CommitmentSchedule, variant=Variant.F2,
                base: ModelSpec | None = None) -> ModelSpec:
    """Convex conic model with the commitment fixed to ``schedule``."""
    problems = commitment_violations(inst, schedule)
    if problems:
        raise FormulationError("commitment rejected: " + "; ".join(problems))
    base = base if base is not None else build_outer_base(inst, variant)
    if base.index.psi is not None:
        raise FormulationError("inner model is built from the plain (non-epigraph) base")
    ix = base.index
    ids = np.concatenate([ix.u.ravel(), ix.y.ravel(), ix.z.ravel()])
    vals = np.concatenate([schedule.u.ravel(), schedule.y.ravel(), schedule.z.ravel()]).astype(float)
    point = np.zeros(base.n_vars)
    point[ids] = vals
    logic = [i for i, t in enumerate(base.row_tags) if t in ("logic", "minup", "mindown")]
    if logic and base.row_violations(point)[logic].max() > 1e-9:
        bad = {base.row_tags[i] for i in logic if base.row_violations(point)[i] > 1e-9}
        raise FormulationError(f"commitment rejected by {sorted(bad)} rows")
    spec = base.with_bounds(ids, vals, vals)
    return replace(spec, cones=nonlinear_cones(inst, ix), integer=frozenset())


def soc_residuals(index: VariableIndex, vals) -> dict[tuple[int, int], float]:
    """c_nm^2 + s_nm^2 - c_nn*c_mm per (line, t); positive means violated."""
    v = np.asarray(vals, dtype=float)
    out = {}
    for k in range(index.n_lines):
        n, m = index.line_ends[k]
        for t in range(index.horizon):
            c, s = v[index.c_line[k, t]], v[index.s_line[k, t]]
            out[(k, t)] = float(c * c + s * s - v[index.c_bus[n, t]] * v[index.c_bus[m, t]])
    return out


def cap_residuals(index: VariableIndex, vals, s_max: Sequence[float]) -> dict[tuple[int, int, int], float]:
    """p^2 + q^2 - S^2 per (line, direction, t); positive means violated."""
    v = np.asarray(vals, dtype=float)
    out = {}
    for k in range(index.n_lines):
        S2 = float(s_max[k]) ** 2
        for d in range(2):
            for t in range(index.horizon):
                p, q = v[index.p_flow[k, d, t]], v[index.q_flow[k, d, t]]
                out[(k, d, t)] = float(p * p + q * q - S2)
    return out


def cone_residual(cone: Cone, v: np.ndarray) -> float:
    if cone.kind == "rsoc":
        a, b, c, d = (v[i] for i in cone.ids)
        return float(a * a + b * b - c * d)
    a, b = (v[i] for i in cone.ids)
    return float(a * a + b * b - cone.radius ** 2)
