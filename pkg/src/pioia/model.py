"""Problem data for AC network-constrained unit commitment.

All electrical quantities are per-unit on a single instance-wide ``base_mva``.
Costs are per per-unit-hour. Periods are 1-based in files and 0-based in
arrays held by :class:`UcInstance`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Hashable, Iterable, Mapping

import numpy as np

THERMAL = "thermal"
RENEWABLE = "renewable"


class InstanceError(ValueError):
    """Raised when an instance file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class Bus:
    id: Hashable
    v_min: float
    v_max: float
    area: Hashable = "1"


@dataclass(frozen=True)
class Line:
    """A branch between two buses.

    ``g`` and ``b`` are the off-diagonal bus admittance entries G_nm, B_nm
    (so a lossy inductive line has ``g < 0`` and ``b > 0``), ``b_shunt`` is
    half the line charging susceptance.
    """

    from_bus: Hashable
    to_bus: Hashable
    g: float
    b: float
    b_shunt: float
    s_max: float


@dataclass(frozen=True)
class Generator:
    id: Hashable
    bus: Hashable
    kind: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    ramp_up: float
    ramp_down: float
    ramp_startup: float
    ramp_shutdown: float
    min_up: int
    min_down: int
    u0: int
    p0: float
    init_up_time: int
    init_down_time: int
    cost_fixed: float
    cost_startup: float
    cost_shutdown: float
    cost_variable: float
    y0: int = 0
    z0: int = 0

    @property
    def is_thermal(self) -> bool:
        return self.kind == THERMAL


@dataclass(frozen=True)
class ReserveArea:
    area: Hashable
    members: tuple[int, ...]  # generator positions
    requirement: np.ndarray  # shape (T,)


@dataclass(frozen=True, eq=False)
class UcInstance:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    horizon: int
    p_demand: np.ndarray  # shape (n_buses, T)
    q_demand: np.ndarray
    reserves: tuple[ReserveArea, ...]
    penalty: float
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        for arr in (self.p_demand, self.q_demand):
            arr.flags.writeable = False
        for r in self.reserves:
            r.requirement.flags.writeable = False

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_gens(self) -> int:
        return len(self.generators)

    @property
    def bus_pos(self) -> dict[Hashable, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def line_ends(self, k: int) -> tuple[int, int]:
        pos = self.bus_pos
        ln = self.lines[k]
        return pos[ln.from_bus], pos[ln.to_bus]

    def gens_at(self, bus_index: int) -> list[int]:
        bid = self.buses[bus_index].id
        return [g for g, gen in enumerate(self.generators) if gen.bus == bid]

    def with_loads(self, p_demand, q_demand) -> "UcInstance":
        return replace(self, p_demand=np.array(p_demand, dtype=float),
                       q_demand=np.array(q_demand, dtype=float))


@dataclass(frozen=True)
class CommitmentSchedule:
    """Binary on/startup/shutdown values, arrays of shape (n_gens, T)."""

    u: np.ndarray
    y: np.ndarray = field(default=None)
    z: np.ndarray = field(default=None)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=int)
        object.__setattr__(self, "u", u)
        if self.y is None or self.z is None:
            raise TypeError("use CommitmentSchedule.from_u to derive y and z")
        object.__setattr__(self, "y", np.asarray(self.y, dtype=int))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=int))

    @classmethod
    def from_u(cls, u, u0) -> "CommitmentSchedule":
        u = np.atleast_2d(np.asarray(u, dtype=int))
        prev = np.concatenate([np.asarray(u0, dtype=int).reshape(-1, 1), u[:, :-1]], axis=1)
        diff = u - prev
        return cls(u=u, y=(diff > 0).astype(int), z=(diff < 0).astype(int))

    @classmethod
    def all_off(cls, inst: UcInstance) -> "CommitmentSchedule":
        u0 = [g.u0 for g in inst.generators]
        return cls.from_u(np.zeros((inst.n_gens, inst.horizon), dtype=int), u0)

    def key(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.u.ravel())


def commitment_violations(inst: UcInstance, sched: CommitmentSchedule) -> list[str]:
    """Check a schedule against the logic and minimum up/down rules.

    Works on runs of the status sequence rather than on constraint rows, so
    it can serve as an independent check of the enumerated/formulated rules.
    """
    out = []
    T = inst.horizon
    for g, gen in enumerate(inst.generators):
        u, y, z = sched.u[g], sched.y[g], sched.z[g]
        if any(v not in (0, 1) for v in np.concatenate([u, y, z])):
            out.append(f"generator {gen.id}: non-binary commitment value")
            continue
        prev = gen.u0
        for t in range(T):
            if y[t] - z[t] != u[t] - prev:
                out.append(f"generator {gen.id}: transition logic broken at t={t + 1}")
            if y[t] + z[t] > 1:
                out.append(f"generator {gen.id}: start and stop at t={t + 1}")
            prev = u[t]
        if not gen.is_thermal:
            continue
        L, F = min(gen.init_up_time, T), min(gen.init_down_time, T)
        if L and not all(u[:L]):
            out.append(f"generator {gen.id}: must stay on for initial {L} periods")
        if F and any(u[:F]):
            out.append(f"generator {gen.id}: must stay off for initial {F} periods")
        for t in range(T):
            if y[t] and gen.min_up > 0:
                end = min(T, t + gen.min_up)
                if not all(u[t:end]):
                    out.append(f"generator {gen.id}: min-up broken after start at t={t + 1}")
            if z[t] and gen.min_down > 0:
                end = min(T, t + gen.min_down)
                if any(u[t:end]):
                    out.append(f"generator {gen.id}: min-down broken after stop at t={t + 1}")
    return out


def validate_instance(inst: UcInstance) -> list[str]:
    """Return descriptions of every violated data invariant (empty if valid)."""
    v = []
    if inst.horizon < 1:
        v.append(f"horizon T={inst.horizon} must be >= 1")
    bus_ids = [b.id for b in inst.buses]
    if len(set(bus_ids)) != len(bus_ids):
        v.append("duplicate bus ids")
    known = set(bus_ids)
    for b in inst.buses:
        if not (0 < b.v_min <= b.v_max):
            v.append(f"bus {b.id}: need 0 < v_min <= v_max")
    pairs = set()
    for k, ln in enumerate(inst.lines):
        tag = f"line {k} ({ln.from_bus}-{ln.to_bus})"
        if ln.from_bus not in known or ln.to_bus not in known:
            v.append(f"{tag}: unknown bus")
        if ln.from_bus == ln.to_bus:
            v.append(f"{tag}: from == to")
        if not ln.s_max > 0:
            v.append(f"{tag}: s_max must be positive")
        pair = frozenset((ln.from_bus, ln.to_bus))
        if pair in pairs:
            v.append(f"{tag}: duplicate line for bus pair")
        pairs.add(pair)
    gen_ids = [g.id for g in inst.generators]
    if len(set(gen_ids)) != len(gen_ids):
        v.append("duplicate generator ids")
    for gen in inst.generators:
        tag = f"generator {gen.id}"
        if gen.bus not in known:
            v.append(f"{tag}: unknown bus {gen.bus}")
        if gen.kind not in (THERMAL, RENEWABLE):
            v.append(f"{tag}: kind must be thermal or renewable")
        if gen.p_min > gen.p_max:
            v.append(f"{tag}: p_min > p_max")
        if gen.q_min > gen.q_max:
            v.append(f"{tag}: q_min > q_max")
        if gen.init_up_time * gen.init_down_time != 0:
            v.append(f"{tag}: L·F = 0 violated")
        if gen.init_up_time > 0 and gen.u0 != 1:
            v.append(f"{tag}: init_up_time > 0 requires u0 = 1")
        if gen.init_down_time > 0 and gen.u0 != 0:
            v.append(f"{tag}: init_down_time > 0 requires u0 = 0")
        if gen.u0 not in (0, 1):
            v.append(f"{tag}: u0 must be binary")
        limits = (gen.ramp_up, gen.ramp_down, gen.ramp_startup, gen.ramp_shutdown,
                  gen.min_up, gen.min_down, gen.init_up_time, gen.init_down_time)
        if any(x < 0 for x in limits):
            v.append(f"{tag}: negative ramp or time limit")
    shape = (inst.n_buses, inst.horizon)
    for name, arr in (("p_demand", inst.p_demand), ("q_demand", inst.q_demand)):
        if arr.shape != shape:
            v.append(f"{name}: shape {arr.shape} != {shape}")
        elif not np.all(np.isfinite(arr)):
            v.append(f"{name}: non-finite entries")
    for r in inst.reserves:
        if any(not 0 <= m < inst.n_gens for m in r.members):
            v.append(f"reserve area {r.area}: member outside generator set")
        if r.requirement.shape != (inst.horizon,):
            v.append(f"reserve area {r.area}: requirement must cover every period")
    return v


# ---------------------------------------------------------------------------
# JSON I/O

_GEN_FIELDS = ("id", "bus", "kind", "p_min", "p_max", "q_min", "q_max", "ramp_up",
               "ramp_down", "ramp_startup", "ramp_shutdown", "min_up", "min_down", "u0",
               "p0", "init_up_time", "init_down_time", "cost_fixed", "cost_startup",
               "cost_shutdown", "cost_variable")
_INT_FIELDS = {"min_up", "min_down", "u0", "init_up_time", "init_down_time", "y0", "z0"}


def default_penalty(generators: Iterable[Generator]) -> float:
    return 100.0 * max((g.cost_variable for g in generators), default=0.0)


def instance_from_dict(data: Mapping[str, Any]) -> UcInstance:
    try:
        T = int(data["horizon"])
        buses = tuple(Bus(b["id"], float(b["v_min"]), float(b["v_max"]), b.get("area", "1"))
                      for b in data["buses"])
        lines = tuple(Line(ln["from"], ln["to"], float(ln["g"]), float(ln["b"]),
                           float(ln.get("b_shunt", 0.0)), float(ln["s_max"]))
                      for ln in data.get("lines", []))
        gens = []
        for gd in data["generators"]:
            kw = {}
            for f in _GEN_FIELDS + ("y0", "z0"):
                if f not in gd:
                    if f in ("y0", "z0"):
                        continue
                    raise InstanceError(f"generator record missing field {f!r}")
                val = gd[f]
                if f in _INT_FIELDS:
                    val = int(val)
                elif f not in ("id", "bus", "kind"):
                    val = float(val)
                kw[f] = val
            gens.append(Generator(**kw))
        gens = tuple(gens)
        pos = {b.id: i for i, b in enumerate(buses)}
        pd = np.zeros((len(buses), T))
        qd = np.zeros((len(buses), T))
        seen = set()
        for rec in data.get("loads", []):
            if rec["bus"] not in pos:
                raise InstanceError(f"load references unknown bus {rec['bus']!r}")
            t = int(rec["t"])
            if not 1 <= t <= T:
                raise InstanceError(f"load period {t} outside 1..{T}")
            n = pos[rec["bus"]]
            seen.add((n, t))
            pd[n, t - 1] = float(rec["p"])
            qd[n, t - 1] = float(rec.get("q", 0.0))
        gpos = {g.id: i for i, g in enumerate(gens)}
        req: dict[Any, np.ndarray] = {}
        for rec in data.get("reserves", []):
            t = int(rec["t"])
            if not 1 <= t <= T:
                raise InstanceError(f"reserve period {t} outside 1..{T}")
            req.setdefault(rec["area"], np.zeros(T))[t - 1] = float(rec["requirement"])
        reserves = []
        for area, r in req.items():
            members = tuple(gpos[g.id] for g in gens if _area_of(g, buses) == area)
            reserves.append(ReserveArea(area, members, r))
        penalty = data.get("penalty")
        penalty = default_penalty(gens) if penalty is None else float(penalty)
        inst = UcInstance(buses, lines, gens, T, pd, qd, tuple(reserves), penalty,
                          float(data.get("base_mva", 100.0)), str(data.get("name", "")))
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"schema violation: {exc!r}") from exc
    problems = validate_instance(inst)
    if problems:
        raise InstanceError("; ".join(problems))
    return inst


def _area_of(gen: Generator, buses) -> Any:
    for b in buses:
        if b.id == gen.bus:
            return b.area
    return None


def load_instance(path) -> UcInstance:
    """Read and validate a JSON instance file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"cannot parse {path}: {exc}") from exc
    return instance_from_dict(data)


def instance_to_dict(inst: UcInstance) -> dict[str, Any]:
    out: dict[str, Any] = {"base_mva": inst.base_mva, "horizon": inst.horizon}
    if inst.name:
        out["name"] = inst.name
    out["buses"] = [{"id": b.id, "v_min": b.v_min, "v_max": b.v_max, "area": b.area}
                    for b in inst.buses]
    out["lines"] = [{"from": ln.from_bus, "to": ln.to_bus, "g": ln.g, "b": ln.b,
                     "b_shunt": ln.b_shunt, "s_max": ln.s_max} for ln in inst.lines]
    gens = []
    for g in inst.generators:
        rec = {f: getattr(g, f) for f in _GEN_FIELDS}
        if g.y0 or g.z0:
            rec.update(y0=g.y0, z0=g.z0)
        gens.append(rec)
    out["generators"] = gens
    out["loads"] = [{"bus": b.id, "t": t + 1, "p": float(inst.p_demand[n, t]),
                     "q": float(inst.q_demand[n, t])}
                    for n, b in enumerate(inst.buses) for t in range(inst.horizon)]
    out["reserves"] = [{"area": r.area, "t": t + 1, "requirement": float(r.requirement[t])}
                       for r in inst.reserves for t in range(inst.horizon)]
    out["penalty"] = inst.penalty
    return out


def write_instance(inst: UcInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1))


def instances_equal(a: UcInstance, b: UcInstance) -> bool:
    """Field-by-field equality (arrays compared exactly)."""
    if (a.buses, a.lines, a.generators, a.horizon, a.penalty, a.base_mva) != (
            b.buses, b.lines, b.generators, b.horizon, b.penalty, b.base_mva):
        return False
    if not (np.array_equal(a.p_demand, b.p_demand) and np.array_equal(a.q_demand, b.q_demand)):
        return False
    if len(a.reserves) != len(b.reserves):
        return False
    return all(ra.area == rb.area and ra.members == rb.members
               and np.array_equal(ra.requirement, rb.requirement)
               for ra, rb in zip(a.reserves, b.reserves))


# ---------------------------------------------------------------------------
# Perturbation and synthetic instances

def load_scale_factors(shape, sigma: float, seed: int) -> np.ndarray:
    """Draw independent (1 + xi), xi ~ N(0, sigma^2)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.ones(shape)
    rng = np.random.default_rng(seed)
    return 1.0 + rng.normal(0.0, sigma, size=shape)


def perturb_loads(inst: UcInstance, sigma: float, seed: int, perturb_q: bool = True) -> UcInstance:
    """Scale every active load by its own Gaussian factor.

    Reactive loads share the factor of the co-located active load unless
    ``perturb_q`` is off. Topology, generators, reserves and T are untouched.
    """
    f = load_scale_factors(inst.p_demand.shape, sigma, seed)
    pd = inst.p_demand * f
    qd = inst.q_demand * f if perturb_q else inst.q_demand.copy()
    return inst.with_loads(pd, qd)


def generate_synthetic(n_buses: int, n_gens: int, T: int, seed: int,
                       reserve_margin: float = 0.10) -> UcInstance:
    """Random small instance with a nonempty F2-feasible commitment set.

    Topology is a path for two buses and a ring otherwise. Total demand stays
    within [35%, 80%] of total p_max and every bus carries load. The area
    reserve row asks for ``reserve_margin`` x area load of headroom
    (p_bar - p), which is total available capacity of 110% of load by default.
    """
    if n_buses < 1 or n_gens < 1 or T < 1:
        raise ValueError("n_buses, n_gens and T must all be >= 1")
    rng = np.random.default_rng(seed)
    buses = tuple(Bus(f"b{i + 1}", 0.9, 1.1, "A") for i in range(n_buses))
    edges = []
    if n_buses == 2:
        edges = [(0, 1)]
    elif n_buses > 2:
        edges = [(i, (i + 1) % n_buses) for i in range(n_buses)]
    gens = []
    for g in range(n_gens):
        p_max = float(np.round(rng.uniform(0.8, 2.0), 3))
        p_min = float(np.round(p_max * rng.uniform(0.15, 0.3), 3))
        # the first unit starts online so period-1 reserve is always coverable
        on = int(rng.random() < 0.5) or int(g == 0)
        min_up = int(rng.integers(1, 4))
        min_down = int(rng.integers(1, 4))
        L = int(rng.integers(0, 2)) if on else 0
        F = 0 if on else int(rng.integers(0, 2))
        ramp = float(np.round(0.5 * p_max, 3))
        gens.append(Generator(
            id=f"g{g + 1}", bus=buses[int(rng.integers(n_buses))].id, kind=THERMAL,
            p_min=p_min, p_max=p_max,
            q_min=float(np.round(-0.3 * p_max, 3)), q_max=float(np.round(0.6 * p_max, 3)),
            ramp_up=ramp, ramp_down=ramp,
            ramp_startup=max(ramp, p_min), ramp_shutdown=max(ramp, p_min),
            min_up=min_up, min_down=min_down, u0=on,
            p0=float(np.round(p_min + 0.3 * (p_max - p_min), 3)) if on else 0.0,
            init_up_time=L, init_down_time=F,
            cost_fixed=float(np.round(rng.uniform(0.5, 3.0), 3)),
            cost_startup=float(np.round(rng.uniform(1.0, 6.0), 3)),
            cost_shutdown=float(np.round(rng.uniform(0.0, 1.0), 3)),
            cost_variable=float(np.round(rng.uniform(2.0, 10.0), 3)),
        ))
    cap = sum(g.p_max for g in gens)
    floor = sum(g.p_min for g in gens)
    shape = np.sin(np.linspace(0.0, math.pi, T)) if T > 1 else np.ones(1)
    lo, hi = max(0.35 * cap, 1.05 * floor), 0.8 * cap
    hi = max(hi, lo)
    total = lo + (hi - lo) * (0.3 + 0.7 * shape) * rng.uniform(0.85, 1.0)
    weights = rng.uniform(0.5, 1.5, size=n_buses)
    weights /= weights.sum()
    pd = np.round(np.outer(weights, total), 4)
    qd = np.round(pd * rng.uniform(0.2, 0.35, size=(n_buses, 1)), 4)
    lines = []
    for a, b in edges:
        r, x = rng.uniform(0.01, 0.03), rng.uniform(0.08, 0.2)
        den = r * r + x * x
        g_ser, b_ser = r / den, -x / den
        lines.append(Line(buses[a].id, buses[b].id, float(np.round(-g_ser, 4)),
                          float(np.round(-b_ser, 4)), 0.0,
                          float(np.round(rng.uniform(0.5, 1.0) * cap / max(len(edges), 1), 3))))
    reserves = (ReserveArea("A", tuple(range(n_gens)), np.round(reserve_margin * pd.sum(axis=0), 4)),)
    inst = UcInstance(buses, tuple(lines), tuple(gens), T, pd, qd, reserves,
                      default_penalty(gens), 100.0, f"synthetic-{n_buses}-{n_gens}-{T}-{seed}")
    problems = validate_instance(inst)
    if problems:
        raise InstanceError("; ".join(problems))
    return inst
