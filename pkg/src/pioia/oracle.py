"""Exhaustive ground truth for desk-scale instances."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .backend import OPTIMAL, solve_continuous
from .formulation import Variant, build_inner, build_outer_base
from .model import CommitmentSchedule, UcInstance, instance_to_dict

MAX_BITS = 24


class EnumerationTooLarge(ValueError):
    pass


def _generator_patterns(inst: UcInstance, g: int, rows) -> list[tuple[int, ...]]:
    """Status sequences of generator g that satisfy its commitment rows."""
    T = inst.horizon
    gen = inst.generators[g]
    A, lo, hi, cols = rows
    out = []
    for bits in itertools.product((0, 1), repeat=T):
        s = CommitmentSchedule.from_u(np.array([bits]), [gen.u0])
        v = np.concatenate([s.u[0], s.y[0], s.z[0]]).astype(float)
        act = A @ v
        if np.all(act >= lo - 1e-9) and np.all(act <= hi + 1e-9):
            out.append(bits)
    return out


def _commitment_rows_of(base, g: int):
    ix = base.index
    cols = np.concatenate([ix.u[g], ix.y[g], ix.z[g]])
    logic = np.array([t in ("logic", "minup", "mindown") for t in base.row_tags])
    A = base.A[np.flatnonzero(logic)]
    touch = np.diff(A[:, cols].tocsr().indptr) > 0
    sub = A[np.flatnonzero(touch)]
    assert sub[:, np.setdiff1d(np.arange(base.n_vars), cols)].nnz == 0
    lo, hi = base.row_lo[logic][touch], base.row_hi[logic][touch]
    return sub[:, cols].tocsr(), lo, hi, cols


def enumerate_feasible_commitments(inst: UcInstance, max_bits: int = MAX_BITS) -> Iterator[CommitmentSchedule]:
    """Yield every status schedule allowed by the commitment rows, lexicographic in (g, t)."""
    if inst.n_gens * inst.horizon > max_bits:
        raise EnumerationTooLarge(f"|G|*T = {inst.n_gens * inst.horizon} exceeds guard {max_bits}")
    base = build_outer_base(inst, Variant.F3)
    per_gen = [_generator_patterns(inst, g, _commitment_rows_of(base, g)) for g in range(inst.n_gens)]
    u0 = [gen.u0 for gen in inst.generators]
    for combo in itertools.product(*per_gen):
        yield CommitmentSchedule.from_u(np.array(combo, dtype=int).reshape(inst.n_gens, inst.horizon), u0)


@dataclass
class OracleResult:
    objective: float
    schedule: CommitmentSchedule | None
    primal: np.ndarray | None
    n_schedules: int
    n_feasible: int


def brute_force_optimum(inst: UcInstance, variant=Variant.F2, conic: str | None = None,
                        backend: str | None = None) -> OracleResult:
    """Minimise the fixed-commitment conic model over every feasible schedule."""
    variant = Variant.parse(variant)
    base = build_outer_base(inst, variant)
    best = OracleResult(math.inf, None, None, 0, 0)
    for sched in enumerate_feasible_commitments(inst):
        best.n_schedules += 1
        out = solve_continuous(build_inner(inst, sched, variant, base=base), backend=backend, conic=conic)
        if out.status != OPTIMAL:
            continue
        best.n_feasible += 1
        if out.objective < best.objective:
            best.objective, best.schedule, best.primal = out.objective, sched, out.primal
    return best


def instance_hash(inst: UcInstance) -> str:
    blob = json.dumps(instance_to_dict(inst), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_golden(path, inst: UcInstance, variant, result: OracleResult) -> None:
    rec = {
        "instance_hash": instance_hash(inst),
        "variant": Variant.parse(variant).value,
        "obj_star": result.objective,
        "schedule": None if result.schedule is None else result.schedule.u.tolist(),
    }
    Path(path).write_text(json.dumps(rec, indent=1))


def read_golden(path) -> dict:
    return json.loads(Path(path).read_text())
