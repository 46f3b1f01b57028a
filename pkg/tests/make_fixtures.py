"""Regenerate the instance fixtures and oracle goldens under tests/data.

Every golden value is computed twice, once per conic engine, and the script
refuses to write a golden when the two disagree by more than 1e-6 relative.

    python3 tests/make_fixtures.py
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from pioia.model import (THERMAL, Bus, Generator, UcInstance, generate_synthetic,
                         write_instance)
from pioia.oracle import brute_force_optimum, instance_hash

DATA = Path(__file__).parent / "data"
GOLDEN_SEEDS = range(6)
GOLDEN_VARIANTS = ("f1", "f2", "f3")
AGREE = 1e-6


def single_bus(T: int = 1, p_load: float = 0.0, q_load: float = 0.0, u0: int = 0) -> UcInstance:
    """One bus, one thermal unit, no lines."""
    gen = Generator(
        id="g1", bus="b1", kind=THERMAL, p_min=0.2, p_max=1.0, q_min=-0.3, q_max=0.5,
        ramp_up=1.0, ramp_down=1.0, ramp_startup=1.0, ramp_shutdown=1.0, min_up=1,
        min_down=1, u0=u0, p0=0.5 if u0 else 0.0, init_up_time=0, init_down_time=0,
        cost_fixed=1.0, cost_startup=2.0, cost_shutdown=0.5, cost_variable=5.0)
    pd = np.full((1, T), p_load)
    qd = np.full((1, T), q_load)
    return UcInstance((Bus("b1", 0.95, 1.05, "A"),), (), (gen,), T, pd, qd, (), 500.0,
                      100.0, "single-bus")


def ring3() -> UcInstance:
    return replace(generate_synthetic(3, 2, 4, 7), name="ring3")


def synth(seed: int) -> UcInstance:
    return generate_synthetic(3, 2, 4, seed)


def golden_record(inst: UcInstance, variant: str) -> dict:
    a = brute_force_optimum(inst, variant, conic="clarabel")
    b = brute_force_optimum(inst, variant, conic="cvxopt")
    both_inf = math.isinf(a.objective) and math.isinf(b.objective)
    if not both_inf:
        rel = abs(a.objective - b.objective) / max(abs(a.objective), 1.0)
        if rel > AGREE:
            raise SystemExit(f"{inst.name} {variant}: engines disagree ({a.objective} vs {b.objective})")
    return {
        "instance_hash": instance_hash(inst),
        "variant": variant,
        "obj_star": None if math.isinf(a.objective) else a.objective,
        "schedule": None if a.schedule is None else a.schedule.u.tolist(),
        "cross_check": {"clarabel": None if both_inf else a.objective,
                        "cvxopt": None if both_inf else b.objective},
    }


def main() -> int:
    DATA.mkdir(exist_ok=True)
    write_instance(ring3(), DATA / "ring3.json")
    write_instance(single_bus(), DATA / "zero.json")
    goldens = {}
    for seed in GOLDEN_SEEDS:
        inst = synth(seed)
        write_instance(inst, DATA / f"synth-{seed}.json")
        for v in GOLDEN_VARIANTS:
            goldens[f"synth-{seed}/{v}"] = golden_record(inst, v)
            print(seed, v, goldens[f"synth-{seed}/{v}"]["obj_star"], flush=True)
    (DATA / "goldens.json").write_text(json.dumps(goldens, indent=1, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
