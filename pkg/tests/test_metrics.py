import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import single_bus
from pioia.backend import solve_continuous
from pioia.formulation import build_inner, build_outer_base
from pioia.metrics import gap, milestones, optg, violation
from pioia.model import CommitmentSchedule
from pioia.oia import AlgoParams
from pioia.progressive import run_pioia
from pioia.trace import HEADER, RunTrace, TraceRow, read_trace, strip_timing


def row(i, t, lb, ub, stage="oia"):
    return TraceRow(i, stage, t, lb, ub, gap(ub, lb), 0, 0, 0, 0, None, None, "optimal")


def golden_solution(inst, g):
    sched = CommitmentSchedule.from_u(g["schedule"], [x.u0 for x in inst.generators])
    return solve_continuous(build_inner(inst, sched)).primal


def test_gap_examples():
    assert gap(100.0, 99.0) == pytest.approx(0.01)
    assert gap(42.0, 42.0) == 0.0
    assert gap(math.inf, 3.0) == math.inf
    assert gap(0.0, 0.0) == 0.0


def test_optg_examples():
    assert optg(100.0, 100.0) == 0.0
    assert optg(101.0, 100.0) == pytest.approx(1 / 101)
    assert optg(math.inf, 100.0) == math.inf
    assert optg(100.0, 100.0 + 5e-8) == 0.0  # tiny negative clamped


def test_ratios_scale_invariant():
    for lam in (0.1, 10.0, 1e4):
        assert gap(lam * 80.0, lam * 79.5) == pytest.approx(gap(80.0, 79.5), rel=1e-12)
        assert optg(lam * 80.0, lam * 79.0) == pytest.approx(optg(80.0, 79.0), rel=1e-12)


def test_violation_of_oracle_solution(synth, goldens):
    inst = synth[0]
    v = golden_solution(inst, goldens["synth-0/f2"])
    assert violation(inst, "f2", v) <= 1e-6


def test_violation_of_broken_balance(synth, goldens):
    inst = synth[0]
    v = golden_solution(inst, goldens["synth-0/f2"]).copy()
    ix = build_outer_base(inst).index
    # shift one bus's shedding: only that balance row and no bound moves past 0.5
    n, t = 0, 1
    v[ix.p_unserved[n, t]] += 0.5
    assert v[ix.p_unserved[n, t]] <= inst.p_demand[n, t]
    assert violation(inst, "f2", v) == pytest.approx(0.5, abs=1e-6)


def test_zero_assignment_on_idle_instance():
    inst = single_bus(T=2)
    ix = build_outer_base(inst).index
    v = np.zeros(ix.n_vars)
    # squared voltages must sit in their band, so use a flat profile
    v[ix.c_bus] = 1.0
    assert violation(inst, "f2", v) == 0.0


def test_violation_counts_cones(synth, goldens):
    inst = synth[0]
    v = golden_solution(inst, goldens["synth-0/f2"]).copy()
    ix = build_outer_base(inst).index
    v[ix.c_line[0, 0]] += 0.3
    assert violation(inst, "f3", v) > 0.05


def test_violation_rejects_short_or_missing():
    inst = single_bus(T=1)
    with pytest.raises(ValueError):
        violation(inst, "f2", np.zeros(3))
    v = np.full(build_outer_base(inst).n_vars, np.nan)
    with pytest.raises(ValueError, match="missing"):
        violation(inst, "f2", v)


def test_milestone_first_crossing():
    tr = RunTrace()
    tr.append(row(1, 10.0, 90.0, 100.0))
    tr.append(row(2, 20.0, 99.2, 100.0))
    tr.append(row(3, 30.0, 99.95, 100.0))
    ms = milestones(tr, 99.995)
    assert ms == {"Gap-1": 20.0, "Gap-0.1": 30.0, "OptG-0.1": 10.0, "OptG-0": 10.0}


def test_milestones_never_reached():
    tr = RunTrace()
    tr.append(row(1, 5.0, 50.0, 100.0))
    assert milestones(tr, 60.0) == {"Gap-1": None, "Gap-0.1": None, "OptG-0.1": None, "OptG-0": None}


def test_milestones_without_reference_optimum():
    tr = RunTrace()
    tr.append(row(1, 5.0, 100.0, 100.0))
    ms = milestones(tr)
    assert ms["Gap-0.1"] == 5.0 and ms["OptG-0"] is None


def test_run_milestones_within_runtime(synth, goldens):
    st = run_pioia(synth[0], "f2", AlgoParams(), "m2")
    ms = milestones(st.trace, goldens["synth-0/f2"]["obj_star"])
    assert ms["OptG-0"] is not None and ms["OptG-0"] <= st.trace.last.wall_time_s
    assert violation(synth[0], "f2", st.incumbent) <= 1e-6


def test_scaled_costs_give_same_ratios(ring3):
    lam = 10.0
    gens = tuple(replace(g, cost_fixed=lam * g.cost_fixed, cost_startup=lam * g.cost_startup,
                         cost_shutdown=lam * g.cost_shutdown, cost_variable=lam * g.cost_variable)
                 for g in ring3.generators)
    scaled = replace(ring3, generators=gens, penalty=lam * ring3.penalty)
    # gap-limited MILP solves may stop at different incumbents after scaling,
    # so the paired runs solve every MILP to optimality
    params = AlgoParams(mip_gap_init=1e-9)
    a = run_pioia(ring3, "f2", params, "m1")
    b = run_pioia(scaled, "f2", params, "m1")
    assert b.UB == pytest.approx(lam * a.UB, rel=1e-7)
    assert len(a.trace) == len(b.trace)
    for ra, rb in zip(a.trace, b.trace):
        assert rb.gap == pytest.approx(ra.gap, abs=1e-7)


def test_trace_header_and_csv(tmp_path):
    tr = RunTrace()
    tr.append(row(1, 1.0, -math.inf, math.inf, stage="lp"))
    tr.append(row(2, 1.0, 3.0, 4.0))
    text = tr.to_csv()
    assert text.splitlines()[0] == ",".join(HEADER)
    assert HEADER == ("iter", "stage", "wall_time_s", "lb", "ub", "gap", "soc_cuts", "cap_cuts",
                      "benders_cuts", "n_binary", "mip_gap", "solver_limit", "status")
    rows = list(tr)
    assert rows[1].wall_time_s > rows[0].wall_time_s  # equal stamps are nudged forward
    path = tmp_path / "t.csv"
    tr.write(path)
    back = read_trace(path)
    assert back[0]["lb"] == "-inf" and back[0]["mip_gap"] == ""
    assert strip_timing(text)[0] == [h for h in HEADER if h != "wall_time_s"]


def test_trace_rejects_non_monotone_bounds():
    tr = RunTrace()
    tr.append(row(1, 1.0, 5.0, 10.0))
    with pytest.raises(ValueError):
        tr.append(row(2, 2.0, 4.0, 10.0))
    with pytest.raises(ValueError):
        tr.append(row(2, 2.0, 5.0, 11.0))
    with pytest.raises(ValueError):
        tr.append(row(2, 2.0, 5.0, 10.0, stage="warmup"))
