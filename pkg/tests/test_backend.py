import math

import numpy as np
import pytest

from conftest import disk, single_bus, tiny_spec
from pioia.backend import (GAP_REACHED, INFEASIBLE, OPTIMAL, SolveControls, get_backend,
                           point_violation, restrict_integrality, solve_continuous, solve_mixed)
from pioia.formulation import Cone, build_inner, build_outer_base
from pioia.model import CommitmentSchedule

INF = math.inf
BACKENDS = ["highs", "reference"]
ENGINES = ["clarabel", "cvxopt"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_lp_value_and_dual(backend):
    spec = tiny_spec([1.0], [-INF], [INF], rows=[([1.0], 3.0, INF)])
    out = solve_continuous(spec, backend=backend)
    assert out.status == OPTIMAL
    assert out.objective == pytest.approx(3.0)
    assert out.duals[0] == pytest.approx(1.0)


@pytest.mark.parametrize("engine", ENGINES)
def test_disk_cone(engine):
    spec = tiny_spec([-1.0, 0.0], [-INF, -INF], [INF, INF], cones=[disk(0, 1, 1.0)])
    out = solve_continuous(spec, conic=engine)
    assert out.status == OPTIMAL
    assert out.objective == pytest.approx(-1.0, abs=1e-7)
    assert out.primal[0] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("engine", ENGINES)
def test_rotated_cone(engine):
    # max a s.t. a^2 <= c*d, c = 1, d = 4  ->  a = 2
    spec = tiny_spec([-1.0, 0.0, 0.0, 0.0], [-INF, 0.0, 1.0, 4.0], [INF, 0.0, 1.0, 4.0],
                     cones=[Cone("rsoc", (0, 1, 2, 3))])
    out = solve_continuous(spec, conic=engine)
    assert out.objective == pytest.approx(-2.0, abs=1e-6)


@pytest.mark.parametrize("engine", ENGINES)
def test_conic_dual_is_sensitivity(engine):
    # min x + y s.t. x^2 + y^2 <= 1 (disk), x + 2y = b: finite-difference the dual
    def value(b):
        spec = tiny_spec([1.0, 1.0], [-INF, -INF], [INF, INF], rows=[([1.0, 2.0], b, b)],
                         cones=[disk(0, 1, 1.0)])
        return solve_continuous(spec, conic=engine)

    out, h = value(0.5), 1e-5
    fd = (value(0.5 + h).objective - value(0.5 - h).objective) / (2 * h)
    assert out.duals[0] == pytest.approx(fd, abs=1e-4)


@pytest.mark.parametrize("backend", BACKENDS)
def test_lp_equality_dual_sign(backend):
    # min 2x + 3y s.t. x + y = b, x <= 1: at b = 2 the marginal unit costs 3
    spec = tiny_spec([2.0, 3.0], [0.0, 0.0], [1.0, INF], rows=[([1.0, 1.0], 2.0, 2.0)])
    assert solve_continuous(spec, backend=backend).duals[0] == pytest.approx(3.0)


def test_zero_inner_is_zero():
    inst = single_bus(T=1)
    out = solve_continuous(build_inner(inst, CommitmentSchedule.all_off(inst)))
    assert out.objective == pytest.approx(0.0, abs=1e-7)


def test_integer_model_needs_relax_flag():
    spec = tiny_spec([1.0], [0.0], [1.0], integer=[0])
    with pytest.raises(ValueError):
        solve_continuous(spec)
    assert solve_continuous(spec, relax=True).status == OPTIMAL


@pytest.mark.parametrize("backend", BACKENDS)
def test_binary_rounds_up(backend):
    spec = tiny_spec([1.0], [0.0], [1.0], rows=[([1.0], 0.5, INF)], integer=[0])
    out = solve_mixed(spec, SolveControls(mip_gap=0.0), backend=backend)
    assert out.status == OPTIMAL and out.primal[0] == pytest.approx(1.0)
    assert out.dual_bound <= out.objective


@pytest.mark.parametrize("backend", BACKENDS)
def test_gap_contract(backend):
    # LP bound 0.5, integer optimum 1
    spec = tiny_spec([1.0, 1.0], [0.0, 0.0], [1.0, 1.0], rows=[([1.0, 1.0], 0.5, INF)], integer=[0, 1])
    out = solve_mixed(spec, SolveControls(mip_gap=0.5), backend=backend)
    assert out.has_solution and out.status in (OPTIMAL, GAP_REACHED)
    assert out.objective == pytest.approx(1.0)
    assert 0.5 - 1e-9 <= out.dual_bound <= 1.0 + 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_warm_start_bounds_result(ring3, backend):
    spec = build_outer_base(ring3)
    first = solve_mixed(spec, SolveControls(mip_gap=0.0), backend="highs")
    out = solve_mixed(spec, SolveControls(mip_gap=0.5, warm_start=first.primal), backend=backend)
    assert out.objective <= first.objective + 1e-9
    assert out.dual_bound <= first.objective + 1e-6


def test_infeasible_warm_start_is_dropped(ring3, caplog):
    spec = build_outer_base(ring3)
    out = solve_mixed(spec, SolveControls(warm_start=np.full(spec.n_vars, 7.0)))
    assert out.has_solution
    assert any("warm start infeasible" in w for w in out.warnings)
    assert "warm start infeasible" in caplog.text


def test_mixed_rejects_cones():
    spec = tiny_spec([-1.0, 0.0], [-INF, -INF], [INF, INF], cones=[disk(0, 1, 1.0)])
    with pytest.raises(ValueError):
        solve_mixed(spec)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_reported_as_status(backend):
    spec = tiny_spec([1.0], [0.0], [1.0], rows=[([1.0], 2.0, INF)], integer=[0])
    assert solve_mixed(spec, backend=backend).status == INFEASIBLE
    assert solve_continuous(spec, backend=backend, relax=True).status == INFEASIBLE


def test_restrict_integrality(ring3):
    base = build_outer_base(ring3)
    ix = base.index
    assert restrict_integrality(base, ()).integer == frozenset()
    assert restrict_integrality(base, ix.x_ids).integer == base.integer
    assert len(restrict_integrality(base, ix.generator_x_ids(0)).integer) == 3 * ring3.horizon
    with pytest.raises(ValueError, match="non-commitment"):
        restrict_integrality(base, [int(ix.p[0, 0])])


def test_integrality_monotone(ring3):
    base = build_outer_base(ring3)
    ix = base.index
    values = []
    for B in ((), ix.generator_x_ids(1), ix.x_ids):
        out = solve_mixed(restrict_integrality(base, B), SolveControls(mip_gap=0.0))
        values.append(out.objective)
    assert values[0] <= values[1] + 1e-7 <= values[2] + 2e-7


def test_reference_matches_highs_on_small_milp():
    inst = single_bus(T=3, p_load=0.4, q_load=0.1)
    spec = build_outer_base(inst)
    a = solve_mixed(spec, SolveControls(mip_gap=0.0), backend="highs")
    b = solve_mixed(spec, SolveControls(mip_gap=0.0), backend="reference")
    assert a.objective == pytest.approx(b.objective, rel=1e-8)


def test_conic_engines_agree(ring3):
    sched = CommitmentSchedule.from_u(np.ones((2, 4)), [1, 1])
    spec = build_inner(ring3, sched)
    a, b = (solve_continuous(spec, conic=e) for e in ENGINES)
    assert a.objective == pytest.approx(b.objective, rel=1e-6)
    assert point_violation(spec, a.primal, integral=False) <= 1e-6


def test_backend_env_var(monkeypatch):
    monkeypatch.setenv("PIOIA_BACKEND", "reference")
    assert get_backend().name == "reference"
    monkeypatch.delenv("PIOIA_BACKEND")
    assert get_backend().name == "highs"
    with pytest.raises(ValueError, match="unknown backend"):
        get_backend("gurobi")


def test_controls_invariants():
    with pytest.raises(ValueError):
        SolveControls(mip_gap=-0.1)
    with pytest.raises(ValueError):
        SolveControls(time_limit=0.0)
