import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from make_fixtures import single_bus  # noqa: F401  (re-exported for tests)
from pioia.formulation import Cone, ModelSpec
from pioia.model import load_instance

DATA = Path(__file__).parent / "data"
GOLDEN_SEEDS = range(6)


def tiny_spec(obj, lb, ub, rows=(), cones=(), integer=(), offset=0.0) -> ModelSpec:
    """Hand-written model; ``rows`` holds (coeff list, lo, hi)."""
    n = len(obj)
    A = sp.csr_matrix(np.array([r[0] for r in rows], dtype=float).reshape(len(rows), n))
    return ModelSpec(index=None, lb=np.array(lb, float), ub=np.array(ub, float),
                     obj=np.array(obj, float), obj_offset=offset, A=A,
                     row_lo=np.array([r[1] for r in rows], float),
                     row_hi=np.array([r[2] for r in rows], float),
                     row_tags=tuple("row" for _ in rows), cones=tuple(cones),
                     integer=frozenset(integer))


def disk(a, b, radius):
    return Cone("disk", (a, b), radius=radius)


def all_off_instance(inst):
    """Same data with every unit initially off and free to stay off."""
    gens = tuple(replace(g, u0=0, p0=0.0, init_up_time=0, init_down_time=0) for g in inst.generators)
    return replace(inst, generators=gens)


@pytest.fixture(scope="session")
def goldens():
    return json.loads((DATA / "goldens.json").read_text())


@pytest.fixture(scope="session")
def synth():
    return {s: load_instance(DATA / f"synth-{s}.json") for s in GOLDEN_SEEDS}


@pytest.fixture(scope="session")
def ring3():
    return load_instance(DATA / "ring3.json")


@pytest.fixture
def zero_inst():
    return single_bus()


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion(request):
    """Records one PASS/FAIL line per acceptance criterion."""
    lines = []

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    yield record
    if not lines:
        ACCEPTANCE.append(f"FAIL  {request.node.name}: raised before reporting")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
