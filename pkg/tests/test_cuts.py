import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from pioia.cuts import (BENDERS, CAP, SOC, Cut, CutError, CutPool, line_capacity_cut,
                        select_violated, soc_cut)


def soc_eval(cut, c, s, cnn, cmm):
    k = cut.coeffs
    return k["c"] * c + k["s"] * s + k["cnn"] * cnn + k["cmm"] * cmm - cut.rhs


def cone_points(rng, n, boundary_share=0.5):
    cnn, cmm = rng.uniform(0, 2, n), rng.uniform(0, 2, n)
    rad = np.sqrt(cnn * cmm) * np.where(rng.random(n) < boundary_share, 1.0, np.sqrt(rng.random(n)))
    ang = rng.uniform(0, 2 * np.pi, n)
    return rad * np.cos(ang), rad * np.sin(ang), cnn, cmm


def test_capacity_cut_axis():
    cut = line_capacity_cut(2.0, 0.0, 1.0)
    assert cut.coeffs == {"p": 2.0, "q": 0.0} and cut.rhs == pytest.approx(2.0)
    assert cut.violation({"p": 2.0, "q": 0.0}) > 0
    assert cut.violation({"p": 1.0, "q": 0.0}) == pytest.approx(0.0)


def test_capacity_cut_diagonal():
    cut = line_capacity_cut(1.0, 1.0, 1.0)
    assert cut.rhs == pytest.approx(math.sqrt(2))


def test_capacity_cut_rejects_interior_point():
    with pytest.raises(CutError):
        line_capacity_cut(0.5, 0.5, 1.0)


def test_capacity_cut_sampling_validity():
    rng = np.random.default_rng(1)
    S = 0.8
    ang = rng.uniform(0, 2 * np.pi, 100)
    cuts = [line_capacity_cut(r * math.cos(a), r * math.sin(a), S)
            for r, a in zip(rng.uniform(1.01 * S, 3 * S, 100), ang)]
    rad = S * np.sqrt(rng.random(10_000))
    th = rng.uniform(0, 2 * np.pi, 10_000)
    p, q = rad * np.cos(th), rad * np.sin(th)
    worst = max(float(np.max(c.coeffs["p"] * p + c.coeffs["q"] * q - c.rhs)) for c in cuts)
    assert worst <= 1e-9


def test_soc_cut_rejects_boundary_point():
    with pytest.raises(CutError):
        soc_cut(1.0, 0.0, 1.0, 1.0)


def test_soc_cut_example_literal_norm():
    n0 = math.sqrt(4.5)
    cut = soc_cut(1.0, 0.0, 0.5, 0.5, literal_norm=True)
    assert cut.coeffs["c"] == pytest.approx(4.0)
    assert cut.coeffs["cnn"] == pytest.approx(-n0) and cut.coeffs["cmm"] == pytest.approx(-n0)
    assert soc_eval(cut, 1.0, 0.0, 0.5, 0.5) == pytest.approx(4 - n0)
    assert soc_eval(cut, 1.0, 0.0, 1.0, 1.0) == pytest.approx(4 - 2 * n0)


def test_soc_cut_tangent_norm_is_supporting():
    cut = soc_cut(1.0, 0.0, 0.5, 0.5)
    # n0 = ||(2, 0, 0)|| = 2: 4c - 2cnn - 2cmm <= 0, tight on the ray c = cnn = cmm
    assert [cut.coeffs[k] for k in ("c", "s", "cnn", "cmm")] == pytest.approx([4, 0, -2, -2])
    assert soc_eval(cut, 1.0, 0.0, 1.0, 1.0) == pytest.approx(0.0)
    assert soc_eval(cut, 1.0, 0.0, 0.5, 0.5) > 0


@pytest.mark.parametrize("literal", [False, True])
def test_soc_cut_sampling_validity(literal):
    rng = np.random.default_rng(2)
    cuts = []
    while len(cuts) < 100:
        c, s = 1.5 * rng.normal(size=2)
        cnn, cmm = rng.uniform(0, 2, size=2)
        if c * c + s * s > cnn * cmm:
            cuts.append(soc_cut(c, s, cnn, cmm, literal))
    pts = cone_points(rng, 10_000)
    worst = max(float(np.max(soc_eval(cut, *pts))) for cut in cuts)
    assert worst <= 1e-9


@settings(max_examples=200, deadline=None)
@given(c=st.floats(-3, 3), s=st.floats(-3, 3), cnn=st.floats(0, 3), cmm=st.floats(0, 3))
def test_soc_cut_separates_its_point(c, s, cnn, cmm):
    assume(c * c + s * s > cnn * cmm + 1e-9)
    cut = soc_cut(c, s, cnn, cmm)
    assert soc_eval(cut, c, s, cnn, cmm) > 0
    assert np.linalg.norm(cut.unit_direction) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(p=st.floats(-5, 5), q=st.floats(-5, 5), S=st.floats(0.1, 2))
def test_capacity_cut_separates_its_point(p, q, S):
    assume(math.hypot(p, q) > S * (1 + 1e-9))
    cut = line_capacity_cut(p, q, S)
    assert cut.violation({"p": p, "q": q}) > 0


def test_select_violated_examples():
    res = {"a": 0.5, "b": 0.2, "c": 1e-7}
    assert select_violated(res, 1e-5, 0.55) == ["a", "b"]
    assert select_violated({"a": 1e-6}, 1e-5, 0.55) == []
    many = {i: float(i + 1) for i in range(100)}
    out = select_violated(many, 1e-5, 0.55)
    assert len(out) == 55 and out == sorted(out, key=lambda k: -many[k])


def test_select_violated_ties_by_key():
    res = {(1, 0): 0.3, (0, 2): 0.3, (0, 1): 0.3}
    assert select_violated(res, 0.0, 1.0) == [(0, 1), (0, 2), (1, 0)]


def test_select_violated_bad_fraction():
    with pytest.raises(ValueError):
        select_violated({}, 0.0, 0.0)


def test_cut_needs_coefficients():
    with pytest.raises(CutError):
        Cut(SOC, {}, 0.0)


def test_pool_rejects_duplicate():
    pool = CutPool(5e-6)
    cut = Cut(SOC, {0: 1.0, 1: 2.0}, 0.0, key=(0, 0))
    assert pool.try_add(cut)
    assert not pool.try_add(cut)
    assert pool.count(SOC) == 1 and pool.rejected == 1


def test_pool_accepts_orthogonal():
    pool = CutPool(5e-6)
    assert pool.try_add(Cut(SOC, {0: 1.0, 1: 0.0}, 0.0, key=(0, 0)))
    assert pool.try_add(Cut(SOC, {0: 0.0, 1: 1.0}, 0.0, key=(0, 0)))


@pytest.mark.parametrize("cosine, accepted", [(1 - 2.5e-6, False), (1 - 1e-5, True)])
def test_pool_parallel_threshold(cosine, accepted):
    pool = CutPool(5e-6)
    pool.try_add(Cut(CAP, {0: 1.0, 1: 0.0}, 0.0, key=(0, 0, 0)))
    other = Cut(CAP, {0: cosine, 1: math.sqrt(1 - cosine ** 2)}, 0.0, key=(0, 0, 0))
    assert pool.try_add(other) is accepted


def test_pool_scope_is_kind_and_key():
    pool = CutPool(5e-6)
    coeffs = {0: 1.0, 1: 1.0}
    assert pool.try_add(Cut(SOC, coeffs, 0.0, key=(0, 0)))
    assert pool.try_add(Cut(SOC, coeffs, 0.0, key=(0, 1)))
    assert pool.try_add(Cut(BENDERS, coeffs, 0.0, key=(0, 0)))
    assert len(pool) == 3


def test_pool_force_skips_filter():
    pool = CutPool(5e-6)
    cut = Cut(SOC, {0: 1.0}, 1.0, key=(0, 0))
    pool.try_add(cut)
    assert pool.try_add(cut, force=True)
    assert pool.count(SOC) == 2


def test_relabel_maps_names_to_ids():
    cut = line_capacity_cut(2.0, 0.0, 1.0).relabel({"p": 7, "q": 9}, key=(1, 0, 3), iteration=4)
    assert cut.coeffs == {7: 2.0, 9: 0.0} and cut.key == (1, 0, 3) and cut.iteration == 4
