"""Supporting-hyperplane cuts for the line-capacity disk and the rotated SOC,
plus the pool that filters near-parallel duplicates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

SOC = "soc"
CAP = "cap"
BENDERS = "benders"


class CutError(ValueError):
    pass


@dataclass(frozen=True)
class Cut:
    """Linear inequality ``sum coeffs[i]*v[i] <= rhs``.

    ``key`` names the constraint the cut approximates: (line, t) for soc,
    (line, direction, t) for cap and (t,) for benders. Cuts on one key always
    list the same ids in the same order, so their unit directions (taken over
    the coefficients and rhs together) are directly comparable.
    """

    kind: str
    coeffs: Mapping[int, float]
    rhs: float
    key: tuple = ()
    iteration: int = 0
    stage: str = ""
    unit_direction: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.coeffs:
            raise CutError("cut needs at least one coefficient")
        if self.unit_direction is None:
            vec = np.array([*self.coeffs.values(), -self.rhs], dtype=float)
            object.__setattr__(self, "unit_direction", vec / np.linalg.norm(vec))

    def ids(self) -> list[int]:
        return list(self.coeffs)

    def lhs(self, v) -> float:
        return float(sum(a * v[i] for i, a in self.coeffs.items()))

    def violation(self, v) -> float:
        return self.lhs(v) - self.rhs

    def relabel(self, ids: Mapping[str, int], **meta) -> "Cut":
        """Map symbolic coefficient names to column ids."""
        return Cut(self.kind, {ids[k]: a for k, a in self.coeffs.items()}, self.rhs,
                   meta.get("key", self.key), meta.get("iteration", self.iteration),
                   meta.get("stage", self.stage))


def line_capacity_cut(p_bar: float, q_bar: float, s_max: float) -> Cut:
    """Tangent p_bar*p + q_bar*q <= S*||(p_bar, q_bar)|| at a point outside the disk.

    Coefficients use the symbolic names ``"p"`` and ``"q"``.
    """
    norm = math.hypot(p_bar, q_bar)
    if not norm > s_max:
        raise CutError("capacity constraint is not violated at this point")
    return Cut(CAP, {"p": p_bar, "q": q_bar}, s_max * norm)


def soc_cut(c_nm: float, s_nm: float, c_nn: float, c_mm: float, literal_norm: bool = False) -> Cut:
    """Linearisation of c_nm^2 + s_nm^2 <= c_nn*c_mm at a violating point.

    The cone is ||(2c_nm, 2s_nm, c_nn - c_mm)|| <= c_nn + c_mm and the cut is
    4c̄c_nm + 4s̄s_nm + (c̄_nn - c̄_mm - n0)c_nn - (c̄_nn - c̄_mm + n0)c_mm <= 0
    with n0 = ||(2c̄_nm, 2s̄_nm, c̄_nn - c̄_mm)||, the gradient norm, so the
    cut is a supporting hyperplane and always separates the point.
    ``literal_norm`` uses n0 = ||(2c̄_nm, 2s̄_nm, c̄_nn, c̄_mm)|| instead;
    that cut is still valid but may fail to separate when c̄_nn ~ c̄_mm.
    Coefficients use the symbolic names ``"c"``, ``"s"``, ``"cnn"``, ``"cmm"``.
    """
    if not c_nm * c_nm + s_nm * s_nm > c_nn * c_mm:
        raise CutError("cone constraint is not violated at this point")
    if literal_norm:
        n0 = math.sqrt(4 * c_nm ** 2 + 4 * s_nm ** 2 + c_nn ** 2 + c_mm ** 2)
    else:
        n0 = math.sqrt(4 * c_nm ** 2 + 4 * s_nm ** 2 + (c_nn - c_mm) ** 2)
    if n0 == 0.0:
        raise CutError("degenerate generating point")
    d = c_nn - c_mm
    coeffs = {"c": 4 * c_nm, "s": 4 * s_nm, "cnn": d - n0, "cmm": -(d + n0)}
    return Cut(SOC, coeffs, 0.0)


def select_violated(residuals: Mapping[Hashable, float], eps_tol: float, p_cut: float) -> list:
    """Keys with residual > eps_tol, most violated first, keeping ceil(p_cut * count)."""
    if not 0 < p_cut <= 1:
        raise ValueError("p_cut must lie in (0, 1]")
    bad = [(k, r) for k, r in residuals.items() if r > eps_tol]
    bad.sort(key=lambda kr: (-kr[1], kr[0]))
    keep = math.ceil(round(p_cut * len(bad), 9))
    return [k for k, _ in bad[:keep]]


@dataclass
class CutPool:
    eps_par: float = 5e-6
    cuts: dict = field(default_factory=lambda: {SOC: [], CAP: [], BENDERS: []})
    _dirs: dict = field(default_factory=dict, repr=False)
    rejected: int = 0

    def try_add(self, cut: Cut, force: bool = False) -> bool:
        """Store ``cut`` unless it is eps_par-parallel to a stored cut of the same
        kind on the same constraint. ``force`` skips the parallelism test."""
        slot = (cut.kind, cut.key)
        for d in () if force else self._dirs.get(slot, ()):
            if float(d @ cut.unit_direction) > 1.0 - self.eps_par:
                self.rejected += 1
                return False
        self._dirs.setdefault(slot, []).append(cut.unit_direction)
        self.cuts.setdefault(cut.kind, []).append(cut)
        return True

    def count(self, kind: str) -> int:
        return len(self.cuts.get(kind, ()))

    def all(self, kinds=(SOC, CAP, BENDERS)) -> list[Cut]:
        return [c for k in kinds for c in self.cuts.get(k, ())]

    def __len__(self) -> int:
        return sum(len(v) for v in self.cuts.values())
