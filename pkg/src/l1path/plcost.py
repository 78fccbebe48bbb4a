"""Piecewise-linear convex costs as alternating line / point segmentations.

A cost with breakpoints a_1 < ... < a_P and slopes s_0 < ... < s_P has
2P + 1 segments indexed left to right.  Even index 2k is the open line on
(a_k, a_{k+1}) with slope s_k, odd index 2k + 1 is the point {a_{k+1}}.

Each segment acts on a coordinate z through a degenerate Gaussian message:
a line is flat with xi = -slope, a point is a point mass at its location.
Given the opposite message (m, V) on z, the decided estimate and the
condition under which it lies inside the segment are affine in (m, V).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    kind: str  # "line" or "point"
    index: int
    slope: float = 0.0  # line only
    lo: float = -np.inf  # line subdomain (lo, hi)
    hi: float = np.inf
    location: float = 0.0  # point only
    left_slope: float = 0.0  # point only: slopes of the neighbouring lines
    right_slope: float = 0.0

    @property
    def is_line(self) -> bool:
        return self.kind == "line"

    def contains(self, z: float) -> bool:
        if self.is_line:
            return self.lo < z < self.hi
        return z == self.location


@dataclass(frozen=True)
class SegmentGaussParams:
    """Degenerate message of a segment: flat with xi (W = 0) or point at m (V = 0)."""

    kind: str
    value: float

    @property
    def is_point(self) -> bool:
        return self.kind == "point"

    @classmethod
    def flat(cls, xi: float) -> "SegmentGaussParams":
        return cls("flat", float(xi))

    @classmethod
    def point(cls, m: float) -> "SegmentGaussParams":
        return cls("point", float(m))


@dataclass(frozen=True)
class Inequality:
    """a_m * m + a_V * V + a_0 >= 0 (strict for line bounds).

    ``side`` is -1 when violating it moves the estimate to the segment on
    the left and +1 for the right.
    """

    a_m: float
    a_V: float
    a_0: float
    strict: bool
    side: int

    def value(self, m, V):
        return self.a_m * m + self.a_V * V + self.a_0

    def canonical_value(self, xi, W):
        # multiplied through by W >= 0, valid in the limit W -> 0 too
        return self.a_m * xi + self.a_V + self.a_0 * W


@dataclass(frozen=True)
class SegmentedCost:
    breakpoints: np.ndarray
    slopes: np.ndarray
    offset: float = 0.0  # value at the first breakpoint (or at 0 if there is none)

    def __post_init__(self):
        bp, sl = self.breakpoints, self.slopes
        if bp.ndim != 1 or sl.ndim != 1 or sl.size != bp.size + 1:
            raise CostError("need P breakpoints and P + 1 slopes")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(sl))):
            raise CostError("breakpoints and slopes must be finite")
        if np.any(np.diff(bp) <= 0):
            raise CostError("breakpoints must be strictly increasing")
        if np.any(np.diff(sl) <= 0):
            raise CostError("slopes must be strictly increasing (convexity)")

    @classmethod
    def from_slopes(cls, breakpoints: Sequence[float], slopes: Sequence[float],
                    offset: float = 0.0) -> "SegmentedCost":
        """Build from lists, merging breakpoints where the slope does not change."""
        bp = np.asarray(breakpoints, dtype=float).reshape(-1)
        sl = np.asarray(slopes, dtype=float).reshape(-1)
        if sl.size != bp.size + 1:
            raise CostError(f"{bp.size} breakpoints need {bp.size + 1} slopes, got {sl.size}")
        if np.any(np.diff(bp) <= 0):
            raise CostError("breakpoints must be strictly increasing")
        if np.any(np.diff(sl) < 0):
            raise CostError("slope sequence is not convex")
        keep = np.diff(sl) > 0
        nb, ns = bp[keep], np.concatenate([sl[:1], sl[1:][keep]])
        anchor = nb[0] if nb.size else 0.0
        value0 = float(_eval_raw(bp, sl, offset, anchor))
        return cls(nb, ns, value0)

    @property
    def n_segments(self) -> int:
        return 2 * self.breakpoints.size + 1

    def segment(self, j: int) -> Segment:
        if not 0 <= j < self.n_segments:
            raise IndexError(f"segment {j} out of range")
        bp, sl = self.breakpoints, self.slopes
        k = j // 2
        if j % 2 == 0:
            lo = bp[k - 1] if k > 0 else -np.inf
            hi = bp[k] if k < bp.size else np.inf
            return Segment("line", j, slope=float(sl[k]), lo=float(lo), hi=float(hi))
        return Segment("point", j, location=float(bp[k]), left_slope=float(sl[k]),
                       right_slope=float(sl[k + 1]))

    @property
    def segments(self) -> list:
        return [self.segment(j) for j in range(self.n_segments)]

    def shifted(self, delta: float) -> "SegmentedCost":
        """z -> cost(z - delta)."""
        return SegmentedCost(self.breakpoints + delta, self.slopes.copy(), self.offset)

    def __call__(self, z):
        return self.eval(z)

    def eval(self, z):
        return _eval_raw(self.breakpoints, self.slopes, self.offset, np.asarray(z, dtype=float))

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "slopes": self.slopes.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentedCost":
        return cls.from_slopes(d["breakpoints"], d["slopes"], d.get("offset", 0.0))


def _eval_raw(bp, sl, offset, z):
    if bp.size == 0:
        return offset + sl[0] * z
    vals = offset + np.concatenate([[0.0], np.cumsum(sl[1:-1] * np.diff(bp))])
    # convex piecewise linear = max of its affine pieces
    pieces = [vals[0] + sl[0] * (z - bp[0])]
    pieces += [vals[k] + sl[k + 1] * (z - bp[k]) for k in range(bp.size)]
    return np.max(np.stack(pieces), axis=0)


def make_l1(center: float = 0.0) -> SegmentedCost:
    return SegmentedCost.from_slopes([center], [-1.0, 1.0])


def make_hinge1(a: float = 0.0) -> SegmentedCost:
    """max(a - z, 0)."""
    return SegmentedCost.from_slopes([a], [-1.0, 0.0])


def make_hinge2(b: float = 0.0) -> SegmentedCost:
    """max(z - b, 0)."""
    return SegmentedCost.from_slopes([b], [0.0, 1.0])


def make_vapnik(a: float, b: float) -> SegmentedCost:
    """|z - a| + |z - b| - (b - a): slopes -2, 0, +2 and zero on [a, b]."""
    if not a < b:
        raise CostError(f"Vapnik loss needs a < b, got a={a}, b={b}")
    return SegmentedCost.from_slopes([a, b], [-2.0, 0.0, 2.0])


def make_custom(points: Sequence[tuple], offset: float = 0.0) -> SegmentedCost:
    """Cost from (location, left_slope, right_slope) triples.

    Consecutive triples must agree on the slope between them; a point
    without a slope change is rejected.
    """
    if not points:
        raise CostError("make_custom needs at least one point")
    locs, slopes = [], []
    for i, (a, sl, sr) in enumerate(points):
        if sr == sl:
            raise CostError(f"point {i} at {a} has no slope change")
        if sr < sl:
            raise CostError(f"point {i} at {a} is concave ({sl} -> {sr})")
        if slopes and slopes[-1] != sl:
            raise CostError(f"slope mismatch between point {i - 1} and point {i}")
        if not slopes:
            slopes.append(float(sl))
        locs.append(float(a))
        slopes.append(float(sr))
    return SegmentedCost.from_slopes(locs, slopes, offset)


def segment_params(seg: Segment) -> SegmentGaussParams:
    if seg.is_line:
        return SegmentGaussParams.flat(-seg.slope)
    return SegmentGaussParams.point(seg.location)


def locate(cost: SegmentedCost, z: float, tol: float = 0.0) -> int:
    """Index of the segment containing z; within ``tol`` of a breakpoint counts as the point."""
    bp = cost.breakpoints
    if bp.size:
        k = int(np.argmin(np.abs(bp - z)))
        if abs(bp[k] - z) <= tol:
            return 2 * k + 1
    return 2 * int(np.searchsorted(bp, z, side="left"))


def decide(seg: Segment, mb: float, Vb: float) -> float:
    """Estimate maximizing exp(-cost) times N(z; mb, Vb) when restricted to the segment's message."""
    if seg.is_line:
        return mb - seg.slope * Vb
    return seg.location


def conditions(seg: Segment) -> list:
    """Affine inequalities in (mb, Vb) under which the decided estimate lies in the segment."""
    if seg.is_line:
        out = []
        if np.isfinite(seg.lo):
            out.append(Inequality(1.0, -seg.slope, -seg.lo, True, -1))
        if np.isfinite(seg.hi):
            out.append(Inequality(-1.0, seg.slope, seg.hi, True, +1))
        return out
    a = seg.location
    return [Inequality(1.0, -seg.left_slope, -a, False, -1),
            Inequality(-1.0, seg.right_slope, a, False, +1)]


def in_subdomain_condition(seg: Segment, mb: float, Vb: float) -> bool:
    for ineq in conditions(seg):
        v = ineq.value(mb, Vb)
        if v < 0 or (ineq.strict and v == 0):
            return False
    return True


def decide_cost(cost: SegmentedCost, mb: float, Vb: float) -> tuple:
    """(segment index, estimate) for the unique segment whose condition holds."""
    for seg in cost.segments:
        if in_subdomain_condition(seg, mb, Vb):
            return seg.index, decide(seg, mb, Vb)
    raise CostError("no segment condition holds")  # unreachable for Vb >= 0
