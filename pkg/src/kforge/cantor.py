"""Cantor sets on S^1, composed inflations, and the fractal zero set.

A plan removes open arcs from the circle: first the complement of a base
arc, then middle arcs of a Cantor construction inside it.  Each removed arc
is a geodesic ball carrying one normal variation; supports are disjoint, so
the composed map moves every point by at most one variation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .grid import GridSpec
from .immersion import ImmersionMap, gauss_kronecker_field
from .perturbation import (
    DELTA0,
    CalibrationError,
    CalibrationReport,
    GeodesicBall,
    apply_variation,
    build_variation,
    calibrate_t,
)
from .profile import ProfileSolution

__all__ = [
    "PlanError",
    "CantorPlan",
    "FractalReport",
    "plan_cantor",
    "compose_stack",
    "verify_fractal_zero_set",
    "cantor_mask",
]

SHRINK = 0.999
MIN_GAP = 1e-6
TWO_PI = 2 * math.pi


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class CantorPlan:
    balls: tuple
    depth_of: tuple
    delta0: float
    base_arc: tuple
    ratio: float

    def __len__(self) -> int:
        return len(self.balls)

    def to_dict(self) -> dict:
        return {
            "delta0": self.delta0,
            "ratio": self.ratio,
            "base_arc": list(self.base_arc),
            "balls": [{"angle": b.angle, "radius_rad": b.radius_rad, "depth": d}
                      for b, d in zip(self.balls, self.depth_of)],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def plan_cantor(n: int = 2, depth: int = 3, ratio: float = 1 / 3, delta0: float = DELTA0,
                base_arc: Optional[float] = None, start: float = 0.0,
                shrink: float = SHRINK) -> CantorPlan:
    """Middle-``ratio`` Cantor construction on the arc ``[start, start + base_arc]``.

    ``base_arc`` defaults to ``2 pi - 2 delta0`` so the complement ball has
    the largest admissible radius.
    """
    if n != 2:
        raise PlanError("Cantor planning is implemented on S^1 only (n = 2)")
    if depth < 1:
        raise PlanError(f"depth must be >= 1, got {depth}")
    if not 0 < ratio < 1:
        raise PlanError(f"ratio must lie in (0, 1), got {ratio}")
    if base_arc is None:
        base_arc = TWO_PI - 2 * delta0
    if not 0 < base_arc < TWO_PI:
        raise PlanError(f"base arc must lie in (0, 2 pi), got {base_arc}")

    specs = [(start + base_arc + 0.5 * (TWO_PI - base_arc), 0.5 * (TWO_PI - base_arc), 0)]
    intervals = [(start, start + base_arc)]
    for j in range(1, depth + 1):
        nxt = []
        for a, b in intervals:
            length = b - a
            mid = 0.5 * (a + b)
            specs.append((mid, 0.5 * ratio * length, j))
            side = 0.5 * (1 - ratio) * length
            nxt.extend([(a, a + side), (b - side, b)])
        intervals = nxt

    balls = []
    for i, (angle, radius, j) in enumerate(specs):
        radius *= shrink
        if radius > delta0:
            raise PlanError(
                f"ball {i} (depth {j}) has radius {radius:.6g} > delta0 = {delta0}; "
                "use a smaller ratio or base arc, or a larger delta0")
        angle = math.remainder(angle, TWO_PI)
        balls.append(GeodesicBall.on_circle(angle, radius, delta0))
    for i in range(len(balls)):
        for k in range(i + 1, len(balls)):
            if balls[i].gap(balls[k]) < MIN_GAP:
                raise PlanError(f"balls {i} and {k} are closer than {MIN_GAP} rad")
    return CantorPlan(tuple(balls), tuple(s[2] for s in specs), float(delta0),
                      (float(start), float(start + base_arc)), float(ratio))


def compose_stack(sol: ProfileSolution, plan: CantorPlan, upto: Optional[int] = None,
                  grid: GridSpec = GridSpec(1024, 256), l0: float = 1.0,
                  alpha0: Optional[float] = None, t_init: Optional[float] = None):
    """Calibrate and stack the variations of the first ``upto`` balls.

    Returns ``(map, reports)``.
    """
    p = sol.params
    if p.n != 2:
        raise PlanError(f"plans live on S^1, so the profile needs n = 2, got n={p.n}")
    if p.k != p.n - 1:
        raise CalibrationError(f"composition needs k = n-1, got k={p.k}, n={p.n}")
    upto = len(plan) if upto is None else upto
    if not 0 <= upto <= len(plan):
        raise PlanError(f"upto must lie in [0, {len(plan)}], got {upto}")
    if alpha0 is None:
        alpha0 = p.alpha + 0.1 * (p.beta - p.alpha)
    base = ImmersionMap(sol)
    m = base
    reports: list[CalibrationReport] = []
    for i, ball in enumerate(plan.balls[:upto]):
        var = build_variation(ball, l0, alpha0, p.beta, 1, alpha=p.alpha)
        try:
            t, rep = calibrate_t(base, var, grid, t_init=t_init)
        except CalibrationError as exc:
            raise CalibrationError(f"ball {i}: {exc}", exc.worst) from exc
        m = apply_variation(m, var, t)
        reports.append(rep)
    return m, reports


def cantor_mask(plan: CantorPlan, upto: int, angles: np.ndarray) -> np.ndarray:
    """True where the angle lies in F_upto (outside the first ``upto`` balls)."""
    angles = np.asarray(angles, dtype=float)
    keep = np.ones(angles.shape, dtype=bool)
    for ball in plan.balls[:upto]:
        diff = np.abs(np.remainder(angles - ball.angle + math.pi, TWO_PI) - math.pi)
        keep &= diff >= ball.radius_rad
    return keep


@dataclass
class FractalReport:
    upto: int
    tol: float
    counts: dict
    expected_zero_ok: bool
    interior_positive_ok: bool
    negative_count: int
    hausdorff_cells: float
    max_cells: float
    delta0: float
    zero_mask: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return (self.expected_zero_ok and self.interior_positive_ok and self.negative_count == 0
                and self.hausdorff_cells <= self.max_cells)

    def to_dict(self) -> dict:
        return {"upto": self.upto, "tol": self.tol, "counts": self.counts,
                "expected_zero_ok": self.expected_zero_ok,
                "interior_positive_ok": self.interior_positive_ok,
                "negative_count": self.negative_count,
                "hausdorff_cells": self.hausdorff_cells, "max_cells": self.max_cells,
                "delta0": self.delta0, "ok": self.ok}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _one_sided_hausdorff(src: np.ndarray, dst: np.ndarray, nu: int, nv: int) -> float:
    """max over ``src`` of the distance to ``dst``, in index units, periodic in u."""
    if not src.any():
        return 0.0
    if not dst.any():
        return math.inf
    iu, iv = np.nonzero(dst)
    box = np.array([nu, 4.0 * nv])
    tree = cKDTree(np.stack([iu, iv + nv], axis=-1).astype(float), boxsize=box)
    su, sv = np.nonzero(src)
    dist, _ = tree.query(np.stack([su, sv + nv], axis=-1).astype(float))
    return float(dist.max())


def verify_fractal_zero_set(m: ImmersionMap, plan: CantorPlan, upto: int,
                            grid: GridSpec = GridSpec(1024, 256), tol: float = 1e-10,
                            max_cells: float = 2.0, H: Optional[np.ndarray] = None) -> FractalReport:
    """Compare the measured zero set of ``m`` with ``F_upto x {|w|^2 <= alpha}``."""
    if grid.nu < 512:
        raise ValueError("fractal verification needs at least 512 points around the circle")
    pts = grid.points()
    if H is None:
        H = gauss_kronecker_field(m, pts)
    alpha = m.profile.params.alpha
    u, v = pts[..., 0], pts[..., 1]
    zero = np.abs(H) <= tol
    expected = cantor_mask(plan, upto, u) & (v**2 <= alpha)

    interior = np.zeros(u.shape, dtype=bool)
    margin = grid.du
    for ball in plan.balls[:upto]:
        diff = np.abs(np.remainder(u - ball.angle + math.pi, TWO_PI) - math.pi)
        interior |= diff < ball.radius_rad - margin

    return FractalReport(
        upto=upto, tol=tol,
        counts={"zero": int(zero.sum()), "positive": int((H > tol).sum()),
                "negative": int((H < -tol).sum()), "expected_zero": int(expected.sum())},
        expected_zero_ok=bool(np.all(zero[expected])),
        interior_positive_ok=bool(np.all(H[interior] > tol)),
        negative_count=int((H < -tol).sum()),
        hausdorff_cells=_one_sided_hausdorff(zero, expected, grid.nu, grid.nv),
        max_cells=max_cells, delta0=plan.delta0, zero_mask=zero, H=H)
