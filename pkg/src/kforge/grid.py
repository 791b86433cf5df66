"""Chart grids on S^n.

For ``n = 2`` the chart is ``(u, v) -> x = sqrt(1 - v^2) (cos u, sin u), y = v``
with ``u`` periodic and ``v`` kept ``margin`` away from the poles.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = ["GridSpec", "worker_count"]


def worker_count() -> int:
    """Worker cap from ``KFORGE_THREADS`` (default: CPU count)."""
    raw = os.environ.get("KFORGE_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ValueError(f"KFORGE_THREADS must be an integer, got {raw!r}") from exc


@dataclass(frozen=True)
class GridSpec:
    nu: int = 512
    nv: int = 256
    margin: float = 1e-3

    def __post_init__(self):
        if self.nu < 8 or self.nv < 8:
            raise ValueError(f"grid resolution must be >= 8 per dimension, got {(self.nu, self.nv)}")
        if not 0 < self.margin < 0.1:
            raise ValueError(f"margin must lie in (0, 0.1), got {self.margin}")

    @property
    def du(self) -> float:
        return 2 * math.pi / self.nu

    @property
    def dv(self) -> float:
        return (2 - 2 * self.margin) / (self.nv - 1)

    @property
    def u(self) -> np.ndarray:
        return np.arange(self.nu) * self.du

    @property
    def v(self) -> np.ndarray:
        return np.linspace(-1 + self.margin, 1 - self.margin, self.nv)

    def points(self) -> np.ndarray:
        """Chart points, shape ``(nu, nv, 2)``."""
        uu, vv = np.meshgrid(self.u, self.v, indexing="ij")
        return np.stack([uu, vv], axis=-1)

    def region_mask(self, region: str = "sphere", alpha: float | None = None,
                    angle: float | None = None, radius: float | None = None) -> np.ndarray:
        """Boolean ``(nu, nv)`` filter: whole ``sphere``, ``cylinder`` band or ``ball`` shadow.

        The cylinder band is ``v^2 <= alpha``; the ball shadow is the set of
        columns within ``radius`` of ``angle`` (all heights).
        """
        pts = self.points()
        if region == "sphere":
            return np.ones(pts.shape[:2], dtype=bool)
        if region == "cylinder":
            if alpha is None:
                raise ValueError("cylinder region needs alpha")
            return pts[..., 1] ** 2 <= alpha
        if region == "ball":
            if angle is None or radius is None:
                raise ValueError("ball region needs angle and radius")
            diff = np.abs(np.remainder(pts[..., 0] - angle + math.pi, 2 * math.pi) - math.pi)
            return diff < radius
        raise ValueError(f"unknown region {region!r}")

    def to_dict(self) -> dict:
        return {"nu": self.nu, "nv": self.nv, "margin": self.margin}
