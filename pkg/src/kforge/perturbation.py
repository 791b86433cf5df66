"""Normal variations that inflate the flat cylinder over a geodesic ball.

A variation moves each point q of the base immersion along its normal,
``F_t(q) = q + t f(q) N(q)``, with ``f(z, w) = l0 lambda(d(z)) sigma(w)``
supported over ``U x {|w|^2 < beta}``.  ``d`` is half the squared geodesic
distance on S^{n-1} from ``z/|z|`` to the ball center.

The first variation of the Gauss-Kronecker curvature is computed exactly.
With ``S = -I^{-1} II`` one has ``dS/dt = -Hess f - f S^2`` at t = 0, so

    d/dt det S = -tr(adj S . Hess f) - f det S tr S,

and on a hypersurface of revolution the eigenframe of S is the angular
frame plus the meridian, which reduces the trace to closed forms in
lambda, sigma and the profile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import GridSpec
from .immersion import (
    FD_H,
    ImmersionMap,
    SpherePoint,
    gauss_kronecker_field,
    shape_from_derivatives,
    fd_derivatives,
    sphere_chart,
)
from .profile import ProfileSolution
from .smoothfn import Formula, Product, SmoothFn, Step, make_step

__all__ = [
    "DELTA0",
    "PerturbationError",
    "UnsupportedCodimensionError",
    "CalibrationError",
    "GeodesicBall",
    "NormalVariation",
    "CalibrationReport",
    "geodesic_quantities",
    "build_variation",
    "apply_variation",
    "det_rate_analytic",
    "det_rate_fd",
    "calibrate_sign",
    "meridian_alignment",
    "calibrate_t",
]

DELTA0 = 0.15
NEG_TOL = 1e-12


class PerturbationError(ValueError):
    pass


class UnsupportedCodimensionError(PerturbationError):
    pass


class CalibrationError(PerturbationError):
    def __init__(self, message: str, worst: Optional[list] = None):
        super().__init__(message)
        self.worst = worst or []


@dataclass(frozen=True)
class GeodesicBall:
    """Open geodesic ball on S^{n-1} (center in R^n, radius in radians)."""

    center: tuple
    radius_rad: float
    delta0: float = DELTA0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise PerturbationError("ball center must be a vector in R^n, n >= 2")
        if abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise PerturbationError(f"ball center is not a unit vector (|c| = {np.linalg.norm(c)})")
        if not 0 < self.radius_rad <= self.delta0:
            raise PerturbationError(
                f"ball radius {self.radius_rad} outside (0, delta0 = {self.delta0}]")
        object.__setattr__(self, "center", tuple(float(x) for x in c))

    @classmethod
    def on_circle(cls, angle: float, radius_rad: float, delta0: float = DELTA0) -> "GeodesicBall":
        return cls((math.cos(angle), math.sin(angle)), radius_rad, delta0)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def angle(self) -> float:
        """Polar angle of the center (meaningful for n = 2)."""
        return math.atan2(self.center[1], self.center[0])

    @property
    def d_cap(self) -> float:
        return 0.5 * self.radius_rad**2

    def distance(self, other: "GeodesicBall") -> float:
        return float(np.arccos(np.clip(self.c @ other.c, -1.0, 1.0)))

    def gap(self, other: "GeodesicBall") -> float:
        return self.distance(other) - self.radius_rad - other.radius_rad

    def intersects(self, other: "GeodesicBall") -> bool:
        return self.gap(other) <= 0

    def to_dict(self) -> dict:
        return {"center": list(self.center), "angle": self.angle,
                "radius_rad": self.radius_rad, "d_cap": self.d_cap, "delta0": self.delta0}


def _half_sq_distance(zdir: np.ndarray, c: np.ndarray) -> np.ndarray:
    cosang = np.clip(zdir @ c, -1.0, 1.0)
    return 0.5 * np.arccos(cosang) ** 2


def _lap_d(d: np.ndarray, m: int) -> np.ndarray:
    """Laplacian of d on the round S^m, ``1 + (m-1) rho cot rho`` with rho = sqrt(2d)."""
    d = np.asarray(d, dtype=float)
    rho = np.sqrt(2 * d)
    out = np.full(d.shape, float(m))
    if m > 1:
        nz = rho > 1e-8
        out[nz] = 1 + (m - 1) * rho[nz] / np.tan(rho[nz])
        out[~nz] = 1 + (m - 1) * (1 - rho[~nz] ** 2 / 3)
    return out


def geodesic_quantities(z_dir, c, m: Optional[int] = None):
    """``(d, |grad d|^2, Laplacian d)`` at ``z_dir`` for the ball center ``c`` on S^m."""
    z_dir = np.asarray(z_dir, dtype=float)
    c = np.asarray(c, dtype=float)
    if m is None:
        m = c.size - 1
    for name, v in (("z_dir", z_dir), ("c", c)):
        if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > 1e-10):
            raise PerturbationError(f"{name} is not a unit vector")
    if np.any(z_dir @ c <= -1.0 + 1e-14):
        raise PerturbationError("antipodal point: d is not smooth there")
    d = _half_sq_distance(z_dir, c)
    lap = _lap_d(d, m)
    if np.ndim(d) == 0:
        return float(d), float(2 * d), float(lap)
    return d, 2 * d, lap


@dataclass(frozen=True)
class NormalVariation:
    ball: GeodesicBall
    l0: float
    alpha0: float
    beta: float
    sign: int
    lam: SmoothFn = field(repr=False)
    sigma: SmoothFn = field(repr=False)
    t: float = 0.0

    @property
    def alpha0_taper(self) -> float:
        return 0.5 * (self.alpha0 + self.beta)

    def _split(self, q):
        q = np.asarray(q, dtype=float)
        n = self.ball.c.size
        z, w = q[..., :n], q[..., n:]
        zn = np.linalg.norm(z, axis=-1)
        zdir = z / np.where(zn > 0, zn, 1.0)[..., None]
        return zdir, np.sum(w**2, axis=-1)

    def d(self, q) -> np.ndarray:
        zdir, _ = self._split(q)
        return _half_sq_distance(zdir, self.ball.c)

    def f(self, q) -> np.ndarray:
        """Amplitude at image points ``q = (z, w)``."""
        zdir, W = self._split(q)
        d = _half_sq_distance(zdir, self.ball.c)
        out = np.zeros(d.shape)
        sel = (d < self.ball.d_cap) & (W < self.beta)
        if np.any(sel):
            out[sel] = self.l0 * self.lam(d[sel]) * self.sigma(W[sel])
        return out

    def in_support(self, q) -> np.ndarray:
        zdir, W = self._split(q)
        return (_half_sq_distance(zdir, self.ball.c) < self.ball.d_cap) & (W < self.beta)

    def sigma_w(self, w, order: int = 0) -> np.ndarray:
        """sigma as a function of the signed coordinate w (derivatives by chain rule)."""
        w = np.asarray(w, dtype=float)
        W = w**2
        s = [self.sigma.deriv(W, j) for j in range(order + 1)]
        if order == 0:
            return s[0]
        if order == 1:
            return 2 * w * s[1]
        return 2 * s[1] + 4 * W * s[2]

    def to_dict(self) -> dict:
        return {"ball": self.ball.to_dict(), "l0": self.l0, "alpha0": self.alpha0,
                "alpha0_taper": self.alpha0_taper, "beta": self.beta, "sign": self.sign,
                "t": self.t}


def build_variation(ball: GeodesicBall, l0: float, alpha0: float, beta: float, sign: int = 1,
                    alpha: Optional[float] = None) -> NormalVariation:
    """``lambda`` falls from 1 at d = 0 to 0 at d_cap; ``sigma = -sign W/2`` for
    ``W = |w|^2 <= (alpha0 + beta)/2`` tapering to 0 at ``W = beta``."""
    if sign not in (1, -1):
        raise PerturbationError(f"sign must be +1 or -1, got {sign}")
    if not l0 > 0:
        raise PerturbationError(f"l0 must be positive, got {l0}")
    lo = 0.0 if alpha is None else alpha
    if not lo < alpha0 < beta:
        raise PerturbationError(f"need alpha < alpha0 < beta, got {lo}, {alpha0}, {beta}")
    lam = make_step(0.0, ball.d_cap, 1.0, 0.0)
    taper = Step(0.5 * (alpha0 + beta), beta, 1.0, 0.0)
    linear = Formula(lambda W, order: (-0.5 * sign * W if order == 0 else
                                       np.full_like(W, -0.5 * sign) if order == 1 else
                                       np.zeros_like(W)),
                     max_order=3, name="-sign W/2")
    return NormalVariation(ball=ball, l0=float(l0), alpha0=float(alpha0), beta=float(beta),
                           sign=int(sign), lam=lam, sigma=Product(linear, taper))


def apply_variation(m: ImmersionMap, var: NormalVariation, t: float) -> ImmersionMap:
    if t < 0:
        raise PerturbationError(f"variation time must be >= 0, got {t}")
    return m.with_variation(_with_t(var, t), t)


def _with_t(var: NormalVariation, t: float) -> NormalVariation:
    return NormalVariation(var.ball, var.l0, var.alpha0, var.beta, var.sign, var.lam,
                           var.sigma, float(t))


# ---------------------------------------------------------------------------
# first variation


def _as_chart(points, k: int) -> np.ndarray:
    """Chart coordinates from a chart array or a SpherePoint."""
    if isinstance(points, SpherePoint):
        x, y = points.x, points.y
        if k != 1:
            raise PerturbationError("SpherePoint conversion is implemented for n = 2")
        return np.array([[math.atan2(x[1], x[0]), y[0]]])
    return np.atleast_2d(np.asarray(points, dtype=float))


def det_rate_analytic(sol: ProfileSolution, var: NormalVariation, points,
                      sign_convention: int = 1) -> np.ndarray:
    """Exact ``d/dt det S`` at t = 0 for chart points (or a SpherePoint)."""
    p = sol.params
    if p.k != p.n - 1:
        raise UnsupportedCodimensionError(
            f"first variation needs codimension one in the cylinder split (k = n-1), got k={p.k}, n={p.n}")
    n = p.n
    chart = _as_chart(points, p.k)
    omega, _, y = sphere_chart(chart, p.k)
    w = y[..., 0]
    v = sol.evaluate(w**2)
    R, Rw = v["s"], 2 * w * v["s1"]
    Rww = 2 * v["s1"] + 4 * w**2 * v["s2"]
    G = 1 + Rw**2
    Gw = 2 * Rw * Rww
    k_ang, k_n = 1.0 / v["c2"], v["psi_eff"]
    H = k_ang ** (n - 1) * k_n

    d = _half_sq_distance(omega, var.ball.c)
    inside = d < var.ball.d_cap
    lam = np.zeros_like(d)
    lam1 = np.zeros_like(d)
    lam2 = np.zeros_like(d)
    if np.any(inside):
        lam[inside] = var.lam(d[inside])
        lam1[inside] = var.lam.deriv(d[inside], 1)
        lam2[inside] = var.lam.deriv(d[inside], 2)
    lap = _lap_d(d, n - 1)
    sig, sig1, sig2 = (var.sigma_w(w, j) for j in range(3))

    f = var.l0 * lam * sig
    hess_nn = var.l0 * lam * (sig2 - Gw / (2 * G) * sig1) / G
    tr_ang = var.l0 * (sig * (lam2 * 2 * d + lam1 * lap)
                       + (n - 1) * R * Rw * lam * sig1 / G) / R**2
    rate = -(k_ang ** (n - 2) * k_n * tr_ang + k_ang ** (n - 1) * hess_nn)
    rate = rate - f * H * ((n - 1) * k_ang + k_n)
    return sign_convention * rate


def _variation_jet(m: ImmersionMap, var: NormalVariation, chart, h: float = FD_H):
    """Exact base derivatives plus differenced unit-time displacement."""
    chart = np.atleast_2d(np.asarray(chart, dtype=float))
    X, Xa, Xab = m.base_derivatives(chart)

    def disp(c):
        return var.f(m.base(c))[..., None] * m.base_normal(c)

    D, Da, Dab = fd_derivatives(disp, chart, h)
    return (X, Xa, Xab), (D, Da, Dab), m.base_normal(chart)


def _H_at(jet, t: float) -> np.ndarray:
    (X, Xa, Xab), (D, Da, Dab), ref = jet
    return shape_from_derivatives(X + t * D, Xa + t * Da, Xab + t * Dab,
                                  ref_normal=ref, method="semi-analytic").gauss_kronecker


def det_rate_fd(m: ImmersionMap, var: NormalVariation, points, h: float = 1e-5) -> np.ndarray:
    """Central difference of det S along the variation, Richardson over h and h/2."""
    if h <= 0:
        raise PerturbationError("h must be positive")
    chart = _as_chart(points, m.k)
    jet = _variation_jet(m, var, chart)

    def central(step):
        return (_H_at(jet, step) - _H_at(jet, -step)) / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3


def calibrate_sign(m: ImmersionMap, var: NormalVariation, point=None) -> int:
    """Global sign of the closed form, fixed by one comparison with the oracle."""
    if point is None:
        point = np.array([[var.ball.angle, 0.0]])
    a = det_rate_analytic(m.profile, var, point)[0]
    b = det_rate_fd(m, var, point)[0]
    if a == 0 or b == 0:
        raise PerturbationError("sign calibration point has zero rate")
    return 1 if a * b > 0 else -1


def meridian_alignment(sol: ProfileSolution, w_sq_max: float, samples: int = 401) -> float:
    """Minimum of <d/dw, e_n>^2 = 1/(1 + R_w^2) over |w|^2 <= w_sq_max."""
    w = np.linspace(0.0, math.sqrt(w_sq_max), samples)
    v = sol.evaluate(w**2)
    return float(np.min(1.0 / (1.0 + (2 * w * v["s1"]) ** 2)))


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationReport:
    t: float
    halvings: int
    min_H_target: float
    min_H_global: float
    target_points: int
    support_points: int
    worst_points: list
    variation: dict
    alignment: float

    def to_dict(self) -> dict:
        return {"t": self.t, "halvings": self.halvings, "min_H_target": self.min_H_target,
                "min_H_global": self.min_H_global, "target_points": self.target_points,
                "support_points": self.support_points, "worst_points": self.worst_points,
                "variation": self.variation, "meridian_alignment": self.alignment}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _worst(chart, H, count=5) -> list:
    idx = np.argsort(H)[:count]
    return [[float(chart[i, 0]), float(chart[i, 1]), float(H[i])] for i in idx]


def calibrate_t(m: ImmersionMap, var: NormalVariation, grid: GridSpec = GridSpec(),
                t_init: Optional[float] = None, max_halvings: int = 30):
    """Largest ``t_init / 2^j`` making H > 0 on the target region and H >= -1e-12 on the grid.

    Returns ``(t, CalibrationReport)``.  The target region is
    ``{d < 0.99 d_cap, |w|^2 <= alpha}``; points off the support are unchanged
    by the variation so only their existing curvature enters the global minimum.
    """
    sol = m.profile
    if t_init is None:
        t_init = 0.1 / var.l0
    align = meridian_alignment(sol, var.alpha0)
    if align < 0.5:
        raise CalibrationError(f"<d/dw, e_n>^2 = {align:.3g} < 1/2 on |w|^2 <= alpha0; lower alpha0")

    pts = grid.points().reshape(-1, 2)
    q = m.base(pts)
    supp = var.in_support(q)
    d = var.d(q)
    W = pts[:, 1] ** 2
    target = (d < 0.99 * var.ball.d_cap) & (W <= sol.params.alpha)
    if not np.any(target):
        raise CalibrationError("grid has no points in the target region; refine the grid")
    rate = det_rate_analytic(sol, var, pts[target])
    if np.min(rate) <= 0:
        raise CalibrationError("first variation is not positive on the target region",
                               _worst(pts[target], rate))

    outside = gauss_kronecker_field(m, pts[~supp]) if np.any(~supp) else np.array([np.inf])
    sc = pts[supp]
    jet = _variation_jet(m, var, sc)
    tgt_in_supp = target[supp]
    t = t_init
    worst = []
    for j in range(max_halvings + 1):
        H = _H_at(jet, t)
        ok_target = np.all(H[tgt_in_supp] > 0)
        ok_global = np.all(H >= -NEG_TOL)
        if ok_target and ok_global:
            rep = CalibrationReport(
                t=t, halvings=j, min_H_target=float(H[tgt_in_supp].min()),
                min_H_global=float(min(H.min(), outside.min())),
                target_points=int(tgt_in_supp.sum()), support_points=int(supp.sum()),
                worst_points=_worst(sc, H), variation=_with_t(var, t).to_dict(),
                alignment=align)
            return t, rep
        worst = _worst(sc, H)
        t *= 0.5
    raise CalibrationError(f"no admissible t after {max_halvings} halvings", worst)
