"""The immersion phi(x, y) = (theta(|y|^2) x, y) and its curvature.

Two independent routes to the shape operator:

* closed forms from the profile (``curvatures_analytic``), and
* finite differences of the chart evaluator (``shape_operator_fd``), which
  also works on perturbed stacks where no closed form exists.

Sign convention: the normal points outward and the shape operator is
``S = -I^{-1} II``, so the unit sphere has all principal curvatures +1.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import GridSpec, worker_count
from .profile import ProfileSolution

__all__ = [
    "SpherePoint",
    "ShapeReport",
    "ZeroSetReport",
    "ImmersionMap",
    "ChartDegeneracyError",
    "SupportCollisionError",
    "sphere_chart",
    "evaluate",
    "gauss_map",
    "implicit_residual",
    "curvatures_analytic",
    "fd_derivatives",
    "shape_from_derivatives",
    "shape_operator_fd",
    "rank_estimate",
    "gauss_kronecker_field",
    "zero_set_scan",
    "random_chart_points",
]

FD_H = 1e-4
SCAN_CHUNK = 2048


class ChartDegeneracyError(ValueError):
    pass


class SupportCollisionError(ValueError):
    pass


@dataclass
class SpherePoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        err = abs(self.x @ self.x + self.y @ self.y - 1.0)
        if err > 1e-12:
            raise ValueError(f"point is off the unit sphere by {err:.3g}")

    @property
    def r(self) -> float:
        return float(self.y @ self.y)


@dataclass
class ShapeReport:
    point_image: np.ndarray
    normal: np.ndarray
    principal_curvatures: np.ndarray
    gauss_kronecker: np.ndarray
    a_norm: np.ndarray
    method: str


# ---------------------------------------------------------------------------
# pointwise closed forms


def evaluate(sol: ProfileSolution, p: SpherePoint) -> np.ndarray:
    theta = float(sol.theta(p.r))
    return np.concatenate([theta * p.x, p.y])


def gauss_map(sol: ProfileSolution, p: SpherePoint) -> np.ndarray:
    """N = (z, c1 w) / c2 at the image (z, w) of ``p``."""
    k1 = p.x.size
    q = evaluate(sol, p)
    v = sol.evaluate(p.r)
    c1, c2 = float(v["c1"][0]), float(v["c2"][0])
    return np.concatenate([q[:k1], c1 * q[k1:]]) / c2


def implicit_residual(sol: ProfileSolution, q: np.ndarray, k: int) -> np.ndarray:
    """f(z, w) = |z|^2 + mu(|w|^2) |w|^2 - nu(|w|^2); zero on the image."""
    q = np.asarray(q, dtype=float)
    z, w = q[..., : k + 1], q[..., k + 1:]
    rw = np.clip(np.sum(w**2, axis=-1), 0.0, 1.0)
    v = sol.evaluate(rw)
    return np.sum(z**2, axis=-1) + v["mu"] * rw - v["nu"]


def curvatures_analytic(sol: ProfileSolution, r) -> ShapeReport:
    """Curvature part of the report from the profile closed forms."""
    k = sol.principal_curvatures(r)
    H = np.prod(k, axis=-1)
    return ShapeReport(point_image=np.empty(0), normal=np.empty(0), principal_curvatures=k,
                       gauss_kronecker=H, a_norm=np.sqrt(np.sum(k**2, axis=-1)),
                       method="analytic")


# ---------------------------------------------------------------------------
# charts


def sphere_chart(chart: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chart coordinates -> (omega, x, y).

    The first ``k`` coordinates are hyperspherical angles of the unit direction
    ``omega`` in R^{k+1}; the rest are the y-block itself.  ``x = sqrt(1-|y|^2) omega``.
    """
    chart = np.asarray(chart, dtype=float)
    ang, y = chart[..., :k], chart[..., k:]
    omega = np.empty(chart.shape[:-1] + (k + 1,))
    sin_prod = np.ones(chart.shape[:-1])
    for i in range(k - 1):
        omega[..., i] = sin_prod * np.cos(ang[..., i])
        sin_prod = sin_prod * np.sin(ang[..., i])
    omega[..., k - 1] = sin_prod * np.cos(ang[..., k - 1])
    omega[..., k] = sin_prod * np.sin(ang[..., k - 1])
    x = np.sqrt(np.clip(1.0 - np.sum(y**2, axis=-1), 0.0, None))[..., None] * omega
    return omega, x, y


def random_chart_points(n: int, k: int, count: int, rng: np.random.Generator,
                        margin: float = 1e-3) -> np.ndarray:
    """Uniform chart samples kept ``margin`` away from every chart pole."""
    cols = []
    for i in range(k - 1):
        cols.append(rng.uniform(margin, math.pi - margin, count))
    cols.append(rng.uniform(0.0, 2 * math.pi, count))
    m = n - k
    if m == 1:
        cols.append(rng.uniform(-1 + margin, 1 - margin, count))
    else:
        d = rng.normal(size=(count, m))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = (1 - margin) * rng.uniform(0, 1, count) ** (1.0 / m)
        cols.extend((d * rad[:, None]).T)
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# finite differences

_C1 = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
_C2 = {-2: -1.0, -1: 16.0, 0: -30.0, 1: 16.0, 2: -1.0}


def _stencil(n: int) -> tuple[np.ndarray, dict]:
    offs = [np.zeros(n)]
    index = {("c",): 0}
    for a in range(n):
        for i in (-2, -1, 1, 2):
            e = np.zeros(n)
            e[a] = i
            index[("a", a, i)] = len(offs)
            offs.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            for i in (-2, -1, 1, 2):
                for j in (-2, -1, 1, 2):
                    e = np.zeros(n)
                    e[a], e[b] = i, j
                    index[("m", a, b, i, j)] = len(offs)
                    offs.append(e)
    return np.array(offs), index


def _fd_once(func, chart: np.ndarray, h: float):
    n = chart.shape[-1]
    offs, index = _stencil(n)
    pts = chart[:, None, :] + h * offs[None, :, :]
    vals = np.asarray(func(pts.reshape(-1, n)))
    vals = vals.reshape(chart.shape[0], offs.shape[0], -1)
    F = vals[:, 0]
    Fa = np.zeros((chart.shape[0], n, vals.shape[-1]))
    Fab = np.zeros((chart.shape[0], n, n, vals.shape[-1]))
    for a in range(n):
        Fa[:, a] = sum(c * vals[:, index[("a", a, i)]] for i, c in _C1.items()) / (12 * h)
        Fab[:, a, a] = sum(c * (vals[:, index[("a", a, i)]] if i else F)
                           for i, c in _C2.items()) / (12 * h * h)
        for b in range(a + 1, n):
            acc = sum(ci * cj * vals[:, index[("m", a, b, i, j)]]
                      for i, ci in _C1.items() for j, cj in _C1.items())
            Fab[:, a, b] = Fab[:, b, a] = acc / (144 * h * h)
    return F, Fa, Fab


def fd_derivatives(func, chart, h: float = FD_H):
    """Value, first and second chart derivatives of ``func`` by five-point
    central differences, Richardson-extrapolated over steps ``h`` and ``h/2``."""
    chart = np.atleast_2d(np.asarray(chart, dtype=float))
    F, Fa1, Fab1 = _fd_once(func, chart, h)
    _, Fa2, Fab2 = _fd_once(func, chart, h / 2)
    return F, (16 * Fa2 - Fa1) / 15, (16 * Fab2 - Fab1) / 15


def _unit_normal(Xa: np.ndarray, ref: Optional[np.ndarray]) -> np.ndarray:
    n = Xa.shape[-2]
    if n == 2:
        N = np.cross(Xa[:, 0], Xa[:, 1])
    else:
        N = np.linalg.svd(Xa)[2][:, -1, :]
    norm = np.linalg.norm(N, axis=-1, keepdims=True)
    N = N / norm
    if ref is not None:
        N = N * np.where(np.sum(N * ref, axis=-1) < 0, -1.0, 1.0)[:, None]
    return N


def shape_from_derivatives(X, Xa, Xab, ref_normal=None, method="finite-difference",
                           min_det: float = 1e-14) -> ShapeReport:
    """Shape operator ``S = -I^{-1} II`` from a tangent frame and second derivatives."""
    Xa = np.asarray(Xa)
    N = _unit_normal(Xa, ref_normal)
    I = np.einsum("pai,pbi->pab", Xa, Xa)
    detI = np.linalg.det(I)
    if np.any(detI < min_det):
        raise ChartDegeneracyError(f"det I = {detI.min():.3g} below {min_det}")
    II = np.einsum("pabi,pi->pab", Xab, N)
    L = np.linalg.cholesky(I)
    Linv = np.linalg.inv(L)
    M = -Linv @ II @ np.swapaxes(Linv, -1, -2)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    k = np.linalg.eigvalsh(M)
    H = np.linalg.det(-II) / detI
    return ShapeReport(point_image=X, normal=N, principal_curvatures=k, gauss_kronecker=H,
                       a_norm=np.sqrt(np.sum(k**2, axis=-1)), method=method)


# ---------------------------------------------------------------------------
# immersion maps


@dataclass(frozen=True)
class ImmersionMap:
    """Base immersion plus an ordered stack of applied normal variations.

    ``stack`` holds ``(variation, t)`` pairs.  A variation must expose
    ``f(image) -> amplitude``, ``in_support(image) -> bool`` and ``ball``.
    """

    profile: ProfileSolution
    stack: tuple = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.profile.params.n

    @property
    def k(self) -> int:
        return self.profile.params.k

    # base immersion -----------------------------------------------------
    def base(self, chart) -> np.ndarray:
        chart = np.asarray(chart, dtype=float)
        omega, _, y = sphere_chart(chart, self.k)
        r = np.sum(y**2, axis=-1)
        s = np.reshape(self.profile.evaluate(r)["s"], r.shape)
        return np.concatenate([s[..., None] * omega, y], axis=-1)

    def base_normal(self, chart) -> np.ndarray:
        chart = np.asarray(chart, dtype=float)
        omega, _, y = sphere_chart(chart, self.k)
        r = np.sum(y**2, axis=-1)
        v = {key: np.reshape(val, r.shape) for key, val in self.profile.evaluate(r).items()}
        z = v["s"][..., None] * omega
        return np.concatenate([z, v["c1"][..., None] * y], axis=-1) / v["c2"][..., None]

    def base_derivatives(self, chart):
        """Exact (X, X_a, X_ab) of the base immersion for n = 2, k = 1."""
        if self.n != 2:
            return fd_derivatives(self.base, chart)
        chart = np.atleast_2d(np.asarray(chart, dtype=float))
        u, w = chart[:, 0], chart[:, 1]
        v = self.profile.evaluate(w**2)
        R = v["s"]
        Rw = 2 * w * v["s1"]
        Rww = 2 * v["s1"] + 4 * w**2 * v["s2"]
        cu, su = np.cos(u), np.sin(u)
        zero = np.zeros_like(u)
        X = np.stack([R * cu, R * su, w], axis=-1)
        Xu = np.stack([-R * su, R * cu, zero], axis=-1)
        Xv = np.stack([Rw * cu, Rw * su, np.ones_like(u)], axis=-1)
        Xuu = np.stack([-R * cu, -R * su, zero], axis=-1)
        Xuv = np.stack([-Rw * su, Rw * cu, zero], axis=-1)
        Xvv = np.stack([Rww * cu, Rww * su, zero], axis=-1)
        Xa = np.stack([Xu, Xv], axis=1)
        Xab = np.stack([np.stack([Xuu, Xuv], axis=1), np.stack([Xuv, Xvv], axis=1)], axis=1)
        return X, Xa, Xab

    # stacked map -------------------------------------------------------
    def with_variation(self, var, t: float) -> "ImmersionMap":
        for other, _ in self.stack:
            if var.ball.intersects(other.ball):
                raise SupportCollisionError(
                    f"variation over {var.ball} overlaps existing variation over {other.ball}")
        return ImmersionMap(self.profile, self.stack + ((var, float(t)),))

    def evaluate(self, chart) -> np.ndarray:
        """Apply the stack in order: p <- p + t f(p) N(p)."""
        chart = np.asarray(chart, dtype=float)
        p = self.base(chart)
        if not self.stack:
            return p
        N0 = self.base_normal(chart)
        moved = np.zeros(p.shape[:-1], dtype=bool)
        for i, (var, t) in enumerate(self.stack):
            amp = t * var.f(p)
            active = amp != 0
            normal = N0
            redo = active & moved
            if np.any(redo):
                prefix = ImmersionMap(self.profile, self.stack[:i])
                normal = N0.copy()
                normal[redo] = _fd_normal(prefix, chart[redo], N0[redo])
            p = p + amp[..., None] * normal
            moved |= active
        return p

    def displacement(self, chart, index: int) -> np.ndarray:
        """Unit-time displacement f(q) N(q) of stack entry ``index`` on the base."""
        chart = np.asarray(chart, dtype=float)
        var, _ = self.stack[index]
        return var.f(self.base(chart))[..., None] * self.base_normal(chart)

    def support_index(self, chart) -> np.ndarray:
        """Index of the (unique) stack entry whose support holds each point, else -1."""
        chart = np.asarray(chart, dtype=float)
        q = self.base(chart)
        out = np.full(q.shape[:-1], -1, dtype=int)
        for i, (var, _) in enumerate(self.stack):
            out[var.in_support(q)] = i
        return out


def _fd_normal(m: ImmersionMap, chart, ref):
    _, Xa, _ = fd_derivatives(m.evaluate, chart)
    return _unit_normal(Xa, ref)


def shape_operator_fd(m: ImmersionMap, chart, h: float = FD_H) -> ShapeReport:
    """Independent oracle: every derivative by finite differences of ``m.evaluate``."""
    chart = np.atleast_2d(np.asarray(chart, dtype=float))
    X, Xa, Xab = fd_derivatives(m.evaluate, chart, h)
    return shape_from_derivatives(X, Xa, Xab, ref_normal=m.base_normal(chart))


def stacked_shape(m: ImmersionMap, chart, index: int, t: Optional[float] = None,
                  h: float = FD_H) -> ShapeReport:
    """Shape operator of the base plus one stack entry (time ``t``).

    The base part uses exact derivatives; only the displacement is
    differenced, so round-off scales with the displacement size.
    """
    chart = np.atleast_2d(np.asarray(chart, dtype=float))
    X, Xa, Xab = m.base_derivatives(chart)
    D, Da, Dab = fd_derivatives(lambda c: m.displacement(c, index), chart, h)
    tt = m.stack[index][1] if t is None else t
    return shape_from_derivatives(X + tt * D, Xa + tt * Da, Xab + tt * Dab,
                                  ref_normal=m.base_normal(chart), method="semi-analytic")


def gauss_kronecker_field(m: ImmersionMap, chart) -> np.ndarray:
    """H_n at chart points: closed form off the stack supports, differenced inside."""
    chart = np.asarray(chart, dtype=float)
    flat = chart.reshape(-1, chart.shape[-1])
    _, _, y = sphere_chart(flat, m.k)
    H = np.prod(m.profile.principal_curvatures(np.sum(y**2, axis=-1)), axis=-1)
    idx = m.support_index(flat)
    jobs = []
    for i in range(len(m.stack)):
        where = np.nonzero(idx == i)[0]
        jobs.extend((i, part) for part in np.array_split(where, max(1, where.size // SCAN_CHUNK))
                    if part.size)
    if jobs:
        def run(job):
            i, part = job
            return part, stacked_shape(m, flat[part], i).gauss_kronecker

        workers = min(worker_count(), len(jobs))
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                done = list(pool.map(run, jobs))
        else:
            done = [run(j) for j in jobs]
        for part, val in done:
            H[part] = val
    return H.reshape(chart.shape[:-1])


def rank_estimate(m: ImmersionMap, samples: int = 200, seed: int = 0,
                  threshold: float = 1e-7, chart=None) -> int:
    """Minimum numerical rank of the differenced shape operator over samples."""
    if samples < 100:
        raise ValueError("rank_estimate needs at least 100 samples")
    if chart is None:
        rng = np.random.default_rng(seed)
        chart = random_chart_points(m.n, m.k, samples, rng)
    rep = shape_operator_fd(m, chart)
    return int(np.min(np.sum(np.abs(rep.principal_curvatures) > threshold, axis=-1)))


@dataclass
class ZeroSetReport:
    tol: float
    counts: dict
    negative_points: list
    zero_r_max: float
    positive_r_min: float
    zero_mask: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"tol": self.tol, "counts": self.counts,
                "negative_points": self.negative_points,
                "zero_r_max": self.zero_r_max, "positive_r_min": self.positive_r_min}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def zero_set_scan(m: ImmersionMap, grid: GridSpec, tol: float = 1e-10,
                  max_listed: int = 100) -> ZeroSetReport:
    if min(grid.nu, grid.nv) < 64:
        raise ValueError("zero_set_scan needs at least 64 points per dimension")
    pts = grid.points()
    H = gauss_kronecker_field(m, pts)
    r = pts[..., 1] ** 2
    zero = np.abs(H) <= tol
    pos = H > tol
    neg = H < -tol
    neg_pts = [[float(a), float(b), float(h)]
               for (a, b), h in zip(pts[neg][:max_listed], H[neg][:max_listed])]
    return ZeroSetReport(
        tol=tol,
        counts={"zero": int(zero.sum()), "positive": int(pos.sum()), "negative": int(neg.sum())},
        negative_points=neg_pts,
        zero_r_max=float(r[zero].max()) if zero.any() else float("nan"),
        positive_r_min=float(r[pos].min()) if pos.any() else float("nan"),
        zero_mask=zero, H=H)
