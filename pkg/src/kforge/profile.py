"""Profile functions of the cylinder-capped sphere immersion.

The immersion is ``phi(x, y) = (theta(|y|^2) x, y)``.  Everything is a
function of ``r = |y|^2`` on ``[0, 1]``:

* ``nu``   rises from ``gamma`` (on ``[0, alpha]``) to 1 (on ``[beta, 1]``);
* ``psi``  is the prescribed last principal curvature, 0 then 1;
* ``rho``  solves ``2 r rho' + rho = psi`` with ``rho(alpha) = 0``;
* ``delta = rho / sqrt(1 - r rho^2)``;
* ``mu = (nu - (sqrt(gamma) - J/2)^2) / r`` with ``J = int_alpha^r delta``;
* ``c1 = mu + r mu' - nu'``, ``c2 = sqrt(nu + r (c1^2 - mu))``,
  ``theta = sqrt((nu - r mu) / (1 - r))``.

The one free parameter ``t`` of the source family
``psi_t = (1 - t) psi_0 + t psi_1`` is fixed by bisection so that ``mu``
closes up to exactly 1 at ``beta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .smoothfn import (
    Antiderivative,
    Blend,
    Combination,
    Constant,
    Formula,
    Piecewise,
    SmoothFn,
    SmoothFnError,
    Step,
    integrate,
)

__all__ = [
    "ProfileParams",
    "ProfileSolution",
    "ProfileError",
    "InvalidParamsError",
    "InvalidEpsError",
    "BlendError",
    "SingularityError",
    "BracketError",
    "GeometryError",
    "validate_params",
    "build_rho_pair",
    "build_psi_pair",
    "ode_source",
    "solve_rho",
    "delta_of",
    "root_target",
    "root_residual",
    "find_t0",
    "build_mu",
    "assemble_profile",
    "write_profile_csv",
    "PROFILE_COLUMNS",
]

ROOT_TOL = 1e-9
# bisection keeps going past ROOT_TOL when it cheaply can
ROOT_REFINE = 1e-12
QUAD_TOL = 1e-13
MAX_BISECTIONS = 200


class ProfileError(SmoothFnError):
    pass


class InvalidParamsError(ProfileError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class InvalidEpsError(ProfileError):
    pass


class BlendError(ProfileError):
    pass


class SingularityError(ProfileError):
    def __init__(self, r: float):
        super().__init__(f"1 - r*rho^2 <= 0 at r={r!r}")
        self.r = r


class BracketError(ProfileError):
    pass


class GeometryError(ProfileError):
    pass


@dataclass(frozen=True)
class ProfileParams:
    alpha: float = 0.2
    beta: float = 0.5
    gamma: float = 0.7
    n: int = 2
    k: int = 1
    eps: float = 0.05
    alpha_tilde: Optional[float] = None
    beta_tilde: Optional[float] = None
    blend_width: float = 0.05
    # share of each rho model spent on the slow full-width ramp
    ramp: float = field(default=0.1)

    @property
    def a_tilde(self) -> float:
        return self.alpha / 2 if self.alpha_tilde is None else self.alpha_tilde

    @property
    def b_tilde(self) -> float:
        return (1 + self.beta) / 2 if self.beta_tilde is None else self.beta_tilde

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_tilde"], d["beta_tilde"] = self.a_tilde, self.b_tilde
        return d


def validate_params(p: ProfileParams) -> list[str]:
    """Every violated inequality, with the offending values; empty when valid."""
    a, b, g = p.alpha, p.beta, p.gamma
    out = []
    if not p.n >= 2:
        out.append(f"n>=2 fails (n={p.n})")
    if not 1 <= p.k <= p.n - 1:
        out.append(f"1<=k<=n-1 fails (k={p.k}, n={p.n})")
    if not 0 < a:
        out.append(f"alpha>0 fails (alpha={a})")
    if not a < 0.5:
        out.append(f"alpha<1/2 fails (alpha={a})")
    if not a < g:
        out.append(f"alpha<gamma fails ({a} >= {g})")
    if not g < 1 - a:
        out.append(f"gamma<1-alpha fails ({g} >= {1 - a})")
    if not a < b:
        out.append(f"alpha<beta fails ({a} >= {b})")
    if not b < g:
        out.append(f"beta<gamma fails ({b} >= {g})")
    if not b > 1 - g:
        out.append(f"beta>1-gamma fails ({b} <= {1 - g})")
    if not 0 < p.a_tilde < a:
        out.append(f"0<alpha_tilde<alpha fails (alpha_tilde={p.a_tilde})")
    if not b < p.b_tilde < 1:
        out.append(f"beta<beta_tilde<1 fails (beta_tilde={p.b_tilde})")
    if not 0 < p.blend_width < b - a:
        out.append(f"0<w<beta-alpha fails (w={p.blend_width}, beta-alpha={b - a})")
    if not p.eps > 0:
        out.append(f"eps>0 fails (eps={p.eps})")
    if not 0 < p.ramp < 1:
        out.append(f"0<ramp<1 fails (ramp={p.ramp})")
    return out


def _require_valid(p: ProfileParams) -> None:
    bad = validate_params(p)
    if bad:
        raise InvalidParamsError(bad)


# ---------------------------------------------------------------------------
# source family


def build_rho_pair(p: ProfileParams) -> tuple[SmoothFn, SmoothFn]:
    """Closed-form model solutions whose ODE sources are psi_0 and psi_1.

    rho_1 reaches 1 within ``[alpha, alpha + eps]``; rho_0 only within
    ``[beta - eps, beta]``.  Both carry a small ramp across all of
    ``[alpha, beta]`` so that every member of the family is strictly
    increasing there.
    """
    a, b, e = p.alpha, p.beta, p.eps
    if not 0 < e < (b - a) / 2:
        raise InvalidEpsError(f"eps must lie in (0, (beta-alpha)/2) = (0, {(b - a) / 2}), got {e}")
    ramp = p.ramp * e
    slow = Step(a, b, 0.0, 1.0)
    rho1 = Combination([(1 - ramp, Step(a, a + e, 0.0, 1.0)), (ramp, slow)])
    rho0 = Combination([(1 - ramp, Step(b - e, b, 0.0, 1.0)), (ramp, slow)])
    return rho0, rho1


def ode_source(rho: SmoothFn) -> SmoothFn:
    """``psi = 2 r rho' + rho`` for a closed-form rho (needs rho up to order 3)."""

    def fn(r, order):
        if order == 0:
            return 2 * r * rho._value(r, 1) + rho._value(r, 0)
        if order == 1:
            return 3 * rho._value(r, 1) + 2 * r * rho._value(r, 2)
        return 5 * rho._value(r, 2) + 2 * r * rho._value(r, 3)

    return Formula(fn, max_order=2, domain=(0.0, 1.0), breakpoints=rho.breakpoints,
                   name="2 r rho' + rho")


def build_psi_pair(p: ProfileParams) -> tuple[SmoothFn, SmoothFn]:
    """(psi_0, psi_1): both 0 on [0, alpha] and 1 on [beta, 1].

    psi_1 >= 1 - eps on [alpha + eps, beta]; psi_0 <= eps on [alpha, beta - eps].
    """
    rho0, rho1 = build_rho_pair(p)
    return ode_source(rho0), ode_source(rho1)


def psi_family(psi0: SmoothFn, psi1: SmoothFn, t: float) -> SmoothFn:
    return Combination([(1.0 - t, psi0), (t, psi1)])


# ---------------------------------------------------------------------------
# ODE and quadrature


def solve_rho(psi: SmoothFn, p: ProfileParams, nodes: int = 2049) -> SmoothFn:
    """rho(r) = r^{-1/2} int_alpha^r psi(s) / (2 sqrt(s)) ds, glued to 1 at beta."""
    a, b, w = p.alpha, p.beta, p.blend_width

    def q_fn(s, order):
        if order == 0:
            return psi._value(s, 0) / (2 * np.sqrt(s))
        return psi._value(s, 1) / (2 * np.sqrt(s)) - psi._value(s, 0) / (4 * s**1.5)

    q = Formula(q_fn, max_order=1, domain=(0.0, 1.0), breakpoints=psi.breakpoints)
    integral = Antiderivative(q, a, b, nodes=nodes, tol=QUAD_TOL)

    def raw_fn(r, order):
        sr = np.sqrt(r)
        rho = integral._value(r, 0) / sr
        if order == 0:
            return rho
        qv = q._value(r, 0)
        d1 = -rho / (2 * r) + qv / sr
        if order == 1:
            return d1
        return -d1 / (2 * r) + rho / (2 * r**2) + q._value(r, 1) / sr - qv / (2 * r * sr)

    raw = Formula(raw_fn, max_order=2, domain=(p.a_tilde, 1.0), breakpoints=(a,),
                  name="rho quadrature")
    edge = float(raw(b - w))
    if edge > 1.0 + 1e-9:
        raise BlendError(f"raw rho(beta-w)={edge} > 1; blending to 1 would make rho decrease")
    weight = Step(b - w, b, 0.0, 1.0)
    mid = Blend(raw, Constant(1.0), weight)
    rho = Piecewise([a, b], [Constant(0.0), mid, Constant(1.0)], domain=(0.0, 1.0))
    rho.raw = raw
    return rho


def delta_of(rho: SmoothFn, p: ProfileParams, check_points: int = 2001) -> SmoothFn:
    """delta = rho / sqrt(1 - r rho^2) on [0, beta_tilde]."""
    rs = np.linspace(0.0, p.b_tilde, check_points)
    den = 1.0 - rs * rho._value(rs, 0) ** 2
    if np.any(den <= 0):
        raise SingularityError(float(rs[np.argmax(den <= 0)]))

    def fn(r, order):
        rv = rho._value(r, 0)
        den = 1.0 - r * rv**2
        if np.any(den <= 0):
            raise SingularityError(float(np.asarray(r)[np.argmax(den <= 0)]))
        if order == 0:
            return rv / np.sqrt(den)
        r1 = rho._value(r, 1)
        return r1 / np.sqrt(den) + rv * (rv**2 + 2 * r * rv * r1) / (2 * den**1.5)

    return Formula(fn, max_order=1, domain=(0.0, p.b_tilde), breakpoints=rho.breakpoints,
                   name="delta")


def root_target(p: ProfileParams) -> float:
    return math.sqrt(p.gamma) - math.sqrt(1.0 - p.beta)


def root_residual(delta: SmoothFn, p: ProfileParams) -> float:
    """G = (1/2) int_alpha^beta delta - (sqrt(gamma) - sqrt(1 - beta))."""
    return 0.5 * integrate(delta, p.alpha, p.beta, tol=QUAD_TOL) - root_target(p)


def find_t0(p: ProfileParams, tol: float = ROOT_REFINE, max_iter: int = MAX_BISECTIONS):
    """Bisection for t0 with |G(t0)| <= tol.  Returns (t0, psi, rho, delta).

    If the bracket collapses to machine width first, the midpoint is accepted
    provided it meets ROOT_TOL.
    """
    _require_valid(p)
    psi0, psi1 = build_psi_pair(p)

    def stage(t):
        psi = psi_family(psi0, psi1, t)
        rho = solve_rho(psi, p)
        delta = delta_of(rho, p)
        return root_residual(delta, p), psi, rho, delta

    lo, hi = 0.0, 1.0
    g_lo, *best_lo = stage(lo)
    g_hi, *best_hi = stage(hi)
    if g_lo > 0 or g_hi < 0:
        raise BracketError(
            f"no sign bracket: G(0)={g_lo:.6g}, G(1)={g_hi:.6g}; try a smaller eps")
    for g, parts, t in ((g_lo, best_lo, lo), (g_hi, best_hi, hi)):
        if abs(g) <= tol:
            return (t, *parts)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g, *parts = stage(mid)
        if abs(g) <= tol:
            return (mid, *parts)
        if g < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps and abs(g) <= ROOT_TOL:
            return (mid, *parts)
    raise BracketError(f"bisection did not reach |G|<={tol} in {max_iter} steps (last G={g})")


# ---------------------------------------------------------------------------
# assembled solution


class ProfileSolution:
    """Solved profile: every function of ``r`` needed to evaluate the immersion.

    ``evaluate(r)`` returns all quantities at once (the cheap path used by the
    immersion); the same quantities are exposed as SmoothFn attributes.
    """

    def __init__(self, params: ProfileParams, t0: float, nu: SmoothFn, psi: SmoothFn,
                 rho: SmoothFn, delta: SmoothFn, J: SmoothFn):
        self.params = params
        self.t0 = t0
        self.nu, self.psi, self.rho, self.delta, self.J = nu, psi, rho, delta, J
        a, b = params.alpha, params.beta
        # residual of the root condition, spread smoothly over (alpha, beta) so
        # that the z-radius meets sqrt(1 - r) at beta to round-off
        self.closure = (math.sqrt(params.gamma) - 0.5 * float(J.table[-1])) - math.sqrt(1 - b)
        self._bump = Step(a, b, 0.0, 1.0)
        self.mu = self._piece("mu", 0.0, 1.0)
        self.c1 = self._piece("c1", 0.0, 1.0)
        self.c2 = self._piece("c2", math.sqrt(params.gamma), 1.0)
        self.kappa = self._piece("kappa", 0.0, 1.0)
        self.psi_eff = self._piece("psi_eff", 0.0, 1.0)
        self.theta = Piecewise([a, b], [
            Formula(lambda r, o: np.sqrt(params.gamma / (1 - r)), domain=(0.0, 1.0)),
            Formula(lambda r, o: self._mid(r)["theta"], domain=(0.0, 1.0)),
            Constant(1.0)], domain=(0.0, 1.0))
        self.radius = Piecewise([a, b], [
            Constant(math.sqrt(params.gamma)),
            Formula(self._radius_mid, max_order=2, domain=(0.0, 1.0)),
            Formula(_sphere_radius, max_order=2, domain=(0.0, 1.0))], domain=(0.0, 1.0))

    def _piece(self, key, cyl, sph):
        a, b = self.params.alpha, self.params.beta
        d1 = {"mu": "mu1", "c1": "c1_1", "c2": "c2_1", "kappa": "kappa1"}.get(key)

        def fn(r, order):
            vals = self._mid(r)
            return vals[key] if order == 0 else vals[d1]

        mid = Formula(fn, max_order=1 if d1 else 0, domain=(0.0, 1.0), name=key)
        return Piecewise([a, b], [Constant(cyl), mid, Constant(sph)], domain=(0.0, 1.0))

    def _radius_mid(self, r, order):
        g = math.sqrt(self.params.gamma)
        corr = self.closure * self._bump._value(r, order)
        if order == 0:
            return g - 0.5 * self.J._value(r, 0) - corr
        return -0.5 * self.delta._value(r, order - 1) - corr

    def _mid(self, r: np.ndarray) -> dict:
        """All derived quantities on the transition band (alpha, beta)."""
        r = np.asarray(r, dtype=float)
        nu0, nu1, nu2 = (self.nu._value(r, o) for o in (0, 1, 2))
        s0, s1, s2 = (self._radius_mid(r, o) for o in (0, 1, 2))
        u0, u1, u2 = s0**2, 2 * s0 * s1, 2 * s1**2 + 2 * s0 * s2
        mu0 = (nu0 - u0) / r
        mu1 = (nu1 - u1 - mu0) / r
        mu2 = (nu2 - u2 - 2 * mu1) / r
        c1 = mu0 + r * mu1 - nu1
        c1_1 = 2 * mu1 + r * mu2 - nu2
        c2 = np.sqrt(nu0 + r * (c1**2 - mu0))
        c2_1 = (nu1 + c1**2 - mu0 + r * (2 * c1 * c1_1 - mu1)) / (2 * c2)
        kappa = c1 / c2
        kappa1 = (c1_1 * c2 - c1 * c2_1) / c2**2
        theta = np.sqrt((nu0 - r * mu0) / (1 - r))
        return {"nu": nu0, "nu1": nu1, "mu": mu0, "mu1": mu1, "mu2": mu2,
                "c1": c1, "c1_1": c1_1, "c2": c2, "c2_1": c2_1,
                "kappa": kappa, "kappa1": kappa1, "psi_eff": 2 * r * kappa1 + kappa,
                "theta": theta, "s": s0, "s1": s1, "s2": s2}

    def evaluate(self, r) -> dict:
        """Every profile quantity at ``r`` (vectorised, piecewise exact plateaus).

        Keys: nu, mu, c1, c2, kappa (= c1/c2), kappa1, psi_eff, theta and the
        z-radius ``s = sqrt(nu - r mu)`` with its first two r-derivatives.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        uniq, inv = np.unique(r, return_inverse=True)
        a, b = self.params.alpha, self.params.beta
        g = self.params.gamma
        keys = ("nu", "mu", "c1", "c1_1", "c2", "c2_1", "kappa", "kappa1",
                "psi_eff", "theta", "s", "s1", "s2")
        out = {key: np.zeros(uniq.shape) for key in keys}
        cyl, sph = uniq <= a, uniq >= b
        mid = ~(cyl | sph)
        with np.errstate(divide="ignore"):
            out["nu"][cyl] = g
            out["c2"][cyl] = math.sqrt(g)
            out["theta"][cyl] = np.sqrt(g / (1 - uniq[cyl]))
            out["s"][cyl] = math.sqrt(g)
            rs = uniq[sph]
            for key in ("nu", "mu", "c1", "c2", "kappa", "psi_eff", "theta"):
                out[key][sph] = 1.0
            out["s"][sph], out["s1"][sph], out["s2"][sph] = (
                _sphere_radius(rs, 0), _sphere_radius(rs, 1), _sphere_radius(rs, 2))
        if np.any(mid):
            vals = self._mid(uniq[mid])
            for key in keys:
                out[key][mid] = vals[key]
        return {key: v[inv].reshape(r.shape) for key, v in out.items()}

    def principal_curvatures(self, r) -> np.ndarray:
        """Sorted-by-construction spectrum (1/c2 x k, c1/c2 x (n-k-1), psi_eff)."""
        p = self.params
        v = self.evaluate(r)
        cols = ([1.0 / v["c2"]] * p.k + [v["kappa"]] * (p.n - p.k - 1) + [v["psi_eff"]])
        return np.stack(cols, axis=-1)

    def table(self, resolution: int = 201) -> dict:
        rs = np.linspace(0.0, 1.0, resolution)
        v = self.evaluate(rs)
        with np.errstate(divide="ignore"):
            delta = np.where(rs <= self.params.b_tilde,
                             self.delta._value(np.minimum(rs, self.params.b_tilde), 0),
                             1.0 / np.sqrt(1.0 - rs))
        return {"r": rs, "nu": v["nu"], "psi": self.psi(rs), "rho": self.rho(rs),
                "delta": delta, "mu": v["mu"], "c1": v["c1"], "c2": v["c2"],
                "theta": v["theta"], "psi_eff": v["psi_eff"]}


def _sphere_radius(r, order):
    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 0:
            return np.sqrt(1.0 - r)
        if order == 1:
            return -0.5 / np.sqrt(1.0 - r)
        return -0.25 / (1.0 - r) ** 1.5


def build_mu(p: ProfileParams, nu: SmoothFn, delta: SmoothFn, nodes: int = 2049):
    """mu on [0, 1] from delta; also returns J = int_alpha^r delta."""
    J = Antiderivative(delta, p.alpha, p.beta, nodes=nodes, tol=QUAD_TOL)
    s = math.sqrt(p.gamma) - 0.5 * J.table
    if np.any(s <= 0):
        i = int(np.argmax(s <= 0))
        raise GeometryError(f"sqrt(gamma) - J/2 <= 0 at r={J.nodes[i]!r}")

    def fn(r, order):
        g = math.sqrt(p.gamma)
        s0 = g - 0.5 * J._value(r, 0)
        mu0 = (nu._value(r, 0) - s0**2) / r
        if order == 0:
            return mu0
        return (nu._value(r, 1) + s0 * delta._value(r, 0) - mu0) / r

    mid = Formula(fn, max_order=1, domain=(0.0, 1.0), name="mu")
    mu = Piecewise([p.alpha, p.beta], [Constant(0.0), mid, Constant(1.0)], domain=(0.0, 1.0))
    return mu, J


def assemble_profile(p: Optional[ProfileParams] = None) -> ProfileSolution:
    p = p or ProfileParams()
    _require_valid(p)
    t0, psi, rho, delta = find_t0(p)
    nu = Step(p.alpha, p.beta, p.gamma, 1.0, domain=(0.0, 1.0))
    _, J = build_mu(p, nu, delta)
    return ProfileSolution(p, t0, nu, psi, rho, delta, J)


PROFILE_COLUMNS = ("r", "nu", "psi", "rho", "delta", "mu", "c1", "c2", "theta", "psi_eff")


def write_profile_csv(sol: ProfileSolution, path, resolution: int = 201) -> None:
    tab = sol.table(resolution)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_COLUMNS)
        for i in range(resolution):
            w.writerow([format(float(tab[c][i]), ".17g") for c in PROFILE_COLUMNS])
