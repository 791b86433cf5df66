"""Acceptance criteria at desk scale (n=2, k=1; alpha=0.2, beta=0.5, gamma=0.7, eps=0.05).

Each test records ``(passed, detail)`` in the ``acceptance`` fixture; the
terminal summary prints one line per criterion.
"""

import math
import time

import numpy as np

from kforge.cantor import compose_stack, plan_cantor, verify_fractal_zero_set
from kforge.grid import GridSpec
from kforge.immersion import (
    ImmersionMap,
    curvatures_analytic,
    gauss_kronecker_field,
    random_chart_points,
    rank_estimate,
    shape_operator_fd,
    sphere_chart,
    zero_set_scan,
)
from kforge.perturbation import (
    GeodesicBall,
    apply_variation,
    build_variation,
    calibrate_sign,
    calibrate_t,
    det_rate_analytic,
    det_rate_fd,
)
from kforge.profile import ProfileParams, assemble_profile, find_t0, root_residual, root_target


class Record:
    """Collects named checks so a failing criterion reports every sub-check."""

    def __init__(self):
        self.items = []

    def __call__(self, name, ok, value=""):
        self.items.append((name, bool(ok), value))

    @property
    def ok(self):
        return all(ok for _, ok, _ in self.items)

    def detail(self):
        return "; ".join(f"{n}{'' if ok else ' FAILED'} {v}".rstrip() for n, ok, v in self.items)


def finish(acceptance, key, rec):
    acceptance[key] = (rec.ok, rec.detail())
    assert rec.ok, rec.detail()


def alpha0_of(p):
    return p.alpha + 0.1 * (p.beta - p.alpha)


# ---------------------------------------------------------------- shared checks

def profile_checks(p, rec):
    start = time.perf_counter()
    t0, _, _, delta = find_t0(p)
    sol = assemble_profile(p)
    res = max(abs(root_residual(delta, p)), abs(root_residual(sol.delta, p)))
    rec("root", res <= 1e-9, f"|G(t0)|={res:.2e} t0={t0:.12f}")
    mu_b = sol.mu(p.beta - 1e-12)
    dmu_b = sol.mu.deriv(p.beta - 1e-7, 1)
    rec("mu(beta-)", abs(mu_b - 1) <= 1e-8, f"{abs(mu_b - 1):.1e}")
    rec("mu'(beta-)", abs(dmu_b) <= 1e-5, f"{abs(dmu_b):.1e}")
    r = np.linspace(p.alpha + 1e-3, p.beta - p.blend_width, 4001)
    ode = np.max(np.abs(2 * r * sol.rho.deriv(r, 1) + sol.rho(r) - sol.psi(r)))
    rec("ODE", ode <= 1e-7, f"{ode:.1e}")
    secs = time.perf_counter() - start
    rec("time", secs < 5, f"{secs:.2f}s")
    return sol


def region_checks(sol, rec, seed):
    p = sol.params
    m = ImmersionMap(sol)
    rng = np.random.default_rng(seed)
    chart = random_chart_points(p.n, p.k, 4000, rng)
    omega, x, y = sphere_chart(chart, p.k)
    r = np.sum(y**2, axis=-1)
    z = m.base(chart)

    outer = r >= p.b_tilde
    ident = np.max(np.abs(z[outer] - np.concatenate([x, y], axis=-1)[outer]))
    k_out = sol.principal_curvatures(np.linspace(p.b_tilde, 1.0, 501))
    sph = np.max(np.abs(k_out - 1))
    rec("identity", ident == 0.0, f"{ident:.1e} on {outer.sum()} pts")
    rec("sphere spectrum", sph <= 1e-10, f"{sph:.1e}")

    inner = r <= p.alpha
    cyl = np.max(np.abs(np.linalg.norm(z[inner, : p.k + 1], axis=-1) - math.sqrt(p.gamma)))
    want = np.array([1 / math.sqrt(p.gamma)] * p.k + [0.0] * (p.n - p.k))
    k_in = curvatures_analytic(sol, np.linspace(0.0, p.alpha, 501)).principal_curvatures
    spread = np.max(np.abs(k_in - want))
    rec("cylinder radius", cyl <= 1e-12, f"{cyl:.1e} on {inner.sum()} pts")
    rec("cylinder spectrum", spread <= 1e-10, f"{spread:.1e}")
    return m


# ---------------------------------------------------------------- criteria

def test_criterion_1_profile(acceptance):
    rec = Record()
    p = ProfileParams()
    # [DERIVED] sqrt(0.7) - sqrt(0.5)
    target = root_target(p)
    rec("target", abs(target - 0.129553) <= 1e-6, f"{target:.6f}")
    profile_checks(p, rec)
    finish(acceptance, 1, rec)


def test_criterion_2_regions(acceptance, sol):
    rec = Record()
    region_checks(sol, rec, seed=21)
    finish(acceptance, 2, rec)


def test_criterion_3_oracle_equivalence(acceptance, sol, base):
    rec = Record()
    start = time.perf_counter()
    chart = random_chart_points(2, 1, 1000, np.random.default_rng(31))
    r = chart[:, 1] ** 2
    an = curvatures_analytic(sol, r)
    ka = np.sort(an.principal_curvatures, axis=-1)
    fd = shape_operator_fd(base, chart)
    scale = an.a_norm[:, None]
    err = np.max(np.abs(ka - fd.principal_curvatures) / scale)
    rec("curvatures rel |A|", err <= 1e-5, f"{err:.1e}")
    big = np.abs(ka) >= 1e-2
    rel = np.max(np.abs(ka - fd.principal_curvatures)[big] / np.abs(ka[big]))
    rec("curvatures rel |k|>=1e-2", rel <= 1e-5, f"{rel:.1e}")
    errH = np.max(np.abs(an.gauss_kronecker - fd.gauss_kronecker) / an.a_norm**2)
    rec("det S vs H", errH <= 1e-5, f"{errH:.1e}")
    secs = time.perf_counter() - start
    rec("time", secs < 30, f"{secs:.2f}s")
    finish(acceptance, 3, rec)


def test_criterion_4_zero_set(acceptance, base, sol):
    rec = Record()
    grid = GridSpec(512, 256)
    scan = zero_set_scan(base, grid)
    r = grid.points()[..., 1] ** 2
    alpha = sol.params.alpha
    inner = np.max(np.abs(scan.H[r <= alpha]))
    outer = scan.H[r >= alpha + 0.01].min()
    rec("|H| on r<=alpha", inner <= 1e-10, f"{inner:.1e}")
    rec("H on r>=alpha+0.01", outer > 0, f"min {outer:.2e}")
    rec("negative", scan.counts["negative"] == 0, str(scan.counts["negative"]))
    # a second scan reproduces the field bit for bit
    H_exact = gauss_kronecker_field(base, grid.points())
    rec("field reproducible", np.array_equal(H_exact, scan.H))
    finish(acceptance, 4, rec)


def test_criterion_5_first_variation(acceptance, base, sol):
    rec = Record()
    p = sol.params
    ball = GeodesicBall.on_circle(0.7, 0.15)
    var = build_variation(ball, 1.0, alpha0_of(p), p.beta, 1, alpha=p.alpha)
    sign = calibrate_sign(base, var)
    rec("sign", sign in (1, -1), str(sign))

    # support interior: 90% of the radius, |w|^2 <= 0.9 beta
    rng = np.random.default_rng(51)
    ang = ball.angle + 0.9 * ball.radius_rad * rng.uniform(-1, 1, 200)
    w = np.sqrt(0.9 * p.beta * rng.uniform(0, 1, 200)) * rng.choice([-1, 1], 200)
    pts = np.stack([ang, w], axis=-1)
    a = sign * det_rate_analytic(sol, var, pts)
    b = det_rate_fd(base, var, pts)
    rel = np.max(np.abs(a - b) / np.abs(b))
    rec("analytic vs FD", rel <= 1e-4, f"{rel:.1e} at 200 pts")

    far = np.stack([ball.angle + rng.uniform(0.16, 3.0, 200) * rng.choice([-1, 1], 200),
                    rng.uniform(-0.999, 0.999, 200)], axis=-1)
    zero = max(np.max(np.abs(det_rate_analytic(sol, var, far))),
               np.max(np.abs(det_rate_fd(base, var, far))))
    rec("outside support", zero <= 1e-10, f"{zero:.1e}")

    # [DERIVED] l0 / sqrt(gamma)
    want = 1 / math.sqrt(p.gamma)
    center = np.array([[ball.angle, 0.0]])
    got = sign * det_rate_analytic(sol, var, center)[0]
    got_fd = det_rate_fd(base, var, center)[0]
    rec("center", abs(got - want) <= 1e-4 * want and abs(got_fd - want) <= 1e-4 * want,
        f"{got:.8f} (fd {got_fd:.8f}) vs {want:.6f}")
    finish(acceptance, 5, rec)


def test_criterion_6_single_ball(acceptance, base, sol):
    rec = Record()
    p = sol.params
    start = time.perf_counter()
    ball = GeodesicBall.on_circle(0.0, 0.15)
    var = build_variation(ball, 1.0, alpha0_of(p), p.beta, 1, alpha=p.alpha)
    grid = GridSpec(512, 256)
    t, rep = calibrate_t(base, var, grid)
    m = apply_variation(base, var, t)
    pts = grid.points()
    H = gauss_kronecker_field(m, pts)
    inU = grid.region_mask("ball", angle=ball.angle, radius=ball.radius_rad)
    rec("calibrated", t > 0, f"t={t:.3g}")
    rec("min H on U x D", H[inU].min() > 0, f"{H[inU].min():.2e}")
    rec("global min H", H.min() >= -1e-12, f"{H.min():.2e}")
    flat = pts.reshape(-1, 2)
    off = ~var.in_support(base.base(flat))
    moved = np.max(np.abs(m.evaluate(flat[off]) - base.evaluate(flat[off])))
    rec("unchanged off support", moved == 0.0, f"{moved:.1e}")
    secs = time.perf_counter() - start
    rec("time", secs < 120, f"{secs:.1f}s")
    finish(acceptance, 6, rec)


def test_criterion_7_cantor_depth_three(acceptance, base, sol):
    rec = Record()
    p = sol.params
    start = time.perf_counter()
    plan = plan_cantor(depth=3, ratio=0.04)
    rec("8 balls", len(plan) == 8)
    grid = GridSpec(1024, 256)
    m, reports = compose_stack(sol, plan, grid=grid)
    rec("composition", len(reports) == 8 and all(r.min_H_target > 0 for r in reports))

    prev, haus, neg, monotone, all_ok = None, 0.0, 0, True, True
    for up in range(len(plan) + 1):
        rep = verify_fractal_zero_set(ImmersionMap(sol, m.stack[:up]), plan, up, grid)
        haus = max(haus, rep.hausdorff_cells)
        neg += rep.negative_count
        all_ok &= rep.ok
        if prev is not None:
            monotone &= bool(np.all(prev | ~rep.zero_mask))
        prev = rep.zero_mask
    rec("zero set vs F3 x D", all_ok and haus <= 2, f"hausdorff {haus:.2f} cells")
    rec("monotone", monotone)
    # [CLAIM] curvature is non-negative
    rec("negative count", neg == 0, str(neg))

    rev = base
    for ball, r in reversed(list(zip(plan.balls, reports))):
        rev = apply_variation(rev, build_variation(ball, 1.0, alpha0_of(p), p.beta, 1,
                                                   alpha=p.alpha), r.t)
    flat = grid.points().reshape(-1, 2)
    comm = np.max(np.abs(rev.evaluate(flat) - m.evaluate(flat)))
    rec("commute", comm <= 1e-12, f"{comm:.1e}")
    # [CLAIM] rank(phi) = k
    rank = rank_estimate(base, 200, seed=7)
    rec("rank", rank == 1, str(rank))
    secs = time.perf_counter() - start
    rec("time", secs < 600, f"{secs:.1f}s")
    finish(acceptance, 7, rec)


def test_criterion_8_dimension_generic(acceptance, sol3):
    rec = Record()
    p = ProfileParams(n=3, k=2)
    profile_checks(p, rec)
    region_checks(sol3, rec, seed=81)
    r = np.linspace(0.0, 1.0, 1001)
    v = sol3.evaluate(r)
    k = sol3.principal_curvatures(r)
    want = np.stack([1 / v["c2"], 1 / v["c2"], v["psi_eff"]], axis=-1)
    rec("spectrum (1/c2, 1/c2, psi_eff)", np.array_equal(k, want))
    # FD oracle, away from the poles of the angular chart
    chart = random_chart_points(3, 2, 300, np.random.default_rng(82), margin=0.1)
    _, _, y = sphere_chart(chart, 2)
    an = curvatures_analytic(sol3, np.sum(y**2, axis=-1))
    fd = shape_operator_fd(ImmersionMap(sol3), chart)
    err = np.max(np.abs(np.sort(an.principal_curvatures, axis=-1) - fd.principal_curvatures)
                 / an.a_norm[:, None])
    rec("FD oracle", err <= 1e-5, f"{err:.1e}")
    rank = rank_estimate(ImmersionMap(sol3), 200, seed=83)
    rec("rank", rank == 2, str(rank))
    finish(acceptance, 8, rec)
