"""Command-line front door: ``kforge {profile,immerse,perturb,cantor,verify}``.

Exit codes: 0 success, 1 invariant violation, 2 invalid parameters.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cantor import PlanError, compose_stack, plan_cantor, verify_fractal_zero_set
from .geomio import ConfigError, RunConfig, dump_json, export_obj
from .grid import GridSpec
from .immersion import (
    ImmersionMap,
    random_chart_points,
    rank_estimate,
    shape_operator_fd,
    sphere_chart,
    zero_set_scan,
)
from .perturbation import (
    CalibrationError,
    GeodesicBall,
    PerturbationError,
    apply_variation,
    build_variation,
    calibrate_sign,
    calibrate_t,
    det_rate_analytic,
    det_rate_fd,
)
from .profile import (
    InvalidEpsError,
    InvalidParamsError,
    ProfileError,
    assemble_profile,
    root_residual,
    write_profile_csv,
)

EXIT_OK, EXIT_VIOLATION, EXIT_PARAMS = 0, 1, 2

_PROFILE_FLAGS = {
    "alpha": float, "beta": float, "gamma": float, "eps": float,
    "n": int, "k": int, "blend_width": float, "ramp": float,
}
_RUN_FLAGS = {
    "ball_angle": float, "ball_radius": float, "l0": float, "alpha0": float, "t_init": float,
    "depth": int, "ratio": float, "delta0": float, "base_arc": float,
    "nu": int, "nv": int, "cantor_nu": int, "cantor_nv": int, "zero_tol": float,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    for name, typ in _PROFILE_FLAGS.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)

    ap = argparse.ArgumentParser(prog="kforge", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", parents=[common], help="solve the profile and write CSV")
    p.add_argument("--resolution", type=int, default=201)
    p.add_argument("--out", type=Path, default=Path("profile.csv"))

    p = sub.add_parser("immerse", parents=[common], help="mesh and curvature export")
    p.add_argument("--nu", type=int, default=128)
    p.add_argument("--nv", type=int, default=64)
    p.add_argument("--out", type=Path, default=Path("immersion.obj"))
    p.add_argument("--report", type=Path)

    p = sub.add_parser("perturb", parents=[common], help="single-ball inflation")
    for name in ("ball_angle", "ball_radius", "l0", "alpha0", "t_init", "nu", "nv"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=_RUN_FLAGS[name])
    p.add_argument("--report", type=Path, default=Path("perturb.json"))
    p.add_argument("--obj", type=Path)

    p = sub.add_parser("cantor", parents=[common], help="plan, compose and verify a Cantor stack")
    for name in ("depth", "ratio", "delta0", "base_arc", "l0", "alpha0", "t_init",
                 "cantor_nu", "cantor_nv", "zero_tol"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=_RUN_FLAGS[name])
    p.add_argument("--report", type=Path, default=Path("cantor.json"))
    p.add_argument("--obj", type=Path)

    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.add_argument("--suite", choices=("all",) + tuple(SUITES), default="all")
    p.add_argument("--report", type=Path, default=Path("verify.json"))
    return ap


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    prof = {k: getattr(args, k) for k in _PROFILE_FLAGS if getattr(args, k, None) is not None}
    run = {k: getattr(args, k) for k in _RUN_FLAGS if getattr(args, k, None) is not None}
    cfg = replace(cfg, profile=replace(cfg.profile, **prof), **run)
    bad = cfg.validate()
    if bad:
        raise InvalidParamsError(bad)
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_profile(args, cfg: RunConfig) -> int:
    sol = assemble_profile(cfg.profile)
    write_profile_csv(sol, args.out, args.resolution)
    print(f"t0 = {sol.t0:.17g}; wrote {args.out}")
    return EXIT_OK


def cmd_immerse(args, cfg: RunConfig) -> int:
    _surface_only(cfg, "immerse")
    sol = assemble_profile(cfg.profile)
    m = ImmersionMap(sol)
    grid = GridSpec(args.nu, args.nv)
    obj, fld = export_obj(m, grid, args.out)
    print(f"wrote {obj} and {fld}")
    if args.report:
        scan = zero_set_scan(m, grid, cfg.zero_tol) if min(args.nu, args.nv) >= 64 else None
        dump_json({"config": cfg.to_dict(), "mesh": str(obj), "field": str(fld),
                   "zero_set": scan.to_dict() if scan else None}, args.report)
        if scan and scan.counts["negative"]:
            return EXIT_VIOLATION
    return EXIT_OK


def _surface_only(cfg: RunConfig, what: str) -> None:
    if cfg.profile.n != 2:
        raise ConfigError(f"{what} is implemented for surfaces (n = 2), got n = {cfg.profile.n}")


def _single_ball(cfg: RunConfig):
    _surface_only(cfg, "perturb")
    sol = assemble_profile(cfg.profile)
    m = ImmersionMap(sol)
    p = cfg.profile
    ball = GeodesicBall.on_circle(cfg.ball_angle, cfg.ball_radius, cfg.delta0)
    var = build_variation(ball, cfg.l0, cfg.alpha0_value, p.beta, 1, alpha=p.alpha)
    return sol, m, var


def cmd_perturb(args, cfg: RunConfig) -> int:
    sol, m, var = _single_ball(cfg)
    grid = cfg.grid()
    try:
        t, rep = calibrate_t(m, var, grid, t_init=cfg.t_init)
    except CalibrationError as exc:
        dump_json({"config": cfg.to_dict(), "error": str(exc), "worst": exc.worst}, args.report)
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    mt = apply_variation(m, var, t)
    scan = zero_set_scan(mt, grid, cfg.zero_tol)
    dump_json({"config": cfg.to_dict(), "calibration": rep.to_dict(),
               "zero_set": scan.to_dict()}, args.report)
    if args.obj:
        export_obj(mt, grid, args.obj)
    print(f"t = {t:.17g}; min H on target = {rep.min_H_target:.3g}; wrote {args.report}")
    return EXIT_VIOLATION if scan.counts["negative"] else EXIT_OK


def cmd_cantor(args, cfg: RunConfig) -> int:
    _surface_only(cfg, "cantor")
    sol = assemble_profile(cfg.profile)
    plan = plan_cantor(2, cfg.depth, cfg.ratio, cfg.delta0, cfg.base_arc)
    grid = cfg.cantor_grid()
    m, reps = compose_stack(sol, plan, None, grid, cfg.l0, cfg.alpha0_value, cfg.t_init)
    stages, prev, monotone = [], None, True
    for up in range(len(plan) + 1):
        rep = verify_fractal_zero_set(ImmersionMap(sol, m.stack[:up]), plan, up, grid,
                                      cfg.zero_tol)
        if prev is not None:
            monotone &= bool(np.all(prev | ~rep.zero_mask))
        prev = rep.zero_mask
        stages.append(rep.to_dict())
    ok = monotone and all(s["ok"] for s in stages)
    dump_json({"config": cfg.to_dict(), "plan": plan.to_dict(),
               "calibrations": [r.to_dict() for r in reps], "stages": stages,
               "monotone": monotone, "ok": ok}, args.report)
    if args.obj:
        export_obj(m, GridSpec(256, 128), args.obj)
    print(f"{len(plan)} balls; ok = {ok}; wrote {args.report}")
    return EXIT_OK if ok else EXIT_VIOLATION


# ---------------------------------------------------------------------------
# invariant suite


def _check(out: list, suite: str, name: str, value: float, limit: float, passed: bool):
    out.append({"suite": suite, "name": name, "value": float(value), "limit": float(limit),
                "passed": bool(passed)})


def suite_profile(cfg: RunConfig, out: list) -> None:
    sol = assemble_profile(cfg.profile)
    p = sol.params
    res = abs(root_residual(sol.delta, p))
    _check(out, "profile", "root residual", res, 1e-9, res <= 1e-9)
    b = p.beta - 1e-12
    mu_err = abs(sol.mu(b) - 1)
    _check(out, "profile", "mu(beta-) - 1", mu_err, 1e-8, mu_err <= 1e-8)
    dmu = abs(sol.mu.deriv(p.beta - 1e-7, 1))
    _check(out, "profile", "mu'(beta-)", dmu, 1e-5, dmu <= 1e-5)
    r = np.linspace(p.alpha + 1e-3, p.beta - p.blend_width, 2001)
    ode = np.max(np.abs(2 * r * sol.rho.deriv(r, 1) + sol.rho(r) - sol.psi(r)))
    _check(out, "profile", "ODE residual", ode, 1e-7, ode <= 1e-7)


def suite_immersion(cfg: RunConfig, out: list) -> None:
    sol = assemble_profile(cfg.profile)
    p = sol.params
    m = ImmersionMap(sol)
    r_out = np.linspace(p.b_tilde, 1.0, 201)
    err = np.max(np.abs(sol.principal_curvatures(r_out) - 1))
    _check(out, "immersion", "sphere region curvatures", err, 1e-10, err <= 1e-10)
    r_in = np.linspace(0.0, p.alpha, 201)
    k = sol.principal_curvatures(r_in)
    want = np.array([1 / math.sqrt(p.gamma)] * p.k + [0.0] * (p.n - p.k))
    err = np.max(np.abs(np.sort(k, axis=-1) - np.sort(want)))
    _check(out, "immersion", "cylinder spectrum", err, 1e-10, err <= 1e-10)
    rng = np.random.default_rng(0)
    # hyperspherical charts degenerate near their poles; keep FD samples away from them
    chart = random_chart_points(p.n, p.k, 200, rng, margin=1e-3 if p.k == 1 else 0.1)
    _, _, y = sphere_chart(chart, p.k)
    ka = np.sort(sol.principal_curvatures(np.sum(y**2, axis=-1)), axis=-1)
    kf = shape_operator_fd(m, chart).principal_curvatures
    rel = np.max(np.abs(ka - kf) / np.maximum(np.abs(ka), 1.0))
    _check(out, "immersion", "analytic vs FD curvatures", rel, 1e-5, rel <= 1e-5)
    rank = rank_estimate(m, 200, seed=1)
    _check(out, "immersion", "rank", rank, p.k, rank == p.k)
    if p.n == 2:
        scan = zero_set_scan(m, cfg.grid(), cfg.zero_tol)
        _check(out, "immersion", "negative H points", scan.counts["negative"], 0,
               scan.counts["negative"] == 0)


def suite_perturbation(cfg: RunConfig, out: list) -> None:
    if cfg.profile.n != 2:
        return
    sol, m, var = _single_ball(cfg)
    sign = calibrate_sign(m, var)
    center = np.array([[cfg.ball_angle, 0.0]])
    rate = sign * det_rate_analytic(sol, var, center)[0]
    want = cfg.l0 / math.sqrt(cfg.profile.gamma)
    _check(out, "perturbation", "center rate", abs(rate - want) / want, 1e-4,
           abs(rate - want) <= 1e-4 * want)
    rng = np.random.default_rng(0)
    ang = cfg.ball_angle + 0.9 * cfg.ball_radius * rng.uniform(-1, 1, 100)
    v = np.sqrt(0.9 * cfg.profile.beta * rng.uniform(0, 1, 100)) * rng.choice([-1, 1], 100)
    pts = np.stack([ang, v], axis=-1)
    a = sign * det_rate_analytic(sol, var, pts)
    b = det_rate_fd(m, var, pts)
    rel = np.max(np.abs(a - b) / np.abs(b))
    _check(out, "perturbation", "analytic vs FD rate", rel, 1e-4, rel <= 1e-4)
    try:
        t, rep = calibrate_t(m, var, cfg.grid(), t_init=cfg.t_init)
    except CalibrationError:
        _check(out, "perturbation", "calibration", 0, 1, False)
        return
    _check(out, "perturbation", "min H on target", rep.min_H_target, 0, rep.min_H_target > 0)
    _check(out, "perturbation", "global min H", rep.min_H_global, -1e-12,
           rep.min_H_global >= -1e-12)


def suite_cantor(cfg: RunConfig, out: list) -> None:
    if cfg.profile.n != 2:
        return
    sol = assemble_profile(cfg.profile)
    plan = plan_cantor(2, cfg.depth, cfg.ratio, cfg.delta0, cfg.base_arc)
    grid = cfg.cantor_grid()
    m, _ = compose_stack(sol, plan, None, grid, cfg.l0, cfg.alpha0_value, cfg.t_init)
    prev, monotone = None, True
    worst_h, neg, ok = 0.0, 0, True
    for up in range(len(plan) + 1):
        rep = verify_fractal_zero_set(ImmersionMap(sol, m.stack[:up]), plan, up, grid,
                                      cfg.zero_tol)
        if prev is not None:
            monotone &= bool(np.all(prev | ~rep.zero_mask))
        prev = rep.zero_mask
        worst_h = max(worst_h, rep.hausdorff_cells)
        neg += rep.negative_count
        ok &= rep.expected_zero_ok and rep.interior_positive_ok
    _check(out, "cantor", "zero set Hausdorff (cells)", worst_h, 2, worst_h <= 2)
    _check(out, "cantor", "negative H points", neg, 0, neg == 0)
    _check(out, "cantor", "monotone shrinkage", monotone, 1, monotone)
    _check(out, "cantor", "zero/positive classification", ok, 1, ok)


SUITES = {
    "profile": suite_profile,
    "immersion": suite_immersion,
    "perturbation": suite_perturbation,
    "cantor": suite_cantor,
}


def run_suite(cfg: RunConfig, suite: str = "all") -> dict:
    names = list(SUITES) if suite == "all" else [suite]
    checks: list = []
    timings = {}
    for name in names:
        start = time.perf_counter()
        SUITES[name](cfg, checks)
        timings[name] = time.perf_counter() - start
    return {"config": cfg.to_dict(), "suite": suite, "checks": checks,
            "passed": all(c["passed"] for c in checks), "seconds": timings}


def cmd_verify(args, cfg: RunConfig) -> int:
    rep = run_suite(cfg, args.suite)
    seconds = rep.pop("seconds")
    dump_json(rep, args.report)
    for c in rep["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['suite']}: {c['name']} "
              f"= {c['value']:.3g} (limit {c['limit']:.3g})")
    print("suite times: " + ", ".join(f"{k} {v:.1f}s" for k, v in seconds.items()))
    return EXIT_OK if rep["passed"] else EXIT_VIOLATION


COMMANDS = {
    "profile": cmd_profile,
    "immerse": cmd_immerse,
    "perturb": cmd_perturb,
    "cantor": cmd_cantor,
    "verify": cmd_verify,
}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (InvalidParamsError, InvalidEpsError, ConfigError, PlanError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except (ProfileError, PerturbationError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


def main() -> None:
    sys.exit(run_cli())
