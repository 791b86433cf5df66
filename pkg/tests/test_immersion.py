import json
import math

import numpy as np
import pytest

from kforge.grid import GridSpec
from kforge.immersion import (
    ChartDegeneracyError,
    ImmersionMap,
    SpherePoint,
    curvatures_analytic,
    evaluate,
    fd_derivatives,
    gauss_map,
    implicit_residual,
    random_chart_points,
    rank_estimate,
    shape_from_derivatives,
    shape_operator_fd,
    sphere_chart,
    zero_set_scan,
)

R_T, r_T = 2.0, 0.5


def torus(chart):
    u, v = chart[..., 0], chart[..., 1]
    rad = R_T + r_T * np.cos(v)
    return np.stack([rad * np.cos(u), rad * np.sin(u), r_T * np.sin(v)], axis=-1)


def test_fd_shape_operator_on_torus():
    rng = np.random.default_rng(3)
    chart = np.stack([rng.uniform(0, 2 * np.pi, 50), rng.uniform(0, 2 * np.pi, 50)], axis=-1)
    X, Xa, Xab = fd_derivatives(torus, chart)
    u, v = chart[:, 0], chart[:, 1]
    outward = np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=-1)
    rep = shape_from_derivatives(X, Xa, Xab, ref_normal=outward)
    k_merid = np.full(50, 1 / r_T)
    k_par = np.cos(v) / (R_T + r_T * np.cos(v))
    want = np.sort(np.stack([k_merid, k_par], axis=-1), axis=-1)
    assert np.allclose(rep.principal_curvatures, want, atol=1e-7)
    assert np.allclose(rep.gauss_kronecker, k_merid * k_par, atol=1e-7)
    assert np.allclose(rep.normal, outward, atol=1e-9)


def test_degenerate_chart_detected():
    Xa = np.zeros((1, 2, 3))
    Xa[0, 0] = [1, 0, 0]
    Xa[0, 1] = [1, 1e-9, 0]
    with pytest.raises(ChartDegeneracyError):
        shape_from_derivatives(np.zeros((1, 3)), Xa, np.zeros((1, 2, 2, 3)),
                               ref_normal=np.array([[0, 0, 1.0]]))


def test_sphere_point_validation():
    SpherePoint([0.6, 0.0], [0.8])
    with pytest.raises(ValueError):
        SpherePoint([0.6, 0.1], [0.8])


def test_sphere_chart_lands_on_sphere():
    rng = np.random.default_rng(0)
    for n, k in ((2, 1), (3, 2), (3, 1)):
        chart = random_chart_points(n, k, 100, rng)
        omega, x, y = sphere_chart(chart, k)
        assert np.allclose(np.linalg.norm(omega, axis=-1), 1.0)
        assert np.allclose(np.sum(x**2, -1) + np.sum(y**2, -1), 1.0)


def test_gauss_map_pointwise(sol):
    p = SpherePoint([math.cos(0.3) * 0.8, math.sin(0.3) * 0.8], [0.6])
    N = gauss_map(sol, p)
    assert np.linalg.norm(N) == pytest.approx(1.0, abs=1e-12)
    m = ImmersionMap(sol)
    assert np.allclose(N, m.base_normal(np.array([0.3, 0.6])), atol=1e-14)
    assert np.allclose(evaluate(sol, p), m.base(np.array([0.3, 0.6])), atol=1e-14)


def test_implicit_residual(base):
    rng = np.random.default_rng(5)
    chart = random_chart_points(2, 1, 1000, rng)
    q = base.evaluate(chart)
    assert np.max(np.abs(implicit_residual(base.profile, q, 1))) <= 1e-10


def test_normal_orientation_coherent(base):
    rng = np.random.default_rng(6)
    chart = random_chart_points(2, 1, 200, rng)
    rep = shape_operator_fd(base, chart)
    assert np.min(np.sum(rep.normal * base.base_normal(chart), axis=-1)) > 0.99


def test_exact_base_derivatives_match_differences(base):
    rng = np.random.default_rng(7)
    chart = random_chart_points(2, 1, 100, rng)
    X, Xa, Xab = base.base_derivatives(chart)
    F, Fa, Fab = fd_derivatives(base.base, chart)
    assert np.allclose(X, F, atol=1e-15)
    assert np.allclose(Xa, Fa, atol=1e-8)
    assert np.allclose(Xab, Fab, atol=1e-5)


def test_analytic_vs_fd_curvatures(base):
    rng = np.random.default_rng(8)
    chart = random_chart_points(2, 1, 300, rng)
    r = chart[:, 1] ** 2
    ka = np.sort(curvatures_analytic(base.profile, r).principal_curvatures, axis=-1)
    rep = shape_operator_fd(base, chart)
    assert np.all(np.abs(ka - rep.principal_curvatures) <= 1e-5 * np.maximum(np.abs(ka), 1))
    H = np.prod(ka, axis=-1)
    assert np.all(np.abs(H - rep.gauss_kronecker) <= 1e-5 * np.maximum(np.abs(H), 1))


def test_analytic_report_consistency(sol):
    r = np.linspace(0, 1, 50)
    rep = curvatures_analytic(sol, r)
    assert np.array_equal(rep.gauss_kronecker, np.prod(rep.principal_curvatures, axis=-1))
    assert np.allclose(rep.a_norm, np.linalg.norm(rep.principal_curvatures, axis=-1))


def test_rank_base_is_k(base):
    # [CLAIM] "rank(phi)=k"
    assert rank_estimate(base, 200, seed=2) == 1


def test_rank_on_sphere_region_is_n(base):
    rng = np.random.default_rng(9)
    chart = np.stack([rng.uniform(0, 2 * np.pi, 150), rng.uniform(0.8, 0.99, 150)], axis=-1)
    assert rank_estimate(base, 150, chart=chart) == 2


def test_rank_needs_samples(base):
    with pytest.raises(ValueError):
        rank_estimate(base, 50)


def test_zero_set_scan_base(base):
    # [CLAIM] H_n vanishes exactly on the cylindrical piece
    grid = GridSpec(128, 128)
    rep = zero_set_scan(base, grid)
    alpha = base.profile.params.alpha
    r = grid.points()[..., 1] ** 2
    assert np.all(rep.zero_mask[r <= alpha])
    assert np.all(rep.H[r >= alpha + 0.01] > 1e-10)
    assert rep.counts["negative"] == 0 and rep.negative_points == []
    assert alpha <= rep.zero_r_max < alpha + 0.01
    data = json.loads(rep.to_json())
    assert data["counts"] == rep.counts


def test_zero_set_scan_resolution_guard(base):
    with pytest.raises(ValueError):
        zero_set_scan(base, GridSpec(32, 128))


def test_immersion_map_is_stack_free_by_default(base):
    chart = np.array([[0.1, 0.2], [1.0, -0.9]])
    assert np.array_equal(base.evaluate(chart), base.base(chart))
    assert np.all(base.support_index(chart) == -1)
