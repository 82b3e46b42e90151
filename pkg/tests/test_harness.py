import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lc_homog.cell_problems import DegenerateCell
from lc_homog.expr import VectorExpr
from lc_homog.geometry import GridSpec, ObstacleShape, build_perforated_grid
from lc_homog.harness import (NoValidPairs, SweepAborted, SweepConfig, ZeroGradient,
                              cell_average, contiguous_mean_ratio, pairing, poincare_ratio,
                              run_sweep, sweep_verdicts, zero_extend)

from oracles import unit_cell_means_loops

DISK = ObstacleShape.disk(0.25)


def grid_of(m=4, n=8, shape=DISK):
    return build_perforated_grid(GridSpec(m=m, n=n, shape=shape))


def test_average_of_constant():
    g = grid_of()
    np.testing.assert_allclose(cell_average(np.full(g.n_fluid, 2.5), g).full(), 2.5)


def test_average_of_abscissa_is_cell_centre():
    g = grid_of()
    x, _ = g.cell_centers()
    avg = cell_average(x[g.fluid], g).values
    centres = (np.arange(4) + 0.5) / 4
    np.testing.assert_allclose(avg, np.broadcast_to(centres[:, None], (4, 4)), atol=1e-12)


def test_average_matches_loop_summation():
    g = grid_of(3, 8)
    f = np.random.default_rng(0).standard_normal(g.n_fluid)
    ref = unit_cell_means_loops(zero_extend(f, g), g.fluid, 3, 8)
    np.testing.assert_allclose(cell_average(f, g).values, ref, rtol=1e-14)


def test_zero_extension_basics():
    g = grid_of()
    ind = zero_extend(np.ones(g.n_fluid), g)
    np.testing.assert_array_equal(ind, g.fluid.astype(float))
    np.testing.assert_allclose(cell_average(ind, g, full_cell=True).values, g.theta_discrete,
                               rtol=1e-14)
    assert not zero_extend(np.zeros(g.n_fluid), g).any()


@settings(max_examples=20)
@given(st.integers(0, 10 ** 6))
def test_theta_weighting_and_projection(seed):
    g = grid_of(2, 8)
    f = np.random.default_rng(seed).standard_normal((2, g.n_fluid))
    full = cell_average(zero_extend(f, g), g, full_cell=True).values
    fluid = cell_average(f, g).values
    np.testing.assert_allclose(full, g.theta_discrete * fluid, rtol=1e-12, atol=1e-15)
    once = cell_average(f, g).full()
    twice = cell_average(once[:, g.fluid], g).full()
    np.testing.assert_allclose(twice, once, rtol=1e-12, atol=1e-15)


def test_pairing_cases():
    g = grid_of()
    times = [0.0, 0.05, 0.1]
    one = VectorExpr("1", "1")
    assert pairing([np.zeros((2, g.N, g.N))] * 3, one, times) == 0.0
    assert pairing([np.ones((g.N, g.N))] * 3, one, times) == pytest.approx(0.1, abs=1e-14)
    ind = g.fluid.astype(float)
    assert pairing([ind] * 3, one, times) == pytest.approx(g.theta_discrete * 0.1, abs=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 10 ** 6))
def test_pairing_is_linear(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 3, 2, 8, 8))
    phi = VectorExpr("sin(pi*x)*t", "x*y")
    times = [0.0, 0.5, 1.0]
    lhs = pairing(list(a + b), phi, times)
    rhs = pairing(list(a), phi, times) + pairing(list(b), phi, times)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def _tent(g, eps):
    x, y = g.cell_centers()
    w = 0.2 * eps
    f = np.maximum(0, 1 - np.abs(x - eps) / w) * np.maximum(0, 1 - np.abs(y - eps) / w)
    assert not f[~g.fluid].any()
    return f[g.fluid]


def test_poincare_ratio_resolution_independent():
    r = [poincare_ratio(_tent(g, 0.25), g) for g in (grid_of(4, 16), grid_of(4, 32))]
    assert abs(r[0] - r[1]) <= 0.2 * r[1]


def test_poincare_ratio_of_faces_and_zero_gradient():
    g = grid_of()
    ux = np.zeros((g.N + 1, g.N))
    uy = np.zeros((g.N, g.N + 1))
    ux[3, 3] = 1.0
    assert math.isfinite(poincare_ratio((ux, uy), g))
    with pytest.raises(ZeroGradient):
        poincare_ratio(np.zeros(g.n_fluid), g)


@pytest.mark.parametrize("m,n", [(4, 16), (8, 16), (4, 32)])
def test_contiguous_ratio_linear_closed_form(m, n):
    g = grid_of(m, n)
    x, _ = g.cell_centers()
    r = contiguous_mean_ratio(x[g.fluid], g, 2)
    assert abs(r - (2 * g.theta_discrete) ** -0.5) <= 1e-10


def test_contiguous_ratio_errors():
    g = grid_of()
    with pytest.raises(NoValidPairs):
        contiguous_mean_ratio(np.ones(g.n_fluid), g, 2)
    with pytest.raises(ValueError):
        contiguous_mean_ratio(np.ones(g.n_fluid), g, 3)


@pytest.mark.parametrize("eps", [(0.25, 0.125), (0.25, 0.25, 0.125), (0.3, 0.15, 0.1),
                                 (0.125, 0.25, 0.0625), (1.0, 0.5, 0.25)])
def test_bad_eps_lists(eps):
    with pytest.raises(ValueError):
        SweepConfig(eps_list=eps)


def test_sweep_rejects_no_obstacle():
    with pytest.raises(DegenerateCell):
        run_sweep(SweepConfig(shape=ObstacleShape()))


def _small(**kw):
    base = dict(eps_list=(1 / 2, 1 / 3, 1 / 4), n_per_cell=8, t_end=0.02, reference_grid_n=32,
                n_snapshots=3)
    base.update(kw)
    return SweepConfig(**base)


def test_small_sweep_report_is_complete_and_thread_independent():
    a = run_sweep(_small())
    b = run_sweep(_small(threads=3))
    assert not a.incomplete and len(a.records) == 3
    for ra, rb in zip(a.records, b.records):
        for k in ("err_u_avg", "err_d_avg", "norm_epsP_Lp", "mean_diff_ratio_d"):
            assert ra[k] == rb[k]
            assert math.isfinite(ra[k])
    assert set(a.verdicts) == set(sweep_verdicts(a.records))
    assert a.to_dict()["passed"] == a.passed


def test_failed_member_gives_incomplete_report():
    with pytest.raises(SweepAborted) as exc:
        run_sweep(_small(d_init=VectorExpr("1", "1")))
    rep = exc.value.report
    assert rep.incomplete and not rep.passed and rep.error
