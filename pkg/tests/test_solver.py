import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from icd.acceptance import oracle_roundtrip
from icd.data import GaussianMixture, ring_mixture, standard_normal
from icd.diffusion import make_schedule
from icd.inversion import encode_guided_ddim, latent_nll
from icd.rng import stream
from icd.solver import (AnalyticDenoiser, GuidanceSchedule, OdeDirection, SolverError, analytic_epsilon,
                        cfg_epsilon, ddim_solve, ddim_step, ddim_update, dynamic_w, threshold_sweep)


class ConstDenoiser:
    """Returns ``a`` for the null class and ``b`` otherwise; counts calls."""

    has_guidance = False
    null_class = 8

    def __init__(self, sched, a, b):
        self.schedule, self.a, self.b, self.n_evals = sched, a, b, 0

    def __call__(self, x, t, c=None, w=None):
        self.n_evals += 1
        v = self.a if c is None else self.b
        return np.broadcast_to(np.asarray(v, dtype=np.float64), np.shape(x)).copy()


def test_cfg_examples(sched, rng):
    den = ConstDenoiser(sched, [0.5, -1.0], [2.0, 3.0])
    x = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(cfg_epsilon(den, x, 100, 1, 1.0), np.broadcast_to([2.0, 3.0], (3, 2)))
    assert den.n_evals == 1
    np.testing.assert_array_equal(cfg_epsilon(den, x, 100, 1, 0.0), np.broadcast_to([0.5, -1.0], (3, 2)))
    assert den.n_evals == 3
    expect = np.array([0.5, -1.0]) + 8 * (np.array([2.0, 3.0]) - np.array([0.5, -1.0]))
    np.testing.assert_allclose(cfg_epsilon(den, x, 100, 1, 8.0), np.broadcast_to(expect, (3, 2)))
    with pytest.raises(ValueError):
        cfg_epsilon(den, x, 100, 1, -1.0)


@given(st.integers(0, 999), st.integers(0, 2 ** 31))
@settings(max_examples=50, deadline=None)
def test_ddim_identity_when_s_equals_t(t, seed):
    sched = make_schedule()
    x = np.random.default_rng(seed).standard_normal((4, 2))
    den = ConstDenoiser(sched, [1.0, 1.0], [1.0, 1.0])
    np.testing.assert_array_equal(ddim_step(den, x, t, t), x)
    np.testing.assert_array_equal(ddim_update(sched, x, t, t, np.ones_like(x)), x)


def test_ddim_zero_eps_scales(sched, rng):
    x = rng.standard_normal((4, 2))
    den = ConstDenoiser(sched, [0.0, 0.0], [0.0, 0.0])
    np.testing.assert_allclose(ddim_step(den, x, 500, 200),
                               np.sqrt(sched.alpha_bar[200] / sched.alpha_bar[500]) * x)


def test_reverse_then_forward_is_nearly_reversible():
    mix = ring_mixture()
    sched = make_schedule(500)
    den = AnalyticDenoiser(mix, sched)
    x, c = mix.sample(256, stream(0, "rev"))
    g = sched.grid
    for i in range(1, len(g)):
        t, s = int(g[i]), int(g[i - 1])
        xt = np.sqrt(sched.alpha_bar[t]) * x + np.sqrt(1 - sched.alpha_bar[t]) * stream(i, "e").standard_normal(x.shape)
        back = ddim_step(den, ddim_step(den, xt, t, s, c), s, t, c)
        assert np.max(np.abs(back - xt)) < 1e-2


def test_zero_step_grid_is_identity(sched, rng):
    x = rng.standard_normal((4, 2))
    den = AnalyticDenoiser(ring_mixture(), sched)
    out, traj = ddim_solve(den, x, OdeDirection.FORWARD, [19])
    np.testing.assert_array_equal(out, x)
    assert len(traj) == 1


def test_solve_records_trajectory(sched, rng):
    den = AnalyticDenoiser(ring_mixture(), sched)
    _, traj = ddim_solve(den, rng.standard_normal((3, 2)), OdeDirection.REVERSE, sched.grid)
    assert [t for t, _ in traj] == list(sched.grid[::-1])


def test_solver_error_on_non_finite(sched):
    den = ConstDenoiser(sched, [np.nan, 0.0], [np.nan, 0.0])
    with pytest.raises(SolverError) as info:
        ddim_solve(den, np.zeros((2, 2)), OdeDirection.FORWARD, sched.grid)
    assert info.value.step == 0


@pytest.mark.xfail(strict=True, reason="discretisation floor of the 49-interval grid is above 1e-3; see decisions")
def test_oracle_roundtrip_below_1e3():
    assert oracle_roundtrip(ring_mixture().component(0), 49) < 1e-3


def test_oracle_roundtrip_first_order_convergence():
    comp = ring_mixture().component(0)
    errs = [oracle_roundtrip(comp, n, n=512) for n in (49, 98, 196)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 1.2 <= coarse / fine <= 4.0


def test_guided_encoding_lowers_likelihood(mix, sched):
    den = AnalyticDenoiser(mix, sched)
    x, c = mix.sample(2048, stream(0, "nll"))
    z1 = encode_guided_ddim(den, x, c, GuidanceSchedule.unguided())
    z8 = encode_guided_ddim(den, x, c, GuidanceSchedule.constant(8.0))
    assert latent_nll(z8) > latent_nll(z1)


def test_dynamic_w_examples():
    g = GuidanceSchedule.step(8.0, 0.7)
    assert dynamic_w(g, 900, 1000) == 1.0
    assert dynamic_w(g, 500, 1000) == 8.0
    assert dynamic_w(g, 700, 1000) == 8.0
    c = GuidanceSchedule.constant(5.0)
    assert all(dynamic_w(c, t, 1000) == 5.0 for t in range(0, 1000, 37))
    r = GuidanceSchedule("ramp", 8.0, 0.3, 0.7)
    assert dynamic_w(r, 800, 1000) == 1.0
    assert dynamic_w(r, 100, 1000) == 8.0
    assert dynamic_w(r, 500, 1000) == pytest.approx(4.5)


@pytest.mark.parametrize("args", [("bogus", 8, 0.7, 0.7), ("step", 0.5, 0.7, 0.7), ("ramp", 8, 0.8, 0.2),
                                  ("step", 8, 0.5, 0.7)])
def test_guidance_schedule_validation(args):
    with pytest.raises(ValueError):
        GuidanceSchedule(*args)


def test_analytic_matches_monte_carlo_posterior(mix, sched):
    r = stream(0, "mc")
    x0, _ = mix.sample(10 ** 6, r)
    for t in (100, 400, 800):
        a = sched.alpha_bar[t]
        # typical points under x_t, so the importance weights are not degenerate
        pts = np.sqrt(a) * mix.means[[0, 3]] + np.sqrt(1 - a) * np.array([[0.4, -0.3], [-0.5, 0.2]])
        for p in pts:
            resid = (p - np.sqrt(a) * x0) / np.sqrt(1 - a)
            logw = -0.5 * (resid ** 2).sum(1)
            w = np.exp(logw - logw.max())
            mc = (w[:, None] * resid).sum(0) / w.sum()
            exact = analytic_epsilon(mix, sched, p[None], t)[0]
            np.testing.assert_allclose(exact, mc, atol=1e-2)


def test_analytic_standard_normal_closed_form(sched, rng):
    x = rng.standard_normal((5, 2))
    for t in (0, 300, 999):
        np.testing.assert_allclose(analytic_epsilon(standard_normal(), sched, x, t),
                                   np.sqrt(1 - sched.alpha_bar[t]) * x, rtol=1e-12)


def test_analytic_limit_small_t(mix, sched):
    eps = analytic_epsilon(mix, sched, mix.means.copy(), 0)
    assert np.max(np.abs(eps)) < 0.05


def test_analytic_symmetry_axis(sched):
    mix = GaussianMixture(np.array([0.5, 0.5]), np.array([[0.0, 2.0], [0.0, -2.0]]), np.array([0.3, 0.3]))
    x = np.array([[1.5, 0.0], [-0.7, 0.0]])
    for t in (50, 500, 950):
        assert np.all(np.abs(analytic_epsilon(mix, sched, x, t)[:, 1]) < 1e-12)


def test_threshold_sweep_properties(mix, sched):
    den = AnalyticDenoiser(mix, sched)
    x, c = mix.sample(512, stream(0, "sweep"))
    thresholds = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0]
    rows = threshold_sweep(den, x, c, thresholds, 8.0)
    mse = {r["threshold"]: r["mse"] for r in rows}
    z, _ = ddim_solve(den, x, OdeDirection.FORWARD, sched.grid, c)
    xr, _ = ddim_solve(den, z, OdeDirection.REVERSE, sched.grid, c)
    assert mse[0.0] == pytest.approx(np.mean((xr - x) ** 2), rel=1e-12)
    assert mse[1.0] > mse[0.2]
    assert spearmanr(thresholds, [mse[t] for t in thresholds]).statistic > 0.8
    with pytest.raises(ValueError):
        threshold_sweep(den, x, c, [1.5])
