import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lee_carter_e0
from vitalrates.core import AgeGrid, InvalidRateError, MortalitySchedule, MortalitySurface
from vitalrates.life_table import e0_array, e0_from_mx
from vitalrates.mortality import (
    BisectionSettings,
    MortalityProjectionConfig,
    UnbracketedTargetError,
    apply_crossover_cap,
    fit_country_mortality,
    hiv_ax_path,
    project_batch,
    project_trajectory,
    solve_k_batch,
    solve_k_for_e0,
    validate_model_bx,
)

CANON = AgeGrid.canonical()


def lc_inputs(seed=0):
    rng = np.random.default_rng(seed)
    x = CANON.midpoints
    a = np.log(0.02 * np.exp(-1.3 * x) + 0.0004 + 3e-5 * np.exp(0.095 * x))
    b = rng.uniform(0.5, 1.5, 28) * (1.2 - x / 150)
    return a, b / b.sum()


def test_k_zero_at_baseline_e0():
    a, b = lc_inputs()
    target = e0_from_mx(MortalitySchedule(CANON, np.exp(a)), "F")
    assert abs(solve_k_for_e0(a, b, target, "F")) <= 1e-3


def test_forward_then_invert():
    a, b = lc_inputs(1)
    target = lee_carter_e0(a, b, -7.3, CANON.starts, "M")
    assert solve_k_for_e0(a, b, target, "M") == pytest.approx(-7.3, abs=1e-3)


def test_impossible_target():
    a, b = lc_inputs()
    with pytest.raises(UnbracketedTargetError):
        solve_k_for_e0(a, b, 200.0, "F")


@settings(max_examples=40, deadline=None)
@given(st.floats(-40, 20), st.integers(0, 100))
def test_round_trip_property(k, seed):
    a, b = lc_inputs(seed)
    target = lee_carter_e0(a, b, k, CANON.starts, "F")
    k_hat, achieved = solve_k_batch([a], [b], [target], "F", CANON)
    assert abs(k_hat[0] - k) <= 1e-3
    assert abs(achieved[0] - target) <= 0.01


def test_batch_results_independent_of_batch_composition():
    a, b = lc_inputs(2)
    targets = np.array([70.0, 75.0, 80.0, 85.0])
    n = len(targets)
    k_all, _ = solve_k_batch(np.tile(a, (n, 1)), np.tile(b, (n, 1)), targets, "F", CANON)
    for i in range(n):
        k_one, _ = solve_k_batch([a], [b], targets[i : i + 1], "F", CANON)
        assert k_one[0] == k_all[i]


def test_bracket_expansion():
    a, b = lc_inputs(3)
    tight = BisectionSettings(k_lo=-1.0, k_hi=1.0)
    target = lee_carter_e0(a, b, -6.0, CANON.starts, "F")
    k, _ = solve_k_batch([a], [b], [target], "F", CANON, tight)
    assert k[0] == pytest.approx(-6.0, abs=1e-3)


def test_cap_no_op_when_ordered():
    rng = np.random.default_rng(0)
    f = rng.uniform(0.01, 0.5, (3, 28))
    m = f * 1.1
    out, mask = apply_crossover_cap(f, m, np.full(3, 80.0), np.full(3, 75.0), CANON)
    assert mask.all() and np.array_equal(out, m)


def test_cap_lifts_crossing_tail():
    f = np.linspace(0.001, 0.9, 28)
    m = f.copy()
    m[CANON.index(105):] *= 0.8
    out, _ = apply_crossover_cap(f, m, np.array(82.0), np.array(78.0), CANON)
    old = np.array(CANON.starts) >= 100
    assert np.all(out[old] >= f[old])
    assert np.array_equal(out[~old], m[~old])
    # Not applied when the male e0 is the higher one.
    out2, mask = apply_crossover_cap(f, m, np.array(78.0), np.array(82.0), CANON)
    assert not mask and np.array_equal(out2, m)


def test_fit_and_project(surfaces):
    sf, sm = surfaces
    cfg = MortalityProjectionConfig(ax_method="latest")
    fit = fit_country_mortality(sf, sm, cfg)
    assert fit.grid.is_canonical()
    assert fit.b_x.sum() == pytest.approx(1.0, abs=1e-12)
    periods = (2010, 2015, 2020)
    e0_f, e0_m = np.array([80.5, 81.5, 82.5]), np.array([76.0, 77.0, 78.0])
    proj = project_trajectory(fit, periods, e0_f, e0_m, cfg)
    assert np.all(np.abs(proj.achieved_e0_f - e0_f) <= 0.01)
    assert np.all(np.abs(proj.achieved_e0_m - e0_m) <= 0.01)
    # Female schedules are untouched by the cap, so their e0 still matches.
    assert np.all(np.abs(e0_array(proj.rates_f, CANON, "F") - e0_f) <= 0.01)
    assert proj.schedule("F", 2015).rates.shape == (28,)


def test_projection_has_no_old_age_crossover(surfaces):
    sf, sm = surfaces
    fit = fit_country_mortality(sf, sm)
    rng = np.random.default_rng(9)
    e0_f = 78 + np.cumsum(rng.uniform(0.5, 1.5, (10, 6)), axis=1)
    e0_m = e0_f - rng.uniform(0.5, 5, (10, 6))
    batch = project_batch(fit, tuple(range(2010, 2040, 5)), e0_f, e0_m)
    old = np.array(CANON.starts) >= 100
    assert np.all(batch.rates_m[..., old] >= batch.rates_f[..., old])
    assert np.all(np.abs(batch.achieved_e0_m - e0_m) <= 0.01)


def test_crossing_tails_get_capped():
    # Males have a flatter old-age slope so their tail dips below females'.
    periods = tuple(range(1950, 2010, 5))
    g = AgeGrid.with_open_at(100)
    x = g.midpoints.copy()
    x[-1] = 102.5
    t = np.arange(len(periods))[:, None]
    base_f = 0.01 * np.exp(-x) + 0.0003 + 1e-5 * np.exp(0.11 * x)
    base_m = 0.013 * np.exp(-x) + 0.0006 + 6e-5 * np.exp(0.09 * x)
    sf = MortalitySurface("F", periods, g, base_f * np.exp(-0.03 * t))
    sm = MortalitySurface("M", periods, g, base_m * np.exp(-0.03 * t))
    cfg = MortalityProjectionConfig(kannisto_mode="classic")
    fit = fit_country_mortality(sf, sm, cfg)
    e0_f, e0_m = np.array([[82.0, 83.0]]), np.array([[78.0, 79.0]])
    batch = project_batch(fit, (2010, 2015), e0_f, e0_m, cfg)
    old = np.array(CANON.starts) >= 100
    assert batch.capped.all()
    assert np.all(batch.rates_m[..., old] >= batch.rates_f[..., old])
    assert np.all(np.abs(batch.achieved_e0_m - e0_m) <= 0.01)


def test_model_bx_validation():
    b = np.full(28, 1 / 28)
    assert np.array_equal(validate_model_bx(b, 28), b)
    with pytest.raises(InvalidRateError):
        validate_model_bx(b * 0.98, 28)


def test_hiv_requires_model_bx(surfaces):
    with pytest.raises(InvalidRateError):
        fit_country_mortality(*surfaces, MortalityProjectionConfig(hiv_mode=True))


def test_hiv_path_endpoints(surfaces):
    sf, sm = surfaces
    cfg = MortalityProjectionConfig(hiv_mode=True, model_bx=tuple(np.full(28, 1 / 28)))
    fit = fit_country_mortality(sf, sm, cfg)
    path = fit.hiv_f
    assert path.t_r == 2005 and path.t_target == 2095
    assert np.array_equal(fit.ax("F", 2005), path.a_s)
    assert np.array_equal(fit.ax("F", 2095), path.a_u)
    assert np.array_equal(fit.ax("F", 2050), (path.a_s + path.a_u) / 2)
    # The pre-epidemic average only uses periods ending by 1985.
    ext = fit.surface_f
    assert np.allclose(path.a_v, ext.log_rates[:7].mean(axis=0))
    # No rotation: B_x is the model schedule at every e0.
    assert fit.rotation is None
    assert np.array_equal(fit.bx_at([70.0, 95.0, 105.0]), np.tile(np.full(28, 1 / 28), (3, 1)))


def test_hiv_needs_pre_cutoff_periods():
    from conftest import gompertz_surface
    from vitalrates.core import InsufficientDataError

    s = gompertz_surface("F", (1990, 1995, 2000))
    with pytest.raises(InsufficientDataError):
        hiv_ax_path(s)
