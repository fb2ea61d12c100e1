import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import life_table as oracle_table
from vitalrates.core import AgeGrid, InvalidRateError, MortalitySchedule
from vitalrates.life_table import (
    build_life_table,
    e0_array,
    e0_from_mx,
    separation_factors,
)

CANON = AgeGrid.canonical()
COLUMNS = ("A", "q", "l", "d", "L", "T", "e")


def random_schedule(rng, grid=CANON):
    x = grid.midpoints
    log_m = np.log(0.02 * np.exp(-1.3 * x) + 0.0003 + 2e-5 * np.exp(0.1 * x))
    rates = np.exp(log_m + rng.normal(0, 0.15, len(grid)) + rng.normal(0, 0.8))
    return MortalitySchedule(grid, np.minimum(rates, 2.0))


def test_q_spot_value():
    g = AgeGrid.with_open_at(15)
    # Group 5-9 gets A = 2.5 and m = 0.1.
    lt = build_life_table(MortalitySchedule(g, [0.01, 0.002, 0.1, 0.001, 0.2]), "F")
    assert lt.A[2] == 2.5
    assert lt.q[2] == 0.4


def test_infant_factors_high_mortality():
    g = AgeGrid.with_open_at(20)
    m = MortalitySchedule(g, [0.2, 0.01, 0.002, 0.001, 0.002, 0.01])
    assert separation_factors(m, "M")[0] == 0.33
    assert separation_factors(m, "F")[0] == 0.35
    assert separation_factors(m, "M")[1] == 1.352
    assert separation_factors(m, "F")[1] == 1.361


def test_infant_factor_low_mortality():
    g = AgeGrid.with_open_at(20)
    m = MortalitySchedule(g, [0.05, 0.01, 0.002, 0.001, 0.002, 0.01])
    assert separation_factors(m, "M")[0] == pytest.approx(0.1792, abs=1e-15)


def test_greville_flat_adult_rates():
    c = 0.03
    m = MortalitySchedule(CANON, np.full(28, c))
    A = separation_factors(m, "F")
    assert np.allclose(A[4:27], 2.5 - 25 / 12 * c, atol=1e-15)
    assert A[2] == A[3] == 2.5
    assert np.isnan(A[-1])


def test_zero_mortality_limit():
    g = AgeGrid.with_open_at(20)
    m = MortalitySchedule(g, [1e-14, 1e-14, 1e-14, 1e-14, 1e-14, 0.5])
    lt = build_life_table(m, "F")
    assert np.allclose(lt.q[:-1], 0.0, atol=1e-12)
    assert np.allclose(lt.L[:-1], g.n[:-1], rtol=1e-10)


def test_tiny_rates_e0_near_grid_end():
    m = MortalitySchedule(CANON, np.r_[np.full(27, 1e-9), 1e3])
    e0 = e0_from_mx(m, "F")
    assert 129 < e0 < 130.5


def test_missing_open_rate_rejected():
    rates = np.r_[np.full(27, 0.01), np.nan]
    with pytest.raises(InvalidRateError):
        build_life_table(MortalitySchedule(CANON, rates), "F")


def test_matches_oracle_on_random_schedules():
    rng = np.random.default_rng(42)
    for i in range(1000):
        grid = CANON if i % 2 == 0 else AgeGrid.with_open_at(int(rng.choice([85, 90, 95, 100])))
        sched = random_schedule(rng, grid)
        sex = "F" if i % 3 else "M"
        lt = build_life_table(sched, sex)
        ref = oracle_table(list(grid.starts), list(sched.rates), sex)
        for col in COLUMNS:
            got = getattr(lt, col)
            want = np.array(ref[col])
            scale = np.maximum(1.0, np.abs(want))
            ok = np.isnan(want) & np.isnan(got) | (np.abs(got - want) <= 1e-12 * scale)
            assert ok.all(), (i, col)


def test_batched_e0_matches_single():
    rng = np.random.default_rng(1)
    batch = np.stack([random_schedule(rng).rates for _ in range(20)])
    e0 = e0_array(batch, CANON, "M")
    single = [e0_from_mx(MortalitySchedule(CANON, r), "M") for r in batch]
    assert np.array_equal(e0, single)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.01, 3.0))
def test_scaling_rates_up_lowers_e0(seed, factor):
    sched = random_schedule(np.random.default_rng(seed))
    higher = MortalitySchedule(CANON, sched.rates * factor)
    assert e0_from_mx(higher, "F") < e0_from_mx(sched, "F")


@given(st.floats(0.001, 1.0), st.floats(1.01, 2.0))
def test_constant_hazard_e0_decreasing(c, factor):
    e_low = e0_from_mx(MortalitySchedule(CANON, np.full(28, c)), "F")
    e_high = e0_from_mx(MortalitySchedule(CANON, np.full(28, c * factor)), "F")
    assert np.isfinite(e_low) and e_high < e_low


def test_rows_and_columns_consistent():
    lt = build_life_table(random_schedule(np.random.default_rng(3)), "F")
    assert lt.l[0] == 1.0
    assert lt.d.sum() == pytest.approx(1.0, abs=1e-12)
    assert lt.e0 == pytest.approx(lt.T[0], abs=0)
    rows = list(lt.rows())
    assert rows[-1]["age"] == "130+" and len(rows) == 28
