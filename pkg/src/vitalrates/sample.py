"""Synthetic input dataset: one country, many e0/TFR trajectories.

The data are made up.  Mortality follows a Lee-Carter structure with
log-normal noise, e0 and TFR trajectories are simple stochastic drifts,
and PASFR history shifts gradually to older ages.  Three reference
countries in the PASFR file supply the global model pattern.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import PASFR_AGES, PASFR_MIDPOINTS, AgeGrid, MortalitySchedule, period_label
from .life_table import e0_from_mx

COUNTRY = "SYN"
REFERENCE_COUNTRIES = ("REF_A", "REF_B", "REF_C")
HISTORY_PERIODS = tuple(range(1950, 2010, 5))
FUTURE_PERIODS = tuple(range(2010, 2100, 5))
TFR_HISTORY = {1990: 3.2, 1995: 2.9, 2000: 2.6, 2005: 2.4}


def _fmt(x: float) -> str:
    return repr(float(x))


def _female_base(x):
    return 0.03 * np.exp(-1.2 * x) + 0.0003 + 2.5e-5 * np.exp(0.095 * x)


def _male_factor(x):
    return 1.25 + 0.45 * np.exp(-(((x - 22.0) / 15.0) ** 2))


def synthetic_mortality(rng: np.random.Generator, open_start: int = 100):
    grid = AgeGrid.with_open_at(open_start)
    x = grid.midpoints.copy()
    x[-1] = open_start + 2.5
    base_f = _female_base(x)
    base_m = base_f * _male_factor(x)
    b = 0.065 - 0.00045 * x
    b = b / b.sum()
    k = -2.0 * (np.array(HISTORY_PERIODS) - HISTORY_PERIODS[-1]) / 5.0
    rates = {}
    for sex, base in (("F", base_f), ("M", base_m)):
        log_m = np.log(base)[None, :] + k[:, None] * b[None, :]
        log_m = log_m + rng.normal(0.0, 0.03, size=log_m.shape)
        rates[sex] = np.exp(log_m)
    return grid, rates


def _pasfr_shape(mu: float, sigma: float = 6.0) -> np.ndarray:
    w = np.exp(-0.5 * ((PASFR_MIDPOINTS - mu) / sigma) ** 2)
    return w / w.sum()


def synthetic_trajectories(rng: np.random.Generator, e0_f0: float, e0_m0: float, n: int):
    steps = len(FUTURE_PERIODS)
    horizon = np.arange(1, steps + 1)
    gain_mean = 1.3 * np.exp(-0.045 * horizon)
    gains = gain_mean[None, :] + rng.normal(0.0, 0.45, size=(n, steps))
    e0_f = e0_f0 + np.cumsum(gains, axis=1)
    gap = (e0_f0 - e0_m0) * np.exp(-0.02 * horizon)[None, :] + rng.normal(0.0, 0.5, size=(n, steps))
    e0_m = e0_f - gap

    ultimate = rng.uniform(1.6, 2.05, size=n)
    tfr = np.empty((n, steps))
    f = np.full(n, TFR_HISTORY[2005])
    for j in range(steps):
        f = f - 0.3 * (f - ultimate) + rng.normal(0.0, 0.1, size=n)
        f = np.clip(f, 0.8, None)
        tfr[:, j] = f
    phase3 = []
    for i in range(n):
        start = None
        for j in range(steps - 1):
            if tfr[i, j] < 2.0 and tfr[i, j + 1] > tfr[i, j]:
                start = FUTURE_PERIODS[j + 1]
                break
        phase3.append(start)
    return e0_f, e0_m, tfr, phase3


def write_sample_dataset(out_dir, n_trajectories: int = 1000, seed: int = 20140701) -> Path:
    """Write the synthetic inputs and a ready-to-run ``config.txt`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    grid, rates = synthetic_mortality(rng)
    with (out / "mortality.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "sex", "period", "age_start", "age_width", "mx"])
        for sex in ("F", "M"):
            for i, p in enumerate(HISTORY_PERIODS):
                for j, (s, width) in enumerate(zip(grid.starts, grid.widths)):
                    w.writerow([COUNTRY, sex, period_label(p), s, "open" if width is None else width, _fmt(rates[sex][i, j])])

    e0_f0 = e0_from_mx(MortalitySchedule(grid, rates["F"][-1]), "F")
    e0_m0 = e0_from_mx(MortalitySchedule(grid, rates["M"][-1]), "M")
    e0_f, e0_m, tfr, phase3 = synthetic_trajectories(rng, e0_f0, e0_m0, n_trajectories)
    with (out / "e0.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "trajectory", "period", "e0_f", "e0_m"])
        for i in range(n_trajectories):
            for j, p in enumerate(FUTURE_PERIODS):
                w.writerow([COUNTRY, i + 1, period_label(p), _fmt(round(e0_f[i, j], 4)), _fmt(round(e0_m[i, j], 4))])

    with (out / "tfr.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "trajectory", "period", "tfr", "phase3_start"])
        for i in range(n_trajectories):
            p3 = "" if phase3[i] is None else period_label(phase3[i])
            for p, v in TFR_HISTORY.items():
                w.writerow([COUNTRY, i + 1, period_label(p), _fmt(v), p3])
            for j, p in enumerate(FUTURE_PERIODS):
                w.writerow([COUNTRY, i + 1, period_label(p), _fmt(round(tfr[i, j], 4)), p3])

    with (out / "pasfr.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "period", "age_start", "pasfr"])
        histories = {COUNTRY: (26.5, 0.45)}
        histories.update({c: (29.5 + 0.6 * i, 0.35) for i, c in enumerate(REFERENCE_COUNTRIES)})
        for country, (mu_1990, step) in histories.items():
            for j, p in enumerate((1990, 1995, 2000, 2005)):
                pattern = _pasfr_shape(mu_1990 + step * j)
                for a, v in zip(PASFR_AGES, pattern):
                    w.writerow([country, period_label(p), a, _fmt(v)])

    canonical = AgeGrid.canonical()
    model_b = 0.065 - 0.00045 * canonical.midpoints
    model_b = model_b / model_b.sum()
    with (out / "model_bx.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pattern", "age_start", "bx"])
        for s, v in zip(canonical.starts, model_b):
            w.writerow(["SYN_MODEL", s, _fmt(v)])

    (out / "config.txt").write_text(
        "# Synthetic sample run\n"
        "mortality_file = mortality.csv\n"
        "e0_file = e0.csv\n"
        "tfr_file = tfr.csv\n"
        "pasfr_file = pasfr.csv\n"
        "model_bx_file = model_bx.csv\n"
        f"global_pattern_countries = {','.join(REFERENCE_COUNTRIES)}\n"
        "ax_method = latest_smoothed\n"
        "out = output\n"
    )
    return out


def bundled_sample_dir() -> Path:
    """Directory of the sample dataset shipped with the package."""
    return Path(__file__).parent / "data" / "sample"
