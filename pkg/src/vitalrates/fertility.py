"""Convergence projection of proportionate age-specific fertility (PASFR).

Each future pattern blends, in logit space, a path towards a global model
pattern with a continuation of the country's own recent trend.  The weight
on the global path grows with the share of the interval ``[t_r, t_g]``
elapsed, and ``t_g`` is set per TFR trajectory from the timing of its
Phase III.  Times are period start years.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    PASFR_MIDPOINTS,
    PERIOD_LENGTH,
    DegenerateInputError,
    InsufficientDataError,
    PasfrPattern,
    inverse_logit,
    logit_clamped,
    mean_age_of_childbearing,
    period_label,
)

log = logging.getLogger(__name__)

# MAC changes smaller than this (years) are rounding noise, not a reversal.
MAC_TOLERANCE = 1e-9


@dataclass(frozen=True)
class FertilityProjectionConfig:
    trend_window: int = 3
    low_tfr_threshold: float = 1.8
    phase3_offset: int = 25
    min_reach: int = 10
    extrapolation_cap: int = 50
    ultimate_from_phase3_only: bool = False

    def __post_init__(self):
        if self.trend_window < 1:
            raise ValueError("trend window must cover at least one period")
        for name in ("low_tfr_threshold", "phase3_offset", "min_reach", "extrapolation_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _normalized(values: np.ndarray) -> PasfrPattern:
    return PasfrPattern(values / values.sum())


def _props(p) -> np.ndarray:
    return p.proportions if isinstance(p, PasfrPattern) else np.asarray(p, dtype=float)


def global_model_pattern(patterns: Sequence[PasfrPattern]) -> PasfrPattern:
    """Element-wise mean of several countries' latest patterns."""
    if len(patterns) == 0:
        raise DegenerateInputError("global model pattern needs at least one pattern")
    return _normalized(np.mean([_props(p) for p in patterns], axis=0))


def pasfr_toward_global(p_r, p_g, tau_t: float) -> PasfrPattern:
    lr, lg = logit_clamped(_props(p_r)), logit_clamped(_props(p_g))
    return _normalized(inverse_logit(lr + tau_t * (lg - lr)))


def pasfr_national_trend(p_r, p_r_minus_T, t: int, t_r: int, window: int = 3) -> PasfrPattern:
    """Continue the logit change observed over the last ``window`` periods.

    ``window`` counts 5-year periods, so the base of the slope is
    ``t_r - 5 * window``.
    """
    t_start = t_r - PERIOD_LENGTH * window
    if t_r == t_start:
        raise DegenerateInputError("national-trend window has zero length")
    lr, lrT = logit_clamped(_props(p_r)), logit_clamped(_props(p_r_minus_T))
    slope = (t - t_r) / (t_r - t_start)
    return _normalized(inverse_logit(lr + slope * (lr - lrT)))


def pasfr_blend(p_I, p_II, tau_t: float) -> PasfrPattern:
    z = tau_t * logit_clamped(_props(p_I)) + (1.0 - tau_t) * logit_clamped(_props(p_II))
    return _normalized(inverse_logit(z))


def mean_age_childbearing(p) -> float:
    """Mean age at childbearing using midpoints 17.5 ... 47.5."""
    return mean_age_of_childbearing(_props(p))


def asfr_from_pasfr(p, tfr: float) -> np.ndarray:
    """Births per woman per year in each 5-year group."""
    if tfr < 0:
        raise ValueError("TFR must be nonnegative")
    return tfr * _props(p) / PERIOD_LENGTH


# --------------------------------------------------------------------------
# Timing of convergence
# --------------------------------------------------------------------------


def ultimate_fertility(tfr_at_te, phase3_start=None, t_e: Optional[int] = None, phase3_only: bool = False) -> float:
    """Median TFR over trajectories in the last projection period.

    With ``phase3_only`` the median is restricted to trajectories whose
    Phase III started by ``t_e``; if none did, all trajectories are used.
    """
    values = np.asarray(tfr_at_te, dtype=float)
    if values.size == 0:
        raise InsufficientDataError("no TFR trajectories to take the median from")
    if phase3_only and phase3_start is not None:
        keep = np.array([s is not None and s <= t_e for s in phase3_start])
        if keep.any():
            values = values[keep]
    return float(np.median(values))


def _extrapolated_phase3(periods: np.ndarray, tfr: np.ndarray, t_e: int, cfg: FertilityProjectionConfig) -> int:
    last = periods <= t_e
    if last.sum() < 4:
        raise InsufficientDataError("Phase III extrapolation needs the last four TFR periods")
    x, y = periods[last][-4:].astype(float), tfr[last][-4:]
    slope, intercept = np.polyfit(x, y, 1)
    cap = t_e + cfg.extrapolation_cap
    if slope >= 0:
        return cap
    crossing = (cfg.low_tfr_threshold - intercept) / slope
    steps = math.ceil(round((crossing - t_e) / PERIOD_LENGTH, 9))
    return int(min(max(t_e + PERIOD_LENGTH * steps, t_e), cap))


def phase3_case(t_p3: Optional[int], t_e: int) -> int:
    """1 when Phase III starts before the last projection period, else 2."""
    return 1 if t_p3 is not None and t_p3 < t_e else 2


def estimate_tg(
    periods: Sequence[int],
    tfr: Sequence[float],
    t_p3: Optional[int],
    t_r: int,
    t_e: int,
    f_u: float,
    cfg: FertilityProjectionConfig = FertilityProjectionConfig(),
) -> int:
    """Period by which the trajectory reaches the global pattern.

    ``periods``/``tfr`` may include observed periods up to ``t_r``; the
    result is never earlier than ``t_r + min_reach``.
    """
    periods = np.asarray(periods, dtype=int)
    tfr = np.asarray(tfr, dtype=float)
    if phase3_case(t_p3, t_e) == 1:
        hits = periods[(tfr >= f_u) & (periods > t_p3)]
        if hits.size:
            t_g = max(int(hits.min()), t_r + cfg.min_reach)
        else:
            t_g = max(t_e, t_p3 + cfg.phase3_offset)
    else:
        at_te = tfr[periods == t_e]
        if at_te.size == 0:
            raise InsufficientDataError(f"no TFR value for the last period {period_label(t_e)}")
        if at_te[0] <= cfg.low_tfr_threshold:
            t_p3_hat = t_e
        else:
            t_p3_hat = _extrapolated_phase3(periods, tfr, t_e, cfg)
        t_g = t_p3_hat + cfg.phase3_offset
    return max(t_g, t_r + cfg.min_reach)


# --------------------------------------------------------------------------
# Trajectory projection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PasfrTrajectory:
    periods: tuple
    patterns: np.ndarray
    t_g: int
    case: int
    frozen_from: Optional[int] = None

    def pattern(self, period: int) -> PasfrPattern:
        return PasfrPattern(self.patterns[self.periods.index(period)])

    @property
    def mac(self) -> np.ndarray:
        return self.patterns @ PASFR_MIDPOINTS


def trend_base(history: Mapping[int, PasfrPattern], t_r: int, window: int) -> tuple:
    """Return ``(p_r_minus_T, window)``, shortening the window when history is short."""
    wanted = t_r - PERIOD_LENGTH * window
    if wanted in history:
        return history[wanted], window
    earlier = sorted(p for p in history if p < t_r)
    if not earlier:
        raise InsufficientDataError("PASFR history needs at least two periods for the national trend")
    start = earlier[0]
    short = (t_r - start) // PERIOD_LENGTH
    log.warning(
        "PASFR for %s missing; national trend uses %s (%d periods)",
        period_label(wanted), period_label(start), short,
    )
    return history[start], short


def project_pasfr_trajectory(
    history: Mapping[int, PasfrPattern],
    future_periods: Sequence[int],
    p_g: PasfrPattern,
    t_g: int,
    case: int,
    cfg: FertilityProjectionConfig = FertilityProjectionConfig(),
) -> PasfrTrajectory:
    """Patterns for every future period of one TFR trajectory.

    In Case 1, once the projected MAC starts to fall while sitting above the
    global pattern's MAC, the pattern with the highest MAC is held for the
    rest of the projection.
    """
    t_r = max(history)
    p_r = history[t_r]
    p_rT, window = trend_base(history, t_r, cfg.trend_window)
    mac_g = mean_age_childbearing(p_g)

    prev, prev_period = p_r.proportions, t_r
    prev_mac = mean_age_childbearing(prev)
    frozen_from = None
    out = []
    for t in future_periods:
        if frozen_from is not None:
            out.append(prev)
            continue
        if t >= t_g:
            p = p_g.proportions
        else:
            tau = (t - t_r) / (t_g - t_r)
            p_one = pasfr_toward_global(p_r, p_g, tau)
            p_two = pasfr_national_trend(p_r, p_rT, t, t_r, window)
            p = pasfr_blend(p_one, p_two, tau).proportions
        mac = mean_age_childbearing(p)
        if case == 1 and t <= t_g and mac < prev_mac - MAC_TOLERANCE and prev_mac > mac_g + MAC_TOLERANCE:
            frozen_from = prev_period
            out.append(prev)
            continue
        out.append(p)
        prev, prev_period, prev_mac = p, t, mac
    return PasfrTrajectory(tuple(int(t) for t in future_periods), np.array(out), t_g, case, frozen_from)
