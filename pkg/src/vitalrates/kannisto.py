"""Old-age mortality extension with the Kannisto logistic model.

Two flavours are provided.  The classic fit runs an independent regression
per sex; the coherent fit shares the slope ``d`` between the sexes so the
extended male and female curves can never cross.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CANONICAL_STARTS,
    AgeGrid,
    InsufficientDataError,
    InvalidRateError,
    MortalitySchedule,
    MortalitySurface,
    inverse_logit,
    logit,
    period_label,
)

FIT_MIN_AGE = 80
FIT_MAX_AGE = 100
EXTENSION_MAX_SPLICE = 100
OPEN_EVALUATION_AGE = 130.0


@dataclass(frozen=True)
class KannistoCoeffs:
    c_f: float
    c_m: float
    d: float
    fit_ages: tuple

    def __post_init__(self):
        if not (self.c_f > 0 and self.c_m > 0):
            raise InvalidRateError("Kannisto level parameters must be positive")

    def rate(self, sex: str, x):
        c = self.c_f if sex == "F" else self.c_m
        return kannisto_rate(c, self.d, x)


def kannisto_rate(c: float, d: float, x):
    """``m(x) = c e^{dx} / (1 + c e^{dx})`` evaluated through the logit."""
    return inverse_logit(np.log(c) + d * np.asarray(x, dtype=float))


def _fit_points(m: MortalitySchedule, min_age: float, max_age: float):
    grid = m.grid
    idx = [
        i
        for i, (s, w) in enumerate(zip(grid.starts, grid.widths))
        if w is not None and min_age <= s < max_age
    ]
    if len(idx) < 2:
        raise InsufficientDataError(
            f"Kannisto fit needs at least 2 closed age groups in [{min_age}, {max_age}); "
            f"found {len(idx)}"
        )
    rates = m.rates[idx]
    if np.any(rates >= 1):
        raise InvalidRateError("Kannisto fit requires rates below 1 (logit undefined)")
    y = logit(rates)
    if not np.all(np.isfinite(y)):
        raise InvalidRateError("non-finite logit of mortality rate in the fit range")
    return grid.midpoints[idx], y


def fit_coherent_kannisto(
    m_f: MortalitySchedule,
    m_m: MortalitySchedule,
    min_age: float = FIT_MIN_AGE,
    max_age: float = FIT_MAX_AGE,
) -> KannistoCoeffs:
    """Joint least-squares fit of ``logit m = b0 + b1*[male] + b2*x``.

    Every closed group starting in ``[min_age, max_age)`` enters for both
    sexes, so four groups per sex give eight observations.
    """
    if m_f.grid != m_m.grid:
        raise InsufficientDataError("female and male schedules must share one age grid")
    x_f, y_f = _fit_points(m_f, min_age, max_age)
    x_m, y_m = _fit_points(m_m, min_age, max_age)
    # Both sexes share the ages, so the design is balanced and the least
    # squares solution has a closed form: the sex effect is the difference of
    # mean logits and the slope comes from the sex-averaged logits.  Written
    # this way, m_M >= m_F on the fit range gives c_M >= c_F without
    # rounding noise.
    x_bar = x_f.mean()
    dx = x_f - x_bar
    d = float(np.dot(dx, (y_f + y_m) / 2.0) / np.dot(dx, dx))
    beta0 = y_f.mean() - d * x_bar
    beta1 = y_m.mean() - y_f.mean()
    return KannistoCoeffs(
        c_f=float(np.exp(beta0)),
        c_m=float(np.exp(beta0 + beta1)),
        d=d,
        fit_ages=tuple(float(a) for a in x_f),
    )


def fit_classic_kannisto(
    m: MortalitySchedule, min_age: float = FIT_MIN_AGE, max_age: float = FIT_MAX_AGE
) -> tuple:
    """Single-sex fit of ``logit m = log c + d x``; returns ``(c, d)``."""
    x, y = _fit_points(m, min_age, max_age)
    design = np.column_stack([np.ones_like(x), x])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(np.exp(beta[0])), float(beta[1])


def _splice_start(grid: AgeGrid) -> int:
    # Observed closed groups below 100 are kept; everything from the observed
    # open group (or 100, whichever is lower) is replaced by fitted values.
    return min(grid.open_start, EXTENSION_MAX_SPLICE)


def extend_schedule(m: MortalitySchedule, c: float, d: float) -> MortalitySchedule:
    """Place ``m`` on the canonical grid using the Kannisto curve ``(c, d)`` above the splice."""
    grid = m.grid
    target = AgeGrid.canonical()
    splice = _splice_start(grid)
    rates = np.empty(len(target))
    mids = target.midpoints
    mids[-1] = OPEN_EVALUATION_AGE
    for i, start in enumerate(target.starts):
        if start < splice:
            rates[i] = m.rates[grid.index(start)]
        else:
            rates[i] = kannisto_rate(c, d, mids[i])
    return MortalitySchedule(target, rates)


def extend_to_130(
    surface_f: MortalitySurface,
    surface_m: MortalitySurface,
    mode: str = "coherent",
    min_age: float = FIT_MIN_AGE,
    max_age: float = FIT_MAX_AGE,
):
    """Extend both sexes' surfaces to the canonical grid ending in 130+.

    Each period is fitted on its own.  Returns ``(surface_f, surface_m)``.
    """
    if mode not in ("coherent", "classic"):
        raise ValueError(f"unknown Kannisto mode {mode!r}")
    if surface_f.periods != surface_m.periods or surface_f.grid != surface_m.grid:
        raise InsufficientDataError("female and male surfaces must share periods and grid")
    if surface_f.grid.open_start < 85:
        raise InsufficientDataError("the observed open age group must start at 85 or above")
    if surface_f.grid.open_start not in CANONICAL_STARTS:
        raise InsufficientDataError("observed grid is not abridged")

    out_f, out_m = [], []
    for i, period in enumerate(surface_f.periods):
        mf = MortalitySchedule(surface_f.grid, surface_f.rates[i])
        mm = MortalitySchedule(surface_m.grid, surface_m.rates[i])
        try:
            if mode == "coherent":
                co = fit_coherent_kannisto(mf, mm, min_age, max_age)
                (cf, df), (cm, dm) = (co.c_f, co.d), (co.c_m, co.d)
            else:
                cf, df = fit_classic_kannisto(mf, min_age, max_age)
                cm, dm = fit_classic_kannisto(mm, min_age, max_age)
        except (InsufficientDataError, InvalidRateError) as exc:
            raise type(exc)(f"period {period_label(period)}: {exc}") from exc
        out_f.append(extend_schedule(mf, cf, df).rates)
        out_m.append(extend_schedule(mm, cm, dm).rates)

    canonical = AgeGrid.canonical()
    return (
        MortalitySurface("F", surface_f.periods, canonical, np.vstack(out_f)),
        MortalitySurface("M", surface_m.periods, canonical, np.vstack(out_m)),
    )
