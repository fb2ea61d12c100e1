"""Projection of sex- and age-specific mortality from e0 trajectories.

A country is fitted once (:func:`fit_country_mortality`) and the resulting
:class:`MortalityFit` is shared read-only by every trajectory.  Projection
of a trajectory rotates ``b_x`` at the combined e0, inverts the life table
for each sex by bisection on ``k`` and applies the old-age sex-crossover
cap.  The bisection is batched: each element of a batch is iterated on its
own, so results do not depend on what else is in the batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    PERIOD_LENGTH,
    AgeGrid,
    InsufficientDataError,
    InvalidRateError,
    MortalitySchedule,
    MortalitySurface,
    VitalRatesError,
    period_label,
    smooth_over_age,
)
from .kannisto import extend_to_130
from .lee_carter import (
    ROTATION_START_E0,
    ULTIMATE_E0,
    LeeCarterParams,
    RotationSchedule,
    coherent_bx,
    estimate_ax,
    estimate_kt_bx,
)
from .life_table import e0_array

log = logging.getLogger(__name__)

LOG_RATE_LIMIT = 700.0


class _SolverError(VitalRatesError):
    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class UnbracketedTargetError(_SolverError):
    pass


class ConvergenceError(_SolverError):
    pass


@dataclass(frozen=True)
class BisectionSettings:
    k_lo: float = -300.0
    k_hi: float = 300.0
    e0_tolerance: float = 0.01
    k_tolerance: float = 1e-7
    max_iter: int = 200
    max_expansions: int = 3
    # Targets beyond the start of the 130+ group are treated as unreachable:
    # the open-group person-years l/m grow without bound as k falls, so the
    # numerical range of e0 is not a meaningful bracket there.
    e0_max: float = 130.0

    def __post_init__(self):
        if not self.k_lo < self.k_hi:
            raise ValueError("bisection bracket needs k_lo < k_hi")
        if self.e0_tolerance <= 0 or self.k_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class MortalityProjectionConfig:
    """Per-country options.

    ``model_bx`` switches ``b_x`` from estimated to a supplied model
    schedule (28 groups, summing to one).  ``hiv_mode`` replaces the
    baseline by a path moving from the smoothed latest pattern to a smoothed
    pre-epidemic average, and requires ``model_bx``.
    """

    ax_method: str = "average"
    model_bx: Optional[tuple] = None
    hiv_mode: bool = False
    hiv_cutoff_year: int = 1985
    hiv_target_year: int = 2100
    kannisto_mode: str = "coherent"
    kannisto_min_age: float = 80.0
    rotation: bool = True
    e0_start: float = ROTATION_START_E0
    e0_u: float = ULTIMATE_E0
    crossover_cap_age: int = 100
    bisection: BisectionSettings = field(default_factory=BisectionSettings)

    @property
    def bx_source(self) -> str:
        return "estimated" if self.model_bx is None else "model_life_table"


# --------------------------------------------------------------------------
# Solving k for a target e0
# --------------------------------------------------------------------------


def _e0_at(a, B, k, grid, sex):
    log_m = np.clip(a + B * k[:, None], -LOG_RATE_LIMIT, LOG_RATE_LIMIT)
    return e0_array(np.exp(log_m), grid, sex)


def solve_k_batch(a, B, targets, sex: str, grid: AgeGrid, settings: BisectionSettings = BisectionSettings()):
    """Bisection for ``k`` such that ``e0(exp(a + B k))`` hits each target.

    ``a`` and ``B`` have shape ``(N, n_ages)``, ``targets`` shape ``(N,)``.
    Returns ``(k, achieved_e0)``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    nb = targets.shape[0]
    outside = ~((targets > 0) & (targets < settings.e0_max))
    if outside.any():
        i = int(np.flatnonzero(outside)[0])
        raise UnbracketedTargetError(
            f"target e0 {targets[i]:.4f} ({sex}) is outside (0, {settings.e0_max:g})", index=i
        )
    lo = np.full(nb, float(settings.k_lo))
    hi = np.full(nb, float(settings.k_hi))
    f_lo = _e0_at(a, B, lo, grid, sex) - targets
    f_hi = _e0_at(a, B, hi, grid, sex) - targets

    for _ in range(settings.max_expansions + 1):
        unbracketed = np.sign(f_lo) * np.sign(f_hi) > 0
        if not unbracketed.any():
            break
        center, width = (lo + hi) / 2.0, hi - lo
        lo = np.where(unbracketed, center - width, lo)
        hi = np.where(unbracketed, center + width, hi)
        f_lo = _e0_at(a, B, lo, grid, sex) - targets
        f_hi = _e0_at(a, B, hi, grid, sex) - targets
    unbracketed = np.sign(f_lo) * np.sign(f_hi) > 0
    if unbracketed.any():
        i = int(np.flatnonzero(unbracketed)[0])
        e_lo, e_hi = f_lo[i] + targets[i], f_hi[i] + targets[i]
        raise UnbracketedTargetError(
            f"target e0 {targets[i]:.4f} ({sex}) is outside the achievable range "
            f"[{min(e_lo, e_hi):.4f}, {max(e_lo, e_hi):.4f}] for k in [{lo[i]:g}, {hi[i]:g}]",
            index=i,
        )

    for _ in range(settings.max_iter):
        active = (hi - lo) > settings.k_tolerance
        if not active.any():
            break
        mid = (lo + hi) / 2.0
        f_mid = _e0_at(a, B, mid, grid, sex) - targets
        move_lo = active & (np.sign(f_mid) == np.sign(f_lo))
        move_hi = active & ~move_lo
        lo = np.where(move_lo, mid, lo)
        f_lo = np.where(move_lo, f_mid, f_lo)
        hi = np.where(move_hi, mid, hi)
    else:
        if ((hi - lo) > settings.k_tolerance).any():
            raise ConvergenceError(f"bisection did not converge in {settings.max_iter} iterations")

    k = (lo + hi) / 2.0
    achieved = _e0_at(a, B, k, grid, sex)
    miss = np.abs(achieved - targets) > settings.e0_tolerance
    if miss.any():
        i = int(np.flatnonzero(miss)[0])
        raise ConvergenceError(
            f"k={k[i]:.6g} gives e0 {achieved[i]:.4f}, target {targets[i]:.4f} ({sex}); "
            f"tolerance {settings.e0_tolerance} not met",
            index=i,
        )
    return k, achieved


def solve_k_for_e0(a_x, B_x, target_e0: float, sex: str, cfg=None, grid: Optional[AgeGrid] = None) -> float:
    """Scalar front end to :func:`solve_k_batch`."""
    settings = cfg.bisection if isinstance(cfg, MortalityProjectionConfig) else (cfg or BisectionSettings())
    grid = grid or AgeGrid.canonical()
    k, _ = solve_k_batch([a_x], [B_x], [target_e0], sex, grid, settings)
    return float(k[0])


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HivAxPath:
    """Baseline moving linearly from ``a_s`` at ``t_r`` to ``a_u`` at ``t_target``."""

    a_s: np.ndarray
    a_u: np.ndarray
    a_v: np.ndarray
    t_r: int
    t_target: int

    def at(self, period: int) -> np.ndarray:
        if period <= self.t_r:
            return self.a_s
        if period >= self.t_target:
            return self.a_u
        frac = (period - self.t_r) / (self.t_target - self.t_r)
        return (1.0 - frac) * self.a_s + frac * self.a_u


def hiv_ax_path(surface: MortalitySurface, t_r: Optional[int] = None, cfg: MortalityProjectionConfig = MortalityProjectionConfig()) -> HivAxPath:
    """Baseline path for countries with a generalized HIV/AIDS epidemic.

    ``a_v`` averages log rates over periods ending by the cutoff year and is
    smoothed into ``a_u``; the latest log rates are smoothed into ``a_s``.
    """
    t_r = surface.periods[-1] if t_r is None else int(t_r)
    pre = [i for i, p in enumerate(surface.periods) if p + PERIOD_LENGTH <= cfg.hiv_cutoff_year]
    if not pre:
        raise InsufficientDataError(
            f"no mortality periods ending by {cfg.hiv_cutoff_year}; cannot build the HIV-free baseline"
        )
    log_m = surface.log_rates
    a_s = smooth_over_age(log_m[-1], preserve_first=True)
    a_v = log_m[pre].mean(axis=0)
    a_u = smooth_over_age(a_v, preserve_first=True)
    return HivAxPath(a_s, a_u, a_v, t_r, cfg.hiv_target_year - PERIOD_LENGTH)


def validate_model_bx(model_bx, n_ages: int) -> np.ndarray:
    b = np.asarray(model_bx, dtype=float)
    if b.shape != (n_ages,):
        raise InvalidRateError(f"model b_x must have {n_ages} entries, got {b.shape}")
    if not np.all(np.isfinite(b)) or abs(b.sum() - 1.0) > 1e-9:
        raise InvalidRateError(f"model b_x must sum to one (sum={b.sum():.12g})")
    return b


@dataclass(frozen=True)
class MortalityFit:
    grid: AgeGrid
    surface_f: MortalitySurface
    surface_m: MortalitySurface
    b_x: np.ndarray
    a_f: np.ndarray
    a_m: np.ndarray
    rotation: Optional[RotationSchedule]
    params_f: Optional[LeeCarterParams] = None
    params_m: Optional[LeeCarterParams] = None
    hiv_f: Optional[HivAxPath] = None
    hiv_m: Optional[HivAxPath] = None

    @property
    def base_period(self) -> int:
        return self.surface_f.periods[-1]

    def ax(self, sex: str, period: int) -> np.ndarray:
        path = self.hiv_f if sex == "F" else self.hiv_m
        if path is not None:
            return path.at(period)
        return self.a_f if sex == "F" else self.a_m

    def bx_at(self, e0) -> np.ndarray:
        """``B_x`` for an array of combined e0 values, shape ``(len(e0), n_ages)``."""
        e0 = np.atleast_1d(np.asarray(e0, dtype=float))
        if self.rotation is None:
            return np.broadcast_to(self.b_x, (e0.size, self.b_x.size)).copy()
        return rotated_bx_many(self.rotation, e0)


def rotated_bx_many(schedule: RotationSchedule, e0) -> np.ndarray:
    e0 = np.asarray(e0, dtype=float)
    wp = np.clip((e0 - schedule.e0_start) / (schedule.e0_u - schedule.e0_start), 0.0, 1.0)
    w = np.sqrt(0.5 * (1.0 + np.sin(np.pi / 2.0 * (2.0 * wp - 1.0))))
    mixed = (1.0 - w)[:, None] * schedule.b_x + w[:, None] * schedule.b_ux
    out = np.where((e0 < schedule.e0_start)[:, None], schedule.b_x, mixed)
    return np.where((e0 >= schedule.e0_u)[:, None], schedule.b_ux, out)


def model_bx_path(model_bx, ext_f: MortalitySurface, ext_m: MortalitySurface, cfg: MortalityProjectionConfig) -> MortalityFit:
    """Fit products when ``b_x`` comes from a model life table.

    The estimation of ``k`` and ``b_x`` is skipped.  Under ``hiv_mode`` the
    baseline follows :func:`hiv_ax_path` and no rotation is applied.
    """
    b = validate_model_bx(model_bx, len(ext_f.grid))
    if cfg.hiv_mode:
        hf, hm = hiv_ax_path(ext_f, cfg=cfg), hiv_ax_path(ext_m, cfg=cfg)
        return MortalityFit(ext_f.grid, ext_f, ext_m, b, hf.a_s, hm.a_s, None, hiv_f=hf, hiv_m=hm)
    a_f, a_m = estimate_ax(ext_f, cfg.ax_method), estimate_ax(ext_m, cfg.ax_method)
    rotation = RotationSchedule.from_bx(b, cfg.e0_start, cfg.e0_u) if cfg.rotation else None
    return MortalityFit(ext_f.grid, ext_f, ext_m, b, a_f, a_m, rotation)


def fit_country_mortality(
    surface_f: MortalitySurface,
    surface_m: MortalitySurface,
    cfg: MortalityProjectionConfig = MortalityProjectionConfig(),
) -> MortalityFit:
    """Extend, fit and prepare the rotation for one country."""
    ext_f, ext_m = extend_to_130(surface_f, surface_m, cfg.kannisto_mode, cfg.kannisto_min_age)
    if cfg.hiv_mode and cfg.model_bx is None:
        raise InvalidRateError("HIV/AIDS mode needs a model b_x schedule")
    if cfg.model_bx is not None:
        return model_bx_path(cfg.model_bx, ext_f, ext_m, cfg)

    params = []
    for surface in (ext_f, ext_m):
        a = estimate_ax(surface, cfg.ax_method)
        k, b = estimate_kt_bx(surface, a)
        params.append(LeeCarterParams(a, b, k, cfg.ax_method, surface.periods))
    b = coherent_bx(params[0].b_x, params[1].b_x)
    rotation = RotationSchedule.from_bx(b, cfg.e0_start, cfg.e0_u) if cfg.rotation else None
    return MortalityFit(
        ext_f.grid, ext_f, ext_m, b, params[0].a_x, params[1].a_x, rotation, params[0], params[1]
    )


# --------------------------------------------------------------------------
# Projection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectedMortality:
    """Rates for one trajectory.  Arrays are indexed ``[period, age]``."""

    grid: AgeGrid
    periods: tuple
    rates_f: np.ndarray
    rates_m: np.ndarray
    k_f: np.ndarray
    k_m: np.ndarray
    target_e0_f: np.ndarray
    target_e0_m: np.ndarray
    achieved_e0_f: np.ndarray
    achieved_e0_m: np.ndarray

    def schedule(self, sex: str, period: int) -> MortalitySchedule:
        rates = self.rates_f if sex == "F" else self.rates_m
        return MortalitySchedule(self.grid, rates[self.periods.index(period)])


@dataclass(frozen=True)
class ProjectionBatch:
    """Rates for several trajectories; arrays indexed ``[trajectory, period, ...]``."""

    grid: AgeGrid
    periods: tuple
    rates_f: np.ndarray
    rates_m: np.ndarray
    k_f: np.ndarray
    k_m: np.ndarray
    achieved_e0_f: np.ndarray
    achieved_e0_m: np.ndarray
    capped: np.ndarray

    def trajectory(self, i: int, e0_f, e0_m) -> ProjectedMortality:
        return ProjectedMortality(
            self.grid, self.periods, self.rates_f[i], self.rates_m[i], self.k_f[i], self.k_m[i],
            np.asarray(e0_f, dtype=float), np.asarray(e0_m, dtype=float),
            self.achieved_e0_f[i], self.achieved_e0_m[i],
        )


def apply_crossover_cap(rates_f, rates_m, e0_f, e0_m, grid: AgeGrid, cap_age: int = 100):
    """Lift male rates to female ones at ages >= ``cap_age`` where male e0 is lower.

    ``rates_*`` have shape ``(..., n_ages)``, ``e0_*`` the leading shape.
    Returns ``(new_rates_m, applied_mask)``.
    """
    old = np.array(grid.starts) >= cap_age
    applied = np.asarray(e0_m) < np.asarray(e0_f)
    lifted = np.where(old, np.maximum(rates_m, rates_f), rates_m)
    return np.where(applied[..., None], lifted, rates_m), applied


def project_batch(fit: MortalityFit, periods, e0_f, e0_m, cfg: MortalityProjectionConfig = MortalityProjectionConfig()) -> ProjectionBatch:
    """Project mortality for ``n`` trajectories at once.

    ``e0_f`` and ``e0_m`` have shape ``(n, n_periods)``.
    """
    periods = tuple(int(p) for p in periods)
    e0_f = np.atleast_2d(np.asarray(e0_f, dtype=float))
    e0_m = np.atleast_2d(np.asarray(e0_m, dtype=float))
    n, n_per = e0_f.shape
    G = len(fit.grid)
    combined = (e0_f + e0_m) / 2.0
    B = fit.bx_at(combined.ravel()).reshape(n, n_per, G)

    out = {}
    for sex, targets in (("F", e0_f), ("M", e0_m)):
        a = np.stack([fit.ax(sex, p) for p in periods])
        a = np.broadcast_to(a, (n, n_per, G)).reshape(-1, G)
        try:
            k, achieved = solve_k_batch(a, B.reshape(-1, G), targets.ravel(), sex, fit.grid, cfg.bisection)
        except _SolverError as exc:
            where = f"sex {sex}"
            if exc.index is not None:
                traj, per = divmod(exc.index, n_per)
                where = f"trajectory {traj}, period {period_label(periods[per])}, sex {sex}"
            raise type(exc)(f"{where}: {exc}", exc.index) from exc
        log_m = np.clip(a + B.reshape(-1, G) * k[:, None], -LOG_RATE_LIMIT, LOG_RATE_LIMIT)
        out[sex] = (np.exp(log_m).reshape(n, n_per, G), k.reshape(n, n_per), achieved.reshape(n, n_per))

    rates_f, k_f, ach_f = out["F"]
    rates_m, k_m, ach_m = out["M"]
    rates_m, capped = apply_crossover_cap(rates_f, rates_m, e0_f, e0_m, fit.grid, cfg.crossover_cap_age)
    if capped.any():
        log.debug("old-age crossover cap active in %d of %d trajectory-periods", capped.sum(), capped.size)
    return ProjectionBatch(fit.grid, periods, rates_f, rates_m, k_f, k_m, ach_f, ach_m, capped)


def project_trajectory(fit: MortalityFit, periods, e0_f, e0_m, cfg: MortalityProjectionConfig = MortalityProjectionConfig()) -> ProjectedMortality:
    """Project one trajectory of female and male e0 to age-specific rates."""
    batch = project_batch(fit, periods, [e0_f], [e0_m], cfg)
    return batch.trajectory(0, e0_f, e0_m)
