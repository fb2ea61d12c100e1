"""Lee-Carter estimation, sex-averaged sensitivities and b_x rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    AgeGrid,
    DegenerateInputError,
    MortalitySurface,
    VitalRatesError,
    smooth_over_age,
)

AX_METHODS = ("average", "latest", "latest_smoothed")
ROTATION_START_E0 = 80.0
ULTIMATE_E0 = 102.0

# Positions on the canonical 28-group grid.
_IDX_15 = 4
_IDX_60 = 13
_IDX_65 = 14


class DegenerateTrendError(VitalRatesError):
    """Raised when the mortality index carries no time variation."""


@dataclass(frozen=True)
class LeeCarterParams:
    a_x: np.ndarray
    b_x: np.ndarray
    k_t: np.ndarray
    ax_method: str
    periods: tuple = ()


def estimate_ax(surface: MortalitySurface, method: str = "average") -> np.ndarray:
    """Baseline log-mortality per age.

    ``average`` is the time mean of log rates, ``latest`` the log rates of the
    last period and ``latest_smoothed`` those smoothed over age with the
    infant value kept.
    """
    log_m = surface.log_rates
    if method == "average":
        return log_m.mean(axis=0)
    if method == "latest":
        return log_m[-1].copy()
    if method == "latest_smoothed":
        return smooth_over_age(log_m[-1], preserve_first=True)
    raise ValueError(f"unknown a_x method {method!r}; expected one of {AX_METHODS}")


def estimate_kt_bx(surface: MortalitySurface, a_x) -> tuple:
    """Return ``(k_t, b_x)`` from the least-squares formulas given ``a_x``.

    ``b_x`` is rescaled to sum to one and ``k_t`` multiplied by the same
    factor, which leaves every product ``b_x k_t`` untouched.
    """
    resid = surface.log_rates - np.asarray(a_x, dtype=float)[None, :]
    k = resid.sum(axis=1)
    scale = np.abs(resid).max() if resid.size else 0.0
    if not np.any(np.abs(k) > 1e-12 * max(scale, 1.0)):
        raise DegenerateTrendError("mortality index is zero in every period; no time trend")
    b = resid.T @ k / np.dot(k, k)
    total = b.sum()
    if total == 0:
        raise DegenerateTrendError("estimated b_x sums to zero; cannot normalize")
    return k * total, b / total


def fit_lee_carter(surface: MortalitySurface, ax_method: str = "average") -> LeeCarterParams:
    a = estimate_ax(surface, ax_method)
    k, b = estimate_kt_bx(surface, a)
    return LeeCarterParams(a, b, k, ax_method, surface.periods)


def coherent_bx(b_f, b_m) -> np.ndarray:
    b_f, b_m = np.asarray(b_f, dtype=float), np.asarray(b_m, dtype=float)
    if b_f.shape != b_m.shape:
        raise DegenerateInputError(f"b_x length mismatch: {b_f.shape} vs {b_m.shape}")
    return (b_f + b_m) / 2.0


def ultimate_bux(b_x) -> np.ndarray:
    """Ultimate age sensitivities for the rotation.

    Ages up to 60-64 take the mean of the ten groups 15-19 ... 60-64; from
    65-69 on, ``b_x`` is scaled so that the 65-69 value matches that mean.
    The result is renormalized to sum to one.
    """
    b = np.asarray(b_x, dtype=float)
    if b.shape != (len(AgeGrid.canonical()),):
        raise DegenerateInputError("ultimate b_x needs the 28-group age grid")
    if b[_IDX_65] == 0:
        raise DegenerateInputError("b_x for ages 65-69 is zero; cannot scale the old-age tail")
    mean_adult = b[_IDX_15 : _IDX_60 + 1].mean()
    out = np.empty_like(b)
    out[: _IDX_60 + 1] = mean_adult
    out[_IDX_65:] = b[_IDX_65:] * mean_adult / b[_IDX_65]
    return out / out.sum()


def rotation_weight(e0: float, e0_start: float = ROTATION_START_E0, e0_u: float = ULTIMATE_E0) -> float:
    """Smooth weight in [0, 1] moving from the starting to the ultimate b_x."""
    if e0 < e0_start:
        return 0.0
    if e0 >= e0_u:
        return 1.0
    wp = (e0 - e0_start) / (e0_u - e0_start)
    return math.sqrt(0.5 * (1.0 + math.sin(math.pi / 2.0 * (2.0 * wp - 1.0))))


@dataclass(frozen=True)
class RotationSchedule:
    b_x: np.ndarray
    b_ux: np.ndarray
    e0_start: float = ROTATION_START_E0
    e0_u: float = ULTIMATE_E0

    @classmethod
    def from_bx(cls, b_x, e0_start: float = ROTATION_START_E0, e0_u: float = ULTIMATE_E0):
        b = np.array(b_x, dtype=float)
        return cls(b, ultimate_bux(b), e0_start, e0_u)


def rotated_Bx(schedule: RotationSchedule, e0: float) -> np.ndarray:
    """Age sensitivities at life expectancy ``e0``.

    Below ``e0_start`` this is ``b_x`` itself, at or above ``e0_u`` the
    ultimate schedule, and a weighted mix in between.
    """
    if e0 < schedule.e0_start:
        return schedule.b_x
    if e0 >= schedule.e0_u:
        return schedule.b_ux
    w = rotation_weight(e0, schedule.e0_start, schedule.e0_u)
    return (1.0 - w) * schedule.b_x + w * schedule.b_ux
