"""Abridged life tables in the style of the Mortpak LIFTB routine.

All column arithmetic runs on arrays whose last axis is age, so a batch of
schedules (periods, trajectories, bisection candidates) goes through one
call.  Radix is ``l_0 = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AgeGrid, InvalidRateError, MortalitySchedule

Q_CAP = 1.0 - 1e-12
INFANT_THRESHOLD = 0.107

# Coale-Demeny West separation factors for ages under five.
_CD_WEST = {
    "M": {"a0_high": 0.33, "a1_high": 1.352, "a0": (0.045, 2.684), "a1": (1.651, -2.816)},
    "F": {"a0_high": 0.35, "a1_high": 1.361, "a0": (0.053, 2.800), "a1": (1.522, -1.518)},
}


@dataclass(frozen=True)
class LifeTable:
    grid: AgeGrid
    sex: str
    m: np.ndarray
    A: np.ndarray
    q: np.ndarray
    l: np.ndarray
    d: np.ndarray
    L: np.ndarray
    T: np.ndarray
    e: np.ndarray

    @property
    def e0(self) -> float:
        return float(self.e[0])

    def rows(self):
        """Yield one dict per age group, convenient for CSV dumps."""
        cols = ("m", "A", "q", "l", "d", "L", "T", "e")
        for i, label in enumerate(self.grid.labels()):
            row = {"age": label, "age_start": self.grid.starts[i]}
            row.update({c: float(getattr(self, c)[i]) for c in cols})
            yield row


def _check_sex(sex: str) -> None:
    if sex not in _CD_WEST:
        raise ValueError(f"sex must be 'F' or 'M', got {sex!r}")


def separation_factors_array(m: np.ndarray, grid: AgeGrid, sex: str) -> np.ndarray:
    """Separation factors ``A_x`` for rates ``m`` of shape ``(..., len(grid))``.

    The open group gets ``nan``; its person-years come from ``l/m`` directly.
    """
    _check_sex(sex)
    m = np.asarray(m, dtype=float)
    cd = _CD_WEST[sex]
    A = np.full(m.shape, np.nan)

    m0 = m[..., 0]
    high = m0 >= INFANT_THRESHOLD
    A[..., 0] = np.where(high, cd["a0_high"], cd["a0"][0] + cd["a0"][1] * m0)
    A[..., 1] = np.where(high, cd["a1_high"], cd["a1"][0] + cd["a1"][1] * m0)

    starts = np.array(grid.starts)
    n_closed = len(grid) - 1
    five_ten = np.flatnonzero((starts[:n_closed] == 5) | (starts[:n_closed] == 10))
    A[..., five_ten] = 2.5

    # Greville for 15-19 up to the last closed group; the open-group rate
    # serves as the upper neighbour of the last closed group.
    first = grid.index(15) if 15 in grid.starts[:-1] else n_closed
    if first < n_closed:
        idx = np.arange(first, n_closed)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            k = 0.1 * np.log(m[..., idx + 1] / m[..., idx - 1])
        A[..., idx] = 2.5 - (25.0 / 12.0) * (m[..., idx] - k)
    return A


def _columns(m: np.ndarray, grid: AgeGrid, sex: str):
    m = np.asarray(m, dtype=float)
    n = grid.n[:-1]
    A = separation_factors_array(m, grid, sex)
    mc, Ac = m[..., :-1], A[..., :-1]
    with np.errstate(over="ignore", invalid="ignore"):
        q_closed = n * mc / (1.0 + (n - Ac) * mc)
    q_closed = np.clip(q_closed, 0.0, Q_CAP)
    q = np.concatenate([q_closed, np.ones(m.shape[:-1] + (1,))], axis=-1)

    surv = np.cumprod(1.0 - q_closed, axis=-1)
    l = np.concatenate([np.ones(m.shape[:-1] + (1,)), surv], axis=-1)
    d = np.concatenate([l[..., :-1] - l[..., 1:], l[..., -1:]], axis=-1)
    L_closed = Ac * l[..., :-1] + (n - Ac) * l[..., 1:]
    with np.errstate(over="ignore", divide="ignore"):
        L_open = l[..., -1:] / m[..., -1:]
    L = np.concatenate([L_closed, L_open], axis=-1)
    T = np.cumsum(L[..., ::-1], axis=-1)[..., ::-1]
    e = T / l
    return A, q, l, d, L, T, e


def separation_factors(m: MortalitySchedule, sex: str) -> np.ndarray:
    """Per-age ``A_x`` for one schedule."""
    if not m.complete:
        raise InvalidRateError("schedule has no open-group rate")
    return separation_factors_array(m.rates, m.grid, sex)


def build_life_table(m: MortalitySchedule, sex: str) -> LifeTable:
    if not m.complete:
        raise InvalidRateError("schedule has no open-group rate")
    _check_sex(sex)
    A, q, l, d, L, T, e = _columns(m.rates, m.grid, sex)
    return LifeTable(m.grid, sex, m.rates, A, q, l, d, L, T, e)


def e0_array(m: np.ndarray, grid: AgeGrid, sex: str) -> np.ndarray:
    """Life expectancy at birth for every schedule in ``m`` (last axis = age)."""
    _check_sex(sex)
    return _columns(m, grid, sex)[5][..., 0]


def e0_from_mx(m: MortalitySchedule, sex: str) -> float:
    return build_life_table(m, sex).e0
