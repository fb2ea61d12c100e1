"""Age grids, validated rate containers, trajectory bundles and shared numerics.

Periods are identified by the integer start year of a 5-year interval
(``2095`` stands for 2095-2100).  Labels of the form ``"2095-2100"`` are
accepted wherever a period is parsed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

PERIOD_LENGTH = 5
LOGIT_EPS = 1e-6
PASFR_AGES = (15, 20, 25, 30, 35, 40, 45)
PASFR_MIDPOINTS = np.array([a + 2.5 for a in PASFR_AGES])
SEXES = ("F", "M")


class VitalRatesError(ValueError):
    """Base class for all errors raised by this package."""


class InvalidRateError(VitalRatesError):
    pass


class InsufficientDataError(VitalRatesError):
    pass


class DegenerateInputError(VitalRatesError):
    pass


class GridError(VitalRatesError):
    pass


def parse_period(value) -> int:
    """Return the start year of a period given as ``2010``, ``"2010"`` or ``"2010-2015"``."""
    if isinstance(value, (int, np.integer)):
        return int(value)
    text = str(value).strip()
    if "-" in text:
        start, end = text.split("-", 1)
        start_year, end_year = int(start), int(end)
        if end_year - start_year != PERIOD_LENGTH:
            raise ValueError(f"period {text!r} is not a {PERIOD_LENGTH}-year interval")
        return start_year
    return int(float(text))


def period_label(start: int) -> str:
    return f"{start}-{start + PERIOD_LENGTH}"


# --------------------------------------------------------------------------
# Age grid
# --------------------------------------------------------------------------

CANONICAL_STARTS = (0, 1) + tuple(range(5, 131, 5))


def _expected_width(start: int) -> int:
    return 1 if start == 0 else 4 if start == 1 else 5


@dataclass(frozen=True)
class AgeGrid:
    """Abridged age groups ``0-1, 1-4, 5-9, ...`` closed by one open group.

    ``widths`` holds ``None`` for the open group.
    """

    starts: tuple
    widths: tuple = field(init=False)

    def __post_init__(self):
        starts = tuple(int(s) for s in self.starts)
        if len(starts) < 2:
            raise GridError("an age grid needs at least one closed group and the open group")
        if starts != CANONICAL_STARTS[: len(starts)]:
            raise GridError(
                f"age groups must follow 0, 1, 5, 10, ... contiguously; got {starts}"
            )
        widths = tuple(_expected_width(s) for s in starts[:-1]) + (None,)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "widths", widths)

    @classmethod
    def canonical(cls) -> "AgeGrid":
        """The full 28-group grid ending in 130+."""
        return cls(CANONICAL_STARTS)

    @classmethod
    def with_open_at(cls, open_start: int) -> "AgeGrid":
        if open_start not in CANONICAL_STARTS or open_start < 5:
            raise GridError(f"invalid open-group start {open_start}")
        return cls(CANONICAL_STARTS[: CANONICAL_STARTS.index(open_start) + 1])

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def open_start(self) -> int:
        return self.starts[-1]

    @property
    def n(self) -> np.ndarray:
        """Closed-group widths as floats, ``nan`` for the open group."""
        return np.array([np.nan if w is None else float(w) for w in self.widths])

    @property
    def midpoints(self) -> np.ndarray:
        return np.array(
            [s if w is None else s + w / 2 for s, w in zip(self.starts, self.widths)],
            dtype=float,
        )

    def index(self, start: int) -> int:
        return self.starts.index(start)

    def labels(self) -> list:
        return [f"{s}+" if w is None else f"{s}-{s + w}" for s, w in zip(self.starts, self.widths)]

    def is_canonical(self) -> bool:
        return self.starts == CANONICAL_STARTS


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# Mortality containers
# --------------------------------------------------------------------------


def _check_rates(rates: np.ndarray, where: str = "") -> None:
    body = rates[..., :-1]
    tail = rates[..., -1]
    if not np.all(np.isfinite(body)):
        raise InvalidRateError(f"non-finite mortality rate in a closed age group{where}")
    if np.any(body <= 0):
        raise InvalidRateError(f"nonpositive mortality rate{where}")
    present = tail[~np.isnan(tail)]
    if not np.all(np.isfinite(present)) or np.any(present <= 0):
        raise InvalidRateError(f"invalid open-group mortality rate{where}")


@dataclass(frozen=True)
class MortalitySchedule:
    """Central death rates on an age grid.  Only the open group may be missing (nan)."""

    grid: AgeGrid
    rates: np.ndarray

    def __post_init__(self):
        rates = _frozen(self.rates)
        if rates.ndim != 1 or rates.shape[0] != len(self.grid):
            raise GridError(
                f"expected {len(self.grid)} rates for the age grid, got shape {rates.shape}"
            )
        _check_rates(rates)
        object.__setattr__(self, "rates", rates)

    @property
    def complete(self) -> bool:
        return not np.isnan(self.rates[-1])


@dataclass(frozen=True)
class MortalitySurface:
    """Rates for one sex over several periods sharing one grid.

    ``rates`` has shape ``(n_periods, n_groups)``.
    """

    sex: str
    periods: tuple
    grid: AgeGrid
    rates: np.ndarray

    def __post_init__(self):
        if self.sex not in SEXES:
            raise ValueError(f"sex must be one of {SEXES}, got {self.sex!r}")
        periods = tuple(int(p) for p in self.periods)
        if len(periods) < 2:
            raise InsufficientDataError("a mortality surface needs at least two periods")
        if any(b <= a for a, b in zip(periods, periods[1:])):
            raise ValueError("periods must be strictly increasing")
        rates = _frozen(self.rates)
        if rates.shape != (len(periods), len(self.grid)):
            raise GridError(
                f"rates shape {rates.shape} does not match "
                f"({len(periods)} periods, {len(self.grid)} age groups)"
            )
        for i, p in enumerate(periods):
            _check_rates(rates[i], f" in period {period_label(p)}")
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_schedules(cls, sex: str, periods: Sequence, schedules: Sequence[MortalitySchedule]):
        grids = {s.grid for s in schedules}
        if len(grids) != 1:
            raise GridError("all schedules of a surface must share one age grid")
        return cls(sex, tuple(periods), schedules[0].grid, np.vstack([s.rates for s in schedules]))

    def schedule(self, period) -> MortalitySchedule:
        return MortalitySchedule(self.grid, self.rates[self.periods.index(parse_period(period))])

    @property
    def schedules(self) -> list:
        return [MortalitySchedule(self.grid, row) for row in self.rates]

    @property
    def log_rates(self) -> np.ndarray:
        return np.log(self.rates)


# --------------------------------------------------------------------------
# Trajectories and fertility patterns
# --------------------------------------------------------------------------


def _check_contiguous(periods: Sequence[int], what: str) -> None:
    for a, b in zip(periods, periods[1:]):
        if b - a != PERIOD_LENGTH:
            raise InsufficientDataError(
                f"{what} periods are not contiguous: gap between "
                f"{period_label(a)} and {period_label(b)}"
            )


@dataclass(frozen=True)
class TrajectoryBundle:
    """Projected e0 and TFR trajectories for one country.

    ``e0_f``/``e0_m`` have shape ``(n_trajectories, n_periods)``.  The TFR
    block may also carry observed periods up to the base period, which the
    PASFR timing rules look at.  ``phase3_start`` holds one start period per
    TFR trajectory, or ``None``.
    """

    country: str
    e0_ids: tuple
    e0_periods: tuple
    e0_f: np.ndarray
    e0_m: np.ndarray
    tfr_ids: tuple = ()
    tfr_periods: tuple = ()
    tfr: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    phase3_start: tuple = ()

    def __post_init__(self):
        e0_f, e0_m = _frozen(self.e0_f), _frozen(self.e0_m)
        shape = (len(self.e0_ids), len(self.e0_periods))
        if e0_f.shape != shape or e0_m.shape != shape:
            raise ValueError(f"e0 arrays must have shape {shape}")
        _check_contiguous(self.e0_periods, "e0 trajectory")
        for arr, name in ((e0_f, "female"), (e0_m, "male")):
            if arr.size and not (np.all(arr > 20) and np.all(arr < 120)):
                raise InvalidRateError(f"{name} e0 values must lie in (20, 120)")
        tfr = _frozen(self.tfr)
        if tfr.size:
            if tfr.shape != (len(self.tfr_ids), len(self.tfr_periods)):
                raise ValueError("tfr array does not match its ids and periods")
            _check_contiguous(self.tfr_periods, "TFR trajectory")
            if not np.all(np.isfinite(tfr)) or np.any(tfr < 0):
                raise InvalidRateError("TFR values must be finite and nonnegative")
            if len(self.phase3_start) != len(self.tfr_ids):
                raise ValueError("need one phase3_start entry per TFR trajectory")
        object.__setattr__(self, "e0_f", e0_f)
        object.__setattr__(self, "e0_m", e0_m)
        object.__setattr__(self, "tfr", tfr)
        object.__setattr__(self, "e0_periods", tuple(int(p) for p in self.e0_periods))
        object.__setattr__(self, "tfr_periods", tuple(int(p) for p in self.tfr_periods))


@dataclass(frozen=True)
class PasfrPattern:
    """Proportions of fertility in the seven groups 15-19 ... 45-49."""

    proportions: np.ndarray

    def __post_init__(self):
        p = _frozen(self.proportions)
        if p.shape != (len(PASFR_AGES),):
            raise ValueError(f"a PASFR pattern has {len(PASFR_AGES)} entries, got {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise InvalidRateError("PASFR entries must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidRateError(f"PASFR entries must sum to one (sum={p.sum():.12g})")
        object.__setattr__(self, "proportions", p)

    @classmethod
    def normalized(cls, values: Iterable[float]) -> "PasfrPattern":
        v = np.asarray(values, dtype=float)
        return cls(v / v.sum())

    def __eq__(self, other):
        return isinstance(other, PasfrPattern) and np.array_equal(self.proportions, other.proportions)

    def __hash__(self):
        return hash(self.proportions.tobytes())


# --------------------------------------------------------------------------
# Shared numerics
# --------------------------------------------------------------------------


def logit_clamped(p):
    """Logit after clamping ``p`` into ``[1e-6, 1 - 1e-6]``."""
    q = np.clip(np.asarray(p, dtype=float), LOGIT_EPS, 1.0 - LOGIT_EPS)
    out = np.log(q / (1.0 - q))
    return float(out) if out.ndim == 0 else out


def inverse_logit(z):
    z = np.asarray(z, dtype=float)
    out = 1.0 / (1.0 + np.exp(-z))
    return float(out) if out.ndim == 0 else out


def logit(p):
    """Unclamped logit; callers validate the domain."""
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


_KERNEL = (0.25, 0.5, 0.25)


def smooth_over_age(values, preserve_first: bool = False) -> np.ndarray:
    """Two passes of a (0.25, 0.5, 0.25) moving average over age.

    The first and last entries are copied through on each pass.  With
    ``preserve_first`` the youngest value is restored verbatim afterwards.
    """
    v = np.array(values, dtype=float)
    if v.ndim != 1 or v.shape[0] < 3:
        raise DegenerateInputError("smoothing over age needs at least 3 age groups")
    out = v.copy()
    for _ in range(2):
        inner = _KERNEL[0] * out[:-2] + _KERNEL[1] * out[1:-1] + _KERNEL[2] * out[2:]
        out = np.concatenate(([out[0]], inner, [out[-1]]))
    if preserve_first:
        out[0] = v[0]
    return out


def mean_age_of_childbearing(proportions) -> float:
    p = proportions.proportions if isinstance(proportions, PasfrPattern) else np.asarray(proportions)
    return float(np.dot(PASFR_MIDPOINTS, p))
