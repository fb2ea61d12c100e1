"""CSV readers for mortality histories, trajectories, PASFR histories and model b_x.

Every reader validates as it goes and raises :class:`InputError` naming
the file, line and column of the first offending cell.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import OrderedDict
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    CANONICAL_STARTS,
    PASFR_AGES,
    PERIOD_LENGTH,
    SEXES,
    AgeGrid,
    MortalitySurface,
    PasfrPattern,
    TrajectoryBundle,
    VitalRatesError,
    parse_period,
    period_label,
)

log = logging.getLogger(__name__)

MORTALITY_COLUMNS = ("country", "sex", "period", "age_start", "age_width", "mx")
E0_COLUMNS = ("country", "trajectory", "period", "e0_f", "e0_m")
TFR_COLUMNS = ("country", "trajectory", "period", "tfr")
PASFR_COLUMNS = ("country", "period", "age_start", "pasfr")
MODEL_BX_COLUMNS = ("pattern", "age_start", "bx")

OPEN_WIDTH_TOKENS = {"", "open", "+", "inf"}


class InputError(VitalRatesError):
    def __init__(self, message: str, path=None, line: Optional[int] = None, column: Optional[str] = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.path, self.line, self.column = path, line, column


def _rows(path, required, optional=()):
    path = Path(path)
    if not path.is_file():
        raise InputError("file not found", path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"missing column(s) {', '.join(missing)}", path, 1)
        for row in reader:
            if None in row or any(row.get(c) is None for c in required):
                raise InputError("wrong number of fields", path, reader.line_num)
            yield reader.line_num, row


class _Cell:
    """Parses one cell with file/line/column context on failure."""

    def __init__(self, path, line, row):
        self.path, self.line, self.row = path, line, row

    def error(self, column, message):
        return InputError(message, self.path, self.line, column)

    def text(self, column):
        value = self.row[column].strip()
        if not value:
            raise self.error(column, "empty cell")
        return value

    def number(self, column, positive=False, nonnegative=False):
        raw = self.text(column)
        try:
            value = float(raw)
        except ValueError:
            raise self.error(column, f"not a number: {raw!r}") from None
        if not math.isfinite(value):
            raise self.error(column, f"non-finite value {raw!r}")
        if positive and value <= 0:
            raise self.error(column, f"value must be positive, got {raw}")
        if nonnegative and value < 0:
            raise self.error(column, f"value must be nonnegative, got {raw}")
        return value

    def integer(self, column):
        value = self.number(column)
        if value != int(value):
            raise self.error(column, f"not an integer: {self.row[column]!r}")
        return int(value)

    def period(self, column):
        raw = self.text(column)
        try:
            return parse_period(raw)
        except ValueError as exc:
            raise self.error(column, str(exc)) from None


# --------------------------------------------------------------------------
# Mortality
# --------------------------------------------------------------------------


def load_mortality(path) -> dict:
    """Return ``{country: {"F": MortalitySurface, "M": MortalitySurface}}``."""
    cells = {}
    first_line = {}
    for line, row in _rows(path, MORTALITY_COLUMNS):
        c = _Cell(path, line, row)
        country, sex = c.text("country"), c.text("sex").upper()
        if sex not in SEXES:
            raise c.error("sex", f"sex must be F or M, got {row['sex']!r}")
        period, start = c.period("period"), c.integer("age_start")
        width_raw = row["age_width"].strip().lower()
        width = None if width_raw in OPEN_WIDTH_TOKENS else c.integer("age_width")
        mx = c.number("mx", positive=True)
        key = (country, sex, period)
        ages = cells.setdefault(key, OrderedDict())
        if start in ages:
            raise c.error("age_start", f"duplicate entry for {country} {sex} {period_label(period)} age {start}")
        ages[start] = (width, mx)
        first_line.setdefault(key, line)

    surfaces = {}
    grids = {}
    for (country, sex, period), ages in cells.items():
        starts = tuple(sorted(ages))
        widths = tuple(ages[s][0] for s in starts)
        line = first_line[(country, sex, period)]
        try:
            grid = AgeGrid(starts)
        except VitalRatesError as exc:
            raise InputError(f"{country} {sex} {period_label(period)}: {exc}", path, line, "age_start") from None
        if widths != grid.widths:
            raise InputError(
                f"{country} {sex} {period_label(period)}: age widths {widths} do not match "
                f"the abridged grid {grid.widths}",
                path, line, "age_width",
            )
        if grids.setdefault((country, sex), grid) != grid:
            raise InputError(f"{country} {sex}: inconsistent age grid across periods", path, line, "age_start")
        surfaces.setdefault(country, {}).setdefault(sex, {})[period] = np.array([ages[s][1] for s in starts])

    out = {}
    for country, by_sex in surfaces.items():
        out[country] = {}
        for sex, by_period in by_sex.items():
            periods = sorted(by_period)
            try:
                out[country][sex] = MortalitySurface(
                    sex, tuple(periods), grids[(country, sex)], np.vstack([by_period[p] for p in periods])
                )
            except VitalRatesError as exc:
                raise InputError(f"{country} {sex}: {exc}", path) from None
    return out


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------


def _rectangular(path, records, value_names, what):
    """Arrange ``{country: {traj: {period: values}}}`` into id/period/array blocks."""
    out = {}
    for country, by_traj in records.items():
        ids = list(by_traj)
        periods = sorted(by_traj[ids[0]][0])
        for tid in ids:
            got, line = by_traj[tid]
            if sorted(got) != periods:
                raise InputError(
                    f"{country} trajectory {tid} covers {len(got)} periods, expected the same "
                    f"{len(periods)} periods as trajectory {ids[0]}",
                    path, line, "period",
                )
        for a, b in zip(periods, periods[1:]):
            if b - a != PERIOD_LENGTH:
                raise InputError(
                    f"{country}: {what} periods not contiguous between {period_label(a)} and {period_label(b)}",
                    path, by_traj[ids[0]][1], "period",
                )
        arrays = [
            np.array([[by_traj[tid][0][p][j] for p in periods] for tid in ids]) for j in range(len(value_names))
        ]
        out[country] = (tuple(ids), tuple(periods), arrays)
    return out


def load_e0(path) -> dict:
    """Return ``{country: (ids, periods, [e0_f, e0_m])}``."""
    records = OrderedDict()
    for line, row in _rows(path, E0_COLUMNS):
        c = _Cell(path, line, row)
        country, tid, period = c.text("country"), c.text("trajectory"), c.period("period")
        values = []
        for col in ("e0_f", "e0_m"):
            v = c.number(col)
            if not 20 < v < 120:
                raise c.error(col, f"e0 must lie in (20, 120), got {v}")
            values.append(v)
        by_traj = records.setdefault(country, OrderedDict())
        got, _ = by_traj.setdefault(tid, ({}, line))
        if period in got:
            raise c.error("period", f"duplicate e0 row for {country} trajectory {tid} {period_label(period)}")
        got[period] = values
    return _rectangular(path, records, ("e0_f", "e0_m"), "e0")


def load_tfr(path) -> dict:
    """Return ``{country: (ids, periods, [tfr], phase3_start)}``."""
    records = OrderedDict()
    phase3 = {}
    for line, row in _rows(path, TFR_COLUMNS):
        c = _Cell(path, line, row)
        country, tid, period = c.text("country"), c.text("trajectory"), c.period("period")
        tfr = c.number("tfr", nonnegative=True)
        by_traj = records.setdefault(country, OrderedDict())
        got, _ = by_traj.setdefault(tid, ({}, line))
        if period in got:
            raise c.error("period", f"duplicate TFR row for {country} trajectory {tid} {period_label(period)}")
        got[period] = [tfr]
        raw = (row.get("phase3_start") or "").strip()
        if raw:
            p3 = c.period("phase3_start")
            known = phase3.setdefault((country, tid), p3)
            if known != p3:
                raise c.error("phase3_start", f"conflicting Phase III start for {country} trajectory {tid}")
    out = {}
    for country, (ids, periods, arrays) in _rectangular(path, records, ("tfr",), "TFR").items():
        out[country] = (ids, periods, arrays, tuple(phase3.get((country, tid)) for tid in ids))
    return out


def load_trajectories(e0_path, tfr_path=None) -> dict:
    """Combine e0 and TFR files into one :class:`TrajectoryBundle` per country."""
    e0 = load_e0(e0_path) if e0_path else {}
    tfr = load_tfr(tfr_path) if tfr_path else {}
    bundles = {}
    for country in sorted(set(e0) | set(tfr)):
        ids, periods, (ef, em) = e0.get(country, ((), (), [np.empty((0, 0)), np.empty((0, 0))]))
        kwargs = {}
        if country in tfr:
            tids, tper, (tv,), p3 = tfr[country]
            kwargs = dict(tfr_ids=tids, tfr_periods=tper, tfr=tv, phase3_start=p3)
        bundles[country] = TrajectoryBundle(country, ids, periods, ef, em, **kwargs)
    return bundles


# --------------------------------------------------------------------------
# PASFR and model b_x
# --------------------------------------------------------------------------

PASFR_RENORMALIZE_LIMIT = 1e-3


def load_pasfr(path) -> dict:
    """Return ``{country: {period: PasfrPattern}}``.

    Patterns summing to one within 1e-9 are kept verbatim; small rounding
    up to 1e-3 is renormalized with a warning.
    """
    cells = OrderedDict()
    lines = {}
    for line, row in _rows(path, PASFR_COLUMNS):
        c = _Cell(path, line, row)
        country, period, age = c.text("country"), c.period("period"), c.integer("age_start")
        if age not in PASFR_AGES:
            raise c.error("age_start", f"PASFR age groups start at {PASFR_AGES}, got {age}")
        value = c.number("pasfr", nonnegative=True)
        if value > 1:
            raise c.error("pasfr", f"proportion above one: {value}")
        ages = cells.setdefault((country, period), {})
        if age in ages:
            raise c.error("age_start", f"duplicate PASFR entry for {country} {period_label(period)} age {age}")
        ages[age] = value
        lines.setdefault((country, period), line)

    out = {}
    for (country, period), ages in cells.items():
        line = lines[(country, period)]
        if set(ages) != set(PASFR_AGES):
            raise InputError(f"{country} {period_label(period)}: need all seven age groups", path, line, "age_start")
        values = np.array([ages[a] for a in PASFR_AGES])
        total = values.sum()
        if abs(total - 1) > PASFR_RENORMALIZE_LIMIT:
            raise InputError(f"{country} {period_label(period)}: proportions sum to {total:.6g}", path, line, "pasfr")
        if abs(total - 1) > 1e-9:
            log.warning("%s %s: PASFR sums to %.9g; renormalized", country, period_label(period), total)
            values = values / total
        out.setdefault(country, {})[period] = PasfrPattern(values)
    return {c: dict(sorted(v.items())) for c, v in out.items()}


def load_model_bx(path) -> dict:
    """Return ``{pattern_name: b_x}`` on the canonical 28-group grid."""
    cells = OrderedDict()
    for line, row in _rows(path, MODEL_BX_COLUMNS):
        c = _Cell(path, line, row)
        name, age = c.text("pattern"), c.integer("age_start")
        if age not in CANONICAL_STARTS:
            raise c.error("age_start", f"age {age} is not on the canonical grid")
        ages = cells.setdefault(name, {})
        if age in ages:
            raise c.error("age_start", f"duplicate b_x entry for {name} age {age}")
        ages[age] = c.number("bx")
    out = {}
    for name, ages in cells.items():
        if set(ages) != set(CANONICAL_STARTS):
            raise InputError(f"model b_x {name!r} must cover all {len(CANONICAL_STARTS)} age groups", path)
        out[name] = np.array([ages[a] for a in CANONICAL_STARTS])
    return out
