"""Read back and validate a run's output directory."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core import VitalRatesError, parse_period

# Columns holding floats; everything else stays text (ages and trajectory
# ids are integers or labels and are kept verbatim).
NUMERIC_COLUMNS = {
    "mx", "e0", "asfr", "pasfr", "mac", "quantile", "a_x", "b_x", "b_ux", "mx_f", "mx_m",
    "k_f", "k_m", "e0_f", "e0_m", "ax", "qx", "lx", "dx", "Lx", "Tx", "ex",
}


class OutputError(VitalRatesError):
    pass


def read_table(path) -> tuple:
    """Return ``(header, rows)`` with numeric columns parsed to float."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise OutputError(f"{path.name}:{lineno}: expected {len(header)} fields, got {len(raw)}")
            row = []
            for col, cell in zip(header, raw):
                if col in NUMERIC_COLUMNS:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise OutputError(f"{path.name}:{lineno}: column {col}: not a number: {cell!r}") from None
                elif col in ("period", "t_g") and cell:
                    parse_period(cell)
                    row.append(cell)
                else:
                    row.append(cell)
            rows.append(tuple(row))
    return header, rows


def write_table(path, header, rows) -> None:
    """Inverse of :func:`read_table` (floats written with ``repr``)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([repr(v) if isinstance(v, float) else v for v in row] for row in rows)


def check_quantile_monotone(header, rows, value_col: str) -> int:
    """Count quantile-order violations; rows sharing all other keys form a group."""
    qi, vi = header.index("quantile"), header.index(value_col)
    keys = [i for i in range(len(header)) if i not in (qi, vi)]
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[i] for i in keys), []).append((row[qi], row[vi]))
    bad = 0
    for values in groups.values():
        v = np.array([x for _, x in sorted(values)])
        bad += int(np.sum(np.diff(v) < 0))
    return bad


def validate_output_dir(out_dir) -> dict:
    """Check hashes against the manifest and parse every CSV.

    Returns ``{file name: (header, rows)}``.
    """
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.is_file():
        raise OutputError(f"no manifest.json in {out_dir}")
    manifest = json.loads(manifest_path.read_text())
    tables = {}
    for name, digest in manifest["outputs"].items():
        path = out_dir / name
        if not path.is_file():
            raise OutputError(f"{name} listed in manifest but missing")
        if hashlib.sha256(path.read_bytes()).hexdigest() != digest:
            raise OutputError(f"{name}: checksum does not match manifest")
        header, rows = read_table(path)
        if name.endswith("_quantiles.csv"):
            bad = check_quantile_monotone(header, rows, header[-1])
            if bad:
                raise OutputError(f"{name}: {bad} quantile-order violations")
        tables[name] = (header, rows)
    return tables
