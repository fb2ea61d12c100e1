"""Batch runner: load inputs, project every trajectory, write summaries.

Work is split into fixed-size chunks of trajectories so the arithmetic in
each chunk is the same whatever the number of worker processes; results
are merged in chunk order.  Output is therefore byte-identical across
worker counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig
from .core import PASFR_AGES, PASFR_MIDPOINTS, VitalRatesError, period_label
from .fertility import (
    FertilityProjectionConfig,
    estimate_tg,
    global_model_pattern,
    phase3_case,
    project_pasfr_trajectory,
    ultimate_fertility,
)
from .inputs import load_model_bx, load_mortality, load_pasfr, load_trajectories
from .life_table import build_life_table, e0_array
from .mortality import MortalityFit, fit_country_mortality, project_batch

log = logging.getLogger(__name__)

CHUNK_SIZE = 25
PLOT_TRAJECTORIES = 20
INTERVAL_80 = (0.1, 0.9)


def summarize_quantiles(values, quantiles, axis: int = 0) -> np.ndarray:
    """Empirical quantiles (linear interpolation between order statistics).

    The quantile levels become the leading axis of the result, which is
    nondecreasing along that axis.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values.shape[axis] == 0:
        raise VitalRatesError("cannot summarize an empty set of trajectories")
    q = np.quantile(values, np.asarray(quantiles, dtype=float), axis=axis, method="linear")
    return np.maximum.accumulate(q, axis=0)


def _fmt(x) -> str:
    return repr(float(x))


class _Tables:
    """Accumulates CSV rows per output file."""

    def __init__(self):
        self.headers = {}
        self.rows = {}

    def add(self, name: str, header, rows) -> None:
        self.headers.setdefault(name, tuple(header))
        self.rows.setdefault(name, []).extend(rows)

    def write(self, out_dir: Path) -> list:
        written = []
        for name in sorted(self.headers):
            path = out_dir / name
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(self.headers[name])
                w.writerows(self.rows[name])
            written.append(path)
        return written


# --------------------------------------------------------------------------
# Worker tasks (module level so they pickle)
# --------------------------------------------------------------------------


def _mortality_task(args):
    fit, periods, e0_f, e0_m, mcfg = args
    batch = project_batch(fit, periods, e0_f, e0_m, mcfg)
    post_f = e0_array(batch.rates_f, fit.grid, "F")
    post_m = e0_array(batch.rates_m, fit.grid, "M")
    return batch.rates_f, batch.rates_m, batch.k_f, batch.k_m, post_f, post_m


def _fertility_task(args):
    history, future, p_g, tfr_periods, tfr, phase3, t_r, t_e, f_u, fcfg = args
    patterns, timing = [], []
    for values, t_p3 in zip(tfr, phase3):
        t_g = estimate_tg(tfr_periods, values, t_p3, t_r, t_e, f_u, fcfg)
        traj = project_pasfr_trajectory(history, future, p_g, t_g, phase3_case(t_p3, t_e), fcfg)
        patterns.append(traj.patterns)
        timing.append((traj.t_g, traj.case, traj.frozen_from))
    return np.array(patterns), timing


@contextmanager
def _mapper(workers: int):
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map


def _chunks(n: int):
    return [slice(i, min(i + CHUNK_SIZE, n)) for i in range(0, n, CHUNK_SIZE)]


# --------------------------------------------------------------------------
# Per-country work
# --------------------------------------------------------------------------


@dataclass
class MortalityResult:
    fit: MortalityFit
    ids: tuple
    periods: tuple
    rates: np.ndarray  # [trajectory, period, sex, age]
    k: np.ndarray  # [trajectory, period, sex]
    e0: np.ndarray  # post-cap e0, [trajectory, period, sex]


@dataclass
class FertilityResult:
    ids: tuple
    history: dict
    periods: tuple
    p_g: np.ndarray
    patterns: np.ndarray  # [trajectory, period, age]
    asfr: np.ndarray
    timing: list = field(default_factory=list)


def run_country_mortality(country, surfaces, bundle, cfg: RunConfig, model_bx, mapper) -> MortalityResult:
    if "F" not in surfaces or "M" not in surfaces:
        raise VitalRatesError(f"{country}: mortality data for both sexes required")
    mcfg = cfg.mortality_config(country, model_bx)
    fit = fit_country_mortality(surfaces["F"], surfaces["M"], mcfg)
    if not bundle.e0_ids:
        raise VitalRatesError(f"{country}: no e0 trajectories")
    if bundle.e0_periods[0] <= fit.base_period:
        raise VitalRatesError(
            f"{country}: e0 trajectories start at {period_label(bundle.e0_periods[0])}, "
            f"not after the last observed period {period_label(fit.base_period)}"
        )
    tasks = [(fit, bundle.e0_periods, bundle.e0_f[s], bundle.e0_m[s], mcfg) for s in _chunks(len(bundle.e0_ids))]
    parts = list(mapper(_mortality_task, tasks))
    rf, rm, kf, km, ef, em = (np.concatenate([p[j] for p in parts]) for j in range(6))
    return MortalityResult(
        fit, bundle.e0_ids, bundle.e0_periods,
        np.stack([rf, rm], axis=2), np.stack([kf, km], axis=2), np.stack([ef, em], axis=2),
    )


def run_country_fertility(country, history, bundle, p_g, fcfg: FertilityProjectionConfig, mapper) -> FertilityResult:
    t_r = max(history)
    periods = np.array(bundle.tfr_periods)
    future = tuple(int(p) for p in periods[periods > t_r])
    if not future:
        raise VitalRatesError(f"{country}: no TFR periods after the PASFR base period {period_label(t_r)}")
    if future[0] != t_r + 5:
        raise VitalRatesError(
            f"{country}: TFR projection starts at {period_label(future[0])}, expected {period_label(t_r + 5)}"
        )
    t_e = future[-1]
    f_u = ultimate_fertility(bundle.tfr[:, -1], bundle.phase3_start, t_e, fcfg.ultimate_from_phase3_only)
    tasks = [
        (history, future, p_g, bundle.tfr_periods, bundle.tfr[s], bundle.phase3_start[s], t_r, t_e, f_u, fcfg)
        for s in _chunks(len(bundle.tfr_ids))
    ]
    parts = list(mapper(_fertility_task, tasks))
    patterns = np.concatenate([p[0] for p in parts])
    timing = [t for p in parts for t in p[1]]
    tfr_future = bundle.tfr[:, periods > t_r]
    asfr = tfr_future[:, :, None] * patterns / 5.0
    return FertilityResult(bundle.tfr_ids, history, future, p_g.proportions, patterns, asfr, timing)


# --------------------------------------------------------------------------
# Output assembly
# --------------------------------------------------------------------------


def _emit_mortality(tables: _Tables, country: str, res: MortalityResult, cfg: RunConfig) -> None:
    grid = res.fit.grid
    qs = cfg.quantiles
    labels = [period_label(p) for p in res.periods]
    mq = summarize_quantiles(res.rates, qs)
    eq = summarize_quantiles(res.e0, qs)
    rows, erows = [], []
    for si, sex in enumerate(("F", "M")):
        for pi, pl in enumerate(labels):
            for qi, q in enumerate(qs):
                erows.append([country, sex, pl, q, _fmt(eq[qi, pi, si])])
                for ai, age in enumerate(grid.starts):
                    rows.append([country, sex, pl, age, q, _fmt(mq[qi, pi, si, ai])])
    tables.add("mx_quantiles.csv", ("country", "sex", "period", "age_start", "quantile", "mx"), rows)
    tables.add("e0_quantiles.csv", ("country", "sex", "period", "quantile", "e0"), erows)

    fit_rows = []
    for si, sex in enumerate(("F", "M")):
        a = res.fit.a_f if sex == "F" else res.fit.a_m
        bux = res.fit.rotation.b_ux if res.fit.rotation is not None else res.fit.b_x
        for ai, age in enumerate(grid.starts):
            fit_rows.append([country, sex, age, _fmt(a[ai]), _fmt(res.fit.b_x[ai]), _fmt(bux[ai])])
    tables.add("mortality_fit.csv", ("country", "sex", "age_start", "a_x", "b_x", "b_ux"), fit_rows)

    # Rates by age per period: median, 80% band, a few trajectories.
    band = summarize_quantiles(res.rates, (INTERVAL_80[0], 0.5, INTERVAL_80[1]))
    n_show = min(PLOT_TRAJECTORIES, len(res.ids))
    prow = []
    for si, sex in enumerate(("F", "M")):
        for pi, pl in enumerate(labels):
            for ai, age in enumerate(grid.starts):
                for name, bi in (("lower80", 0), ("median", 1), ("upper80", 2)):
                    prow.append([country, sex, pl, age, name, _fmt(band[bi, pi, si, ai])])
                for ti in range(n_show):
                    prow.append([country, sex, pl, age, f"trajectory:{res.ids[ti]}", _fmt(res.rates[ti, pi, si, ai])])
    tables.add("plot_mx_age.csv", ("country", "sex", "period", "age_start", "series", "mx"), prow)

    last = len(res.periods) - 1
    jrows = [
        [country, tid, labels[last], age, _fmt(res.rates[ti, last, 0, ai]), _fmt(res.rates[ti, last, 1, ai])]
        for ti, tid in enumerate(res.ids)
        for ai, age in enumerate(grid.starts)
    ]
    tables.add("plot_mx_joint.csv", ("country", "trajectory", "period", "age_start", "mx_f", "mx_m"), jrows)

    if cfg.emit_trajectories:
        trows, krows = [], []
        for ti, tid in enumerate(res.ids):
            for pi, pl in enumerate(labels):
                krows.append([country, tid, pl, _fmt(res.k[ti, pi, 0]), _fmt(res.k[ti, pi, 1]),
                              _fmt(res.e0[ti, pi, 0]), _fmt(res.e0[ti, pi, 1])])
                for si, sex in enumerate(("F", "M")):
                    for ai, age in enumerate(grid.starts):
                        trows.append([country, tid, sex, pl, age, _fmt(res.rates[ti, pi, si, ai])])
        tables.add("mx_trajectories.csv", ("country", "trajectory", "sex", "period", "age_start", "mx"), trows)
        tables.add("mortality_k.csv", ("country", "trajectory", "period", "k_f", "k_m", "e0_f", "e0_m"), krows)

    if cfg.emit_lifetables:
        lrows = []
        for sex, surface in (("F", res.fit.surface_f), ("M", res.fit.surface_m)):
            lt = build_life_table(surface.schedule(surface.periods[-1]), sex)
            for r in lt.rows():
                lrows.append([country, sex, period_label(surface.periods[-1]), r["age_start"]]
                             + [_fmt(r[c]) for c in ("m", "A", "q", "l", "d", "L", "T", "e")])
        tables.add("lifetables.csv",
                   ("country", "sex", "period", "age_start", "mx", "ax", "qx", "lx", "dx", "Lx", "Tx", "ex"), lrows)


def _emit_fertility(tables: _Tables, country: str, res: FertilityResult, cfg: RunConfig) -> None:
    qs = cfg.quantiles
    labels = [period_label(p) for p in res.periods]
    mac = res.patterns @ PASFR_MIDPOINTS
    for name, values, col in (("asfr_quantiles.csv", res.asfr, "asfr"), ("pasfr_quantiles.csv", res.patterns, "pasfr")):
        qv = summarize_quantiles(values, qs)
        rows = [
            [country, pl, age, q, _fmt(qv[qi, pi, ai])]
            for pi, pl in enumerate(labels)
            for ai, age in enumerate(PASFR_AGES)
            for qi, q in enumerate(qs)
        ]
        tables.add(name, ("country", "period", "age_start", "quantile", col), rows)
    mq = summarize_quantiles(mac, qs)
    tables.add("mac_quantiles.csv", ("country", "period", "quantile", "mac"),
               [[country, pl, q, _fmt(mq[qi, pi])] for pi, pl in enumerate(labels) for qi, q in enumerate(qs)])

    timing = [[country, tid, period_label(tg), case, "" if fz is None else period_label(fz)]
              for tid, (tg, case, fz) in zip(res.ids, res.timing)]
    tables.add("pasfr_timing.csv", ("country", "trajectory", "t_g", "case", "frozen_from"), timing)

    # PASFR and MAC over time: observed history, median, 80% band, global pattern, a few trajectories.
    band = summarize_quantiles(res.patterns, (INTERVAL_80[0], 0.5, INTERVAL_80[1]))
    mband = summarize_quantiles(mac, (INTERVAL_80[0], 0.5, INTERVAL_80[1]))
    mac_g = float(res.p_g @ PASFR_MIDPOINTS)
    n_show = min(PLOT_TRAJECTORIES, len(res.ids))
    prow, mrow = [], []
    for period, pattern in res.history.items():
        pl = period_label(period)
        prow += [[country, pl, age, "observed", _fmt(v)] for age, v in zip(PASFR_AGES, pattern.proportions)]
        mrow.append([country, pl, "observed", _fmt(pattern.proportions @ PASFR_MIDPOINTS)])
    for pi, pl in enumerate(labels):
        for ai, age in enumerate(PASFR_AGES):
            for name, bi in (("lower80", 0), ("median", 1), ("upper80", 2)):
                prow.append([country, pl, age, name, _fmt(band[bi, pi, ai])])
            prow.append([country, pl, age, "global", _fmt(res.p_g[ai])])
            for ti in range(n_show):
                prow.append([country, pl, age, f"trajectory:{res.ids[ti]}", _fmt(res.patterns[ti, pi, ai])])
        for name, bi in (("lower80", 0), ("median", 1), ("upper80", 2)):
            mrow.append([country, pl, name, _fmt(mband[bi, pi])])
        mrow.append([country, pl, "global", _fmt(mac_g)])
        for ti in range(n_show):
            mrow.append([country, pl, f"trajectory:{res.ids[ti]}", _fmt(mac[ti, pi])])
    tables.add("plot_pasfr_time.csv", ("country", "period", "age_start", "series", "pasfr"), prow)
    tables.add("plot_mac_time.csv", ("country", "period", "series", "mac"), mrow)

    if cfg.emit_trajectories:
        prow, arow = [], []
        for ti, tid in enumerate(res.ids):
            for pi, pl in enumerate(labels):
                for ai, age in enumerate(PASFR_AGES):
                    prow.append([country, tid, pl, age, _fmt(res.patterns[ti, pi, ai])])
                    arow.append([country, tid, pl, age, _fmt(res.asfr[ti, pi, ai])])
        tables.add("pasfr_trajectories.csv", ("country", "trajectory", "period", "age_start", "pasfr"), prow)
        tables.add("asfr_trajectories.csv", ("country", "trajectory", "period", "age_start", "asfr"), arow)


# --------------------------------------------------------------------------
# Driver
# --------------------------------------------------------------------------


@dataclass
class RunReport:
    out_dir: Path
    outputs: list
    failures: dict
    succeeded: list

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run_pipeline(cfg: RunConfig) -> RunReport:
    """Run every selected country and write outputs into ``cfg.out_dir``."""
    cfg.validate()
    surfaces = load_mortality(cfg.mortality_file) if cfg.mortality_file else {}
    bundles = load_trajectories(cfg.e0_file, cfg.tfr_file)
    pasfr = load_pasfr(cfg.pasfr_file) if cfg.pasfr_file else {}
    model_bx = load_model_bx(cfg.model_bx_file) if cfg.model_bx_file else {}

    countries = sorted(cfg.countries) if cfg.countries else sorted(bundles)
    fcfg = cfg.fertility_config()
    p_g = None
    if pasfr:
        names = cfg.global_pattern_countries or tuple(sorted(pasfr))
        missing = [c for c in names if c not in pasfr]
        if missing:
            raise VitalRatesError(f"global pattern countries without PASFR data: {', '.join(missing)}")
        p_g = global_model_pattern([pasfr[c][max(pasfr[c])] for c in names])

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = _Tables()
    failures, succeeded = {}, []
    with _mapper(cfg.workers) as mapper:
        for country in countries:
            try:
                if country not in bundles:
                    raise VitalRatesError(f"{country}: no trajectories in the input files")
                bundle = bundles[country]
                did_something = False
                if bundle.e0_ids:
                    if country not in surfaces:
                        raise VitalRatesError(f"{country}: e0 trajectories but no mortality history")
                    res = run_country_mortality(country, surfaces[country], bundle, cfg, model_bx, mapper)
                    _emit_mortality(tables, country, res, cfg)
                    did_something = True
                if bundle.tfr_ids:
                    if country not in pasfr:
                        raise VitalRatesError(f"{country}: TFR trajectories but no PASFR history")
                    fres = run_country_fertility(country, pasfr[country], bundle, p_g, fcfg, mapper)
                    _emit_fertility(tables, country, fres, cfg)
                    did_something = True
                if not did_something:
                    raise VitalRatesError(f"{country}: nothing to project")
                succeeded.append(country)
                log.info("%s: done", country)
            except VitalRatesError as exc:
                failures[country] = str(exc)
                log.error("%s failed: %s", country, exc)

    outputs = tables.write(out_dir)
    manifest = {
        "tool": "vitalrates",
        "version": __version__,
        "config_sha256": cfg.digest(),
        "inputs": {
            key: {"name": Path(getattr(cfg, key)).name, "sha256": _sha256(Path(getattr(cfg, key)))}
            for key in ("mortality_file", "e0_file", "tfr_file", "pasfr_file", "model_bx_file")
            if getattr(cfg, key) is not None
        },
        "countries": {c: "ok" for c in succeeded} | {c: f"failed: {m}" for c, m in failures.items()},
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunReport(out_dir, outputs + [manifest_path], failures, succeeded)
