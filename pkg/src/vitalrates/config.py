"""Flat ``key = value`` run configuration.

Country-specific options are written as ``<option>.<COUNTRY> = value``,
e.g. ``ax_method.KEN = latest``; the bare option sets the default for all
countries.  Relative paths are resolved against the config file's
directory.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .core import VitalRatesError
from .fertility import FertilityProjectionConfig
from .lee_carter import AX_METHODS
from .mortality import BisectionSettings, MortalityProjectionConfig

CONFIG_ENV_VAR = "VITALRATES_CONFIG"
DEFAULT_QUANTILES = (0.025, 0.1, 0.5, 0.9, 0.975)

PATH_KEYS = ("mortality_file", "e0_file", "tfr_file", "pasfr_file", "model_bx_file")
COUNTRY_OPTIONS = ("ax_method", "bx_source", "hiv_mode", "kannisto_mode", "rotation")
SOLVER_KEYS = ("k_lo", "k_hi", "e0_tolerance", "k_tolerance", "max_iter")
FERTILITY_KEYS = ("trend_window", "fu_phase3_only")
OTHER_KEYS = (
    "countries", "out", "workers", "quantiles", "emit_trajectories", "emit_lifetables",
    "global_pattern_countries",
)


class ConfigError(VitalRatesError):
    pass


def _bool(value: str, key: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _list(value: str) -> tuple:
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


def parse_quantiles(value) -> tuple:
    items = _list(value) if isinstance(value, str) else tuple(value)
    try:
        qs = tuple(float(q) for q in items)
    except ValueError:
        raise ConfigError(f"quantiles: not numbers: {value!r}") from None
    if not qs or any(not 0 < q < 1 for q in qs) or any(b <= a for a, b in zip(qs, qs[1:])):
        raise ConfigError(f"quantiles must be strictly increasing values in (0, 1), got {qs}")
    return qs


def _check_country_option(key: str, value: str) -> None:
    if key == "ax_method" and value not in AX_METHODS:
        raise ConfigError(f"ax_method must be one of {AX_METHODS}, got {value!r}")
    if key == "kannisto_mode" and value not in ("coherent", "classic"):
        raise ConfigError(f"kannisto_mode must be coherent or classic, got {value!r}")
    if key == "bx_source" and not (value == "estimated" or value.startswith("model:")):
        raise ConfigError(f"bx_source must be 'estimated' or 'model:<pattern>', got {value!r}")
    if key in ("hiv_mode", "rotation"):
        _bool(value, key)


@dataclass(frozen=True)
class RunConfig:
    mortality_file: Optional[Path] = None
    e0_file: Optional[Path] = None
    tfr_file: Optional[Path] = None
    pasfr_file: Optional[Path] = None
    model_bx_file: Optional[Path] = None
    countries: Optional[tuple] = None
    out_dir: Path = Path("output")
    workers: int = 1
    quantiles: tuple = DEFAULT_QUANTILES
    emit_trajectories: bool = False
    emit_lifetables: bool = False
    global_pattern_countries: Optional[tuple] = None
    options: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    fertility: dict = field(default_factory=dict)

    def option(self, country: str, key: str, default=None):
        return self.overrides.get(country, {}).get(key, self.options.get(key, default))

    def mortality_config(self, country: str, model_bx: Optional[dict] = None) -> MortalityProjectionConfig:
        bx_source = self.option(country, "bx_source", "estimated")
        bx = None
        if bx_source.startswith("model:"):
            name = bx_source.split(":", 1)[1]
            if not model_bx or name not in model_bx:
                raise ConfigError(f"{country}: model b_x pattern {name!r} not found in model_bx_file")
            bx = tuple(float(v) for v in model_bx[name])
        bisection = BisectionSettings(**{k: (int(v) if k == "max_iter" else float(v)) for k, v in self.solver.items()})
        return MortalityProjectionConfig(
            ax_method=self.option(country, "ax_method", "average"),
            model_bx=bx,
            hiv_mode=_bool(self.option(country, "hiv_mode", "false"), "hiv_mode"),
            kannisto_mode=self.option(country, "kannisto_mode", "coherent"),
            rotation=_bool(self.option(country, "rotation", "true"), "rotation"),
            bisection=bisection,
        )

    def fertility_config(self) -> FertilityProjectionConfig:
        return FertilityProjectionConfig(
            trend_window=int(self.fertility.get("trend_window", 3)),
            ultimate_from_phase3_only=_bool(self.fertility.get("fu_phase3_only", "false"), "fu_phase3_only"),
        )

    def validate(self) -> None:
        if self.mortality_file is None and self.tfr_file is None:
            raise ConfigError("nothing to do: set mortality_file/e0_file and/or tfr_file/pasfr_file")
        for key in PATH_KEYS:
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{key}: file not found: {path}")
        if (self.mortality_file is None) != (self.e0_file is None):
            raise ConfigError("mortality_file and e0_file must be given together")
        if (self.tfr_file is None) != (self.pasfr_file is None):
            raise ConfigError("tfr_file and pasfr_file must be given together")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        parse_quantiles(self.quantiles)

    def digest(self) -> str:
        """Hash of everything that can change results (not paths, workers or output dir)."""
        payload = {
            "quantiles": list(self.quantiles),
            "countries": list(self.countries) if self.countries else None,
            "global_pattern_countries": list(self.global_pattern_countries or ()),
            "options": self.options,
            "overrides": self.overrides,
            "solver": self.solver,
            "fertility": self.fertility,
            "emit_trajectories": self.emit_trajectories,
            "emit_lifetables": self.emit_lifetables,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def parse_config(text: str, base_dir=".") -> RunConfig:
    base = Path(base_dir)
    kwargs, options, overrides, solver, fertility = {}, {}, {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        option, _, country = key.partition(".")
        if option in COUNTRY_OPTIONS:
            _check_country_option(option, value)
            (overrides.setdefault(country, {}) if country else options)[option] = value
        elif country:
            raise ConfigError(f"config line {lineno}: {option!r} cannot be set per country")
        elif key in PATH_KEYS:
            kwargs[key] = base / value if value else None
        elif key in SOLVER_KEYS:
            solver[key] = value
        elif key in FERTILITY_KEYS:
            fertility[key] = value
        elif key == "countries":
            kwargs["countries"] = _list(value) or None
        elif key == "global_pattern_countries":
            kwargs["global_pattern_countries"] = _list(value) or None
        elif key == "out":
            kwargs["out_dir"] = base / value
        elif key == "workers":
            kwargs["workers"] = int(value)
        elif key == "quantiles":
            kwargs["quantiles"] = parse_quantiles(value)
        elif key in ("emit_trajectories", "emit_lifetables"):
            kwargs[key] = _bool(value, key)
        else:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
    return RunConfig(options=options, overrides=overrides, solver=solver, fertility=fertility, **kwargs)


def load_config(path=None) -> RunConfig:
    """Read a config file; falls back to the path in ``$VITALRATES_CONFIG``."""
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        raise ConfigError(f"no config file given and ${CONFIG_ENV_VAR} is not set")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), path.parent)


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
