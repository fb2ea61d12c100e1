import pytest

from vitalrates.config import (
    CONFIG_ENV_VAR,
    DEFAULT_QUANTILES,
    ConfigError,
    load_config,
    parse_config,
    parse_quantiles,
    with_overrides,
)


def test_defaults_and_overrides(tmp_path):
    cfg = parse_config(
        "# comment\n"
        "e0_file = e0.csv\n"
        "ax_method = latest\n"
        "ax_method.KEN = average\n"
        "hiv_mode.KEN = yes\n"
        "bx_source.KEN = model:WEST\n"
        "quantiles = 0.1, 0.5, 0.9\n",
        tmp_path,
    )
    assert cfg.e0_file == tmp_path / "e0.csv"
    assert cfg.quantiles == (0.1, 0.5, 0.9)
    assert cfg.option("FRA", "ax_method") == "latest"
    assert cfg.option("KEN", "ax_method") == "average"
    mc = cfg.mortality_config("KEN", {"WEST": [1 / 28] * 28})
    assert mc.hiv_mode and mc.model_bx is not None and mc.ax_method == "average"
    assert cfg.mortality_config("FRA").model_bx is None
    with pytest.raises(ConfigError, match="WEST"):
        cfg.mortality_config("KEN", {})


@pytest.mark.parametrize(
    "text",
    ["bogus = 1", "ax_method = median", "workers.KEN = 2", "no equals sign", "quantiles = 0.5, 0.1"],
)
def test_rejects_bad_lines(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_quantiles():
    assert parse_quantiles("0.025,0.5") == (0.025, 0.5)
    assert DEFAULT_QUANTILES == (0.025, 0.1, 0.5, 0.9, 0.975)
    for bad in ("0,0.5", "0.5,1", "x"):
        with pytest.raises(ConfigError):
            parse_quantiles(bad)


def test_validate_missing_files(tmp_path):
    cfg = parse_config("mortality_file = nope.csv\ne0_file = e0.csv\n", tmp_path)
    with pytest.raises(ConfigError, match="not found"):
        cfg.validate()


def test_env_var_fallback(tmp_path, monkeypatch):
    p = tmp_path / "c.txt"
    p.write_text("workers = 3\n")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(p))
    assert load_config().workers == 3
    monkeypatch.delenv(CONFIG_ENV_VAR)
    with pytest.raises(ConfigError):
        load_config()


def test_digest_ignores_plumbing(tmp_path):
    cfg = parse_config("ax_method = latest\n", tmp_path)
    assert with_overrides(cfg, workers=8, out_dir=tmp_path / "x").digest() == cfg.digest()
    assert with_overrides(cfg, quantiles=(0.5,)).digest() != cfg.digest()
