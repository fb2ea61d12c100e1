import subprocess
import sys

from vitalrates.cli import main


def test_sample_then_run(tmp_path, capsys):
    assert main(["sample", str(tmp_path / "s"), "-n", "12"]) == 0
    code = main(["run", "--config", str(tmp_path / "s" / "config.txt"), "--out", str(tmp_path / "o"),
                 "--quantiles", "0.1,0.5,0.9", "--workers", "1", "--countries", "SYN"])
    assert code == 0
    assert "SYN: ok" in capsys.readouterr().out
    header = (tmp_path / "o" / "e0_quantiles.csv").read_text().splitlines()[1]
    assert header.split(",")[3] == "0.1"


def test_unknown_country_exits_nonzero(tmp_path):
    main(["sample", str(tmp_path / "s"), "-n", "5"])
    code = main(["run", "--config", str(tmp_path / "s" / "config.txt"), "--out", str(tmp_path / "o"),
                 "--countries", "NOPE"])
    assert code == 1


def test_missing_config_is_config_error(tmp_path, monkeypatch):
    monkeypatch.delenv("VITALRATES_CONFIG", raising=False)
    assert main(["run"]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "vitalrates", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "vitalrates" in out.stdout
