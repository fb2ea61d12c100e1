import logging
import shutil

import numpy as np
import pytest

from vitalrates.inputs import (
    InputError,
    load_model_bx,
    load_mortality,
    load_pasfr,
    load_trajectories,
)
from vitalrates.sample import bundled_sample_dir


def test_bundled_sample_loads_without_warnings(caplog):
    d = bundled_sample_dir()
    with caplog.at_level(logging.WARNING):
        mort = load_mortality(d / "mortality.csv")
        bundles = load_trajectories(d / "e0.csv", d / "tfr.csv")
        pasfr = load_pasfr(d / "pasfr.csv")
        model = load_model_bx(d / "model_bx.csv")
    assert not caplog.records
    assert set(mort["SYN"]) == {"F", "M"}
    b = bundles["SYN"]
    assert len(b.e0_ids) == 1000 and len(b.e0_periods) == 18
    assert b.tfr.shape == (1000, 22)
    assert set(pasfr) == {"SYN", "REF_A", "REF_B", "REF_C"}
    assert model["SYN_MODEL"].sum() == pytest.approx(1.0, abs=1e-12)


def write(path, text):
    path.write_text(text)
    return path


def test_negative_rate_names_file_line_column(tmp_path):
    p = write(
        tmp_path / "m.csv",
        "country,sex,period,age_start,age_width,mx\n"
        "X,F,2000-2005,0,1,0.01\n"
        "X,F,2000-2005,1,4,-0.002\n",
    )
    with pytest.raises(InputError) as err:
        load_mortality(p)
    msg = str(err.value)
    assert "m.csv" in msg and "line 3" in msg and "'mx'" in msg
    assert err.value.line == 3 and err.value.column == "mx"


def test_non_numeric_and_missing_column(tmp_path):
    p = write(tmp_path / "m.csv", "country,sex,period,age_start,mx\nX,F,2000-2005,0,0.01\n")
    with pytest.raises(InputError, match="age_width"):
        load_mortality(p)
    p = write(tmp_path / "m2.csv", "country,sex,period,age_start,age_width,mx\nX,F,2000-2005,0,1,abc\n")
    with pytest.raises(InputError, match="not a number"):
        load_mortality(p)


def test_duplicate_and_inconsistent_grid(tmp_path):
    head = "country,sex,period,age_start,age_width,mx\n"
    p = write(tmp_path / "d.csv", head + "X,F,2000-2005,0,1,0.01\nX,F,2000-2005,0,1,0.01\n")
    with pytest.raises(InputError, match="duplicate"):
        load_mortality(p)
    rows = ["X,F,2000-2005,0,1,0.01", "X,F,2000-2005,1,4,0.001", "X,F,2000-2005,5,open,0.1",
            "X,F,2005-2010,0,1,0.01", "X,F,2005-2010,1,4,0.001", "X,F,2005-2010,5,5,0.001",
            "X,F,2005-2010,10,open,0.1"]
    p = write(tmp_path / "g.csv", head + "\n".join(rows) + "\n")
    with pytest.raises(InputError, match="inconsistent age grid"):
        load_mortality(p)


def test_trajectory_gap_is_contiguity_error(tmp_path):
    p = write(
        tmp_path / "e0.csv",
        "country,trajectory,period,e0_f,e0_m\n"
        "X,1,2010-2015,80,75\nX,1,2015-2020,81,76\nX,1,2025-2030,82,77\n",
    )
    with pytest.raises(InputError, match="contiguous"):
        load_trajectories(p)


def test_ragged_trajectories(tmp_path):
    p = write(
        tmp_path / "e0.csv",
        "country,trajectory,period,e0_f,e0_m\n"
        "X,1,2010-2015,80,75\nX,1,2015-2020,81,76\nX,2,2010-2015,80,75\n",
    )
    with pytest.raises(InputError, match="trajectory 2"):
        load_trajectories(p)


def test_tfr_phase3_and_pasfr(tmp_path):
    tfr = write(
        tmp_path / "tfr.csv",
        "country,trajectory,period,tfr,phase3_start\n"
        "X,1,2010-2015,2.1,2015-2020\nX,1,2015-2020,1.9,2015-2020\n"
        "X,2,2010-2015,2.2,\nX,2,2015-2020,2.0,\n",
    )
    b = load_trajectories(None, tfr)["X"]
    assert b.phase3_start == (2015, None)
    assert np.array_equal(b.tfr, [[2.1, 1.9], [2.2, 2.0]])

    rows = "\n".join(f"X,2005-2010,{a},{v}" for a, v in zip(range(15, 50, 5), [0.1, 0.2, 0.3, 0.2, 0.1, 0.05, 0.0501]))
    p = write(tmp_path / "p.csv", "country,period,age_start,pasfr\n" + rows + "\n")
    pat = load_pasfr(p)["X"][2005]
    assert pat.proportions.sum() == pytest.approx(1.0, abs=1e-12)
    rows = rows.replace("0.0501", "0.09")
    p = write(tmp_path / "p2.csv", "country,period,age_start,pasfr\n" + rows + "\n")
    with pytest.raises(InputError, match="sum"):
        load_pasfr(p)


def test_model_bx_incomplete(tmp_path):
    p = write(tmp_path / "b.csv", "pattern,age_start,bx\nW,0,0.5\nW,1,0.5\n")
    with pytest.raises(InputError, match="28"):
        load_model_bx(p)


def test_sample_copy_reads_same(tmp_path):
    shutil.copytree(bundled_sample_dir(), tmp_path / "s")
    a = load_mortality(tmp_path / "s" / "mortality.csv")["SYN"]["F"]
    b = load_mortality(bundled_sample_dir() / "mortality.csv")["SYN"]["F"]
    assert np.array_equal(a.rates, b.rates)
