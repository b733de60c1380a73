import csv
import json
import math

import numpy as np
import pytest

from be_lab.errors import InsufficientDataError, InvalidParameterError
from be_lab.harness import CSV_COLUMNS, SweepConfig, fit_scaling, run_sweep

FIELD = {"family": "field", "h": 1.0}


def test_empty_n_list():
    with pytest.raises(InvalidParameterError):
        SweepConfig(model=FIELD, n_values=[])
    with pytest.raises(InvalidParameterError):
        run_sweep({"model": FIELD, "n_values": []})


def test_bad_config_fields():
    with pytest.raises(InvalidParameterError):
        SweepConfig.from_dict({"model": FIELD, "n_values": [4], "bogus": 1})
    with pytest.raises(InvalidParameterError):
        SweepConfig(model=FIELD, n_values=[8, 4])
    with pytest.raises(InvalidParameterError):
        SweepConfig(model=FIELD, n_values=[4], path="nope")


def test_fit_exact_power_law():
    rows = [(n, 0.7 * n ** -0.5) for n in (16, 64, 256, 1024, 4096)]
    fit = fit_scaling(rows)
    assert fit["slope"] == pytest.approx(-0.5, abs=1e-12)
    assert fit["intercept"] == pytest.approx(math.log(0.7), abs=1e-12)


def test_fit_constant():
    fit = fit_scaling([(n, 0.3) for n in (2, 4, 8, 16)])
    assert fit["slope"] == pytest.approx(0.0, abs=1e-12)


def test_fit_insufficient():
    with pytest.raises(InsufficientDataError):
        fit_scaling([(2, 0.1), (4, 0.05), (8, 0.02)])
    with pytest.raises(InsufficientDataError):
        fit_scaling([(2, 0.1), (4, 0.05), (8, 0.02), (16, 0.0)])


def test_field_binomial_slope():
    res = run_sweep({"model": FIELD, "n_values": [2 ** k for k in range(8, 13)], "path": "fast_commuting",
                     "esseen": False})
    assert len(res.rows) == 5 and all(r.delta > 0 for r in res.rows)
    assert res.fit["slope"] == pytest.approx(-0.5, abs=0.05)


def _csv_without_runtime(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    idx = rows[0].index("runtime_ms")
    return [r[:idx] + r[idx + 1:] for r in rows]


def test_rerun_byte_identical(tmp_path):
    cfg = {"model": {"family": "random_2local"}, "state": {"kind": "product_random"}, "n_values": [3, 4, 5, 6],
           "seed": 11}
    a = run_sweep({**cfg, "out_dir": str(tmp_path / "a")})
    b = run_sweep({**cfg, "out_dir": str(tmp_path / "b"), "workers": 3})
    assert _csv_without_runtime(tmp_path / "a" / "results.csv") == _csv_without_runtime(tmp_path / "b" / "results.csv")
    assert [r.N for r in b.rows] == [3, 4, 5, 6]
    ma = json.loads((tmp_path / "a" / "metadata.json").read_text())
    mb = json.loads((tmp_path / "b" / "metadata.json").read_text())
    assert ma["config_hash"] == mb["config_hash"] and ma["seed"] == 11
    c = run_sweep({**cfg, "seed": 12})
    assert c.rows[0].delta != a.rows[0].delta


def test_artifacts(tmp_path):
    run_sweep({"model": {"family": "zz_chain"}, "n_values": [2, 3, 4, 5], "out_dir": str(tmp_path)})
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 5
    body = json.loads((tmp_path / "results.json").read_text())
    assert len(body["rows"]) == 4 and body["fit"] is not None
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert set(meta["versions"]) >= {"be_lab", "numpy", "scipy", "python"}
    # 17 significant digits round-trip the stored floats
    assert float(rows[1][3]) == body["rows"][0]["delta"]


def test_skipped_rows(tmp_path):
    res = run_sweep({"model": {"family": "tfim"}, "n_values": [4, 5], "path": "fast_commuting",
                     "out_dir": str(tmp_path)})
    assert all(r.skipped for r in res.rows) and res.fit is None
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[1][1:6] == ["skipped"] * 5


def test_dimension_cap_skips(monkeypatch):
    monkeypatch.setenv("BE_LAB_DIM_CAP", "64")
    res = run_sweep({"model": {"family": "tfim"}, "n_values": [4, 6, 8], "path": "exact", "esseen": False})
    assert [r.skipped is None for r in res.rows] == [True, True, False]


def test_esseen_and_bound_columns():
    res = run_sweep({"model": FIELD, "state": {"kind": "product_plus"}, "n_values": [4, 8]})
    for r in res.rows:
        assert r.esseen_rhs_min >= r.delta
    res = run_sweep({"model": FIELD, "n_values": [64], "path": "fast_commuting", "decay": {"rate": 1.0}})
    assert res.rows[0].bound_variant == "exponential" and res.rows[0].thm_bound is None
