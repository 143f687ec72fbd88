import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from missadf import MissingSeries
from missadf.cli import main, read_series_csv, write_series_csv, InputError
from missadf.missingness import apply_mcar
from missadf.simharness import gen_ar1


def _csv(tmp_path, series, name="s.csv"):
    p = tmp_path / name
    write_series_csv(series, p)
    return p


@settings(max_examples=40, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False)),
                min_size=2, max_size=30).filter(lambda v: any(x is not None for x in v)))
def test_csv_round_trip_is_lossless(tmp_path_factory, items):
    s = MissingSeries.from_list(items)
    p = tmp_path_factory.mktemp("rt") / "s.csv"
    write_series_csv(s, p)
    back = read_series_csv(p)
    assert back == s
    assert np.array_equal(back.values[back.observed].view(np.int64),
                          s.values[s.observed].view(np.int64))


def test_csv_parsing_rules(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("date,mood\n1,0.5\n2,\n3,NA\n4,NaN\n5,1e-3\n")
    s = read_series_csv(p, "mood")
    assert s.observed.tolist() == [True, False, False, False, True]
    p.write_text("1.5\n\n2.5\nna\n")
    assert read_series_csv(p).to_list() == [1.5, None, 2.5, None]
    p.write_text("value\n1\nabc\n")
    with pytest.raises(InputError, match="line 3"):
        read_series_csv(p)


def test_test_command_all_methods(tmp_path, capsys):
    src = _csv(tmp_path, apply_mcar(gen_ar1(300, 1.0, 1.0, 1), 0.3, 2))
    out = tmp_path / "r.json"
    assert main(["test", str(src), "--out", str(out), "--seed", "3"]) == 0
    payload = json.loads(out.read_text())
    methods = {r["method"] for r in payload["results"]}
    assert {"MLEEM", "MLEN", "MLENS", "SSM", "CC", "LOCF", "IntL", "K", "MICE"} <= methods
    assert payload["config"]["seed"] == 3


def test_stationary_gappy_series_rejected_by_all(tmp_path):
    s = apply_mcar(gen_ar1(400, 0.5, 1.0, 4), 0.346, 5)
    src = _csv(tmp_path, s)
    out = tmp_path / "r.json"
    assert main(["test", str(src), "--out", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    proposed = [r for r in res if r["method"] in ("MLEEM", "MLEN", "MLENS", "SSM", "CC")]
    assert proposed and all(r["reject"] for r in proposed)


def test_exit_codes(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text("NA\nNA\nNA\n")
    assert main(["test", str(empty)]) == 3
    bad = tmp_path / "b.csv"
    bad.write_text("1\nfoo\n")
    assert main(["test", str(bad)]) == 2
    assert main(["test", str(tmp_path / "missing.csv")]) == 2
    cfg = tmp_path / "c.toml"
    cfg.write_text('T = 50\nbogus_key = 1\n')
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_sensitivity_command(tmp_path):
    src = _csv(tmp_path, apply_mcar(gen_ar1(300, 1.0, 1.0, 6), 0.3, 7))
    out = tmp_path / "sens.json"
    assert main(["sensitivity", str(src), "--method", "mleem", "--delta", "0,0.5,1",
                 "--out", str(out)]) == 0
    rows = json.loads(out.read_text())["results"]
    assert [r["delta"] for r in rows] == [0.0, 0.5, 1.0]
    # a clear random walk stays unrejected across the sweep
    assert not any(r["reject"] for r in rows)
    out2 = tmp_path / "trunc.json"
    assert main(["sensitivity", str(src), "--method", "mleem", "--delta-kind", "truncation",
                 "--lambda", "0,1", "--out", str(out2)]) == 0
    assert main(["sensitivity", str(src), "--method", "cc"]) == 2


def test_simulate_is_byte_identical(tmp_path):
    cfg = tmp_path / "g.toml"
    cfg.write_text('T = 80\nrhos = [1.0]\nmechanisms = ["MCAR"]\nrates = [0.3]\n'
                   'methods = ["CC", "MLEEM"]\nreplications = 4\n')
    for d in ("a", "b"):
        assert main(["simulate", str(cfg), "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "table.csv").read_bytes()
    assert a == (tmp_path / "b" / "table.csv").read_bytes()
    assert a.startswith(b"# config: ")


def test_quantiles_low_precision(tmp_path, capsys):
    out = tmp_path / "q.json"
    assert main(["quantiles", "--size", "50", "--reps", "100", "--out", str(out),
                 "--no-spec-constant", "--no-spec-trend"]) == 0
    assert "low-precision" in capsys.readouterr().err
    assert json.loads(out.read_text())["replications"] == 100
    assert main(["quantiles", "--reps", "10"]) == 2
