import csv
import io

import pytest

from stratus.cli import EXIT_BUDGET, EXIT_CONFIG, bundled_scenarios, main

TINY = """
[scenario]
name = "tiny"
modes = ["native", "stratus"]
horizon = 3.0

[params]
n_replicas = 4
batch_size_bytes = 8000

[link]
base_delay = 0.01

[workload]
rate = 300
duration = 2.0
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_list(capsys):
    assert main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert names == bundled_scenarios() == ["analytic-sweep", "bandwidth-table", "byz-sender",
                                            "fluctuation", "scalability", "skewed-load"]


def test_run_to_stdout(tiny, capsys):
    assert main(["run", str(tiny)]) == 0
    r = rows(capsys.readouterr().out)
    assert [x["mode"] for x in r] == ["native", "stratus"]
    assert all(x["committed_txs"] == "600" and x["safety_ok"] == "1" for x in r)


def test_run_out_and_buckets(tiny, tmp_path):
    out = tmp_path / "res" / "tiny.csv"
    assert main(["run", str(tiny), "--out", str(out), "--buckets", "--seed", "4"]) == 0
    assert rows(out.read_text())[0]["seed"] == "4"
    b = rows((tmp_path / "res" / "tiny.buckets.csv").read_text())
    assert len(b) == 6 and sum(int(x["committed_txs"]) for x in b) == 1200


def test_same_seed_same_bytes(tiny, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", str(tiny), "--out", str(a)])
    main(["run", str(tiny), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_sweep(tiny, capsys):
    assert main(["sweep", str(tiny), "--axis", "n", "--values", "4,7"]) == 0
    r = rows(capsys.readouterr().out)
    assert [(x["n"], x["mode"]) for x in r] == [("4", "native"), ("4", "stratus"), ("7", "native"), ("7", "stratus")]


def test_analytic_bundled(capsys):
    assert main(["analytic", "analytic-sweep"]) == 0
    r = rows(capsys.readouterr().out)
    assert [x["n"] for x in r] == ["4", "8", "16", "32", "64", "100", "128", "200", "400"]


def test_config_error_names_field(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(TINY.replace("batch_size_bytes = 8000", "batch_size_bytes = -1"))
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "batch_size_bytes" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["run", "nowhere.toml"]) == EXIT_CONFIG
    assert "config" in capsys.readouterr().err


def test_bad_toml(tmp_path, capsys):
    p = tmp_path / "x.toml"
    p.write_text("[scenario\n")
    assert main(["run", str(p)]) == EXIT_CONFIG


def test_budget_dumps_trace(tmp_path, capsys):
    p = tmp_path / "loop.toml"
    p.write_text(TINY.replace('horizon = 3.0', 'horizon = 3.0\nmax_events = 500'))
    out = tmp_path / "loop.csv"
    assert main(["run", str(p), "--out", str(out)]) == EXIT_BUDGET
    trace = (tmp_path / "loop.trace.csv").read_text().splitlines()
    assert trace[0] == "t,kind,from,to,size,tag" and len(trace) > 100
