import csv
import re
import subprocess
import sys

import numpy as np
import pytest

from sagin_match import __version__
from sagin_match.channel import build_rate_matrix
from sagin_match.cli import main
from sagin_match.scenario import (
    LayerConfig,
    ScenarioConfig,
    load_scenario,
    default_config,
    save_config,
    save_scenario,
    generate_scenario,
)


def data_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def header_lines(path):
    return [line for line in open(path) if line.startswith("#")]


def test_generate_default(tmp_path, capsys):
    out = tmp_path / "s.ini"
    assert main(["generate", "--seed", "7", "--out", str(out)]) == 0
    assert "users=30 uavs=8 haps=3 satellites=2" in capsys.readouterr().out
    assert load_scenario(out).counts() == (30, 8, 3, 2)
    again = tmp_path / "t.ini"
    main(["generate", "--seed", "7", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_generate_from_config_file(tmp_path):
    cfg = tmp_path / "c.ini"
    save_config(default_config(12, seed=3), cfg)
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "s.ini")]) == 0
    sc = load_scenario(tmp_path / "s.ini")
    assert sc.counts() == (12, 8, 3, 2) and sc.seed == 3


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["generate", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nlayers = a\n")
    assert main(["generate", "--config", str(bad)]) == 2
    assert main(["run", "--scenario", str(tmp_path / "nope.ini")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["compare", "--users", "ten"])
    assert info.value.code == 2
    sc = tmp_path / "s.ini"
    save_scenario(generate_scenario(default_config(3), 0), sc)
    assert main(["run", "--scenario", str(sc), "--epsilon", "1", "--delta", "2"]) == 2
    assert "error" in capsys.readouterr().err


@pytest.fixture
def small_scenario(tmp_path):
    path = tmp_path / "s.ini"
    save_scenario(generate_scenario(default_config(4), 2), path)
    return path


def test_run_distance_without_contention(tmp_path, small_scenario, capsys):
    out = tmp_path / "d"
    assert main(["run", "--scenario", str(small_scenario), "--algo", "distance", "--out", str(out)]) == 0
    assert "users_connected=4/4" in capsys.readouterr().out
    edges = data_rows(out / "matching.csv")
    assert sorted(int(r["downstream_id"]) for r in edges if r["layer_pair"] == "0-1") == [0, 1, 2, 3]
    trace = data_rows(out / "trace.csv")
    assert len(trace) == 1 and trace[0]["event"] == "final"


def test_run_msa_is_byte_reproducible(tmp_path, small_scenario, capsys):
    for name in ("a", "b"):
        assert main(["run", "--scenario", str(small_scenario), "--seed", "5", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    assert (tmp_path / "a" / "matching.csv").read_bytes() == (tmp_path / "b" / "matching.csv").read_bytes()
    summary = capsys.readouterr().out.splitlines()[0]
    total = float(re.search(r"total_value=(\S+)", summary).group(1))
    trace = data_rows(tmp_path / "a" / "trace.csv")
    assert float(trace[-1]["total_value"]) == pytest.approx(total)
    assert {r["event"] for r in trace} <= {"match", "evict-match", "decrement", "no-op"}


def test_run_greedy_on_a_two_layer_file(tmp_path, capsys):
    cfg = ScenarioConfig(
        layers=(LayerConfig("users", 2, 0.0, 1.0), LayerConfig("relays", 2, 100.0, 0.0, 0.0, 1)),
        bandwidth=(1e7,),
        carrier_freq=(2.5e9,),
    )
    sc = generate_scenario(cfg, 4)
    path = tmp_path / "two.ini"
    save_scenario(sc, path)
    assert main(["run", "--scenario", str(path), "--algo", "greedy", "--out", str(tmp_path / "g")]) == 0
    total = float(re.search(r"total_value=(\S+)", capsys.readouterr().out).group(1))
    r = build_rate_matrix(load_scenario(path), 0).rates
    # hand rule: take the larger entry, then the remaining diagonal
    i, j = np.unravel_index(np.argmax(r), r.shape)
    assert total == r[i, j] + r[1 - i, 1 - j]


def test_run_reports_non_convergence(tmp_path, small_scenario, capsys):
    code = main(["run", "--scenario", str(small_scenario), "--max-iters", "3", "--out", str(tmp_path / "x")])
    assert code == 3
    assert "NOT converged" in capsys.readouterr().out
    assert (tmp_path / "x" / "trace.csv").exists() and (tmp_path / "x" / "matching.csv").exists()


def test_output_headers(tmp_path, small_scenario):
    main(["run", "--scenario", str(small_scenario), "--seed", "9", "--out", str(tmp_path / "h")])
    for name in ("trace.csv", "matching.csv"):
        head = "".join(header_lines(tmp_path / "h" / name))
        assert f"sagin-match {__version__}" in head
        assert "seed=9" in head
        assert re.search(r"config_sha256=[0-9a-f]{16}", head)


def test_compare_row_arithmetic(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SAGIN_MATCH_THREADS", "1")
    assert main(["compare", "--users", "3,5,7", "--seeds", "1,2,3,4,5", "--out", str(tmp_path)]) == 0
    rows = data_rows(tmp_path / "comparison.csv")
    results = [r for r in rows if r["seed"] != "mean"]
    means = [r for r in rows if r["seed"] == "mean"]
    assert len(results) == 45 and len(means) == 9
    keys = [(int(r["n_users"]), int(r["seed"]), r["algo"]) for r in results]
    assert keys == sorted(keys)
    head = "".join(header_lines(tmp_path / "comparison.csv"))
    assert "seed=1,2,3,4,5" in head and "config_sha256=" in head
    for r in means:
        group = [float(x["total_value"]) for x in results if x["n_users"] == r["n_users"] and x["algo"] == r["algo"]]
        assert float(r["total_value"]) == pytest.approx(np.mean(group))


def test_compare_parallel_matches_sequential(tmp_path, monkeypatch):
    for n, name in (("1", "seq"), ("3", "par")):
        monkeypatch.setenv("SAGIN_MATCH_THREADS", n)
        assert main(["compare", "--users", "4,6", "--seeds", "0,1", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "seq" / "comparison.csv").read_bytes() == (tmp_path / "par" / "comparison.csv").read_bytes()


def test_compare_beyond_total_quota(tmp_path, monkeypatch):
    monkeypatch.setenv("SAGIN_MATCH_THREADS", "1")
    assert main(["compare", "--users", "50", "--seeds", "0", "--out", str(tmp_path)]) == 0
    rows = [r for r in data_rows(tmp_path / "comparison.csv") if r["seed"] != "mean"]
    assert [r["algo"] for r in rows] == ["distance", "greedy", "msa"]
    assert all(r["all_users_connected"] == "0" for r in rows)


def test_bad_thread_setting_is_a_usage_error(tmp_path, monkeypatch):
    monkeypatch.setenv("SAGIN_MATCH_THREADS", "zero")
    assert main(["compare", "--users", "3", "--seeds", "0", "--out", str(tmp_path)]) == 2


def test_help_documents_columns_and_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "sagin_match", "run", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for col in ("iter, pair, event, total_value", "layer_pair, downstream_id, upstream_id, pair_value",
                "all_users_connected", "SAGIN_MATCH_THREADS"):
        assert col in out.stdout
