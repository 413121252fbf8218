import json
import subprocess
import sys

import pytest

from segchain import analysis as an
from segchain.cli import ConfigError, State, config_hash, main, parse_grid, worker_count
from segchain.gauge import read_level_csv

SURF = ["surface-sweep", "--d", "3", "--eps2", "0.005,0.008", "--rounds", "2d",
        "--trials", "3000", "--chunk", "1000", "--seed", "4"]
GAUGE = ["gauge-sweep", "--levels", "1", "--p-cnot", "1e-3,3e-3", "--trials", "4096",
         "--chunk", "1024", "--seed", "4"]


def _meta(text):
    return {ln[2:].split(":", 1)[0]: json.loads(ln.split(":", 1)[1])
            for ln in text.splitlines() if ln.startswith("# ")}


# -- parsing ----------------------------------------------------------------------

def test_parse_grid_forms():
    assert parse_grid("3,5,7", int) == [3, 5, 7]
    assert parse_grid("0.004:0.006:0.001") == [0.004, 0.005, 0.006]
    assert parse_grid("log:1e-5:1e-3:3") == pytest.approx([1e-5, 1e-4, 1e-3])
    assert parse_grid("0.1:0.35:0.1") == [0.1, 0.2, 0.3]


@pytest.mark.parametrize("bad", ["a,b", "1:0:0.1", "0:1:0", "log:1:2"])
def test_parse_grid_rejects(bad):
    with pytest.raises(ConfigError):
        parse_grid(bad)


def test_worker_env_overrides_flag(monkeypatch):
    monkeypatch.setenv("SEGCHAIN_WORKERS", "3")
    assert worker_count(1) == 3
    monkeypatch.setenv("SEGCHAIN_WORKERS", "x")
    with pytest.raises(ConfigError):
        worker_count(1)
    monkeypatch.delenv("SEGCHAIN_WORKERS")
    assert worker_count(2) == 2


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [2]}) == config_hash({"b": [2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


# -- sweeps -----------------------------------------------------------------------

@pytest.mark.parametrize("args", [SURF, GAUGE], ids=["surface", "gauge"])
def test_output_independent_of_worker_count(args, tmp_path, monkeypatch):
    texts = []
    for w in ("1", "2"):
        monkeypatch.setenv("SEGCHAIN_WORKERS", w)
        out = tmp_path / f"w{w}.csv"
        assert main(args + ["--out", str(out)]) == 0
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]


def test_surface_sweep_csv(tmp_path, monkeypatch):
    monkeypatch.setenv("SEGCHAIN_WORKERS", "1")
    out = tmp_path / "s.csv"
    assert main(SURF + ["--out", str(out)]) == 0
    meta = _meta(out.read_text())
    assert meta["code_version"] == "0.1.0"
    assert meta["config"]["d"] == [3] and meta["config"]["rounds"] == "2d"
    assert meta["config_hash"] == config_hash(meta["config"])
    rows = an.read_surface_csv(out)
    assert [(r["d"], r["eps2"], r["rounds"], r["trials"]) for r in rows] == [
        (3, 0.005, 6, 3000), (3, 0.008, 6, 3000)]
    assert rows[1]["failures_Z"] > rows[0]["failures_Z"] > 0


def test_gauge_sweep_csv(tmp_path, monkeypatch):
    monkeypatch.setenv("SEGCHAIN_WORKERS", "1")
    out = tmp_path / "g.csv"
    assert main(GAUGE + ["--out", str(out)]) == 0
    rows = read_level_csv(out)
    assert [(r["n"], r["p_CNOT"]) for r in rows] == [(1, 1e-3), (1, 3e-3)]
    assert all(r["P_CNOT"] == r["failures"] / r["trials"] for r in rows)


def test_resume_skips_finished_points(tmp_path, monkeypatch):
    monkeypatch.setenv("SEGCHAIN_WORKERS", "1")
    out = tmp_path / "s.csv"
    assert main(SURF + ["--out", str(out)]) == 0
    first = out.read_bytes()
    state = State(str(out))
    assert len(state.points) == 2
    # poison one stored count: a resumed run must reuse it rather than recompute
    key = sorted(state.points)[0]
    state.points[key] = [0, 0]
    state.save()
    assert main(SURF + ["--out", str(out)]) == 0
    rows = an.read_surface_csv(out)
    assert sum(r["failures_Z"] == 0 for r in rows) == 1
    assert main(SURF + ["--out", str(out), "--fresh"]) == 0
    assert out.read_bytes() == first


def test_extending_grid_keeps_old_points(tmp_path, monkeypatch):
    monkeypatch.setenv("SEGCHAIN_WORKERS", "1")
    out = tmp_path / "s.csv"
    one = SURF[:4] + ["0.005"] + SURF[5:]
    assert main(one + ["--out", str(out)]) == 0
    before = an.read_surface_csv(out)
    assert main(SURF + ["--out", str(out)]) == 0
    after = an.read_surface_csv(out)
    assert len(after) == 2 and after[0] == before[0]


@pytest.mark.parametrize("args", [
    ["surface-sweep", "--d", "1"],
    ["surface-sweep", "--eps2", "1.5"],
    ["surface-sweep", "--trials", "0"],
    ["gauge-sweep", "--levels", "5"],
    ["gauge-sweep", "--p-cnot", "0.5"],
])
def test_bad_configuration_exit_2(args, tmp_path, capsys):
    assert main(args + ["--out", str(tmp_path / "x.csv")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["kind"] == "config"
    assert not (tmp_path / "x.csv").exists()


def test_env_worker_typo_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv("SEGCHAIN_WORKERS", "two")
    assert main(SURF + ["--out", str(tmp_path / "x.csv")]) == 2


def test_unreadable_input_exit_3(tmp_path):
    assert main(["analyze", "--surface", str(tmp_path / "missing.csv")]) == 3


def test_analyze_without_inputs_exit_2():
    assert main(["analyze"]) == 2


# -- reports ------------------------------------------------------------------------

def test_verify_protocol_report(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify-protocol", "--protocol", "cnot", "--d", "3", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["reports"][0]["protocol"] == "cnot"
    assert rep["code_version"] == "0.1.0"


def test_verify_protocol_bad_distance():
    assert main(["verify-protocol", "--d", "1"]) == 2


def test_decode_check_report(tmp_path):
    out = tmp_path / "dc.json"
    assert main(["decode-check", "--d", "3", "--instances", "20", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["matching"]["passed"]
    assert rep["single_fault"][0]["failures"] == 0


def test_analyze_gauge_and_surface(tmp_path):
    g = tmp_path / "g.csv"
    rows = ["n,p_CNOT,trials,failures,P_CNOT,stderr"]
    for n, k in ((1, 1.0), (2, 2.0)):
        for p in (1e-4, 3e-4, 1e-3):
            P = 0.5 * (p / 3e-3) ** k
            rows.append(f"{n},{p},1000000,{int(P * 1e6)},{P},{(P / 1e6) ** 0.5}")
    g.write_text("\n".join(rows) + "\n")
    s = tmp_path / "s.csv"
    rows = ["d,s,eps2,rounds,trials,failures_Z,failures_X,p_L_Z,p_L_X,stderr_Z,stderr_X"]
    for d in (3, 5, 7):
        for e in (0.002, 0.004, 0.006, 0.008, 0.01):
            p = float(an.evaluate(an.TABLE_I, e, d))
            rows.append(f"{d},{d + 2},{e},{d},100000,100,100,{p},{p},{0.02 * p},{0.02 * p}")
    s.write_text("\n".join(rows) + "\n")
    out = tmp_path / "a.json"
    assert main(["analyze", "--gauge", str(g), "--surface", str(s), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["gauge_fits"]["1"]["kappa"] == pytest.approx(1.0, abs=1e-3)
    assert rep["gauge_fits"]["2"]["kappa"] == pytest.approx(2.0, abs=1e-3)
    assert rep["threshold"]["eps2_th"] == pytest.approx(an.TABLE_I.threshold, rel=1e-6)
    assert rep["scaling_fit"]["alpha"] == pytest.approx(0.5978, rel=1e-3)


def test_resource_curves(capsys):
    assert main(["resource-curves", "--eps2", "0.0012", "--targets", "4e-6",
                 "--sizes", "21"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert abs(rep["required_segment"][0]["s"] - 15) <= 2
    assert rep["overhead"] == {"0": 1, "3": 864, "4": 5184}


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "segchain", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
