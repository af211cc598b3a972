"""End-to-end command line checks, driven in-process through main()."""

import json
import re

import pytest

from conftest import hand_scenario
from oranslice.cli import main
from oranslice.scenario import load_scenario, save_scenario

# single-slice family with an interior efficiency optimum the 64-step
# oracle grid can resolve (same calibration as the solver-vs-oracle tests)
EASY_CONFIG = {
    "n_services": 2, "mean_ues": 1.0, "max_ues": 1, "n_slices": 1,
    "n_rus": 30, "rus_per_slice": 30, "p_max": 0.5,
    "sigma_q_frac": 3.5e-4, "r_min_per_hz": 2.0, "region_m": 100.0,
}


def read_schema_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema=1"
    rows = [line.split(",") for line in lines[2:] if line]
    return lines[1].split(","), rows


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def easy_scenario(workdir):
    cfg = workdir / "easy.config.json"
    cfg.write_text(json.dumps(EASY_CONFIG))
    out = workdir / "easy.scenario.json"
    code = main(["generate", "--config", str(cfg), "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def solved(easy_scenario, workdir):
    out = workdir / "easy.result.json"
    trace = workdir / "easy.trace.csv"
    code = main(["solve", str(easy_scenario), "--out", str(out),
                 "--trace", str(trace), "--max-iters", "2000"])
    assert code == 0
    return json.loads(out.read_text()), trace


def slice_farm(workdir, name, n):
    """n mean-demand slices, one service each, one mean DC; saved to disk."""
    sc = hand_scenario(ue_counts=(1,) * n,
                       slice_rus=tuple((s,) for s in range(n)))
    path = workdir / name
    save_scenario(sc, str(path))
    return path


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def test_generate_defaults_match_parameter_table(tmp_path, capsys):
    out = tmp_path / "sc.json"
    assert main(["generate", "--out", str(out)]) == 0
    digest = capsys.readouterr().out
    assert digest.startswith(f"scenario {out}: services=3 slices=4 ")
    assert re.search(r"rus=24 dcs=2 sha256=[0-9a-f]{12}", digest)

    sc = load_scenario(str(out))
    p = sc.params
    assert p.bandwidth_hz == 120e3
    assert p.noise_psd == pytest.approx(10 ** (-174 / 10) * 1e-3)
    assert p.p_max == 10.0                      # 40 dBm
    assert p.r_min == pytest.approx(10.0 * 120e3)
    assert p.c_max == 200.0
    assert p.d_max == 300e-6
    assert p.mu1 == 1e4 and p.mu2 == 1e4
    assert p.nu == 0.0
    assert 3 <= sc.n_ues <= 3 * 8


def test_generate_same_seed_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["generate", "--seed", "5", "--out", str(a)]) == 0
    assert main(["generate", "--seed", "5", "--out", str(b)]) == 0
    out = capsys.readouterr().out
    assert a.read_bytes() == b.read_bytes()
    shas = re.findall(r"sha256=([0-9a-f]{12})", out)
    assert shas[0] == shas[1]


def test_generate_rejects_zero_services(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_services": 0}))
    code = main(["generate", "--config", str(cfg),
                 "--out", str(tmp_path / "sc.json")])
    err = capsys.readouterr().err
    assert code == 2
    assert "bad config" in err and "n_services" in err


def test_generate_rejects_unknown_config_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"frobnicate": 1}))
    code = main(["generate", "--config", str(cfg),
                 "--out", str(tmp_path / "sc.json")])
    err = capsys.readouterr().err
    assert code == 2
    assert "unknown config field(s): frobnicate" in err


def test_generate_rejects_non_object_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    code = main(["generate", "--config", str(cfg),
                 "--out", str(tmp_path / "sc.json")])
    assert code == 2
    assert "JSON object" in capsys.readouterr().err


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------


def test_solve_reports_positive_efficiency(solved, capsys):
    payload, _ = solved
    assert payload["schema"] == 1
    assert payload["eta_bit_per_joule"] > 0
    assert payload["feasible"] and payload["converged"]
    assert payload["uncovered_services"] == []
    assert len(payload["a"]) == 2 and len(payload["a"][0]) == 1


def test_solve_trace_schema_and_monotone_eta(solved):
    payload, trace = solved
    header, rows = read_schema_csv(trace)
    assert header == ["iteration", "eta", "f_value", "max_violation",
                      "inner_iterations"]
    assert len(rows) == payload["iterations"]
    etas = [float(r[1]) for r in rows]
    assert all(b >= a for a, b in zip(etas, etas[1:]))


def test_solve_oracle_appends_gap_rows(easy_scenario, workdir, capsys):
    gaps = workdir / "gaps.csv"
    for _ in range(2):
        code = main(["solve", str(easy_scenario), "--oracle",
                     "--oracle-out", str(gaps), "--max-iters", "2000"])
        assert code == 0
    out = capsys.readouterr().out
    assert "oracle eta=" in out
    header, rows = read_schema_csv(gaps)
    assert header == ["instance", "kind", "oracle_value", "heuristic_value",
                      "rel_gap", "wall_time_s"]
    assert len(rows) == 2
    for row in rows:
        assert row[0] == easy_scenario.name
        assert row[1] == "joint_eta"
        assert abs(float(row[4])) <= 0.02


def test_solve_exit_3_reports_uncovered_services(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**EASY_CONFIG, "r_min_per_hz": 1000.0}))
    sc = tmp_path / "sc.json"
    assert main(["generate", "--config", str(cfg), "--out", str(sc)]) == 0
    capsys.readouterr()
    code = main(["solve", str(sc)])
    err = capsys.readouterr().err
    assert code == 3
    assert "infeasible: no slice can serve every service" in err
    assert "service 0 uncovered" in err


def test_solve_oracle_too_large_exits_4(tmp_path, capsys):
    # 13 slices push the mapping space past the exhaustive-search guard
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**EASY_CONFIG, "n_services": 1,
                               "n_slices": 13, "rus_per_slice": 2,
                               "r_min_per_hz": 0.01}))
    sc = tmp_path / "sc.json"
    assert main(["generate", "--config", str(cfg), "--out", str(sc)]) == 0
    code = main(["solve", str(sc), "--oracle", "--max-iters", "300"])
    err = capsys.readouterr().err
    assert code == 4
    assert "error:" in err and "12" in err


def test_solve_rejects_bad_packet_size(easy_scenario, capsys):
    code = main(["solve", str(easy_scenario), "--packet-size", "-1"])
    assert code == 2
    assert "--packet-size" in capsys.readouterr().err


def test_solve_rejects_missing_scenario(tmp_path, capsys):
    code = main(["solve", str(tmp_path / "nope.json")])
    assert code == 2
    assert "cannot read" in capsys.readouterr().err


def test_solve_rejects_malformed_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 1}))
    code = main(["solve", str(bad)])
    assert code == 2
    assert "bad scenario" in capsys.readouterr().err


# --------------------------------------------------------------------------
# place
# --------------------------------------------------------------------------


def test_place_ten_mean_slices_all_admitted(workdir, capsys):
    sc = slice_farm(workdir, "ten.json", 10)
    out = workdir / "ten.place.json"
    code = main(["place", str(sc), "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "admitted=10/10 ratio=1" in stdout
    payload = json.loads(out.read_text())
    assert payload["admitted_ratio"] == 1.0
    # 10 mean slices consume the mean DC exactly
    assert all(r == 0.0 for r in payload["residuals"]["0"])


def test_place_eleventh_slice_rejected_single_dc(workdir, capsys):
    sc = slice_farm(workdir, "eleven.json", 11)
    code = main(["place", str(sc), "--single-dc"])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "admitted=10/11 ratio=0.9091" in stdout


def test_place_oracle_gap_row(workdir, capsys):
    sc = slice_farm(workdir, "three.json", 3)
    gaps = workdir / "place.gaps.csv"
    code = main(["place", str(sc), "--oracle", "--oracle-out", str(gaps)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "oracle psi=" in stdout
    _, rows = read_schema_csv(gaps)
    assert rows[0][1] == "placement_psi"
    assert abs(float(rows[0][4])) <= 1e-12   # both admit everything on DC 0


def test_place_oracle_too_many_slices_exits_4(workdir, capsys):
    sc = slice_farm(workdir, "eleven_oracle.json", 11)
    code = main(["place", str(sc), "--oracle"])
    err = capsys.readouterr().err
    assert code == 4
    assert "10 active" in err


def test_place_mapping_file_selects_active_slices(workdir, tmp_path, capsys):
    sc = slice_farm(workdir, "two.json", 2)
    mapping = tmp_path / "map.json"
    mapping.write_text(json.dumps({"a": [[1, 0], [0, 0]]}))
    code = main(["place", str(sc), "--mapping", str(mapping)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "admitted=1/1 ratio=1" in stdout


@pytest.mark.parametrize("payload, needle", [
    ({"b": [[1]]}, "missing mapping matrix"),
    ({"a": [[1]]}, "mapping shape"),
    ({"a": [[1, 2], [0, 0]]}, "must be 0 or 1"),
])
def test_place_rejects_bad_mapping_files(workdir, tmp_path, capsys,
                                         payload, needle):
    sc = slice_farm(workdir, "two_bad.json", 2)
    mapping = tmp_path / "map.json"
    mapping.write_text(json.dumps(payload))
    code = main(["place", str(sc), "--mapping", str(mapping)])
    assert code == 2
    assert needle in capsys.readouterr().err


def test_place_memory_only_weights(tmp_path, capsys):
    sc = tmp_path / "memory.json"
    save_scenario(hand_scenario(vnf_demand=(10.0, 0.0, 0.0), phi_idle=5.0,
                                phi_per_unit=1.0), str(sc))
    code = main(["place", str(sc), "--weights", "1,0,0"])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "phi=15" in stdout                 # idle 5 + 1 * weighted 10


@pytest.mark.parametrize("text, needle", [
    ("1,2", "wM,wS,wC"),
    ("a,b,c", "three floats"),
])
def test_place_rejects_bad_weights(workdir, capsys, text, needle):
    sc = slice_farm(workdir, "two_w.json", 2)
    code = main(["place", str(sc), "--weights", text])
    assert code == 2
    assert needle in capsys.readouterr().err


# --------------------------------------------------------------------------
# experiment
# --------------------------------------------------------------------------


def test_experiment_ee_sweep_writes_trend_column(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "kind": "ee_vs_mean_ues", "x_values": [1, 2], "series": [1],
        "seeds": [0],
        "overrides": {"n_rus": 8, "rus_per_slice": 8, "max_ues": 3},
    }))
    out = tmp_path / "ee.csv"
    code = main(["experiment", str(spec), "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert f"wrote {out}" in stdout
    header, rows = read_schema_csv(out)
    assert header == ["n_services", "mean_ues", "n_feasible", "ee_mean",
                      "ee_std", "trend_ok"]
    assert [(r[0], r[1]) for r in rows] == [("1", "1"), ("1", "2")]
    assert rows[0][5] == "1"                  # first point has no predecessor
    for row in rows:
        assert int(row[2]) == 1               # seed 0 is feasible at both x
        assert row[5] in ("0", "1")
        assert float(row[3]) > 0


def test_experiment_admitted_sweep(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ORAN_SLICE_THREADS", "2")
    out = tmp_path / "admitted.csv"
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "kind": "admitted_vs_slices", "x_values": [2, 4], "series": [1],
        "seeds": [0, 1], "out": str(out),
    }))
    code = main(["experiment", str(spec), "--plot"])
    assert code == 0
    capsys.readouterr()

    header, rows = read_schema_csv(out)
    assert header == ["n_dcs", "n_slices", "n_seeds", "ratio_mean",
                      "ratio_std", "trend_ok"]
    assert [(r[0], r[1]) for r in rows] == [("1", "2"), ("1", "4")]
    for row in rows:
        assert int(row[2]) == 2
        assert 0.0 < float(row[3]) <= 1.0

    raw_header, raw_rows = read_schema_csv(tmp_path / "admitted.csv.raw.csv")
    assert raw_header == ["n_slices", "n_dcs", "seed", "admitted_ratio",
                          "phi_tot", "psi_tot"]
    assert len(raw_rows) == 4

    script = (tmp_path / "admitted.csv.gnuplot").read_text()
    assert "plot " in script and str(out) in script


def test_experiment_consumption_sweep(tmp_path, capsys):
    out = tmp_path / "consumption.csv"
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "kind": "consumption_vs_slices", "x_values": [2, 4], "series": [1],
        "seeds": [0], "out": str(out),
    }))
    assert main(["experiment", str(spec)]) == 0
    capsys.readouterr()
    header, rows = read_schema_csv(out)
    assert header[3] == "consumption_mean"
    for row in rows:
        assert 0.0 <= float(row[3]) <= 1.0


def test_experiment_unknown_kind_exits_2(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "nope", "out": "x.csv"}))
    code = main(["experiment", str(spec)])
    assert code == 2
    assert "unknown experiment kind" in capsys.readouterr().err


def test_experiment_empty_seeds_exits_2(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "ee_vs_mean_ues", "seeds": [],
                                "out": "x.csv"}))
    code = main(["experiment", str(spec)])
    assert code == 2
    assert "nonempty 'seeds'" in capsys.readouterr().err


def test_experiment_needs_output_path(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "ee_vs_mean_ues", "seeds": [0]}))
    code = main(["experiment", str(spec)])
    assert code == 2
    assert "no output path" in capsys.readouterr().err


@pytest.mark.parametrize("value, needle", [
    ("x", "must be an int"),
    ("0", ">= 1"),
])
def test_experiment_bad_thread_env_exits_2(tmp_path, capsys, monkeypatch,
                                           value, needle):
    monkeypatch.setenv("ORAN_SLICE_THREADS", value)
    out = tmp_path / "out.csv"
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "kind": "admitted_vs_slices", "x_values": [2], "series": [1],
        "seeds": [0], "out": str(out),
    }))
    code = main(["experiment", str(spec)])
    assert code == 2
    assert needle in capsys.readouterr().err
