import csv
import filecmp
import json
import shutil

import pytest
import yaml

from conftest import pipeline_config
from truckends.cli import main
from truckends.pipeline import Pipeline, PipelineConfig, PipelineError, run_pipeline


def all_files(d):
    return sorted(p.name for p in d.iterdir() if p.is_file())


def same_tree(a, b):
    assert all_files(a) == all_files(b)
    for name in all_files(a):
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_run_is_deterministic_and_resumable(small_synth_dir):
    cfg = pipeline_config(small_synth_dir, "run_a")
    run_pipeline(cfg)
    run_pipeline(pipeline_config(small_synth_dir, "run_b"))
    a, b = small_synth_dir / "run_a", small_synth_dir / "run_b"
    same_tree(a, b)
    snapshot = small_synth_dir / "run_a_copy"
    shutil.copytree(a, snapshot)
    run_pipeline(cfg)  # every cached stage is reused
    same_tree(a, snapshot)


def test_cache_invalidated_by_parameter_change(small_synth_dir):
    cfg = pipeline_config(small_synth_dir, "run_c")
    run_pipeline(cfg)
    key = json.loads((small_synth_dir / "run_c" / "manifest.json").read_text())["filter"]["key"]
    cfg["params"] = {"poi_radius_m": 50.0}
    run_pipeline(cfg)
    manifest = json.loads((small_synth_dir / "run_c" / "manifest.json").read_text())
    assert manifest["filter"]["key"] != key


def test_summary_counts_consistent(small_synth_dir):
    summary = run_pipeline(pipeline_config(small_synth_dir, "run_d"))
    out = small_synth_dir / "run_d"
    ends = json.loads((out / "ends.geojson").read_text())["features"]
    kept = [f["properties"] for f in ends if f["properties"]["status"] == "kept"]
    assert sum(summary["filter"].values()) == summary["identify"]["n_ends"] == len(ends)
    with open(out / "segments.csv") as f:
        segments = list(csv.DictReader(f))
    expected_trips = 0
    for seg in segments:
        n = sum(1 for e in kept if e["truck_id"] == seg["truck_id"] and int(seg["start_time"]) <= e["arrive_time"] and e["depart_time"] <= int(seg["end_time"]))
        expected_trips += max(n - 1, 0)
    assert summary["trips"]["n_trips"] == expected_trips == summary["odmatrix"]["n_trips"]
    assert summary["grid"]["n_ends"] == len(kept)
    assert summary["score"]["NA"] + summary["score"]["NM"] == len(kept)
    with open(out / "trips.csv") as f:
        assert len(list(csv.DictReader(f))) == expected_trips
    header = (out / "stops.csv").read_text().splitlines()[0]
    assert header == "truck_id,lon,lat,start_time,end_time,dwell_s,n_points"
    assert json.loads((out / "thresholds.json").read_text())["time_threshold_ladder_s"] == summary["thresholds"]["time_threshold_ladder_s"]


def test_validation_file_can_replace_truth(small_synth_dir):
    cfg = pipeline_config(small_synth_dir, "run_v")
    del cfg["inputs"]["truth"]
    cfg["inputs"]["validation"] = str(small_synth_dir / "validation.csv")
    summary = run_pipeline(cfg)
    assert summary["score"]["NA"] > 0


def test_missing_edges_names_the_stage(small_synth_dir):
    cfg = pipeline_config(small_synth_dir, "run_e")
    cfg["inputs"]["edges"] = str(small_synth_dir / "missing.csv")
    with pytest.raises(PipelineError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "roadnet load" and err.value.exit_code == 1


def test_config_errors():
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"inputs": {"gps": "x"}, "bogus": 1})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"inputs": {"gps": "x"}, "params": {"nope": 1}})
    cfg = PipelineConfig.from_dict({"inputs": {"gps": "a", "nodes": "b", "edges": "c", "pois": "d"}, "params": {"K": 0, "circuity_order": 1}})
    with pytest.raises(ValueError):
        cfg.validate(("ingest",))


def write_cfg(tmp_path, synth_dir, out="cli_out", **extra):
    cfg = pipeline_config(synth_dir, out)
    cfg.update(extra)
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(cfg))
    return p


def test_cli_run_and_subcommand(tmp_path, small_synth_dir, capsys):
    p = write_cfg(tmp_path, small_synth_dir)
    assert main(["thresholds", "--config", str(p), "--out", str(tmp_path / "partial")]) == 0
    assert (tmp_path / "partial" / "thresholds.json").exists()
    assert not (tmp_path / "partial" / "ends.geojson").exists()
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "full"), "--threads", "2", "--set", "eta=0.05"]) == 0
    summary = json.loads((tmp_path / "full" / "summary.json").read_text())
    assert summary["config"]["params"]["eta"] == 0.05 and summary["config"]["threads"] == 2
    assert "score" in summary


def test_cli_exit_codes(tmp_path, small_synth_dir):
    p = write_cfg(tmp_path, small_synth_dir)
    assert main(["run", "--config", str(tmp_path / "none.yaml")]) == 1
    assert main(["run", "--config", str(p), "--set", "nonsense=1"]) == 1
    assert main(["run", "--config", str(p), "--set", "K=-1"]) == 1
    bad = pipeline_config(small_synth_dir, "cli_bad")
    bad["inputs"]["edges"] = "missing.csv"
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(bad))
    assert main(["run", "--config", str(tmp_path / "bad.yaml")]) == 1
    # every fix is an implausible jump: nothing survives cleaning, a stage failure
    gps = tmp_path / "jumpy.csv"
    rows = ["truck_id,timestamp,lon,lat,speed,heading"] + [f"a,{1000 + i},{116 + (i % 2)},39.9,," for i in range(5)]
    gps.write_text("\n".join(rows) + "\n")
    jumpy = pipeline_config(small_synth_dir, "cli_jumpy")
    jumpy["inputs"]["gps"] = str(gps)
    (tmp_path / "jumpy.yaml").write_text(yaml.safe_dump(jumpy))
    assert main(["run", "--config", str(tmp_path / "jumpy.yaml")]) == 2


def test_cli_synth(tmp_path):
    scen = tmp_path / "scen.yaml"
    scen.write_text(yaml.safe_dump({"n_trucks": 2, "days": 1, "grid_nx": 6, "grid_ny": 6, "n_clients": 6, "n_calibration_trips": 5}))
    assert main(["synth", "--config", str(scen), "--out", str(tmp_path / "s"), "--seed", "11"]) == 0
    assert (tmp_path / "s" / "gps.csv").exists()
    assert yaml.safe_load((tmp_path / "s" / "scenario.yaml").read_text())["seed"] == 11
    assert main(["synth", "--out", str(tmp_path / "s2"), "--set", "grid_nx=1"]) == 1
