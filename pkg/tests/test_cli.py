import json
import os

import pytest

from entroute.cli import main


def make_dataset(tmp_path, count=4, n_small=12, n_large=3, seed=0):
    out = tmp_path / "ds"
    rc = main(["synth", "--out", str(out), "--count", str(count),
               "--seed", str(seed), "--n-small", str(n_small),
               "--n-large", str(n_large)])
    assert rc == 0
    return out / "manifest.json"


def make_manifest(tmp_path, dataset, name="m.json", **extra):
    body = {"dataset": str(dataset), "seed": 0,
            "detector": {"mock": {"base_latency_ms": 20.0}},
            "output_dir": str(tmp_path / "out")}
    body.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return path


def test_synth_writes_scenes(tmp_path):
    manifest = make_dataset(tmp_path, count=3)
    data = json.loads(manifest.read_text())
    assert len(data["scenes"]) == 3
    for p in data["scenes"]:
        assert os.path.exists(p)


def test_route_entropy(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=3)
    m = make_manifest(tmp_path, ds)
    rc = main(["route", "--manifest", str(m), "--mode", "entropy"])
    assert rc == 0
    out = tmp_path / "out"
    assert (out / "manifest.resolved.json").exists()
    assert (out / "detections.json").exists()
    assert (out / "routing_report.json").exists()
    assert (out / "routing_report.csv").exists()
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["n_images"] == 3
    assert report["cost_bound_satisfied"] is True


def test_route_empty_scenes_all_gated_out(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=3, n_small=0, n_large=0)
    m = make_manifest(tmp_path, ds)
    rc = main(["route", "--manifest", str(m)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["gate_pass_rate"] == 0.0
    assert report["mean_k_selected"] == 0.0


def test_route_random_budget_paired(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=4)
    m = make_manifest(tmp_path, ds)
    rc = main(["route", "--manifest", str(m), "--mode", "entropy",
               "--out", str(tmp_path / "a")])
    assert rc == 0
    ent = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    rc = main(["route", "--manifest", str(m), "--mode", "random",
               "--out", str(tmp_path / "b")])
    assert rc == 0
    rnd = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert rnd["mean_k_selected"] == ent["mean_k_selected"]
    assert rnd["gate_pass_rate"] == ent["gate_pass_rate"]


def test_emit_heatmaps_byte_stable(tmp_path):
    ds = make_dataset(tmp_path, count=2)
    m = make_manifest(tmp_path, ds)
    for d in ("h1", "h2"):
        rc = main(["route", "--manifest", str(m), "--emit-heatmaps",
                   "--out", str(tmp_path / d)])
        assert rc == 0
    names = sorted(p for p in os.listdir(tmp_path / "h1") if p.endswith(".pgm"))
    assert len(names) == 2
    for name in names:
        a = (tmp_path / "h1" / name).read_bytes()
        b = (tmp_path / "h2" / name).read_bytes()
        assert a == b
        assert a.startswith(b"P5\n640 640\n255\n")


def test_missing_manifest_is_usage_error(tmp_path, capsys):
    rc = main(["route", "--manifest", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_bad_manifest_key_is_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"bogus_key": 1}')
    assert main(["route", "--manifest", str(path)]) == 2


def test_bad_sweep_is_usage_error(tmp_path):
    ds = make_dataset(tmp_path, count=1)
    m = make_manifest(tmp_path, ds)
    assert main(["ablate", "--manifest", str(m), "--sweep", "nope=1,2"]) == 2
    assert main(["ablate", "--manifest", str(m), "--sweep", "garbage"]) == 2


def test_fusion_enabled_sweep(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=3)
    m = make_manifest(tmp_path, ds)
    rc = main(["ablate", "--manifest", str(m),
               "--sweep", "fusion_enabled=true,false",
               "--out", str(tmp_path / "ab")])
    assert rc == 0
    rows = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert [r["value"] for r in rows] == [True, False]
    for r in rows:
        assert set(r) >= {"map50", "ap_s", "ap_m", "ap_l",
                          "mean_k_selected", "measured_cost_factor",
                          "model_fps"}
    assert (tmp_path / "ab" / "ablation.csv").exists()


def test_tau_w_sweep_four_rows(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=2)
    m = make_manifest(tmp_path, ds)
    rc = main(["ablate", "--manifest", str(m),
               "--sweep", "tau_w=0.5,0.6,0.7,0.8",
               "--out", str(tmp_path / "tw")])
    assert rc == 0
    rows = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert len(rows) == 4
    assert [r["value"] for r in rows] == [0.5, 0.6, 0.7, 0.8]


def test_bench_smoke(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=2, n_small=0, n_large=0)
    m = make_manifest(tmp_path, ds)
    rc = main(["bench", "--manifest", str(m), "--warmup", "2",
               "--timed", "10", "--out", str(tmp_path / "bench")])
    assert rc == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result["timed_count"] == 10
    assert result["fps"] > 0
    assert (tmp_path / "bench" / "bench.json").exists()


def test_eval_round_trip(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=2)
    m = make_manifest(tmp_path, ds)
    rc = main(["route", "--manifest", str(m), "--out", str(tmp_path / "r")])
    assert rc == 0
    capsys.readouterr()
    rc = main(["eval", "--manifest", str(m),
               "--detections", str(tmp_path / "r" / "detections.json"),
               "--out", str(tmp_path / "e")])
    assert rc == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert 0.0 <= result["map50"] <= 1.0
    assert (tmp_path / "e" / "eval.json").exists()


def test_seed_flag_overrides_manifest(tmp_path, capsys):
    ds = make_dataset(tmp_path, count=2)
    m = make_manifest(tmp_path, ds)
    rc = main(["route", "--manifest", str(m), "--seed", "7",
               "--out", str(tmp_path / "s")])
    assert rc == 0
    resolved = json.loads(
        (tmp_path / "s" / "manifest.resolved.json").read_text())
    assert resolved["seed"] == 7
