import json

import numpy as np
import pytest

from graphon_pooling.cli import config_hash, main
from graphon_pooling.io import load_weights, read_csv, write_csv
from graphon_pooling.pooling import PoolingPlan

TINY = ["--sizes", "12,6,3", "--features", "2,2", "--taps", "2,2", "--samples", "40,10,10",
        "--epochs", "2", "--batch-size", "10", "--classes", "3"]


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_pool_bilinear_stdout(capsys):
    code, out, _ = _run(capsys, ["pool", "--method", "m1", "--sizes", "2", "--graphon", "bilinear"])
    assert code == 0
    m = np.array([[float(v) for v in line.split(",")] for line in out.strip().splitlines()])
    np.testing.assert_allclose(m, [[0.0625, 0.1875], [0.1875, 0.5625]], rtol=0, atol=1e-14)


def test_pool_out_dir_roundtrip(capsys, tmp_path):
    code, _, _ = _run(capsys, ["pool", "--method", "m2", "--sizes", "8,4", "--graphon", "exp:2.3",
                               "--seed", "5", "--out", str(tmp_path)])
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 5
    assert manifest["config_hash"] == config_hash(manifest["config"])
    for name in manifest["artifacts"]:
        assert (tmp_path / name).exists()
    plan = PoolingPlan.load(tmp_path / "plan.json")
    assert plan.layer_sizes == [8, 4] and plan.seed == 5
    # files written by the CLI are readable by the CLI
    code, out, _ = _run(capsys, ["cutnorm", "--a", str(tmp_path / "layer1_adjacency.csv")])
    assert code == 0 and json.loads(out)["value"] == pytest.approx(plan.layers[1].adjacency.mean())


def test_pool_plan_json_path(capsys, tmp_path):
    target = tmp_path / "plan.json"
    assert main(["pool", "--sizes", "4,2", "--graphon", "poly", "--out", str(target)]) == 0
    assert PoolingPlan.load(target).layer_sizes == [4, 2]


def test_seed_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("GRAPHON_POOL_SEED", "17")
    assert main(["pool", "--method", "m3", "--sizes", "5", "--graphon", "logmax", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["seed"] == 17
    monkeypatch.setenv("GRAPHON_POOL_SEED", "x")
    code, _, err = _run(capsys, ["pool", "--sizes", "2", "--graphon", "bilinear"])
    assert code != 0 and "GRAPHON_POOL_SEED" in json.loads(err)["message"]


def test_cutnorm_modes(capsys, tmp_path):
    rng = np.random.default_rng(0)
    a = rng.random((4, 4))
    a = (a + a.T) / 2
    b = a[np.ix_([1, 0, 3, 2], [1, 0, 3, 2])]
    write_csv(tmp_path / "a.csv", a)
    write_csv(tmp_path / "b.csv", b)
    _, out, _ = _run(capsys, ["cutnorm", "--a", str(tmp_path / "a.csv"), "--exact"])
    assert json.loads(out)["method"] == "exact"
    _, out, _ = _run(capsys, ["cutnorm", "--a", str(tmp_path / "a.csv"), "--heuristic", "4"])
    assert json.loads(out)["method"] == "heuristic"
    _, out, _ = _run(capsys, ["cutnorm", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv"),
                              "--search-permutations"])
    assert json.loads(out)["value"] == pytest.approx(0, abs=1e-15)
    code, _, err = _run(capsys, ["cutnorm", "--graphon", "exp:2.3", "--n", "21", "--exact"])
    assert code == 1 and json.loads(err)["error"] == "size"


def test_parse_error_json(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0.1,0.2\n0.2,oops\n")
    code, out, err = _run(capsys, ["cutnorm", "--a", str(p)])
    assert code != 0 and out == ""
    payload = json.loads(err)
    assert payload["error"] == "parse" and payload["line"] == 2 and payload["column"] == 2


def test_filter(capsys, tmp_path):
    write_csv(tmp_path / "s.csv", [[0, 1], [1, 0]])
    write_csv(tmp_path / "x.csv", [[1], [0]])
    code, out, _ = _run(capsys, ["filter", "--shift", str(tmp_path / "s.csv"), "--signal",
                                 str(tmp_path / "x.csv"), "--coeffs", "1,0,1"])
    assert code == 0
    np.testing.assert_allclose([float(v) for v in out.split()], [2, 0])
    assert main(["filter", "--a", str(tmp_path / "s.csv"), "--x", str(tmp_path / "x.csv"), "--coeffs",
                 "0,1", "--graphon-filter", "--out", str(tmp_path / "f")]) == 0
    np.testing.assert_allclose(read_csv(tmp_path / "f" / "output.csv").ravel(), [0, 0.5])


def test_homdensity_and_spectrum(capsys, tmp_path):
    write_csv(tmp_path / "g.csv", [[0, 1], [1, 0]])
    _, out, _ = _run(capsys, ["homdensity", "--graph", str(tmp_path / "g.csv"), "--motif", "edge"])
    res = json.loads(out)["edge"]
    assert res["graph"] == pytest.approx(0.5) and res["graphon"] == pytest.approx(0.5)
    _, out, _ = _run(capsys, ["spectrum", "--a", str(tmp_path / "g.csv")])
    assert sorted(json.loads(out)["eigenvalues"]) == pytest.approx([-0.5, 0.5])


def test_verify(capsys, tmp_path):
    code, _, _ = _run(capsys, ["verify", "--theorem", "1", "--seed", "42", "--out", str(tmp_path / "report.json")])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_fail"] == 0 and report["seed"] == 42 and len(report["trials"]) == 50
    assert main(["verify", "--theorem", "6", "--trials", "3", "--out", str(tmp_path / "d")]) == 0
    assert json.loads((tmp_path / "d" / "manifest.json").read_text())["artifacts"] == ["report.json"]


def test_sourceloc_dry_run(capsys, tmp_path):
    code, out, _ = _run(capsys, ["sourceloc", "--preset", "mini", "--dry-run", "--out", str(tmp_path)])
    assert code == 0
    res = json.loads(out)
    assert res["plan"]["layer_sizes"] == [100, 50, 25]
    assert res["config"]["epochs"] == 60 and res["seeds"] == [0, 1, 2]
    assert not any(tmp_path.glob("seed*"))


def test_sourceloc_tiny_run(capsys, tmp_path):
    argv = ["sourceloc", *TINY, "--realizations", "2", "--seed", "3"]
    assert main([*argv, "--out", str(tmp_path / "a")]) == 0
    assert main([*argv, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    capsys.readouterr()
    for s in (3, 4):
        ja = (tmp_path / "a" / f"seed{s}" / "metrics.jsonl").read_bytes()
        assert ja == (tmp_path / "b" / f"seed{s}" / "metrics.jsonl").read_bytes()
        lines = [json.loads(line) for line in ja.decode().splitlines()]
        assert [r["epoch"] for r in lines] == [1, 2]
        err = json.loads((tmp_path / "a" / f"seed{s}" / "test_error.json").read_text())
        assert 0 <= err["test_error"] <= 1
        w = load_weights(tmp_path / "a" / f"seed{s}" / "weights.json")
        assert w["h0"].shape == (2, 1, 2)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["realizations"] == 2 and "±" in summary["row"]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    for name in manifest["artifacts"]:
        assert (tmp_path / "a" / name).exists()


def test_sourceloc_stage_error(capsys):
    code, _, err = _run(capsys, ["sourceloc", *TINY, "--graphon", "nope"])
    payload = json.loads(err)
    assert code == 1 and payload["stage"] == "graphon"


def test_sourceloc_config_errors(capsys, tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"bogus": 1}))
    code, _, err = _run(capsys, ["sourceloc", "--config", str(p), "--dry-run"])
    assert code == 1 and "bogus" in json.loads(err)["message"]
