import json

import numpy as np
import pytest

from lcmvos import cli
from lcmvos.pnm import write_ppm


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert cli.main(["synth", "translate", str(d), "--seed", "3"]) == 0
    return d


def test_synth_outputs_and_errors(tmp_path, capsys):
    assert cli.main(["synth", "twin_squares", str(tmp_path / "a"), "--seed", "7"]) == 0
    assert len(list((tmp_path / "a").glob("frame_*.ppm"))) == 24
    assert len(list((tmp_path / "a").glob("gt_*.pgm"))) == 24
    assert json.loads((tmp_path / "a" / "scene.json").read_text())["seed"] == 7
    assert cli.main(["synth", "twin_squares", str(tmp_path / "b"), "--seed", "7"]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert cli.main(["synth", "nope", str(tmp_path / "c")]) == 2
    assert "unknown scenario" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["synth", "static", str(blocker / "sub")]) == 3


def test_run_eval_and_manifest(scene_dir, tmp_path, capsys):
    out = tmp_path / "pred"
    assert cli.main(["run", str(scene_dir), str(scene_dir / "gt_0000.pgm"), str(out), "--topk", "6"]) == 0
    assert len(list(out.glob("pred_*.pgm"))) == 24
    man = cli.RunManifest.from_json((out / "manifest.json").read_text())
    assert man.config["topk"] == 6 and man.seed == 3 and man.frame_count == 24
    assert set(man.timings) == {"load", "propagate", "write"}
    assert cli.RunManifest.from_json(man.to_json()) == man

    again = tmp_path / "again"
    assert cli.main(["run", "--from-manifest", str(out / "manifest.json"), str(again)]) == 0
    for p in out.glob("pred_*.pgm"):
        assert p.read_bytes() == (again / p.name).read_bytes()

    capsys.readouterr()
    assert cli.main(["eval", str(out), str(scene_dir), str(tmp_path / "m.csv")]) == 0
    printed = capsys.readouterr().out.strip()
    assert len(printed.split(".")[1]) == 4 and float(printed) > 0.85
    assert (tmp_path / "m.csv").read_text().startswith("frame,object,J,F\n")


def test_eval_identity_prints_one(scene_dir, tmp_path, capsys):
    preds = tmp_path / "p"
    preds.mkdir()
    for g in scene_dir.glob("gt_*.pgm"):
        (preds / g.name.replace("gt_", "pred_")).write_bytes(g.read_bytes())
    capsys.readouterr()
    assert cli.main(["eval", str(preds), str(scene_dir), str(tmp_path / "m.csv")]) == 0
    assert capsys.readouterr().out.strip() == "1.0000"
    (preds / "pred_0003.pgm").unlink()
    assert cli.main(["eval", str(preds), str(scene_dir), str(tmp_path / "m.csv")]) == 2


def test_run_flags_and_errors(scene_dir, tmp_path):
    gt0 = str(scene_dir / "gt_0000.pgm")
    assert cli.main(["run", str(scene_dir), gt0, str(tmp_path / "o"), "--topk", "0"]) == 2
    assert cli.main(["run", str(tmp_path / "missing"), gt0, str(tmp_path / "o")]) == 2
    assert cli.main(["run", str(scene_dir), str(tmp_path / "none.pgm"), str(tmp_path / "o")]) == 2
    assert cli.main(["run", str(scene_dir), gt0, str(tmp_path / "o"), "--weights", str(tmp_path / "nowt")]) == 2
    assert cli.main(["run", str(scene_dir)]) == 2
    out = tmp_path / "grm"
    assert cli.main(["run", str(scene_dir), gt0, str(out), "--no-pgm", "--no-orm",
                     "--memory-stride", "3", "--temperature", "0.5", "--weights", "reference"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["enable_pgm"] is False and man["enable_orm"] is False
    assert man["config"]["memory_stride"] == 3 and man["weights"] == "reference"


def test_shape_drift_exit_code(tmp_path):
    d = tmp_path / "s"
    assert cli.main(["synth", "static", str(d)]) == 0
    write_ppm(d / "frame_0005.ppm", np.zeros((32, 32, 3), np.uint8))
    assert cli.main(["run", str(d), str(d / "gt_0000.pgm"), str(tmp_path / "o")]) == 4


def test_config_file_precedence(scene_dir, tmp_path, monkeypatch):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# comment\ntopk = 5\nalpha = 3.5  # inline\nenable_orm = false\nthreads = 2\n")
    monkeypatch.setenv("LCM_THREADS", "3")
    out = tmp_path / "o"
    assert cli.main(["run", str(scene_dir), str(scene_dir / "gt_0000.pgm"), str(out),
                     "--config", str(cfg), "--topk", "7"]) == 0
    man = json.loads((out / "manifest.json").read_text())["config"]
    assert man["topk"] == 7 and man["alpha"] == 3.5 and man["enable_orm"] is False and man["threads"] == 2
    cfg.write_text("bogus = 1\n")
    assert cli.main(["run", str(scene_dir), str(scene_dir / "gt_0000.pgm"), str(out), "--config", str(cfg)]) == 2


def test_lcm_threads_fallback(scene_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("LCM_THREADS", "4")
    out = tmp_path / "o"
    assert cli.main(["run", str(scene_dir), str(scene_dir / "gt_0000.pgm"), str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["threads"] == 4
    monkeypatch.setenv("LCM_THREADS", "many")
    assert cli.main(["run", str(scene_dir), str(scene_dir / "gt_0000.pgm"), str(out)]) == 2


def test_parse_config_rejects_garbage():
    with pytest.raises(cli.UsageError):
        cli.parse_config("no equals sign")
    with pytest.raises(cli.UsageError):
        cli.build_config({"topk": "eight"})


def test_bench_format_and_determinism(capsys):
    assert cli.main(["bench", "--grid", "8", "--pool", "2", "--reps", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == ",".join(cli.BENCH_COLUMNS)
    assert [l.split(",")[0] for l in lines[1:]] == ["global_read", "position_correlation", "cross_relation"]
    one = cli.bench_rows(8, 2, 1)
    many = cli.bench_rows(8, 2, 5)
    assert [r["checksum"] for r in one] == [r["checksum"] for r in many]
    assert cli.bench_rows(32, 2, 1)[0]["flops"] == 16 * cli.bench_rows(16, 2, 1)[0]["flops"]
    assert cli.main(["bench", "--grid", "0"]) == 2
