import json
import subprocess
import sys

import numpy as np
import pytest

from test_data_synth import tree_digest
from twostream import tsr
from twostream.cli import main

TINY = "num_classes=2\nbatch=4\nhidden=4\ncanvas_w=12\ncanvas_h=10\nscale_set=10,8\nout_size=6\nlr_step=5\nlr_stop=7\n"


@pytest.fixture
def tiny(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY)
    assert main(["synth", str(tmp_path / "ds"), "--config", str(cfg), "--classes", "2",
                 "--videos-per-class", "2", "--frames", "12"]) == 0
    return tmp_path, cfg


def test_synth_manifest_lines(tmp_path):
    assert main(["synth", str(tmp_path), "--classes", "2", "--videos-per-class", "10", "--frames", "30"]) == 0
    for name in ("spatial.tsv", "temporal.tsv"):
        assert len((tmp_path / name).read_text().splitlines()) == 20


def test_adapt_shape(tmp_path):
    tsr.save(tmp_path / "w.tsr", np.random.default_rng(0).normal(size=(8, 3, 3, 3)))
    assert main(["adapt", str(tmp_path / "w.tsr"), str(tmp_path / "o.tsr"), "--target-channels", "20"]) == 0
    assert tsr.load(tmp_path / "o.tsr").shape == (8, 20, 3, 3)


def test_flow_encode(tiny):
    tmp, _ = tiny
    vdir = tmp / "ds" / "videos" / "v00000"
    assert main(["flow-encode", str(vdir / "flow_00000.tsr"), str(tmp / "q.tsr")]) == 0
    q = tsr.load(tmp / "q.tsr")
    assert q.dtype == np.uint8 and q.shape == (2, 10, 12)
    assert main(["flow-encode", str(vdir), str(tmp / "s.tsr"), "--start", "1"]) == 0
    assert tsr.load(tmp / "s.tsr").shape == (20, 10, 12)


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("batchsize=3\n")
    assert main(["comm-report", "--config", str(cfg)]) == 2
    assert "config error" in capsys.readouterr().err


def test_malformed_manifest_aborts_before_training(tiny, capsys):
    tmp, cfg = tiny
    lines = (tmp / "ds" / "spatial.tsv").read_text().splitlines()
    lines.insert(2, "oops\tnot-a-label\t3\trgb")
    (tmp / "bad.tsv").write_text("\n".join(lines) + "\n")
    assert main(["train", str(tmp / "bad.tsv"), str(tmp / "run"), "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert "bad.tsv:3:" in err and err.count("\n") == 1
    assert not (tmp / "run").exists()


def test_missing_file_is_io_error(tmp_path):
    assert main(["adapt", str(tmp_path / "nope.tsr"), str(tmp_path / "o.tsr")]) == 4


def train(tmp, cfg, stream, out, *extra):
    manifest = tmp / "ds" / ("spatial.tsv" if stream == "spatial" else "temporal.tsv")
    return main(["train", str(manifest), str(tmp / out), "--config", str(cfg), "--stream", stream, *extra])


def test_train_eval_and_reproducibility(tiny):
    tmp, cfg = tiny
    assert train(tmp, cfg, "spatial", "sp") == 0
    assert train(tmp, cfg, "spatial", "sp2") == 0
    assert train(tmp, cfg, "temporal", "tp", "--init-spatial", str(tmp / "sp" / "checkpoint"),
                 "--workers", "2", "--sync-mode", "activation_gather") == 0
    recs = [json.loads(l) for l in (tmp / "sp" / "records.jsonl").read_text().splitlines()]
    assert [r["iter"] for r in recs] == list(range(7))
    assert recs[5]["lr"] == pytest.approx(0.0001)
    assert tree_digest(tmp / "sp") == tree_digest(tmp / "sp2")

    args = ["eval", str(tmp / "sp" / "checkpoint"), str(tmp / "tp" / "checkpoint"), "--config", str(cfg),
            "--manifest", str(tmp / "ds" / "spatial.tsv"), "--manifest", str(tmp / "ds" / "temporal.tsv")]
    assert main(args + ["--out", str(tmp / "e1.jsonl"), "--scores-dir", str(tmp / "s1")]) == 0
    assert main(args + ["--out", str(tmp / "e2.jsonl"), "--scores-dir", str(tmp / "s2")]) == 0
    out = (tmp / "e1.jsonl").read_text()
    assert out == (tmp / "e2.jsonl").read_text()
    assert tree_digest(tmp / "s1") == tree_digest(tmp / "s2")
    lines = [json.loads(l) for l in out.splitlines()]
    assert len(lines) == 5 and lines[-1]["videos"] == 4 and lines[-1]["failures"] == 0
    assert tsr.load(tmp / "s1" / "scores_00000.tsr").shape == (3, 2)


def test_eval_rejects_mismatched_checkpoint(tiny):
    tmp, cfg = tiny
    assert train(tmp, cfg, "spatial", "sp", "--lr-stop", "1") == 0
    rc = main(["eval", str(tmp / "sp" / "checkpoint"), str(tmp / "sp" / "checkpoint"), "--config", str(cfg),
               "--manifest", str(tmp / "ds" / "spatial.tsv")])
    assert rc == 2


def test_augment_preview_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["augment-preview", str(tmp_path / d), "-n", "5", "--seed", "3"]) == 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    lines = (tmp_path / "a" / "crops.txt").read_text().splitlines()
    assert len(lines) == 5
    assert tsr.load(tmp_path / "a" / "crop_00000.tsr").shape == (3, 224, 224)


def test_comm_report(tmp_path):
    assert main(["comm-report", "--out", str(tmp_path / "c.jsonl")]) == 0
    rows = [json.loads(l) for l in (tmp_path / "c.jsonl").read_text().splitlines()]
    assert len(rows) == 8
    by = {(r["K"], r["mode"]): r for r in rows}
    full, gath = by[(4, "full_param_sync")], by[(4, "activation_gather")]
    assert full["fc_input_dim"] == 25088
    excluded = (full["param_sync_bytes"] - gath["param_sync_bytes"]) / (4 * 1.5)
    assert excluded == 119_959_653 and excluded > 102_764_544
    assert gath["total_bytes"] < full["total_bytes"]
    assert by[(1, "full_param_sync")]["total_bytes"] == by[(1, "activation_gather")]["total_bytes"] == 0


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "twostream.cli", "comm-report", "--workers", "x"],
                         capture_output=True, text=True)
    assert res.returncode == 2 and res.stderr.startswith("twostream: config error")


@pytest.mark.slow
def test_train_spatial_preset_stops_at_10000(tiny):
    tmp, cfg = tiny
    cfg.write_text(TINY.replace("lr_step=5\nlr_stop=7\n", "batch=1\n").replace("batch=4\n", ""))
    assert train(tmp, cfg, "spatial", "full") == 0
    recs = (tmp / "full" / "records.jsonl").read_text().splitlines()
    assert len(recs) == 10_000 and json.loads(recs[-1])["iter"] == 9_999
    assert json.loads(recs[4_000])["lr"] == pytest.approx(0.0001)
