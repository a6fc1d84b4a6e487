import json
import os
import shutil

import numpy as np
import pytest
from PIL import Image

from ucod import dataio
from ucod.cli import build_parser, main
from ucod.errors import InputError
from ucod.synthetic import write_corpus

SMALL = ["--set", "epochs=1", "--set", "batch_size=4", "--set", "image_size=32",
         "--set", "backbone.patch_size=8", "--set", "look_twice_train=false"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    write_corpus(str(root), 6, 32, seed=5)
    return root


def _manifest_ok(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    for rel in manifest["outputs"]:
        assert os.path.exists(os.path.join(directory, rel)), rel
    return manifest


def test_help_on_every_subcommand(capsys):
    assert main(["--help"]) == 0
    for name in ("generate-pseudo", "train", "infer", "evaluate", "bucket-report", "make-synthetic"):
        assert main([name, "--help"]) == 0
        out = capsys.readouterr().out
        assert "--" in out and name in out


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["fly"]) == 1
    assert main(["evaluate", "--pred", "x"]) == 1
    assert "usage" in capsys.readouterr().err


def test_end_to_end(data, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", "--data", str(data), "--run-dir", str(run), *SMALL]) == 0
    ckpt = capsys.readouterr().out.strip()
    assert ckpt.endswith("final.npz") and os.path.exists(ckpt)
    manifest = _manifest_ok(run)
    assert manifest["seeds"]["train"] == 0 and "toy" in manifest["backbone"]
    assert "checkpoints/epoch_001.npz" in manifest["outputs"]
    with open(run / "metrics.log") as fh:
        assert all(json.loads(line) for line in fh)

    pred = tmp_path / "pred"
    assert main(["infer", "--checkpoint", ckpt, "--data", str(data), "--out", str(pred),
                 "--look-twice", *SMALL]) == 0
    _manifest_ok(pred)
    stems = sorted(f[:-4] for f in os.listdir(data) if f.endswith(".png"))
    for stem in stems:
        assert (pred / f"{stem}.png").exists() and (pred / f"{stem}.lt.png").exists()
        regions = json.loads((pred / f"{stem}.regions.json").read_text())
        assert regions["tau"] == 0.15

    report = tmp_path / "eval" / "report.json"
    assert main(["evaluate", "--pred", str(pred), "--gt", str(data / "gt"), "--report", str(report)]) == 0
    metrics = json.loads(report.read_text())["metrics"]
    assert set(metrics) >= {"s_measure", "f_weighted", "f_mean", "e_mean", "mae"}
    assert metrics["n_images"] == len(stems)
    assert "s_measure" in capsys.readouterr().out
    _manifest_ok(tmp_path / "eval")

    lt_report = tmp_path / "eval_lt" / "report.json"
    assert main(["evaluate", "--pred", str(pred), "--gt", str(data / "gt"), "--suffix", ".lt",
                 "--report", str(lt_report)]) == 0

    buckets = tmp_path / "buckets" / "b.json"
    assert main(["bucket-report", "--pred", str(pred), "--gt", str(data / "gt"), "--report", str(buckets),
                 "--interval", "0.05"]) == 0
    body = json.loads(buckets.read_text())
    assert len(body["buckets"]) == 20 and sum(b["count"] for b in body["buckets"]) == len(stems)
    assert (tmp_path / "buckets" / "b.csv").exists() and (tmp_path / "buckets" / "b.png").exists()


def test_mismatched_names_exit_1(data, tmp_path, capsys):
    pred = tmp_path / "pred"
    pred.mkdir()
    for f in sorted(os.listdir(data / "gt"))[:-1]:
        shutil.copy(data / "gt" / f, pred / f)
    Image.fromarray(np.zeros((32, 32), np.uint8)).save(pred / "stranger.png")
    assert main(["evaluate", "--pred", str(pred), "--gt", str(data / "gt"),
                 "--report", str(tmp_path / "r.json")]) == 1
    err = capsys.readouterr().err
    assert "stranger" in err and sorted(os.listdir(data / "gt"))[-1][:-4] in err


def test_bad_interval_exit_1(data, tmp_path):
    assert main(["bucket-report", "--pred", str(data / "gt"), "--gt", str(data / "gt"),
                 "--report", str(tmp_path / "b.json"), "--interval", "0"]) == 1


def test_generate_pseudo(data, tmp_path):
    out = tmp_path / "fs"
    assert main(["generate-pseudo", "--data", str(data), "--out", str(out), "--strategy", "null",
                 *SMALL]) == 0
    _manifest_ok(out)
    stem = sorted(f for f in os.listdir(data) if f.endswith(".png"))[0][:-4]
    mask = np.asarray(Image.open(out / f"{stem}.png"))
    assert mask.shape == (4, 4) and set(np.unique(mask)) <= {0, 255}
    meta = json.loads((out / f"{stem}.json").read_text())
    assert meta["strategy"] == "null" and "seed" in meta and "degenerate" in meta


def test_train_without_gt_directory(data, tmp_path, monkeypatch):
    """Training only needs images; a corpus with no gt/ directory trains fine."""
    images = tmp_path / "images"
    images.mkdir()
    for f in os.listdir(data):
        if f.endswith(".png"):
            shutil.copy(data / f, images / f)
    monkeypatch.setenv("UCOD_RUN_ROOT", str(tmp_path / "runs"))
    assert main(["train", "--data", str(images), *SMALL]) == 0
    (run,) = os.listdir(tmp_path / "runs")
    _manifest_ok(tmp_path / "runs" / run)


def test_train_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["train", "--data", str(empty), *SMALL]) == 1
    assert main(["train", *SMALL]) == 1
    assert main(["train", "--data", str(empty), "--set", "epochs=zero"]) == 1
    assert main(["infer", "--checkpoint", str(tmp_path / "none.npz"), "--data", str(empty),
                 "--out", str(tmp_path / "o")]) == 1


def test_unreadable_image_skipped_and_recorded(data, tmp_path):
    images = tmp_path / "images"
    shutil.copytree(data, images)
    (images / "aaa_broken.png").write_bytes(b"garbage")
    out = tmp_path / "fs"
    assert main(["generate-pseudo", "--data", str(images), "--out", str(out), *SMALL]) == 0
    manifest = _manifest_ok(out)
    assert len(manifest["skipped"]) == 1 and "aaa_broken" in manifest["skipped"][0]["path"]


def test_load_images_order_and_empty(data, tmp_path, caplog):
    names = dataio.load_images(str(data)).names
    assert names == sorted(names) and len(names) == 6
    empty = tmp_path / "e"
    empty.mkdir()
    assert dataio.load_images(str(empty)).images == []
    assert "no images" in caplog.text


def test_dataset_pairs(data, tmp_path):
    pairs = dataio.load_dataset_pairs(str(data), lambda img: np.zeros(img.size))
    assert len(pairs) == 6 and [p.name for p in pairs] == sorted(p.name for p in pairs)
    partial = tmp_path / "partial"
    shutil.copytree(data, partial)
    victim = sorted(os.listdir(partial / "gt"))[2]
    os.remove(partial / "gt" / victim)
    with pytest.raises(InputError, match=victim[:-4]):
        dataio.load_dataset_pairs(str(partial), lambda img: np.zeros(img.size))


def test_make_synthetic(tmp_path):
    assert main(["make-synthetic", "--out", str(tmp_path / "s"), "--n", "3", "--size", "32"]) == 0
    _manifest_ok(tmp_path / "s")
    assert len(os.listdir(tmp_path / "s" / "gt")) == 3


def test_parser_lists_documented_flags():
    text = build_parser().format_help()
    for name in ("generate-pseudo", "train", "infer", "evaluate", "bucket-report"):
        assert name in text
