import json

import numpy as np
import pytest

from geoseg.cli import main
from geoseg.predict import write_logits
from geoseg.raster import open_raster, save_raster
from geoseg.tiling import Dataset

from _harness import write_config


@pytest.fixture
def files(tmp_path, scene):
    image, labels = scene
    save_raster(image, tmp_path / "image.bin")
    save_raster(labels, tmp_path / "labels.bin")
    return tmp_path


def split(files):
    assert main(["split", "--image", str(files / "image.bin"), "--labels",
                 str(files / "labels.bin"), "--tile", "512", "--stride", "0.5",
                 "--out", str(files / "ds"), "--class-count", "3"]) == 0


def test_split_weights_split_set(files, capsys):
    split(files)
    assert "9 tiles" in capsys.readouterr().out
    assert main(["split-set", "--dataset", str(files / "ds"), "--fractions", "0.34,0.33,0.33",
                 "--gap", "0"]) == 0
    assert main(["weights", "--dataset", str(files / "ds")]) == 0
    weights = json.loads((files / "ds" / "weights.json").read_text())
    assert [w["index"] for w in weights] == [0, 1, 2]
    assert all(w["weight"] > 0 for w in weights)


def test_merge_and_score_with_logit_directory(files, scene):
    split(files)
    ds = Dataset(files / "ds")
    eye = np.eye(3, dtype=np.float32)
    for i in range(len(ds)):
        write_logits(files / "logits", i, eye[ds.label(i)])
    assert main(["merge", "--dataset", str(files / "ds"), "--logits", str(files / "logits"),
                 "--strategy", "logit", "--out", str(files / "m.bin")]) == 0
    assert np.array_equal(open_raster(files / "m.bin").data, scene[1].data)
    assert main(["split-set", "--dataset", str(files / "ds"), "--fractions", "1,0,0"]) == 0
    assert main(["score", "--dataset", str(files / "ds"), "--logits", str(files / "logits"),
                 "--split", "train", "--mode", "merged", "--out", str(files / "s.json")]) == 0
    assert json.loads((files / "s.json").read_text())["mIoU"] == 1.0


def test_score_oracle_tiles(files, capsys):
    split(files)
    main(["split-set", "--dataset", str(files / "ds"), "--fractions", "1,0,0"])
    capsys.readouterr()
    assert main(["score", "--dataset", str(files / "ds"), "--logits", "oracle",
                 "--split", "all"]) == 0
    assert json.loads(capsys.readouterr().out)["mIoU"] == 1.0


def test_degrade_ladder_and_single(files):
    split(files)
    assert main(["degrade", "--dataset", str(files / "ds"), "--method", "b",
                 "--target-gsd", "0.16"]) == 0
    assert (files / "ds_b_0.16" / "manifest.jsonl").exists()
    assert main(["degrade", "--dataset", str(files / "ds"), "--method", "c",
                 "--target-gsd", "0.16"]) == 0
    assert Dataset(files / "ds_c_0.16").grid.source_dims == (512, 512)
    # the next ladder rung already shrinks below one tile
    assert main(["degrade", "--dataset", str(files / "ds"), "--method", "c", "--ladder"]) == 1
    assert main(["degrade", "--dataset", str(files / "ds"), "--method", "a"]) == 2


def test_cording(capsys):
    assert main(["cording", "--measurements", "0.15,0.35"]) == 0
    assert "(0.05, 0.117)" in capsys.readouterr().out


def test_plan(tmp_path, capsys):
    out = tmp_path / "plan.json"
    assert main(["plan", "--area", "3.06", "--gsd", "0.08", "--tile", "512", "--stride", "0.5",
                 "--min-train", "900", "--out", str(out)]) == 0
    assert "tile count sufficient" in capsys.readouterr().out
    assert json.loads(out.read_text())["gsd"] == 0.08


def test_run_and_status(files, capsys):
    cfg = write_config(files, files / "image.bin", files / "labels.bin", tile=256)
    assert main(["run", "--workspace", str(files / "ws"), "--config", str(cfg)]) == 0
    capsys.readouterr()
    assert main(["status", "--workspace", str(files / "ws")]) == 0
    out = capsys.readouterr().out
    assert "merge" in out and "done" in out


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["merge", "--dataset", str(tmp_path / "nope"), "--logits", "oracle",
                 "--out", str(tmp_path / "m.bin")]) == 1
    assert "geoseg merge" in capsys.readouterr().err
    assert main(["cording", "--measurements", ""]) == 1


def test_split_resume_via_journal(files):
    args = ["split", "--image", str(files / "image.bin"), "--tile", "256",
            "--out", str(files / "ds"), "--journal", str(files / "j.log")]
    assert main(args) == 0
    assert main(args) == 0
    assert len((files / "j.log").read_text().splitlines()) == 7
