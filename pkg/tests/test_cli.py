import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dnfs.checkpoint import load
from dnfs.cli import ERROR_PREFIX, main
from dnfs.config import RunConfig, load_config, parse_config_text
from dnfs.pgm import read_pgm, read_pgm_raw

GEN = ["--n-samples", "10", "--image-size", "16", "--num-horizons", "2", "--seed", "3"]
TINY = ["--arch", "dnfs", "--multiplier", "1", "--batch-size", "4"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "d"
    assert main(["generate", "--dataset", str(root)] + GEN) == 0
    return root


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestGenerate:
    def test_layout(self, dataset):
        assert len(list((dataset / "images").glob("*.pgm"))) == 10
        assert len(list((dataset / "masks").glob("*.pgm"))) == 10
        lines = (dataset / "manifest.tsv").read_text().splitlines()
        counts = {s: sum(line.startswith(s + "\t") for line in lines) for s in ("train", "val", "test")}
        assert counts == {"train": 8, "val": 1, "test": 1}

    def test_rerun_is_byte_identical(self, dataset, tmp_path):
        other = tmp_path / "again"
        main(["generate", "--dataset", str(other)] + GEN)
        for path in sorted(dataset.rglob("*")):
            if path.is_file():
                assert path.read_bytes() == (other / path.relative_to(dataset)).read_bytes(), path.name

    def test_masks_are_black_on_white(self, dataset):
        raw = read_pgm_raw(next((dataset / "masks").glob("*.pgm")))
        assert set(np.unique(raw)) == {0, 255}


class TestTrain:
    def test_zero_epochs(self, dataset, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--dataset", str(dataset), "--output", str(out), "--epochs", "0"] + TINY) == 0
        assert read_rows(out / "metrics.csv") == [["epoch", "train_loss", "val_loss", "val_iou", "val_black_recall"]]
        assert (out / "epoch_0000.ckpt").is_file()
        assert load(out / "last.ckpt").epoch == 0

    def test_metrics_and_checkpoints(self, dataset, tmp_path):
        out = tmp_path / "run"
        main(["train", "--dataset", str(dataset), "--output", str(out), "--epochs", "2"] + TINY)
        rows = read_rows(out / "metrics.csv")
        assert [r[0] for r in rows[1:]] == ["1", "2"]
        for r in rows[1:]:
            assert all(np.isfinite(float(v)) for v in r[1:])
            assert 0 <= float(r[3]) <= 1 and 0 <= float(r[4]) <= 1
        assert {p.name for p in out.glob("*.ckpt")} >= {"epoch_0001.ckpt", "epoch_0002.ckpt", "last.ckpt", "best.ckpt"}
        best = load(out / "best.ckpt")
        assert float(best.meta["best_val_iou"]) == max(float(r[3]) for r in rows[1:])

    def test_resume_matches_uninterrupted(self, dataset, tmp_path):
        full, part = tmp_path / "full", tmp_path / "part"
        main(["train", "--dataset", str(dataset), "--output", str(full), "--epochs", "3"] + TINY)
        main(["train", "--dataset", str(dataset), "--output", str(part), "--epochs", "1"] + TINY)
        main(["train", "--dataset", str(dataset), "--output", str(part), "--epochs", "3",
              "--resume", str(part / "last.ckpt")])
        assert (full / "last.ckpt").read_bytes() == (part / "last.ckpt").read_bytes()
        assert (full / "metrics.csv").read_bytes() == (part / "metrics.csv").read_bytes()

    def test_resume_from_earlier_epoch_truncates_metrics(self, dataset, tmp_path):
        out = tmp_path / "run"
        main(["train", "--dataset", str(dataset), "--output", str(out), "--epochs", "2"] + TINY)
        before = read_rows(out / "metrics.csv")
        main(["train", "--dataset", str(dataset), "--output", str(out), "--epochs", "2",
              "--resume", str(out / "epoch_0001.ckpt")])
        assert read_rows(out / "metrics.csv") == before

    def test_missing_dataset(self, tmp_path, capsys):
        assert main(["train", "--dataset", str(tmp_path / "nope"), "--output", str(tmp_path / "r")]) == 1
        assert capsys.readouterr().err.startswith(ERROR_PREFIX)


@pytest.fixture(scope="module")
def run(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    main(["train", "--dataset", str(dataset), "--output", str(out), "--epochs", "2"] + TINY)
    return out


class TestEvalPredict:
    def test_eval_matches_logged_iou(self, dataset, run):
        best = load(run / "best.ckpt")
        assert main(["eval", "--checkpoint", str(run / "best.ckpt"), "--dataset", str(dataset)]) == 0
        report = json.loads((run / "eval_val.json").read_text())
        assert report["iou"] == pytest.approx(float(best.meta["best_val_iou"]), abs=1e-6)
        assert report["n"] == 1 and report["split"] == "val"

    def test_eval_other_split_and_output(self, dataset, run, tmp_path):
        main(["eval", "--checkpoint", str(run / "last.ckpt"), "--dataset", str(dataset),
              "--split", "test", "--output", str(tmp_path)])
        assert json.loads((tmp_path / "eval_test.json").read_text())["split"] == "test"

    def test_predict_binary_and_deterministic(self, dataset, run, tmp_path):
        image = next((dataset / "images").glob("*.pgm"))
        for name in ("a.pgm", "b.pgm"):
            assert main(["predict", "--checkpoint", str(run / "last.ckpt"), "--image", str(image),
                         "--out", str(tmp_path / name)]) == 0
        raw = read_pgm_raw(tmp_path / "a.pgm")
        assert raw.shape == (16, 16) and set(np.unique(raw)) <= {0, 255}
        assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()

    def test_predict_other_size(self, run, tmp_path):
        from dnfs.pgm import write_pgm

        write_pgm(tmp_path / "wide.pgm", np.random.default_rng(0).random((8, 24)))
        main(["predict", "--checkpoint", str(run / "last.ckpt"), "--image", str(tmp_path / "wide.pgm"),
              "--out", str(tmp_path / "o.pgm")])
        assert read_pgm(tmp_path / "o.pgm", mask=True).shape == (8, 24)

    def test_predict_rejects_bad_size(self, run, tmp_path, capsys):
        from dnfs.pgm import write_pgm

        write_pgm(tmp_path / "odd.pgm", np.zeros((12, 16)))
        code = main(["predict", "--checkpoint", str(run / "last.ckpt"), "--image", str(tmp_path / "odd.pgm"),
                     "--out", str(tmp_path / "o.pgm")])
        err = capsys.readouterr().err
        assert code == 1 and err.startswith(ERROR_PREFIX) and "multiples of 8" in err


class TestCountParams:
    def test_dnfs8(self, capsys):
        assert main(["count-params", "dnfs-8"]) == 0
        assert capsys.readouterr().out == "dnfs-8\t72889\n"

    def test_all_presets(self, capsys):
        main(["count-params"])
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 16 and "dnfs-8\t72889" in lines

    def test_unknown_preset(self, capsys):
        assert main(["count-params", "dnfs-3"]) == 1
        err = capsys.readouterr().err
        assert err.startswith(ERROR_PREFIX) and "dnfs-8" in err

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "dnfs", "count-params", "unet-like-1"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout == "unet-like-1\t2150\n"


class TestConfig:
    def test_file_then_flags(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# demo\narch = unet_like\nmultiplier = 2  # small\npsi=0.25\nfractions = 0.6,0.2,0.2\n")
        cfg = load_config(path, psi=0.75)
        assert (cfg.arch, cfg.multiplier, cfg.psi, cfg.fractions) == ("unet_like", 2, 0.75, (0.6, 0.2, 0.2))
        assert cfg.epochs == RunConfig().epochs

    def test_preset_arch(self):
        assert load_config(arch="dnfs-16").arch_spec().multiplier == 16

    def test_errors(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config_text("colour = red")
        with pytest.raises(ValueError, match="key = value"):
            parse_config_text("epochs 3")
        with pytest.raises(ValueError, match="multiple"):
            RunConfig(image_size=60)

    def test_bad_config_via_cli(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("epochs = 2\nwat = 1\n")
        assert main(["train", "--config", str(path)]) == 1
        assert "unknown key 'wat'" in capsys.readouterr().err


def test_sweep_single_cell(dataset, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--dataset", str(dataset), "--output", str(out), "--epochs", "1", "--batch-size", "4",
                 "--multipliers", "1", "--psis", "0.5"]) == 0
    rows = read_rows(out / "sweep.csv")
    assert rows[0] == ["arch", "multiplier", "psi", "params", "train_seconds", "val_iou", "val_black_recall"]
    assert len(rows) == 2
    assert rows[1][:4] == ["dnfs", "1", "0.5", "1174"]
    assert 0 <= float(rows[1][5]) <= 1
