import pytest
import yaml

from marrowcell.cli import main
from marrowcell.config import ModelConfig
from marrowcell.model import build_classifier, save_checkpoint
from marrowcell.reporting import read_report_struct


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A tiny-stub run on 21 classes x 6 images that fits the fixture perfectly."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["dataset", "fixture", "--per-class", "6", "--out", str(d / "fx")]) == 0
    assert main(["dataset", "scan", str(d / "fx"), "--out", str(d / "all.tsv")]) == 0
    cfg = {
        "dataset": {"root": str(d / "fx"), "subset_fraction": 1.0, "train_fraction": 0.5},
        "model": {
            "backbone_name": "tiny-stub", "random_init": True, "input_size": 64,
            "freeze_policy": "unfreeze_all", "dropout_rate": 0.0,
        },
        "training": {"epochs": 40, "learning_rate": 0.003, "batch_size": 16},
    }
    (d / "run.yaml").write_text(yaml.safe_dump(cfg))
    assert main(["train", "--config", str(d / "run.yaml"), "--run-dir", str(d / "run")]) == 0
    return d


def test_fixture_command(tmp_path, capsys):
    code, out, _ = run(capsys, "dataset", "fixture", "--per-class", "10", "--classes", "all",
                       "--out", tmp_path / "fx")
    assert code == 0
    assert len(list((tmp_path / "fx").rglob("*.png"))) == 210
    assert out.strip().splitlines()[-1] == "total\t210"


def test_fixture_bad_code(tmp_path, capsys):
    code, _, err = run(capsys, "dataset", "fixture", "--classes", "BAS,ZZZ", "--out", tmp_path)
    assert code == 2
    assert err.startswith("ConfigError:") and len(err.strip().splitlines()) == 1


def test_scan_empty_dir(tmp_path, capsys):
    code, _, err = run(capsys, "dataset", "scan", tmp_path)
    assert code == 3
    assert err.startswith("EmptyDatasetError:")


def test_scan_missing_dir(tmp_path, capsys):
    code, _, err = run(capsys, "dataset", "scan", tmp_path / "absent")
    assert code == 5
    assert err.startswith("FileNotFoundError:")


def test_subset_twice_identical(tmp_path, capsys, trained):
    for name in ("a.tsv", "b.tsv"):
        code, _, _ = run(capsys, "dataset", "subset", "--manifest", trained / "all.tsv",
                         "--fraction", "0.2", "--seed", "7", "--out", tmp_path / name)
        assert code == 0
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    rows = [ln for ln in (tmp_path / "a.tsv").read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == 25  # floor(0.2 * 126)


def test_split_command(tmp_path, capsys, trained):
    code, out, _ = run(capsys, "--seed", "3", "dataset", "split", "--root", trained / "fx",
                       "--train-out", tmp_path / "t.tsv", "--val-out", tmp_path / "v.tsv")
    assert code == 0
    assert out.split() == ["train", str(21 * 4), "val", str(21 * 2)]


def test_subset_needs_one_source(tmp_path, capsys):
    code, _, err = run(capsys, "dataset", "subset", "--out", tmp_path / "x.tsv")
    assert code == 2


def test_train_outputs(trained):
    run_dir = trained / "run"
    for name in ("manifest", "history.csv", "report.txt", "report.struct", "train.tsv", "val.tsv"):
        assert (run_dir / name).is_file()
    assert len(list((run_dir / "checkpoints").iterdir())) == 40
    assert [r.set_name for r in read_report_struct(run_dir / "report.struct")] == [
        "Training", "Validation",
    ]


def test_train_rejects_zero_batch(tmp_path, capsys):
    (tmp_path / "run.yaml").write_text("dataset: {root: x}\ntraining: {batch_size: 0}\n")
    code, _, err = run(capsys, "train", "--config", tmp_path / "run.yaml", "--run-dir", tmp_path / "r")
    assert code == 2
    assert "batch_size" in err and err.startswith("ConfigError:")
    assert not (tmp_path / "r").exists()


def test_train_refuses_existing_run_dir(capsys, trained):
    code, _, err = run(capsys, "train", "--config", trained / "run.yaml", "--run-dir", trained / "run")
    assert code == 5 and err.startswith("ManifestError:")


def test_evaluate_perfect_model(tmp_path, capsys, trained):
    code, out, _ = run(capsys, "evaluate", "--checkpoint", trained / "run/checkpoints/epoch_40",
                       "--manifest", trained / "all.tsv", "--out", tmp_path)
    assert code == 0
    (report,) = read_report_struct(tmp_path / "report.struct")
    assert (report.accuracy, report.precision, report.recall, report.auc) == (1.0, 1.0, 1.0, 1.0)
    assert "100.00%" in out


def test_evaluate_class_count_mismatch(tmp_path, capsys, trained):
    model = build_classifier(
        ModelConfig(backbone_name="tiny-stub", random_init=True, input_size=64, num_classes=20)
    )
    save_checkpoint(model, tmp_path / "ck20")
    code, _, err = run(capsys, "evaluate", "--checkpoint", tmp_path / "ck20",
                       "--manifest", trained / "all.tsv")
    assert code == 4 and err.startswith("CheckpointError:")


def test_evaluate_published(tmp_path, capsys):
    code, out, _ = run(capsys, "evaluate", "--published", "--out", tmp_path)
    assert code == 0
    rows = [[c.strip() for c in ln.split("|")] for ln in out.splitlines()[2:]]
    assert rows == [
        ["Training", "5.7916", "96.39%", "0.6214", "0.6171", "0.8472"],
        ["Validation", "7.2734", "96.19%", "0.6000", "0.5968", "0.8297"],
    ]
    assert (tmp_path / "report.txt").read_text() == out


def test_predict_lines(capsys, trained, taxonomy):
    images = sorted((trained / "fx").rglob("*.png"))[::20]
    code, out, _ = run(capsys, "predict", "--checkpoint", trained / "run/checkpoints/epoch_40", *images)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == len(images)
    for img, line in zip(images, lines):
        path, code_, prob = line.split("\t")
        assert code_ in taxonomy
        assert code_ == img.parent.name
        assert 0 < float(prob) <= 1


def test_predict_unreadable(tmp_path, capsys, trained):
    good = next((trained / "fx").rglob("*.png"))
    bad = tmp_path / "bad.png"
    bad.write_text("nope")
    code, out, err = run(capsys, "predict", "--checkpoint", trained / "run/checkpoints/epoch_40", good, bad)
    assert code == 3
    lines = out.strip().splitlines()
    assert len(lines) == 2 and "\terror\t" in lines[1]
    assert len(err.strip().splitlines()) == 1


def test_from_manifest_requires_run_dir(capsys, trained):
    code, _, err = run(capsys, "train", "--from-manifest", trained / "run")
    assert code == 2
