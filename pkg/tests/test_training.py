import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from marrowcell import training
from marrowcell.config import TrainConfig
from marrowcell.dataset import DatasetIndex, Lineage, SampleRecord, iter_batches, scan_dataset
from marrowcell.errors import ConfigError, TrainingDivergedError
from marrowcell.model import build_classifier, load_checkpoint
from marrowcell.training import read_history, steps_per_epoch, train

FAST = TrainConfig(epochs=2, batch_size=16, learning_rate=1e-3)


@pytest.fixture(scope="module")
def tree_index(three_class_tree, taxonomy):
    return scan_dataset(three_class_tree, taxonomy)


def test_steps_per_epoch_examples():
    assert steps_per_epoch(100, 32) == 4
    assert steps_per_epoch(64, 32) == 2
    assert steps_per_epoch(1, 32) == 1


@given(st.integers(1, 5000), st.integers(1, 512))
def test_step_count_matches_batches(n, batch_size):
    samples = tuple(SampleRecord(path=f"/{i}", label=0, id=str(i)) for i in range(n))
    index = DatasetIndex(samples, Lineage(root="/"))
    assert steps_per_epoch(n, batch_size) == sum(1 for _ in iter_batches(index, batch_size))


def test_train_takes_expected_steps(monkeypatch, stub_config, tree_index):
    calls = []
    original = torch.optim.Adam.step

    def counting_step(self, *a, **kw):
        calls.append(1)
        return original(self, *a, **kw)

    monkeypatch.setattr(torch.optim.Adam, "step", counting_step)
    model = build_classifier(stub_config)
    _, history = train(model, tree_index, tree_index, TrainConfig(epochs=3, batch_size=32))
    assert len(calls) == 3 * math.ceil(len(tree_index) / 32)
    assert len(history) == 3


def test_history_values_sane(stub_config, tree_index):
    _, history = train(build_classifier(stub_config), tree_index, tree_index, FAST)
    assert len(history.epochs) == FAST.epochs
    for rec in history.epochs:
        for loss in (rec.train_loss, rec.val_loss):
            assert math.isfinite(loss) and loss >= 0
        for acc in (rec.train_acc, rec.val_acc):
            assert 0 <= acc <= 1


def test_seed_determinism(stub_config, tree_index):
    _, a = train(build_classifier(stub_config), tree_index, tree_index, FAST)
    _, b = train(build_classifier(stub_config), tree_index, tree_index, FAST)
    for ra, rb in zip(a.epochs, b.epochs):
        for field in ("train_loss", "train_acc", "val_loss", "val_acc"):
            assert abs(getattr(ra, field) - getattr(rb, field)) <= 1e-6


def test_frozen_backbone_untouched(stub_model, tree_index):
    before = [p.clone() for p in stub_model.backbone.parameters()]
    train(stub_model, tree_index, tree_index, FAST)
    assert all(torch.equal(a, b) for a, b in zip(before, stub_model.backbone.parameters()))


def test_empty_index_rejected(stub_model, tree_index):
    empty = DatasetIndex((), Lineage(root="/"))
    with pytest.raises(ConfigError):
        train(stub_model, empty, tree_index, FAST)


def test_divergence_names_epoch_and_step(monkeypatch, stub_model, tree_index):
    monkeypatch.setattr(
        training, "_clamped_ce", lambda logits, y: (logits * float("nan")).sum()
    )
    with pytest.raises(TrainingDivergedError) as err:
        train(stub_model, tree_index, tree_index, FAST)
    assert (err.value.epoch, err.value.step) == (1, 1)


def test_run_dir_outputs(tmp_path, stub_model, stub_config, tree_index):
    _, history = train(stub_model, tree_index, tree_index, FAST, run_dir=tmp_path)
    rows = read_history(tmp_path / "history.csv")
    assert [r.epoch for r in rows] == [1, 2]
    assert rows[-1].val_loss == history.epochs[-1].val_loss
    assert history.checkpoints == ["checkpoints/epoch_1", "checkpoints/epoch_2"]
    restored = load_checkpoint(tmp_path / "checkpoints" / "epoch_2", stub_config)
    assert all(torch.equal(a, b) for a, b in zip(restored.parameters(), stub_model.parameters()))


def test_iter_batches_covers_order(tree_index):
    order = np.random.default_rng(0).permutation(len(tree_index))
    seen = [s.id for b in iter_batches(tree_index, 7, order) for s in b]
    assert sorted(seen) == sorted(tree_index.ids)
