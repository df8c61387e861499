"""End-to-end run: index -> subset -> split -> build -> train -> evaluate -> report."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .dataset import DatasetIndex, sample_subset, scan_dataset, stratified_split, write_index
from .errors import ConfigError
from .metrics import MetricsReport, evaluate
from .model import build_classifier
from .reporting import new_manifest, write_manifest, write_reports
from .taxonomy import load_class_taxonomy
from .training import TrainHistory, train

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    run_dir: Path
    history: TrainHistory
    reports: list[MetricsReport]


def prepare_splits(cfg: RunConfig, taxonomy) -> tuple[DatasetIndex, DatasetIndex]:
    ds = cfg.dataset
    full = scan_dataset(ds.root, taxonomy)
    subset = sample_subset(full, ds.subset_fraction, ds.subset_seed, stratified=ds.stratified_subset)
    return stratified_split(subset, ds.train_fraction, ds.split_seed)


def run_training(cfg: RunConfig, run_dir: str | Path | None = None) -> RunResult:
    run_dir = Path(run_dir or cfg.output.run_dir)
    taxonomy = load_class_taxonomy(cfg.dataset.taxonomy)
    if cfg.model.num_classes != len(taxonomy):
        raise ConfigError(
            f"model.num_classes={cfg.model.num_classes} but taxonomy has {len(taxonomy)} classes"
        )

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        train_idx, val_idx = prepare_splits(cfg, taxonomy)
        lineage = train_idx.lineage.as_dict()
        lineage.pop("split")
        lineage["split_rule"] = "stratified"
        manifest = new_manifest(cfg, taxonomy.digest(), lineage)
        write_manifest(run_dir, manifest)
        write_index(train_idx, run_dir / "train.tsv", taxonomy)
        write_index(val_idx, run_dir / "val.tsv", taxonomy)

        model = build_classifier(cfg.model)
        model, history = train(model, train_idx, val_idx, cfg.training, run_dir=run_dir)
        manifest = manifest.model_copy(update={"checkpoints": list(history.checkpoints)})
        write_manifest(run_dir, manifest)

        reports = [
            evaluate(model, train_idx, "Training", cfg.training.batch_size),
            evaluate(model, val_idx, "Validation", cfg.training.batch_size),
        ]
    notes = [f"{w.category.__name__}: {w.message}" for w in caught]
    write_reports(run_dir, reports, notes)
    return RunResult(run_dir, history, reports)
