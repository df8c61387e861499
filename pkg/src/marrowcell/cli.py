"""Command-line entry point: ``marrowcell dataset|train|evaluate|predict``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 training error, 5 I/O error.
Failures print one line, ``<ErrorClass>: <message>``, on stderr.
"""

from __future__ import annotations

import logging
import sys
import warnings
from pathlib import Path

import click

from .config import load_run_config
from .dataset import (
    SampleRecord,
    load_batch,
    read_index,
    sample_subset,
    scan_dataset,
    stratified_split,
    write_index,
)
from .errors import ConfigError, MarrowCellError
from .fixtures import generate_synthetic_fixture
from .taxonomy import load_class_taxonomy


def _summary(index, taxonomy) -> None:
    counts = index.class_counts(taxonomy)
    for code, n in counts.items():
        if n:
            click.echo(f"{code}\t{n}")
    click.echo(f"total\t{len(index)}")


@click.group()
@click.option("--seed", type=int, default=None, help="Seed for every randomized step.")
@click.option("--run-dir", type=click.Path(path_type=Path), default=None)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--taxonomy", type=click.Path(path_type=Path), default=None,
              help="YAML taxonomy override (list of code/name entries).")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def cli(ctx, seed, run_dir, config_path, taxonomy, verbose):
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    ctx.obj = {"seed": seed, "run_dir": run_dir, "config": config_path, "taxonomy": taxonomy}


def _taxonomy(ctx):
    return load_class_taxonomy(ctx.obj["taxonomy"])


def _seed(ctx, local):
    if local is not None:
        return local
    return ctx.obj["seed"] if ctx.obj["seed"] is not None else 0


# ---------------------------------------------------------------------------
# dataset


@cli.group()
def dataset():
    """Index, subset, split and synthesize image datasets."""


@dataset.command("scan")
@click.argument("root", type=click.Path(path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def dataset_scan(ctx, root, out):
    taxonomy = _taxonomy(ctx)
    index = scan_dataset(root, taxonomy)
    for note in index.scan_warnings:
        click.echo(f"warning: {note}", err=True)
    if out:
        write_index(index, out, taxonomy)
    _summary(index, taxonomy)


def _load_source(taxonomy, manifest, root):
    if (manifest is None) == (root is None):
        raise ConfigError("give exactly one of --manifest or --root")
    return read_index(manifest, taxonomy) if manifest else scan_dataset(root, taxonomy)


@dataset.command("subset")
@click.option("--manifest", type=click.Path(path_type=Path), default=None)
@click.option("--root", type=click.Path(path_type=Path), default=None)
@click.option("--fraction", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--stratified", is_flag=True, help="Take the fraction within each class.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def dataset_subset(ctx, manifest, root, fraction, seed, stratified, out):
    taxonomy = _taxonomy(ctx)
    index = _load_source(taxonomy, manifest, root)
    subset = sample_subset(index, fraction, _seed(ctx, seed), stratified=stratified)
    write_index(subset, out, taxonomy)
    _summary(subset, taxonomy)


@dataset.command("split")
@click.option("--manifest", type=click.Path(path_type=Path), default=None)
@click.option("--root", type=click.Path(path_type=Path), default=None)
@click.option("--train-fraction", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--train-out", type=click.Path(path_type=Path), required=True)
@click.option("--val-out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def dataset_split(ctx, manifest, root, train_fraction, seed, train_out, val_out):
    taxonomy = _taxonomy(ctx)
    index = _load_source(taxonomy, manifest, root)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        train_idx, val_idx = stratified_split(index, train_fraction, _seed(ctx, seed))
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    write_index(train_idx, train_out, taxonomy)
    write_index(val_idx, val_out, taxonomy)
    click.echo(f"train\t{len(train_idx)}\nval\t{len(val_idx)}")


@dataset.command("fixture")
@click.option("--per-class", type=int, default=10, show_default=True)
@click.option("--classes", default="all", show_default=True,
              help="'all' or comma-separated class codes.")
@click.option("--image-size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def dataset_fixture(ctx, per_class, classes, image_size, seed, out):
    taxonomy = _taxonomy(ctx)
    codes = taxonomy.codes if classes == "all" else [c.strip() for c in classes.split(",") if c.strip()]
    generate_synthetic_fixture(
        {c: per_class for c in codes}, out, taxonomy, image_size=image_size, seed=_seed(ctx, seed)
    )
    _summary(scan_dataset(out, taxonomy), taxonomy)


# ---------------------------------------------------------------------------
# train / evaluate / predict


@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--from-manifest", type=click.Path(path_type=Path), default=None,
              help="Re-execute the run recorded in this run directory.")
@click.option("--run-dir", type=click.Path(path_type=Path), default=None)
@click.pass_context
def train(ctx, config_path, from_manifest, run_dir):
    """Run the full pipeline from a YAML run config."""
    from .pipeline import run_training
    from .reporting import read_manifest, render_report

    run_dir = run_dir or ctx.obj["run_dir"]
    if from_manifest is not None:
        cfg = read_manifest(from_manifest).run_config
        if run_dir is None:
            raise ConfigError("--from-manifest needs --run-dir for the new run")
    else:
        path = config_path or ctx.obj["config"]
        if path is None:
            raise ConfigError("train needs --config or --from-manifest")
        cfg = load_run_config(path)
    seed = ctx.obj["seed"]
    if seed is not None:
        cfg = cfg.model_copy(update={
            "dataset": cfg.dataset.model_copy(update={"subset_seed": seed, "split_seed": seed}),
            "training": cfg.training.model_copy(update={"seed": seed}),
            "model": cfg.model.model_copy(update={"init_seed": seed}),
        })
    result = run_training(cfg, run_dir)
    click.echo(render_report(result.reports), nl=False)
    click.echo(f"run_dir\t{result.run_dir}")


@cli.command()
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--manifest", type=click.Path(path_type=Path), default=None,
              help="Dataset manifest to evaluate on.")
@click.option("--set-name", default="Validation", show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--averaging", type=click.Choice(["macro", "micro"]), default="macro")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Directory for report.txt/report.struct (default: --run-dir).")
@click.option("--run-dir", type=click.Path(path_type=Path), default=None)
@click.option("--published", is_flag=True,
              help="Render the published Training/Validation rows instead of running a model.")
@click.pass_context
def evaluate(ctx, checkpoint, manifest, set_name, batch_size, averaging, out, run_dir, published):
    """Score a checkpoint on a dataset manifest."""
    from .metrics import evaluate as evaluate_index
    from .model import load_checkpoint
    from .reporting import PUBLISHED_RESULTS, render_report, write_reports

    out = out or run_dir or ctx.obj["run_dir"]
    if published:
        reports = list(PUBLISHED_RESULTS)
        notes = []
    else:
        if checkpoint is None or manifest is None:
            raise ConfigError("evaluate needs --checkpoint and --manifest")
        taxonomy = _taxonomy(ctx)
        model = load_checkpoint(checkpoint, num_classes=len(taxonomy))
        index = read_index(manifest, taxonomy)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            reports = [evaluate_index(model, index, set_name, batch_size, averaging)]
        notes = [f"{w.category.__name__}: {w.message}" for w in caught]
    if out is not None:
        write_reports(out, reports, notes)
    click.echo(render_report(reports), nl=False)


class UnreadableImagesError(MarrowCellError):
    exit_code = 3


@cli.command()
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True)
@click.argument("images", nargs=-1, type=click.Path(path_type=Path))
@click.pass_context
def predict(ctx, checkpoint, images):
    """Print ``path<TAB>code<TAB>probability`` per image."""
    from .model import load_checkpoint, predict_batch

    taxonomy = _taxonomy(ctx)
    model = load_checkpoint(checkpoint, num_classes=len(taxonomy))
    failed = 0
    for path in images:
        try:
            batch = load_batch([SampleRecord(path, 0, str(path))], model.config.input_size)
        except MarrowCellError as exc:
            failed += 1
            click.echo(f"{path}\terror\t{type(exc).__name__}: {exc}")
            continue
        probs = predict_batch(model, batch)[0]
        top = int(probs.argmax())
        click.echo(f"{path}\t{taxonomy.code_of(top)}\t{probs[top]:.4f}")
    if failed:
        raise UnreadableImagesError(f"{failed} of {len(images)} images could not be read")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="marrowcell", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        click.echo(f"UsageError: {exc.format_message()}", err=True)
        return 2
    except click.exceptions.Abort:
        return 1
    except MarrowCellError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
