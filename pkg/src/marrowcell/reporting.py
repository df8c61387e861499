"""Run manifests and Table-3-shaped metric reports."""

from __future__ import annotations

import json
import platform
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from pydantic import BaseModel, ConfigDict, ValidationError

from . import __version__
from .config import ModelConfig, RunConfig, TrainConfig
from .errors import ConfigError, ManifestError, StorageError
from .metrics import MetricsReport

MANIFEST_NAME = "manifest"
REPORT_TEXT_NAME = "report.txt"
REPORT_STRUCT_NAME = "report.struct"

COLUMNS = ("Set", "Loss", "Accuracy", "Precision", "Recall", "AUC")

# Published reference rows (not reproduced at desk scale).
PUBLISHED_RESULTS = (
    MetricsReport("Training", 5.7916, 0.9639, 0.6214, 0.6171, 0.8472),
    MetricsReport("Validation", 7.2734, 0.9619, 0.6, 0.5968, 0.8297),
)


class RunManifest(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    run_id: str
    timestamp: str
    artifact_version: str
    taxonomy_hash: str
    dataset: dict
    run_config: RunConfig
    environment: dict
    checkpoints: list[str] = []

    @property
    def model(self) -> ModelConfig:
        return self.run_config.model

    @property
    def training(self) -> TrainConfig:
        return self.run_config.training


def environment_stamp() -> dict:
    import numpy
    import torch

    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": numpy.__version__,
        "torch": torch.__version__,
    }


def new_manifest(run_config: RunConfig, taxonomy_hash: str, dataset: dict) -> RunManifest:
    return RunManifest(
        run_id=uuid.uuid4().hex,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        artifact_version=__version__,
        taxonomy_hash=taxonomy_hash,
        dataset=dataset,
        run_config=run_config,
        environment=environment_stamp(),
    )


def read_manifest(run_dir: str | Path) -> RunManifest:
    path = Path(run_dir) / MANIFEST_NAME
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return RunManifest.model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        field = ".".join(str(p) for p in err["loc"])
        raise ManifestError(f"{path}: field {field!r}: {err['msg']}") from None


def write_manifest(run_dir: str | Path, manifest: RunManifest) -> Path:
    """Write the manifest; once present it may only gain checkpoint entries."""
    run_dir = Path(run_dir)
    path = run_dir / MANIFEST_NAME
    if path.exists():
        old = read_manifest(run_dir)
        same = old.model_dump(exclude={"checkpoints"}) == manifest.model_dump(
            exclude={"checkpoints"}
        )
        if not same or manifest.checkpoints[: len(old.checkpoints)] != old.checkpoints:
            raise ManifestError(f"{path} is append-only; refusing to rewrite recorded fields")
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# reports


def _cells(r: MetricsReport) -> list[str]:
    return [
        r.set_name,
        f"{r.loss:.4f}",
        f"{r.accuracy * 100:.2f}%",
        f"{r.precision:.4f}",
        f"{r.recall:.4f}",
        f"{r.auc:.4f}",
    ]


def render_report(reports: Sequence[MetricsReport]) -> str:
    if not reports:
        raise ConfigError("render_report needs at least one report")
    rows = [list(COLUMNS)] + [_cells(r) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(COLUMNS))]

    def line(row):
        return " | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()

    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([line(rows[0]), rule] + [line(r) for r in rows[1:]]) + "\n"


def parse_report(text: str) -> list[dict]:
    """Inverse of :func:`render_report` at printed precision."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = [c.strip() for c in lines[0].split("|")]
    if tuple(header) != COLUMNS:
        raise ValueError(f"not a report table header: {lines[0]!r}")
    out = []
    for ln in lines[2:]:
        cells = [c.strip() for c in ln.split("|")]
        out.append(
            {
                "set_name": cells[0],
                "loss": float(cells[1]),
                "accuracy": round(float(cells[2].rstrip("%")) / 100, 4),
                "precision": float(cells[3]),
                "recall": float(cells[4]),
                "auc": float(cells[5]),
            }
        )
    return out


def accuracy_gap(reports: Sequence[MetricsReport]) -> float:
    """Training minus Validation accuracy, as a fraction."""
    by_name = {r.set_name: r for r in reports}
    try:
        return by_name["Training"].accuracy - by_name["Validation"].accuracy
    except KeyError as exc:
        raise ConfigError(f"accuracy gap needs a {exc.args[0]} report") from None


def report_struct(reports: Sequence[MetricsReport]) -> str:
    doc = {"reports": [r.as_dict() for r in reports]}
    if {"Training", "Validation"} <= {r.set_name for r in reports}:
        doc["train_val_accuracy_gap"] = accuracy_gap(reports)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def read_report_struct(path: str | Path) -> list[MetricsReport]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [MetricsReport(**r) for r in doc["reports"]]


def write_reports(
    out_dir: str | Path, reports: Sequence[MetricsReport], warnings_log: Optional[Sequence[str]] = None
) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        text_path = out_dir / REPORT_TEXT_NAME
        struct_path = out_dir / REPORT_STRUCT_NAME
        text_path.write_text(render_report(reports), encoding="utf-8")
        struct_path.write_text(report_struct(reports), encoding="utf-8")
        if warnings_log:
            with (out_dir / "warnings.log").open("a", encoding="utf-8") as fh:
                fh.writelines(f"{w}\n" for w in warnings_log)
    except OSError as exc:
        raise StorageError(f"cannot write reports under {out_dir}: {exc}") from exc
    return text_path, struct_path
