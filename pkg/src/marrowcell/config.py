"""Run configuration: model, training, dataset and output sections.

The YAML run config is the single document a run is reproduced from, so
unknown keys are rejected outright and every defaulted key is logged.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

log = logging.getLogger(__name__)

_FREEZE_RE = re.compile(r"^(freeze_backbone|unfreeze_all|unfreeze_top_n:(\d+))$")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Section):
    backbone_name: str = "inception-resnet-v2"
    input_size: int = Field(299, ge=8)
    num_classes: int = Field(21, ge=2)
    head_dense_units: int = Field(256, ge=1)
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    # freeze_backbone | unfreeze_all | unfreeze_top_n:<n>
    freeze_policy: str = "freeze_backbone"
    weights: Optional[str] = None
    random_init: bool = False
    init_seed: int = 0

    @field_validator("freeze_policy")
    @classmethod
    def _check_policy(cls, v: str) -> str:
        if not _FREEZE_RE.match(v):
            raise ValueError(
                "freeze_policy must be freeze_backbone, unfreeze_all or unfreeze_top_n:<n>"
            )
        return v

    @property
    def unfreeze_top_n(self) -> int | None:
        m = _FREEZE_RE.match(self.freeze_policy)
        return int(m.group(2)) if m and m.group(2) else None

    def architecture(self) -> dict:
        """Fields a checkpoint must agree on to be loadable."""
        return {
            "backbone_name": self.backbone_name,
            "input_size": self.input_size,
            "num_classes": self.num_classes,
            "head_dense_units": self.head_dense_units,
        }


class TrainConfig(_Section):
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(5, ge=1)
    optimizer: Literal["adam"] = "adam"
    learning_rate: float = Field(1e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-7, gt=0)
    loss: Literal["categorical_cross_entropy"] = "categorical_cross_entropy"
    seed: int = 0
    augment: bool = False
    save_checkpoints: bool = True


class DatasetConfig(_Section):
    root: str
    taxonomy: Optional[str] = None
    subset_fraction: float = Field(0.2, gt=0, le=1)
    subset_seed: int = 0
    stratified_subset: bool = False
    train_fraction: float = Field(0.8, gt=0, lt=1)
    split_seed: int = 0


class OutputConfig(_Section):
    run_dir: str = "runs/latest"


class RunConfig(_Section):
    dataset: DatasetConfig
    model: ModelConfig = ModelConfig()
    training: TrainConfig = TrainConfig()
    output: OutputConfig = OutputConfig()


def _log_defaults(model: BaseModel, prefix: str = "") -> None:
    for name, info in type(model).model_fields.items():
        value = getattr(model, name)
        if name not in model.model_fields_set:
            log.info("config: %s%s not set, using default %r", prefix, name, value)
        elif isinstance(value, BaseModel):
            _log_defaults(value, f"{prefix}{name}.")


def parse_run_config(doc: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid run config: {problems}") from None
    _log_defaults(cfg)
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: run config must be a mapping")
    return parse_run_config(doc)


def dump_run_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
