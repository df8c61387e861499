"""Pretrained backbone plus classification head, and checkpoint I/O."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .dataset import ImageBatch
from .errors import BatchShapeError, CheckpointError, ModelInitError, StorageError

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


class TinyStub(nn.Module):
    """Two strided convolutions; a cheap, deterministic stand-in backbone."""

    num_features = 32

    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, kernel_size=5, stride=4, padding=2),
            nn.ReLU(),
            nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1),
            # per-sample normalization: O(1) features without batch statistics
            nn.GroupNorm(4, 32),
            nn.ReLU(),
        )

    def forward(self, x):
        return self.features(x)


def _inception_resnet_v2(weights: str | None) -> nn.Module:
    import timm

    pretrained = weights == "imagenet"
    net = timm.create_model(
        "inception_resnet_v2", pretrained=pretrained, num_classes=0, global_pool=""
    )
    if weights and not pretrained:
        state = torch.load(weights, map_location="cpu", weights_only=True)
        missing, unexpected = net.load_state_dict(state, strict=False)
        # classifier weights in a full ImageNet state dict are expected leftovers
        if missing:
            raise ModelInitError(f"weights file {weights} lacks backbone tensors: {missing[:3]}")
        if unexpected:
            log.info("ignored %d non-backbone tensors from %s", len(unexpected), weights)
    return net


def _tiny_stub(weights: str | None) -> nn.Module:
    net = TinyStub()
    if weights:
        net.load_state_dict(torch.load(weights, map_location="cpu", weights_only=True))
    return net


BACKBONES: dict[str, Callable[[str | None], nn.Module]] = {
    "inception-resnet-v2": _inception_resnet_v2,
    "tiny-stub": _tiny_stub,
}


class ClassifierModel(nn.Module):
    """Backbone feature map -> avg pool -> flatten -> dense/ReLU -> dropout -> dense.

    ``forward`` returns logits; softmax is applied in :func:`predict_batch`
    and folded into the loss during training.
    """

    def __init__(self, config: ModelConfig, backbone: nn.Module):
        super().__init__()
        self.config = config
        self.backbone = backbone
        self.head = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(backbone.num_features, config.head_dense_units),
            nn.ReLU(),
            nn.Dropout(config.dropout_rate),
            nn.Linear(config.head_dense_units, config.num_classes),
        )
        self.apply_freeze_policy()

    def apply_freeze_policy(self) -> None:
        top_n = self.config.unfreeze_top_n
        policy = self.config.freeze_policy
        for p in self.backbone.parameters():
            p.requires_grad = policy == "unfreeze_all"
        if top_n:
            leaves = [
                m for m in self.backbone.modules() if next(m.parameters(recurse=False), None) is not None
            ]
            for m in leaves[-top_n:]:
                for p in m.parameters(recurse=False):
                    p.requires_grad = True
        for p in self.head.parameters():
            p.requires_grad = True

    @property
    def backbone_frozen(self) -> bool:
        return not any(p.requires_grad for p in self.backbone.parameters())

    def train(self, mode: bool = True):
        super().train(mode)
        # A frozen backbone keeps its normalization statistics fixed.
        if self.backbone_frozen:
            self.backbone.eval()
        return self

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def count_parameters(self, part: str = "all", trainable_only: bool = False) -> int:
        module = {"all": self, "backbone": self.backbone, "head": self.head}[part]
        return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


def build_classifier(config: ModelConfig) -> ClassifierModel:
    """Assemble a classifier.

    ``config.weights`` names the pretrained backbone source (a state-dict
    path, or ``"imagenet"`` for the hub download where supported). Without
    it, ``config.random_init`` must be set explicitly.
    """
    if config.backbone_name not in BACKBONES:
        raise ModelInitError(
            f"unknown backbone {config.backbone_name!r}; choose from {sorted(BACKBONES)}"
        )
    if config.weights is None and not config.random_init:
        raise ModelInitError(
            f"no pretrained weights given for {config.backbone_name}; "
            "set model.weights or model.random_init"
        )
    torch.manual_seed(config.init_seed)
    try:
        backbone = BACKBONES[config.backbone_name](config.weights)
    except ModelInitError:
        raise
    except Exception as exc:  # torch.load surfaces corrupt files as assorted errors
        raise ModelInitError(f"cannot load backbone weights: {exc}") from exc
    return ClassifierModel(config, backbone)


def to_tensor(pixels: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(pixels)).permute(0, 3, 1, 2).contiguous()


def predict_batch(model: ClassifierModel, batch: ImageBatch) -> np.ndarray:
    """Class probabilities, shape (len(batch), num_classes), inference mode."""
    size = model.config.input_size
    if batch.pixels.shape[1:] != (size, size, 3):
        raise BatchShapeError(
            f"batch images are {batch.pixels.shape[1:]}, model expects {(size, size, 3)}"
        )
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            logits = model(to_tensor(batch.pixels))
    finally:
        model.train(was_training)
    return torch.softmax(logits.double(), dim=1).numpy()


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: ClassifierModel, path: str | Path) -> Path:
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.model_dump(mode="json"),
        "state_dict": model.state_dict(),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)
    except (OSError, RuntimeError) as exc:  # torch wraps some write failures
        raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(
    path: str | Path, config: ModelConfig | None = None, num_classes: int | None = None
) -> ClassifierModel:
    """Rebuild a model from a checkpoint.

    ``config`` (or just ``num_classes``) states what the caller expects; a
    disagreement with the stored architecture is a :class:`CheckpointError`.
    """
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError as exc:
        raise StorageError(f"checkpoint not found: {path}") from exc
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint of format {CHECKPOINT_FORMAT}")
    stored = ModelConfig.model_validate(payload["config"])
    expected = dict(config.architecture()) if config is not None else {}
    if num_classes is not None:
        expected["num_classes"] = num_classes
    for key, value in expected.items():
        if stored.architecture()[key] != value:
            raise CheckpointError(
                f"checkpoint {path} has {key}={stored.architecture()[key]!r}, expected {value!r}"
            )
    base = config if config is not None else stored
    rebuilt = base.model_copy(update={"weights": None, "random_init": True})
    model = build_classifier(rebuilt)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint {path} does not fit the model: {exc}") from exc
    return model
