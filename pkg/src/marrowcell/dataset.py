"""Dataset indexing, random subsetting, stratified splitting and image loading.

On-disk layout is ``<root>/<CLASS_CODE>/**/<image>``. An index is persisted
as a tab-separated manifest (id, relative path, class code) preceded by a
``#key=value`` lineage header.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, EmptyDatasetError, ImageDecodeError, ManifestError
from .taxonomy import ClassTaxonomy

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = frozenset({".jpg", ".jpeg", ".png", ".tif", ".tiff", ".bmp"})
DEFAULT_INPUT_SIZE = 299


class DatasetWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SampleRecord:
    path: Path
    label: int
    id: str


@dataclass(frozen=True)
class Lineage:
    root: str
    subset_fraction: float | None = None
    subset_seed: int | None = None
    subset_mode: str | None = None
    split: str | None = None
    train_fraction: float | None = None
    split_seed: int | None = None

    def as_dict(self) -> dict:
        return {
            "root": self.root,
            "subset_fraction": self.subset_fraction,
            "subset_seed": self.subset_seed,
            "subset_mode": self.subset_mode,
            "split": self.split,
            "train_fraction": self.train_fraction,
            "split_seed": self.split_seed,
        }


@dataclass(frozen=True)
class DatasetIndex:
    samples: tuple[SampleRecord, ...]
    lineage: Lineage
    scan_warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ConfigError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> set[str]:
        return {s.id for s in self.samples}

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def class_counts(self, taxonomy: ClassTaxonomy) -> dict[str, int]:
        counts = dict.fromkeys(taxonomy.codes, 0)
        for s in self.samples:
            counts[taxonomy.code_of(s.label)] += 1
        return counts


@dataclass(frozen=True)
class ImageBatch:
    pixels: np.ndarray  # (batch, size, size, 3) float32 in [-1, 1]
    labels: np.ndarray  # (batch,) int64

    def __post_init__(self):
        if self.pixels.ndim != 4 or self.pixels.shape[-1] != 3:
            raise ValueError(f"pixels must be (N, H, W, 3), got {self.pixels.shape}")
        if len(self.pixels) != len(self.labels):
            raise ValueError("pixels and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)


def _floor_fraction(fraction: float, n: int) -> int:
    # Decimal reading of the fraction so that e.g. 0.29 * 100 floors to 29, not 28.
    return math.floor(Fraction(str(fraction)) * n)


def scan_dataset(root: str | Path, taxonomy: ClassTaxonomy) -> DatasetIndex:
    if not Path(root).is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    root = Path(root).resolve()
    samples: list[SampleRecord] = []
    notes: list[str] = []
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            if entry.suffix.lower() in IMAGE_SUFFIXES:
                notes.append(f"image outside any class folder ignored: {entry.name}")
            continue
        if entry.name not in taxonomy:
            n = sum(1 for p in entry.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
            notes.append(f"unrecognized class folder {entry.name!r} skipped ({n} images)")
            continue
        label = taxonomy.index_of(entry.name)
        for path in sorted(entry.rglob("*")):
            if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
                rel = path.relative_to(root).as_posix()
                samples.append(SampleRecord(path=path, label=label, id=rel))
    for note in notes:
        log.warning("scan %s: %s", root, note)
    if not samples:
        raise EmptyDatasetError(f"no images found under {root}")
    return DatasetIndex(tuple(samples), Lineage(root=str(root)), tuple(notes))


def sample_subset(
    index: DatasetIndex, fraction: float, seed: int, stratified: bool = False
) -> DatasetIndex:
    """Draw ``floor(fraction * N)`` samples uniformly without replacement.

    With ``stratified=True`` the floor is taken per class instead, so the
    total can fall slightly below ``floor(fraction * N)``.
    """
    if not 0 < fraction <= 1:
        raise ConfigError(f"subset fraction must be in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    if stratified:
        chosen: list[int] = []
        for positions in _positions_by_label(index).values():
            k = _floor_fraction(fraction, len(positions))
            chosen.extend(rng.choice(positions, size=k, replace=False).tolist())
    else:
        k = _floor_fraction(fraction, len(index))
        chosen = rng.choice(len(index), size=k, replace=False).tolist()
    picked = tuple(index.samples[i] for i in sorted(chosen))
    lineage = replace(
        index.lineage,
        subset_fraction=fraction,
        subset_seed=seed,
        subset_mode="stratified" if stratified else "uniform",
    )
    return DatasetIndex(picked, lineage)


def _positions_by_label(index: DatasetIndex) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for pos, s in enumerate(index.samples):
        groups.setdefault(s.label, []).append(pos)
    return dict(sorted(groups.items()))


def stratified_split(
    index: DatasetIndex, train_fraction: float, seed: int
) -> tuple[DatasetIndex, DatasetIndex]:
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_pos: list[int] = []
    val_pos: list[int] = []
    for label, positions in _positions_by_label(index).items():
        if len(positions) == 1:
            warnings.warn(
                f"class index {label} has a single sample; assigned to train",
                DatasetWarning,
                stacklevel=2,
            )
            train_pos.extend(positions)
            continue
        order = rng.permutation(positions).tolist()
        k = _floor_fraction(train_fraction, len(positions))
        train_pos.extend(order[:k])
        val_pos.extend(order[k:])

    def part(positions: list[int], name: str) -> DatasetIndex:
        lineage = replace(
            index.lineage, split=name, train_fraction=train_fraction, split_seed=seed
        )
        return DatasetIndex(tuple(index.samples[i] for i in sorted(positions)), lineage)

    return part(train_pos, "train"), part(val_pos, "val")


def _decode(path: Path, input_size: int) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((input_size, input_size), Image.BILINEAR)
            return np.asarray(img, dtype=np.float32)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageDecodeError(path, str(exc)) from exc


def load_batch(
    records: Sequence[SampleRecord],
    input_size: int = DEFAULT_INPUT_SIZE,
    augment: bool = False,
    rng: np.random.Generator | None = None,
    workers: int = 1,
) -> ImageBatch:
    """Decode, resize (bilinear) and scale images to [-1, 1].

    Augmentation, when on, applies random flips and quarter-turn rotations.
    """
    paths = [r.path for r in records]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            arrays = list(pool.map(lambda p: _decode(p, input_size), paths))
    else:
        arrays = [_decode(p, input_size) for p in paths]
    if arrays:
        pixels = np.stack(arrays) / np.float32(127.5) - np.float32(1.0)
    else:
        pixels = np.zeros((0, input_size, input_size, 3), dtype=np.float32)
    if augment:
        rng = rng if rng is not None else np.random.default_rng()
        for i in range(len(pixels)):
            img = pixels[i]
            if rng.random() < 0.5:
                img = img[:, ::-1]
            if rng.random() < 0.5:
                img = img[::-1]
            pixels[i] = np.rot90(img, k=int(rng.integers(4)))
    labels = np.array([r.label for r in records], dtype=np.int64)
    return ImageBatch(np.ascontiguousarray(pixels, dtype=np.float32), labels)


def iter_batches(
    index: DatasetIndex, batch_size: int, order: Iterable[int] | None = None
) -> Iterable[list[SampleRecord]]:
    positions = list(range(len(index))) if order is None else list(order)
    for start in range(0, len(positions), batch_size):
        yield [index.samples[i] for i in positions[start : start + batch_size]]


# ---------------------------------------------------------------------------
# manifest files


def write_index(index: DatasetIndex, path: str | Path, taxonomy: ClassTaxonomy) -> Path:
    path = Path(path)
    root = Path(index.lineage.root)
    lines = [f"#{k}={'' if v is None else v}" for k, v in index.lineage.as_dict().items()]
    for s in index.samples:
        try:
            rel = s.path.relative_to(root).as_posix()
        except ValueError:
            rel = s.path.resolve().as_posix()
        lines.append(f"{s.id}\t{rel}\t{taxonomy.code_of(s.label)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


_LINEAGE_TYPES = {
    "root": str,
    "subset_fraction": float,
    "subset_seed": int,
    "subset_mode": str,
    "split": str,
    "train_fraction": float,
    "split_seed": int,
}


def read_index(path: str | Path, taxonomy: ClassTaxonomy) -> DatasetIndex:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    header: dict = {}
    samples: list[SampleRecord] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if not sep or key not in _LINEAGE_TYPES:
                raise ManifestError(f"{path}:{lineno}: bad header line {line!r}")
            try:
                header[key] = _LINEAGE_TYPES[key](value) if value != "" else None
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ManifestError(f"{path}:{lineno}: expected 3 tab-separated fields")
        sid, rel, code = parts
        if code not in taxonomy:
            raise ManifestError(f"{path}:{lineno}: unknown class code {code!r}")
        samples.append(SampleRecord(path=Path(rel), label=taxonomy.index_of(code), id=sid))
    if header.get("root") is None:
        raise ManifestError(f"{path}: lineage header lacks 'root'")
    root = Path(header["root"])
    samples = [replace(s, path=s.path if s.path.is_absolute() else root / s.path) for s in samples]
    try:
        return DatasetIndex(tuple(samples), Lineage(**header))
    except ConfigError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
