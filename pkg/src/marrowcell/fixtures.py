"""Procedural class-folder image trees for desk-scale runs.

Each class gets a fixed colour (cell and tinted background) and stripe
pattern derived from its label index, overlaid with seeded noise, so a small classifier can separate them.
"""

from __future__ import annotations

import colorsys
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from .errors import ConfigError
from .taxonomy import ClassTaxonomy


def class_signature(label: int, num_classes: int) -> tuple[np.ndarray, int, bool]:
    """RGB base colour (0..255), stripe period in pixels, stripe orientation."""
    # stride through the hue circle so neighbouring labels get distant hues
    hue = ((label * 8) % num_classes) / num_classes
    rgb = np.array(colorsys.hsv_to_rgb(hue, 0.75, 0.85)) * 255.0
    period = 4 + 2 * (label % 4)
    vertical = bool(label % 2)
    return rgb, period, vertical


def render_cell(label: int, num_classes: int, size: int, rng: np.random.Generator) -> np.ndarray:
    rgb, period, vertical = class_signature(label, num_classes)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    coord = xx if vertical else yy
    stripes = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * (coord + rng.integers(period)) / period))
    # disc-shaped "cell" on a pale background
    cy, cx = rng.uniform(0.45, 0.55, size=2) * size
    radius = rng.uniform(0.33, 0.4) * size
    inside = ((yy - cy) ** 2 + (xx - cx) ** 2) <= radius**2
    img = np.empty((size, size, 3))
    img[:] = 0.5 * rgb + 0.5 * 235.0
    shade = 0.7 + 0.3 * stripes
    img[inside] = rgb * shade[inside, None]
    img += rng.normal(0.0, 8.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_synthetic_fixture(
    counts: Mapping[str, int],
    out: str | Path,
    taxonomy: ClassTaxonomy,
    image_size: int = 64,
    seed: int = 0,
) -> Path:
    """Write ``<out>/<CODE>/<CODE>_<nnnn>.png`` for each requested class."""
    bad = [code for code in counts if code not in taxonomy]
    if bad:
        raise ConfigError(f"unknown class codes in fixture spec: {', '.join(sorted(bad))}")
    if image_size < 8:
        raise ConfigError(f"fixture image_size must be >= 8, got {image_size}")
    out = Path(out)
    for code, n in counts.items():
        if n < 0:
            raise ConfigError(f"negative image count for {code}")
        label = taxonomy.index_of(code)
        folder = out / code
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            rng = np.random.default_rng([seed, label, i])
            pixels = render_cell(label, len(taxonomy), image_size, rng)
            Image.fromarray(pixels).save(folder / f"{code}_{i:04d}.png")
    return out
