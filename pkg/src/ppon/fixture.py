"""Deterministic synthetic image fixture: eight 256x256 RGB images (two
each of gradients, checkerboards, gaussian blobs and text-like glyph
grids), so training and evaluation need no dataset download."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import save_image
from .tensor import Tensor

FIXTURE_SIZE = 256
FIXTURE_NAMES = (
    "grad_bands.png",
    "grad_waves.png",
    "checker_08.png",
    "checker_06.png",
    "blobs_a.png",
    "blobs_b.png",
    "glyphs_a.png",
    "glyphs_b.png",
)


def _coords(size):
    y, x = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    return y.astype(np.float64), x.astype(np.float64)


def _gradient_bands(size, seed):
    """Smooth color ramps folded into piecewise bands with crease lines."""
    rng = np.random.default_rng(seed)
    y, x = _coords(size)
    img = np.zeros((3, size, size))
    for c in range(3):
        ang = rng.uniform(0, 2 * np.pi)
        period = rng.uniform(60, 150)
        t = (np.cos(ang) * x + np.sin(ang) * y) / period
        tri = 2.0 * np.abs(t - np.floor(t) - 0.5)  # triangle wave: linear bands
        img[c] = 0.15 + 0.7 * tri
    return img


def _gradient_waves(size, seed):
    rng = np.random.default_rng(seed)
    y, x = _coords(size)
    base = np.stack(
        [
            x / size,
            y / size,
            0.5 + 0.5 * np.cos(2 * np.pi * (x + y) / (1.6 * size)),
        ]
    )
    ang = rng.uniform(0, np.pi)
    ripple = 0.12 * np.sin(2 * np.pi * (np.cos(ang) * x + np.sin(ang) * y) / 23.0)
    return np.clip(base + ripple[None], 0.0, 1.0)


def _checker(size, cell, colors):
    y, x = _coords(size)
    parity = ((y // cell).astype(int) + (x // cell).astype(int)) % 2
    a = np.asarray(colors[0], dtype=np.float64).reshape(3, 1, 1)
    b = np.asarray(colors[1], dtype=np.float64).reshape(3, 1, 1)
    return np.where(parity[None] == 0, a, b)


def _blobs(size, seed, count=45):
    rng = np.random.default_rng(seed)
    y, x = _coords(size)
    img = np.full((3, size, size), 0.08)
    for _ in range(count):
        cy, cx = rng.uniform(0, size, 2)
        sig = rng.uniform(2.5, 9.0)
        color = rng.uniform(0.25, 1.0, 3)
        blob = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * sig * sig))
        img += color.reshape(3, 1, 1) * blob[None]
    return np.clip(img, 0.0, 1.0)


def _glyphs(size, seed):
    """Rows of random thick strokes on a light background, text-like."""
    rng = np.random.default_rng(seed)
    img = np.full((3, size, size), 0.92)
    ink = rng.uniform(0.0, 0.25, 3).reshape(3, 1, 1)
    line_h, gap = 18, 10
    yrow = 8
    while yrow + line_h < size - 4:
        xp = 6
        while xp < size - 16:
            glyph_w = int(rng.integers(6, 15))
            n_strokes = int(rng.integers(2, 5))
            for _ in range(n_strokes):
                if rng.integers(2):  # vertical stroke
                    sx = xp + int(rng.integers(0, max(1, glyph_w - 2)))
                    img[:, yrow : yrow + line_h, sx : sx + 2] = ink
                else:  # horizontal stroke
                    sy = yrow + int(rng.integers(0, line_h - 2))
                    img[:, sy : sy + 2, xp : xp + glyph_w] = ink
            xp += glyph_w + int(rng.integers(3, 7))
        yrow += line_h + gap
    return img


def fixture_images() -> dict:
    """name -> (1, 3, 256, 256) tensor, fully deterministic."""
    s = FIXTURE_SIZE
    arrays = {
        "grad_bands.png": _gradient_bands(s, 101),
        "grad_waves.png": _gradient_waves(s, 202),
        "checker_08.png": _checker(s, 8, [(0.95, 0.9, 0.2), (0.1, 0.2, 0.75)]),
        "checker_06.png": _checker(s, 6, [(0.85, 0.15, 0.2), (0.15, 0.8, 0.5)]),
        "blobs_a.png": _blobs(s, 303),
        "blobs_b.png": _blobs(s, 404, count=70),
        "glyphs_a.png": _glyphs(s, 505),
        "glyphs_b.png": _glyphs(s, 606),
    }
    return {
        name: Tensor(arr[None].astype(np.float32)) for name, arr in arrays.items()
    }


def write_fixture(out_dir) -> Path:
    """Write the eight PNGs plus a manifest file; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = fixture_images()
    for name, img in images.items():
        save_image(img, out_dir / name)
    manifest = out_dir / "manifest.txt"
    manifest.write_text("".join(name + "\n" for name in FIXTURE_NAMES))
    return manifest
