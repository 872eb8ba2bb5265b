"""PNG image I/O and synthetic test imagery.

Images travel through the pipeline as (1, c, h, w) float arrays in [0,1].
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

EXTENSIONS = (".png", ".bmp", ".jpg", ".jpeg")


def load_image(path: str) -> np.ndarray:
    """8-bit image file -> (1, 3, h, w) float32 in [0,1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return rgb.transpose(2, 0, 1)[None]


def save_image(arr: np.ndarray, path: str) -> None:
    """(1, c, h, w) array in [0,1] -> 8-bit PNG (grayscale when c == 1)."""
    if arr.ndim != 4 or arr.shape[0] != 1 or arr.shape[1] not in (1, 3):
        raise ValueError(f"expected (1, 1|3, h, w), got {np.shape(arr)}")
    data = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)[0]
    quantized = np.round(data * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(quantized[:, :, 0] if quantized.shape[2] == 1 else quantized).save(path)


def save_gray_map(map2d: np.ndarray, path: str) -> None:
    """2-D map -> min-max normalized 8-bit grayscale PNG."""
    m = np.asarray(map2d, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {m.shape}")
    lo, hi = m.min(), m.max()
    norm = np.zeros_like(m) if hi - lo < 1e-12 else (m - lo) / (hi - lo)
    Image.fromarray(np.round(norm * 255.0).astype(np.uint8)).save(path)


def load_dataset_dir(path: str) -> list:
    """All images in a directory, sorted by name -> [(stem, (1,3,h,w) array)]."""
    if not os.path.isdir(path):
        raise FileNotFoundError(f"dataset directory not found: {path}")
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(EXTENSIONS))
    if not names:
        raise FileNotFoundError(f"no images under {path}")
    return [(os.path.splitext(f)[0], load_image(os.path.join(path, f))) for f in names]


def synthetic_image(h: int, w: int, seed: int = 0) -> np.ndarray:
    """Textured RGB test image, (1, 3, h, w) float32 in [0,1].

    Oriented sinusoidal gratings plus broad Gaussian blobs, mixed per
    channel. Grating frequencies reach past the x2 downsampling cutoff, so
    plain interpolation leaves clear headroom for a learned upsampler.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    layers = []
    for _ in range(8):
        freq = rng.uniform(0.03, 0.32)
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2 * np.pi)
        layers.append(np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase))
    for _ in range(4):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        s = rng.uniform(0.12, 0.3) * min(h, w)
        layers.append(2.0 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s)) - 0.5)
    stack = np.stack(layers)
    mix = rng.uniform(0.2, 1.0, (3, len(layers)))
    img = np.tensordot(mix, stack, axes=1)
    lo, hi = img.min(), img.max()
    img = 0.05 + 0.9 * (img - lo) / (hi - lo)
    return img[None].astype(np.float32)
