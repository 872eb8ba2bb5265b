"""Y-channel PSNR/SSIM evaluation and diagnostic analyses.

Metrics follow the standard SR benchmark protocol: BT.601 studio-swing
luminance, a border crop of `scale` pixels per edge, and SSIM with an
11x11 Gaussian window. The analyses are channel-mean feature maps and
1-D radial spectral density profiles of such maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .degradation import bicubic_resize, degrade, derive_seed
from .model import ModelConfig, forward_unrolled


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """BT.601 studio-swing luminance, rescaled to [16/255, 235/255]."""
    ops.check_tensor4(img, "img")
    if img.shape[1] != 3:
        raise ValueError(f"expected 3 channels, got {img.shape[1]}")
    r, g, b = (img[:, i:i + 1].astype(np.float64) for i in range(3))
    return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0


def _crop_border(x: np.ndarray, border: int) -> np.ndarray:
    if border < 0 or 2 * border >= min(x.shape[2], x.shape[3]):
        raise ValueError(f"border crop {border} too large for {x.shape[2]}x{x.shape[3]}")
    if border == 0:
        return x
    return x[:, :, border:-border, border:-border]


def psnr(a: np.ndarray, b: np.ndarray, border_crop: int = 0) -> float:
    """Peak signal-to-noise ratio in dB on [0,1] data; inf for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = _crop_border(a, border_crop).astype(np.float64)
    b = _crop_border(b, border_crop).astype(np.float64)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _ssim_window(k: int = 11, sigma: float = 1.5) -> np.ndarray:
    off = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    g = np.exp(-(off * off) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return (win / win.sum()).reshape(1, 1, k, k)


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma 1.5, dynamic range 1."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[1] != 1:
        raise ValueError(f"ssim expects single-channel inputs, got {a.shape[1]} channels")
    win = _ssim_window()
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    # valid-mode windowed moments; conv with stride 1, no padding
    mu_a = ops.conv2d(a, win, None, 1, 0)
    mu_b = ops.conv2d(b, win, None, 1, 0)
    var_a = ops.conv2d(a * a, win, None, 1, 0) - mu_a * mu_a
    var_b = ops.conv2d(b * b, win, None, 1, 0) - mu_b * mu_b
    cov = ops.conv2d(a * b, win, None, 1, 0) - mu_a * mu_b
    c1, c2 = k1 * k1, k2 * k2
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    con = (2.0 * cov + c2) / (var_a + var_b + c2)
    return float(np.mean(lum * con))


def modcrop(img: np.ndarray, scale: int) -> np.ndarray:
    """Trim bottom/right so spatial dims are multiples of scale."""
    h, w = img.shape[2] - img.shape[2] % scale, img.shape[3] - img.shape[3] % scale
    return img[:, :, :h, :w]


@dataclass
class EvalReport:
    iterations: int
    names: list = field(default_factory=list)
    per_image: dict = field(default_factory=dict)  # name -> [(psnr, ssim) per iteration]

    def mean_psnr(self) -> list:
        return [float(np.mean([self.per_image[n][t][0] for n in self.names]))
                for t in range(self.iterations)]

    def mean_ssim(self) -> list:
        return [float(np.mean([self.per_image[n][t][1] for n in self.names]))
                for t in range(self.iterations)]

    def rows(self) -> list:
        out = []
        for name in self.names:
            for t, (p, s) in enumerate(self.per_image[name], 1):
                out.append({"name": name, "iteration": t, "psnr": p, "ssim": s})
        return out

    def summary(self) -> str:
        lines = [f"images: {len(self.names)}"]
        for t, (p, s) in enumerate(zip(self.mean_psnr(), self.mean_ssim()), 1):
            lines.append(f"iteration {t}: PSNR {p:.4f} dB  SSIM {s:.6f}")
        return "\n".join(lines)


def _y_metrics(sr: np.ndarray, hr: np.ndarray, border: int) -> tuple:
    y_sr = rgb_to_y(np.clip(sr, 0.0, 1.0)) if sr.shape[1] == 3 else np.clip(sr, 0.0, 1.0)
    y_hr = rgb_to_y(hr) if hr.shape[1] == 3 else hr
    return (psnr(y_sr, y_hr, border), ssim(_crop_border(y_sr, border), _crop_border(y_hr, border)))


def evaluate(weights: dict, config: ModelConfig, dataset: list, spec, border_crop: int | None = None,
             seed: int = 0) -> EvalReport:
    """Degrade each HR image, super-resolve, and score every iteration output.

    dataset is a list of (name, hr) pairs; HR images are modcropped to a
    multiple of the scale first.
    """
    if not dataset:
        raise ValueError("empty dataset")
    border = config.scale if border_crop is None else border_crop
    report = EvalReport(iterations=config.iterations)
    for name, hr in dataset:
        hr = modcrop(hr, config.scale)
        lr = degrade(hr, spec, derive_seed(seed, "eval", name))
        trace = forward_unrolled(lr, weights, config)
        report.names.append(name)
        report.per_image[name] = [_y_metrics(sr, hr, border) for sr in trace.sr_images()]
    return report


def evaluate_baseline(dataset: list, spec, scale: int, border_crop: int | None = None,
                      method: str = "bicubic", seed: int = 0) -> EvalReport:
    """Score a plain interpolation upsampler the same way evaluate scores a model."""
    if method not in ("bicubic", "bilinear"):
        raise ValueError(f"method must be 'bicubic' or 'bilinear', got {method!r}")
    if not dataset:
        raise ValueError("empty dataset")
    border = scale if border_crop is None else border_crop
    report = EvalReport(iterations=1)
    for name, hr in dataset:
        hr = modcrop(hr, scale)
        lr = degrade(hr, spec, derive_seed(seed, "eval", name))
        if method == "bicubic":
            sr = bicubic_resize(lr, scale, "up")
        else:
            sr = ops.bilinear_upsample(lr, scale)
        report.names.append(name)
        report.per_image[name] = [_y_metrics(sr, hr, border)]
    return report


def average_feature_map(f_out: np.ndarray) -> np.ndarray:
    """Channel mean of a single-image feature tensor, as a 2-D map."""
    ops.check_tensor4(f_out, "f_out")
    if f_out.shape[0] != 1:
        raise ValueError(f"expected batch 1, got {f_out.shape[0]}")
    return f_out[0].mean(axis=0)


def spectral_density(feature_map: np.ndarray, bins: int, return_counts: bool = False):
    """Radial profile of the 2-D power spectrum.

    The map is standardized to zero mean and unit variance first (skipped
    for a constant map, whose energy is pure DC), so profiles from maps of
    different magnitude are comparable. Bins partition normalized radial
    frequency [0, 0.5]; the spectrum corners beyond 0.5 fall into the last
    bin, so the binned totals conserve the full spectral energy. Empty
    bins report 0.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    fmap = np.asarray(feature_map, dtype=np.float64)
    if fmap.ndim != 2 or min(fmap.shape) < 2:
        raise ValueError(f"expected a 2-D map at least 2x2, got shape {fmap.shape}")
    std = fmap.std()
    if std > 1e-12:
        fmap = (fmap - fmap.mean()) / std
    power = np.abs(np.fft.fftshift(np.fft.fft2(fmap))) ** 2
    h, w = fmap.shape
    fy = (np.arange(h) - h // 2) / h
    fx = (np.arange(w) - w // 2) / w
    radius = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    which = np.minimum((radius / 0.5 * bins).astype(np.int64), bins - 1)
    counts = np.bincount(which.ravel(), minlength=bins).astype(np.float64)
    sums = np.bincount(which.ravel(), weights=power.ravel(), minlength=bins)
    profile = np.divide(sums, counts, out=np.zeros(bins), where=counts > 0)
    if return_counts:
        return profile, counts
    return profile
