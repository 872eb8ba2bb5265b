"""HR -> LR degradation pipelines and training patch sampling.

Three degradations: plain bicubic downsampling, Gaussian blur followed by
bicubic downsampling, and bicubic downsampling followed by additive
Gaussian noise. Resampling uses the Keys cubic kernel (a = -0.5) with the
support widened by the scale factor when downsampling, which is the
convention the standard SR benchmarks are prepared with.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import ops

KINDS = ("BI", "BD", "DN")

# network input patch side per scale factor (LR pixels)
DEFAULT_PATCH_SIZE = {2: 60, 3: 50, 4: 40}


def derive_seed(seed: int, *keys) -> int:
    """Stable child seed from a root seed and a path of str/int keys."""
    entropy = [seed & 0xFFFFFFFF]
    for key in keys:
        entropy.append(zlib.crc32(key.encode()) if isinstance(key, str) else int(key) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    scale: int
    blur_kernel_size: int = 7
    blur_sigma: float = 1.6
    noise_sigma: float = 30.0  # on the 8-bit scale

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.blur_kernel_size % 2 == 0 or self.blur_sigma <= 0:
            raise ValueError("blur kernel must be odd sized with positive sigma")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be nonnegative")


def _keys_cubic(x: np.ndarray) -> np.ndarray:
    # Keys (1981) cubic with a = -0.5
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = 1.5 * ax3 - 2.5 * ax2 + 1.0
    far = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _resize_contributions(n_in: int, n_out: int):
    """Sample positions, tap indices and normalized tap weights for one axis."""
    ratio = n_out / n_in
    u = (np.arange(n_out, dtype=np.float64) + 0.5) / ratio - 0.5
    kwidth = 4.0
    if ratio < 1.0:  # anti-alias: stretch the kernel over the decimation footprint
        kwidth /= ratio
    left = np.floor(u - kwidth / 2.0).astype(np.int64) + 1
    taps = int(np.ceil(kwidth)) + 2
    idx = left[:, None] + np.arange(taps)
    dist = u[:, None] - idx
    weights = ratio * _keys_cubic(dist * ratio) if ratio < 1.0 else _keys_cubic(dist)
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)  # replicate at the borders
    return idx, weights


def _resize_axis(x: np.ndarray, axis: int, n_out: int) -> np.ndarray:
    idx, weights = _resize_contributions(x.shape[axis], n_out)
    gathered = x.take(idx, axis=axis)  # inserts a taps axis after `axis`
    shape = [1] * gathered.ndim
    shape[axis], shape[axis + 1] = idx.shape
    return (gathered * weights.reshape(shape)).sum(axis=axis + 1)


def bicubic_resize(img: np.ndarray, scale: int, direction: str) -> np.ndarray:
    ops.check_tensor4(img, "img")
    if scale not in (2, 3, 4):
        raise ValueError(f"scale must be 2, 3 or 4, got {scale}")
    n, c, h, w = img.shape
    if direction == "down":
        if h % scale or w % scale:
            raise ValueError(f"{h}x{w} image not divisible by scale {scale}")
        oh, ow = h // scale, w // scale
    elif direction == "up":
        oh, ow = h * scale, w * scale
    else:
        raise ValueError(f"direction must be 'down' or 'up', got {direction!r}")
    out = _resize_axis(img.astype(np.float64), 2, oh)
    out = _resize_axis(out, 3, ow)
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def blur_kernel(k: int, sigma: float) -> np.ndarray:
    """Normalized k x k Gaussian sampled at integer offsets."""
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    off = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    g = np.exp(-(off * off) / (2.0 * sigma * sigma))
    kern = np.outer(g, g)
    return kern / kern.sum()


def gaussian_blur(img: np.ndarray, k: int, sigma: float) -> np.ndarray:
    """Channelwise Gaussian blur with replicate padding.

    Applied separably; the effective 2-D kernel is blur_kernel(k, sigma).
    """
    ops.check_tensor4(img, "img")
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    off = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    g = np.exp(-(off * off) / (2.0 * sigma * sigma))
    g /= g.sum()
    r = (k - 1) // 2
    padded = np.pad(img.astype(np.float64), ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")
    h, w = img.shape[2], img.shape[3]
    rows = np.zeros((img.shape[0], img.shape[1], h, w + 2 * r))
    for i in range(k):
        rows += g[i] * padded[:, :, i:i + h, :]
    out = np.zeros(img.shape, dtype=np.float64)
    for j in range(k):
        out += g[j] * rows[:, :, :, j:j + w]
    return out.astype(img.dtype)


def add_gaussian_noise(img: np.ndarray, sigma255: float, seed: int) -> np.ndarray:
    ops.check_tensor4(img, "img")
    if sigma255 < 0:
        raise ValueError(f"noise sigma must be nonnegative, got {sigma255}")
    if sigma255 == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    noisy = img + rng.normal(0.0, sigma255 / 255.0, img.shape)
    return np.clip(noisy, 0.0, 1.0).astype(img.dtype)


def degrade(hr: np.ndarray, spec: DegradationSpec, seed: int = 0) -> np.ndarray:
    if spec.kind == "BD":
        hr = gaussian_blur(hr, spec.blur_kernel_size, spec.blur_sigma)
    lr = bicubic_resize(hr, spec.scale, "down")
    if spec.kind == "DN":
        lr = add_gaussian_noise(lr, spec.noise_sigma, seed)
    return lr


@dataclass
class PatchPair:
    lr_patch: np.ndarray
    hr_patch: np.ndarray
    variant: int = 0  # dihedral augmentation id, 0 = identity

    def __post_init__(self):
        if self.hr_patch.shape[2] % self.lr_patch.shape[2] or self.hr_patch.shape[3] % self.lr_patch.shape[3]:
            raise ValueError("hr patch dims must be integer multiples of lr patch dims")


def augment(pair: PatchPair, variant: int) -> PatchPair:
    return PatchPair(ops.dihedral_transform(pair.lr_patch, variant),
                     ops.dihedral_transform(pair.hr_patch, variant), variant)


def sample_patch_pairs(hr_images: list, spec: DegradationSpec, scale: int, count: int,
                       seed: int, patch_size: int | None = None) -> list:
    """Aligned random LR/HR crops with random dihedral augmentation.

    Each HR image is degraded once in full, then patches are cropped from
    the degraded result so patch interiors never see resampling borders.
    """
    if scale != spec.scale:
        raise ValueError(f"scale {scale} disagrees with spec scale {spec.scale}")
    p = DEFAULT_PATCH_SIZE[scale] if patch_size is None else patch_size
    lr_images = [degrade(hr, spec, derive_seed(seed, "degrade", i)) for i, hr in enumerate(hr_images)]
    for i, lr in enumerate(lr_images):
        if lr.shape[2] < p or lr.shape[3] < p:
            raise ValueError(f"image {i} too small: LR {lr.shape[2]}x{lr.shape[3]} for {p}x{p} patches")
    rng = np.random.default_rng(derive_seed(seed, "crops"))
    pairs = []
    for _ in range(count):
        i = int(rng.integers(len(hr_images)))
        lr, hr = lr_images[i], hr_images[i]
        y = int(rng.integers(lr.shape[2] - p + 1))
        x = int(rng.integers(lr.shape[3] - p + 1))
        pair = PatchPair(lr[:, :, y:y + p, x:x + p],
                         hr[:, :, scale * y:scale * (y + p), scale * x:scale * (x + p)])
        pairs.append(augment(pair, int(rng.integers(8))))
    return pairs
