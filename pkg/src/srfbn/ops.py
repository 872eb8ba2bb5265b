"""Dense 4-D tensor kernels: convolution, transposed convolution, PReLU,
bilinear upsampling and L1, each with the matching backward kernels.

All activations are numpy arrays of shape (batch, channels, height, width).
Kernels preserve the input dtype, so the same code runs the float32
production path and the float64 shadow path used by the finite-difference
tests. Convolution uses the cross-correlation convention (no kernel flip)
with zero padding.
"""

from __future__ import annotations

import numpy as np


def check_tensor4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (n, c, h, w), got shape {x.shape}")
    return x


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def deconv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size - 1) * stride - 2 * pad + k


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Unfold (n, c, h, w) into patch columns of shape (n, c*k*k, oh*ow)."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    if pad > 0:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = np.ascontiguousarray(x)
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, k, k, oh, ow),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return windows.reshape(n, c * k * k, oh * ow)


def _col2im(cols: np.ndarray, x_shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch columns back onto the image."""
    n, c, h, w = x_shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    cols6 = cols.reshape(n, c, k, k, oh, ow)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols6[:, :, i, j]
    return xp[:, :, pad : pad + h, pad : pad + w]


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int, pad: int) -> np.ndarray:
    """Strided 2-D cross-correlation. w has shape (c_out, c_in, k, k)."""
    check_tensor4(x, "conv2d input")
    n, c, h, wd = x.shape
    c_out, c_in, k, k2 = w.shape
    if k != k2:
        raise ValueError(f"conv2d kernel must be square, got {k}x{k2}")
    if c != c_in:
        raise ValueError(f"conv2d channel mismatch: input has {c}, weights expect {c_in}")
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(wd, k, stride, pad)
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d output dims {oh}x{ow} non-positive for input {h}x{wd}, k={k}, s={stride}, p={pad}")
    cols = _im2col(x, k, stride, pad)
    out = np.matmul(w.reshape(c_out, -1), cols)  # (n, c_out, oh*ow) by broadcasting
    out = out.reshape(n, c_out, oh, ow)
    if b is not None:
        out = out + b.reshape(1, c_out, 1, 1)
    return out


def conv2d_grad_input(gy: np.ndarray, w: np.ndarray, stride: int, pad: int, h: int, wd: int) -> np.ndarray:
    """Gradient of conv2d w.r.t. its input; (h, wd) are the input spatial dims."""
    n, c_out, oh, ow = gy.shape
    c_out_w, c_in, k, _ = w.shape
    cols = np.matmul(w.reshape(c_out_w, -1).T, gy.reshape(n, c_out, oh * ow))
    return _col2im(cols, (n, c_in, h, wd), k, stride, pad)


def conv2d_grad_weight(x: np.ndarray, gy: np.ndarray, stride: int, pad: int, k: int) -> np.ndarray:
    n, c, _, _ = x.shape
    _, c_out, oh, ow = gy.shape
    cols = _im2col(x, k, stride, pad)  # (n, c*k*k, oh*ow)
    gw = np.matmul(gy.reshape(n, c_out, oh * ow), cols.transpose(0, 2, 1)).sum(axis=0)
    return gw.reshape(c_out, c, k, k)


def conv2d_grad_bias(gy: np.ndarray) -> np.ndarray:
    return gy.sum(axis=(0, 2, 3))


def deconv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int, pad: int) -> np.ndarray:
    """Transposed convolution (the adjoint of conv2d with the same w, stride, pad).

    w has shape (c_in, c_out, k, k), where c_in is the channel count of x.
    Output spatial dims are (size - 1) * stride - 2 * pad + k.
    """
    check_tensor4(x, "deconv2d input")
    n, c, h, wd = x.shape
    c_in, c_out, k, k2 = w.shape
    if k != k2:
        raise ValueError(f"deconv2d kernel must be square, got {k}x{k2}")
    if c != c_in:
        raise ValueError(f"deconv2d channel mismatch: input has {c}, weights expect {c_in}")
    oh = deconv_out_size(h, k, stride, pad)
    ow = deconv_out_size(wd, k, stride, pad)
    if oh < 1 or ow < 1:
        raise ValueError(f"deconv2d output dims {oh}x{ow} non-positive for input {h}x{wd}, k={k}, s={stride}, p={pad}")
    # Exactly conv2d_grad_input with x in the role of the upstream gradient.
    out = conv2d_grad_input(x, w, stride, pad, oh, ow)
    if b is not None:
        out = out + b.reshape(1, c_out, 1, 1)
    return out


def deconv2d_grad_input(gy: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    return conv2d(gy, w, None, stride, pad)


def deconv2d_grad_weight(x: np.ndarray, gy: np.ndarray, stride: int, pad: int, k: int) -> np.ndarray:
    # d/dw <gy, A_w^T x> = d/dw <A_w gy, x>, so reuse the conv weight gradient
    # with gy acting as the convolution input and x as its upstream gradient.
    return conv2d_grad_weight(gy, x, stride, pad, k)


def prelu(x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Channel-wise PReLU: x if x >= 0 else alpha[c] * x."""
    check_tensor4(x, "prelu input")
    if alpha.shape != (x.shape[1],):
        raise ValueError(f"prelu alpha length {alpha.shape} does not match {x.shape[1]} channels")
    a = alpha.reshape(1, -1, 1, 1)
    return np.where(x >= 0, x, a * x)


def prelu_grad(x: np.ndarray, alpha: np.ndarray, gy: np.ndarray):
    a = alpha.reshape(1, -1, 1, 1)
    gx = np.where(x >= 0, gy, a * gy)
    galpha = np.where(x >= 0, np.zeros((), dtype=x.dtype), x * gy).sum(axis=(0, 2, 3))
    return gx, galpha


def _linear_coeffs(n_in: int, scale: int):
    """Source indices and blend weights for 1-D bilinear upsampling.

    Sample centers follow the half-pixel convention (i + 0.5) / scale - 0.5
    with edge clamping.
    """
    src = (np.arange(n_in * scale, dtype=np.float64) + 0.5) / scale - 0.5
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    i1 = np.clip(i0 + 1, 0, n_in - 1)
    i0 = np.clip(i0, 0, n_in - 1)
    return i0, i1, frac


def bilinear_upsample(x: np.ndarray, scale: int) -> np.ndarray:
    check_tensor4(x, "bilinear input")
    if scale not in (2, 3, 4):
        raise ValueError(f"unsupported upsample scale {scale}")
    n, c, h, w = x.shape
    i0, i1, fh = _linear_coeffs(h, scale)
    fh = fh.astype(x.dtype).reshape(1, 1, -1, 1)
    tmp = x[:, :, i0, :] * (1 - fh) + x[:, :, i1, :] * fh
    j0, j1, fw = _linear_coeffs(w, scale)
    fw = fw.astype(x.dtype).reshape(1, 1, 1, -1)
    return tmp[:, :, :, j0] * (1 - fw) + tmp[:, :, :, j1] * fw


def bilinear_upsample_grad(gy: np.ndarray, x_shape: tuple, scale: int) -> np.ndarray:
    n, c, h, w = x_shape
    i0, i1, fh = _linear_coeffs(h, scale)
    j0, j1, fw = _linear_coeffs(w, scale)
    fw = fw.astype(gy.dtype).reshape(1, 1, 1, -1)
    tmp = np.zeros((n, c, h * scale, w), dtype=gy.dtype)
    np.add.at(tmp, (slice(None), slice(None), slice(None), j0), gy * (1 - fw))
    np.add.at(tmp, (slice(None), slice(None), slice(None), j1), gy * fw)
    fh = fh.astype(gy.dtype).reshape(1, 1, -1, 1)
    gx = np.zeros((n, c, h, w), dtype=gy.dtype)
    np.add.at(gx, (slice(None), slice(None), i0, slice(None)), tmp * (1 - fh))
    np.add.at(gx, (slice(None), slice(None), i1, slice(None)), tmp * fh)
    return gx


def concat_channels(parts: list) -> np.ndarray:
    if not parts:
        raise ValueError("concat_channels needs at least one part")
    first = parts[0]
    for p in parts[1:]:
        if p.shape[0] != first.shape[0] or p.shape[2:] != first.shape[2:]:
            raise ValueError(f"concat_channels batch/spatial mismatch: {p.shape} vs {first.shape}")
    return np.concatenate(parts, axis=1)


def l1_loss(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    if pred.shape != target.shape:
        raise ValueError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    return np.abs(pred - target).mean(dtype=pred.dtype)


def l1_loss_grad(pred: np.ndarray, target: np.ndarray, gy) -> np.ndarray:
    # Subgradient at zero is taken as 0 (np.sign(0) == 0).
    return np.sign(pred - target) * (gy / pred.size)


def dihedral_transform(x: np.ndarray, variant: int) -> np.ndarray:
    """One of the 8 flip/rotation symmetries of a (n, c, h, w) batch.

    Variants 0..3 rotate by 90*variant degrees; 4..7 additionally mirror
    horizontally first.
    """
    if variant not in range(8):
        raise ValueError(f"variant must be 0..7, got {variant}")
    if variant >= 4:
        x = np.flip(x, axis=3)
    return np.rot90(x, k=variant % 4, axes=(2, 3)).copy()


def dihedral_inverse(x: np.ndarray, variant: int) -> np.ndarray:
    """Undo dihedral_transform(_, variant)."""
    if variant not in range(8):
        raise ValueError(f"variant must be 0..7, got {variant}")
    x = np.rot90(x, k=-(variant % 4), axes=(2, 3))
    if variant >= 4:
        x = np.flip(x, axis=3)
    return x.copy()


def mse_loss(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return (diff * diff).mean(dtype=pred.dtype)


def mse_loss_grad(pred: np.ndarray, target: np.ndarray, gy) -> np.ndarray:
    return (pred - target) * (2.0 * gy / pred.size)
