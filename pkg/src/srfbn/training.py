"""Curriculum targets, multi-output loss, and the training loop.

The loss averages per-iteration L1 terms, (1/T) * sum_t W_t * |SR_t - HR_t|.
Under the blur and noise degradations the first ceil(T/2) iterations are
supervised with degraded targets (blurred, respectively noisy, HR images)
and the remaining iterations with the clean HR image, so later iterations
solve the harder task. Noisy targets are redrawn every step rather than
fixed once, to avoid fitting a single noise realization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .checkpoint import checkpoint_load
from .degradation import (DegradationSpec, add_gaussian_noise, derive_seed,
                          gaussian_blur, sample_patch_pairs)
from .model import ModelConfig, build_model, forward_unrolled, wrap_params
from .optim import AdamState, adam_step


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite."""


@dataclass
class TrainingConfig:
    epochs: int = 1
    batch_size: int = 16
    lr0: float = 1e-4
    lr_decay_factor: float = 0.5
    lr_decay_period_epochs: int = 200
    patches_per_epoch: int = 256
    patch_size: int | None = None  # None: the per-scale default
    seed: int = 0
    loss_weights: list | None = None  # None: 1.0 per iteration

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.epochs < 0 or self.patches_per_epoch < 1:
            raise ValueError("epochs must be >= 0 and patches_per_epoch >= 1")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError("lr_decay_factor must be in (0, 1]")
        if self.lr_decay_period_epochs < 1:
            raise ValueError("lr_decay_period_epochs must be >= 1")


def curriculum_targets(hr: np.ndarray, spec: DegradationSpec, iterations: int, seed: int = 0) -> list:
    """Per-iteration supervision targets for one HR batch."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    easy = (iterations + 1) // 2
    if spec.kind == "BI":
        return [hr] * iterations
    if spec.kind == "BD":
        degraded = gaussian_blur(hr, spec.blur_kernel_size, spec.blur_sigma)
    else:
        degraded = add_gaussian_noise(hr, spec.noise_sigma, seed)
    return [degraded] * easy + [hr] * (iterations - easy)


def multi_output_loss(trace, targets: list, weights: list, last_only: bool = False):
    """Eq-style weighted mean of per-iteration L1 losses, as a tape node.

    With last_only, only the final iteration's term is built, so gradients
    simply never reach the earlier outputs.
    """
    t_count = len(trace.i_sr)
    if len(targets) != t_count or len(weights) != t_count:
        raise ValueError(f"got {t_count} outputs, {len(targets)} targets, {len(weights)} weights")
    tape = trace.i_sr[0].tape
    pairs = [(trace.i_sr[-1], targets[-1], weights[-1])] if last_only else list(zip(trace.i_sr, targets, weights))
    terms = [ad.l1_loss(sr, tape.leaf(np.asarray(tgt, dtype=sr.value.dtype))) for sr, tgt, _ in pairs]
    coeffs = [w / t_count for _, _, w in pairs]
    return ad.scaled_sum(terms, coeffs)


def lr_at_epoch(epoch: int, cfg: TrainingConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_period_epochs)


def _stack(pairs) -> tuple:
    lr = np.concatenate([p.lr_patch for p in pairs], axis=0)
    hr = np.concatenate([p.hr_patch for p in pairs], axis=0)
    return lr, hr


def train(model_cfg: ModelConfig, train_cfg: TrainingConfig, spec: DegradationSpec,
          hr_images: list, resume_checkpoint: str | None = None, on_epoch_end=None):
    """Returns (weights, history); history has one dict per optimizer step."""
    if not hr_images:
        raise ValueError("empty training set")
    if spec.scale != model_cfg.scale:
        raise ValueError(f"degradation scale {spec.scale} != model scale {model_cfg.scale}")
    if resume_checkpoint is not None:
        weights, ckpt_cfg = checkpoint_load(resume_checkpoint)
        if ckpt_cfg != model_cfg:
            raise ValueError(f"checkpoint config {ckpt_cfg} does not match model config {model_cfg}")
    else:
        weights = build_model(model_cfg, derive_seed(train_cfg.seed, "init"))
    t_count = model_cfg.iterations
    w_loss = [1.0] * t_count if train_cfg.loss_weights is None else list(train_cfg.loss_weights)
    if len(w_loss) != t_count:
        raise ValueError(f"loss_weights length {len(w_loss)} != iterations {t_count}")

    state = AdamState()
    history: list = []
    steps = max(1, train_cfg.patches_per_epoch // train_cfg.batch_size)
    for epoch in range(train_cfg.epochs):
        lr = lr_at_epoch(epoch, train_cfg)
        epoch_losses = []
        for step in range(steps):
            pairs = sample_patch_pairs(hr_images, spec, model_cfg.scale, train_cfg.batch_size,
                                       derive_seed(train_cfg.seed, "batch", epoch, step),
                                       patch_size=train_cfg.patch_size)
            lr_batch, hr_batch = _stack(pairs)
            targets = curriculum_targets(hr_batch, spec, t_count,
                                         derive_seed(train_cfg.seed, "targets", epoch, step))
            tape = ad.Tape()
            params = wrap_params(tape, weights)
            trace = forward_unrolled(lr_batch, params, model_cfg, tape)
            loss = multi_output_loss(trace, targets, w_loss,
                                     last_only=not model_cfg.tie_loss_every_iteration)
            loss_val = float(loss.value)
            if not np.isfinite(loss_val):
                raise TrainingDivergedError(f"non-finite loss {loss_val} at epoch {epoch} step {step}")
            tape.backward(loss)
            grads = {name: node.grad for name, node in params.items() if node.grad is not None}
            adam_step(weights, grads, state, lr)
            per_iter = [float(np.abs(sr.value - tgt).mean()) for sr, tgt in zip(trace.i_sr, targets)]
            epoch_losses.append(loss_val)
            history.append({"epoch": epoch, "step": step, "lr": lr, "loss_total": loss_val,
                            "loss_per_iteration": per_iter})
        if on_epoch_end is not None:
            on_epoch_end(epoch, weights, float(np.mean(epoch_losses)))
    return weights, history


def parse_config_file(path: str) -> dict:
    """Read a run config: JSON object, or 'key = value' lines (values JSON-ish)."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        loaded = json.loads(text)
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: top-level JSON value must be an object")
        return loaded
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value  # bare string
    return out


_MODEL_KEYS = ("scale", "iterations", "groups", "base_channels", "in_channels", "out_channels",
               "share_weights", "tie_loss_every_iteration", "lr_input_every_iteration",
               "use_updown_layers", "use_dense_skips")
_TRAIN_KEYS = ("epochs", "batch_size", "lr0", "lr_decay_factor", "lr_decay_period_epochs",
               "patches_per_epoch", "patch_size", "seed", "loss_weights")
_SPEC_KEYS = ("degradation", "blur_kernel_size", "blur_sigma", "noise_sigma")


def configs_from_dict(raw: dict):
    """Split one flat config dict into (ModelConfig, TrainingConfig, DegradationSpec)."""
    unknown = set(raw) - set(_MODEL_KEYS) - set(_TRAIN_KEYS) - set(_SPEC_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    model_cfg = ModelConfig(**{k: raw[k] for k in _MODEL_KEYS if k in raw})
    train_cfg = TrainingConfig(**{k: raw[k] for k in _TRAIN_KEYS if k in raw})
    spec_kw = {k: raw[k] for k in _SPEC_KEYS if k in raw and k != "degradation"}
    spec = DegradationSpec(kind=raw.get("degradation", "BI"), scale=model_cfg.scale, **spec_kw)
    return model_cfg, train_cfg, spec
