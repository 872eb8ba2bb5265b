"""Feedback super-resolution network.

The network unrolls a fixed number of feedback iterations. Each iteration
runs three blocks on the low-resolution input: a shallow feature extractor
(lrfb), a feedback block (fb) fusing the previous iteration's output with
the current shallow features through densely connected up/down projection
groups, and a reconstruction block (rb) that upscales and predicts a
residual added to a bilinear upsample of the input. All iterations share
one weight set unless configured otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import ops

# (kernel, stride, padding) of the up/down projection layers per scale factor
SCALE_KSP = {2: (6, 2, 2), 3: (7, 3, 2), 4: (8, 4, 2)}


@dataclass(frozen=True)
class ModelConfig:
    scale: int = 4
    iterations: int = 4      # unrolled feedback iterations
    groups: int = 6          # projection groups inside the feedback block
    base_channels: int = 32  # width of every internal feature map
    in_channels: int = 3
    out_channels: int = 3
    share_weights: bool = True
    tie_loss_every_iteration: bool = True   # off: loss only on the last output
    lr_input_every_iteration: bool = True   # off: LR input only at iteration 1
    use_updown_layers: bool = True          # off: strided up/down become plain 3x3 convs
    use_dense_skips: bool = True            # off: groups see only their predecessor

    def __post_init__(self):
        if self.scale not in SCALE_KSP:
            raise ValueError(f"scale must be one of {sorted(SCALE_KSP)}, got {self.scale}")
        if self.iterations < 1 or self.groups < 1 or self.base_channels < 1:
            raise ValueError("iterations, groups and base_channels must all be >= 1")
        if self.out_channels not in (1, 3):
            raise ValueError(f"out_channels must be 1 or 3, got {self.out_channels}")
        if self.in_channels != self.out_channels:
            raise ValueError("the global residual skip requires in_channels == out_channels")

    @property
    def ksp(self) -> tuple:
        return SCALE_KSP[self.scale]


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "conv" or "deconv"
    c_in: int
    c_out: int
    k: int
    stride: int
    pad: int
    prelu: bool


def layer_specs(cfg: ModelConfig) -> list:
    """The full layer inventory, in build order."""
    m = cfg.base_channels
    k, s, p = cfg.ksp
    if not cfg.use_updown_layers:
        k, s, p = 3, 1, 1
    specs = [
        LayerSpec("lrfb.conv_in", "conv", cfg.in_channels, 4 * m, 3, 1, 1, True),
        LayerSpec("lrfb.compress", "conv", 4 * m, m, 1, 1, 0, True),
        LayerSpec("fb.compress_in", "conv", 2 * m, m, 1, 1, 0, True),
    ]
    for g in range(1, cfg.groups + 1):
        fan = g * m if cfg.use_dense_skips else m
        if g >= 2:
            specs.append(LayerSpec(f"fb.group{g}.up_compress", "conv", fan, m, 1, 1, 0, True))
        specs.append(LayerSpec(f"fb.group{g}.up", "deconv" if cfg.use_updown_layers else "conv", m, m, k, s, p, True))
        if g >= 2:
            specs.append(LayerSpec(f"fb.group{g}.down_compress", "conv", fan, m, 1, 1, 0, True))
        specs.append(LayerSpec(f"fb.group{g}.down", "conv", m, m, k, s, p, True))
    specs.append(LayerSpec("fb.fuse", "conv", cfg.groups * m, m, 1, 1, 0, True))
    kr, sr, pr = cfg.ksp  # reconstruction always upscales
    specs += [
        LayerSpec("rb.up", "deconv", m, m, kr, sr, pr, True),
        LayerSpec("rb.conv_out", "conv", m, cfg.out_channels, 3, 1, 1, False),
    ]
    return specs


def _iteration_prefixes(cfg: ModelConfig) -> list:
    if cfg.share_weights:
        return [""]
    return [f"step{t}." for t in range(1, cfg.iterations + 1)]


def build_model(cfg: ModelConfig, seed: int) -> dict:
    """He-normal initialized weights, keyed by dotted layer paths.

    Conv weights are (c_out, c_in, k, k); deconv weights (c_in, c_out, k, k).
    Biases start at zero, PReLU slopes at 0.25.
    """
    rng = np.random.default_rng(seed)
    weights: dict = {}
    for prefix in _iteration_prefixes(cfg):
        for spec in layer_specs(cfg):
            fan_in = spec.c_in * spec.k * spec.k
            std = np.sqrt(2.0 / fan_in)
            shape = (spec.c_in, spec.c_out, spec.k, spec.k) if spec.kind == "deconv" else (spec.c_out, spec.c_in, spec.k, spec.k)
            weights[prefix + spec.name + ".weight"] = rng.normal(0.0, std, shape).astype(np.float32)
            weights[prefix + spec.name + ".bias"] = np.zeros(spec.c_out, dtype=np.float32)
            if spec.prelu:
                weights[prefix + spec.name + ".alpha"] = np.full(spec.c_out, 0.25, dtype=np.float32)
    return weights


def parameter_count(weights: dict) -> int:
    return sum(int(w.size) for w in weights.values())


def wrap_params(tape: ad.Tape, weights: dict) -> dict:
    """Lift a weight set onto a tape so gradients can reach it."""
    return {name: tape.leaf(w) for name, w in weights.items()}


class _Blocks:
    """Applies named layers from a parameter-node dict for one iteration."""

    def __init__(self, cfg: ModelConfig, params: dict, prefix: str = ""):
        self.cfg = cfg
        self.params = params
        self.prefix = prefix
        self.specs = {s.name: s for s in layer_specs(cfg)}

    def layer(self, name: str, x: ad.Node) -> ad.Node:
        spec = self.specs[name]
        w = self.params[self.prefix + name + ".weight"]
        b = self.params[self.prefix + name + ".bias"]
        apply_fn = ad.deconv2d if spec.kind == "deconv" else ad.conv2d
        y = apply_fn(x, w, b, spec.stride, spec.pad)
        if spec.prelu:
            y = ad.prelu(y, self.params[self.prefix + name + ".alpha"])
        return y

    def lr_features(self, i_lr: ad.Node) -> ad.Node:
        return self.layer("lrfb.compress", self.layer("lrfb.conv_in", i_lr))

    def feedback(self, f_in: ad.Node, f_out_prev: ad.Node):
        """Returns (f_out, l0) for one pass through the feedback block."""
        cfg = self.cfg
        l0 = self.layer("fb.compress_in", ad.concat_channels([f_out_prev, f_in]))
        lows = [l0]
        highs = []
        for g in range(1, cfg.groups + 1):
            src = ad.concat_channels(lows) if cfg.use_dense_skips else lows[-1]
            if g >= 2:
                src = self.layer(f"fb.group{g}.up_compress", src)
            highs.append(self.layer(f"fb.group{g}.up", src))
            src = ad.concat_channels(highs) if cfg.use_dense_skips else highs[-1]
            if g >= 2:
                src = self.layer(f"fb.group{g}.down_compress", src)
            lows.append(self.layer(f"fb.group{g}.down", src))
        f_out = self.layer("fb.fuse", ad.concat_channels(lows[1:]))
        return f_out, l0

    def reconstruct(self, f_out: ad.Node) -> ad.Node:
        return self.layer("rb.conv_out", self.layer("rb.up", f_out))


@dataclass
class ForwardTrace:
    """Per-iteration nodes of one unrolled forward pass."""

    f_in: list = field(default_factory=list)
    f_out: list = field(default_factory=list)
    l0: list = field(default_factory=list)
    i_res: list = field(default_factory=list)
    i_sr: list = field(default_factory=list)

    def sr_images(self) -> list:
        return [node.value for node in self.i_sr]


def forward_unrolled(i_lr, weights, cfg: ModelConfig, tape: ad.Tape | None = None) -> ForwardTrace:
    """Run all feedback iterations on one LR batch.

    i_lr may be an array or an existing tape node; weights a raw dict or a
    parameter-node dict from wrap_params. Without a tape, runs in cheap
    non-recording mode.
    """
    if tape is None:
        tape = ad.Tape(record=False)
    x = i_lr if isinstance(i_lr, ad.Node) else tape.leaf(i_lr)
    if x.value.ndim != 4 or x.value.shape[1] != cfg.in_channels:
        raise ValueError(f"expected (n, {cfg.in_channels}, h, w) input, got {np.shape(x.value)}")
    params = weights if all(isinstance(v, ad.Node) for v in weights.values()) else wrap_params(tape, weights)

    upsampled = ad.bilinear_upsample(x, cfg.scale)
    trace = ForwardTrace()
    f_out_prev = None
    zero_features = None
    for t in range(1, cfg.iterations + 1):
        prefix = "" if cfg.share_weights else f"step{t}."
        blocks = _Blocks(cfg, params, prefix)
        if t == 1 or cfg.lr_input_every_iteration:
            f_in = blocks.lr_features(x)
        else:
            if zero_features is None:
                zero_features = tape.leaf(np.zeros_like(trace.f_in[0].value))
            f_in = zero_features
        if f_out_prev is None:
            f_out_prev = f_in  # initial hidden state
        f_out, l0 = blocks.feedback(f_in, f_out_prev)
        i_res = blocks.reconstruct(f_out)
        i_sr = ad.add(i_res, upsampled)
        trace.f_in.append(f_in)
        trace.f_out.append(f_out)
        trace.l0.append(l0)
        trace.i_res.append(i_res)
        trace.i_sr.append(i_sr)
        f_out_prev = f_out
    return trace


def self_ensemble_infer(i_lr: np.ndarray, weights: dict, cfg: ModelConfig, transforms=tuple(range(8))) -> np.ndarray:
    """Average the final SR image over flip/rotation variants of the input."""
    if len(transforms) == 0:
        raise ValueError("self-ensemble needs at least one transform")
    acc = None
    for variant in transforms:
        flipped = ops.dihedral_transform(i_lr, variant)
        trace = forward_unrolled(flipped, weights, cfg)
        sr = ops.dihedral_inverse(trace.i_sr[-1].value, variant)
        acc = sr if acc is None else acc + sr
    return acc / len(transforms)
