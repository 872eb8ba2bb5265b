"""Fast self-contained invariant checks, surfaced by the selfcheck command.

Each check is small enough to run in seconds; together they cover the
adjointness of the up/down projections, a finite-difference gradient
probe, the shape law, parameter-count targets, checkpoint round-trips,
and the degradation statistics.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass

import numpy as np

from . import ops
from .checkpoint import checkpoint_load, checkpoint_save
from .degradation import DegradationSpec, bicubic_resize, blur_kernel, gaussian_blur
from .gradcheck import finite_difference_gradient, rel_error
from .metrics import psnr, ssim
from .model import ModelConfig, build_model, forward_unrolled, parameter_count
from .training import curriculum_targets

PARAM_TARGETS = (
    (ModelConfig(scale=4, iterations=4, groups=3, base_channels=32), 483_000),
    (ModelConfig(scale=4, iterations=4, groups=6, base_channels=64), 3_631_000),
)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _micro_cfg(scale: int = 2, **kw) -> ModelConfig:
    return ModelConfig(scale=scale, iterations=2, groups=2, base_channels=4, **kw)


def _check_parameter_counts() -> list:
    out = []
    for cfg, target in PARAM_TARGETS:
        count = parameter_count(build_model(cfg, seed=0))
        ok = abs(count - target) <= 0.03 * target
        out.append(CheckResult(f"parameter-count-{target}", ok,
                               f"expected {target} +-3%, computed {count}"))
    return out


def _check_shape_law() -> CheckResult:
    for scale in (2, 3, 4):
        cfg = _micro_cfg(scale)
        weights = build_model(cfg, seed=1)
        lr = np.random.default_rng(2).random((1, 3, 7, 11), dtype=np.float32)
        trace = forward_unrolled(lr, weights, cfg)
        for t, sr in enumerate(trace.sr_images(), 1):
            want = (1, 3, 7 * scale, 11 * scale)
            if sr.shape != want:
                return CheckResult("shape-law", False,
                                   f"scale {scale} iteration {t}: {sr.shape} != {want}")
    return CheckResult("shape-law", True, "scales 2/3/4 on 7x11 input")


def _check_global_residual() -> CheckResult:
    cfg = _micro_cfg()
    weights = {k: np.zeros_like(v) for k, v in build_model(cfg, seed=3).items()}
    lr = np.random.default_rng(4).random((1, 3, 8, 8), dtype=np.float32)
    base = ops.bilinear_upsample(lr, cfg.scale)
    trace = forward_unrolled(lr, weights, cfg)
    ok = all(np.array_equal(sr, base) for sr in trace.sr_images())
    return CheckResult("global-residual", ok, "zero weights reproduce the bilinear upsample")


def _check_adjoint() -> CheckResult:
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 8, 10))
    w = rng.standard_normal((5, 3, 4, 4))
    y = rng.standard_normal((2, 5, 4, 5))
    lhs = float(np.sum(ops.conv2d(x, w, None, 2, 1) * y))
    rhs = float(np.sum(x * ops.deconv2d(y, w, None, 2, 1)))
    err = abs(lhs - rhs) / (abs(rhs) + 1e-12)
    return CheckResult("conv-deconv-adjoint", err < 1e-10, f"relative gap {err:.2e}")


def _check_gradient_probe() -> CheckResult:
    rng = np.random.default_rng(6)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    cotangent = rng.standard_normal((1, 3, 5, 5))
    analytic = ops.conv2d_grad_weight(x, cotangent, 1, 1, 3)
    numeric = finite_difference_gradient(lambda wv: np.sum(ops.conv2d(x, wv, None, 1, 1) * cotangent), w)
    err = rel_error(analytic, numeric)
    return CheckResult("gradient-probe", err < 1e-4, f"conv weight grad rel error {err:.2e}")


def _check_checkpoint_roundtrip() -> CheckResult:
    cfg = _micro_cfg()
    weights = build_model(cfg, seed=7)
    with tempfile.NamedTemporaryFile(suffix=".srfb") as tmp:
        checkpoint_save(weights, cfg, tmp.name)
        loaded, cfg2 = checkpoint_load(tmp.name)
    ok = cfg2 == cfg and set(loaded) == set(weights) and \
        all(np.array_equal(loaded[k], weights[k]) for k in weights)
    return CheckResult("checkpoint-roundtrip", ok, "save/load is bitwise exact")


def _check_weight_sharing() -> CheckResult:
    counts = {t: parameter_count(build_model(
        ModelConfig(scale=2, iterations=t, groups=2, base_channels=4), seed=8)) for t in (1, 2, 4)}
    ok = len(set(counts.values())) == 1
    return CheckResult("weight-sharing", ok, f"parameter counts by iteration count: {counts}")


def _check_blur_kernel() -> CheckResult:
    total = float(blur_kernel(7, 1.6).sum())
    return CheckResult("blur-kernel-sum", abs(total - 1.0) <= 1e-7, f"sum {total:.9f}")


def _check_curriculum() -> CheckResult:
    hr = np.random.default_rng(9).random((1, 3, 16, 16), dtype=np.float32)
    spec_bd = DegradationSpec("BD", 2)
    targets = curriculum_targets(hr, spec_bd, 4, seed=0)
    blurred = gaussian_blur(hr, spec_bd.blur_kernel_size, spec_bd.blur_sigma)
    ok = (np.allclose(targets[0], blurred) and np.allclose(targets[1], blurred)
          and targets[2] is hr and targets[3] is hr)
    bi = curriculum_targets(hr, DegradationSpec("BI", 2), 4)
    ok = ok and all(t is hr for t in bi)
    dn = curriculum_targets(hr, DegradationSpec("DN", 2), 4, seed=1)
    ok = ok and not np.array_equal(dn[0], hr) and dn[3] is hr
    return CheckResult("curriculum-schedule", ok, "BD/DN split degraded,degraded,clean,clean; BI all clean")


def _check_bicubic() -> CheckResult:
    const = np.full((1, 3, 16, 16), 0.37, dtype=np.float32)
    down = bicubic_resize(const, 2, "down")
    ok = down.shape == (1, 3, 8, 8) and np.allclose(down, 0.37, atol=1e-6)
    big = np.zeros((1, 3, 160, 160), dtype=np.float32)
    ok = ok and bicubic_resize(big, 4, "down").shape == (1, 3, 40, 40)
    return CheckResult("bicubic-resize", ok, "constant preserved, 160->40 at scale 4")


def _check_metric_identities() -> CheckResult:
    a = np.random.default_rng(10).random((1, 1, 24, 24))
    ok = psnr(a, a) == float("inf") and abs(ssim(a, a) - 1.0) < 1e-9
    return CheckResult("metric-identities", ok, "psnr(a,a)=inf, ssim(a,a)=1")


def run_selfcheck() -> list:
    results = _check_parameter_counts()
    results += [
        _check_shape_law(),
        _check_global_residual(),
        _check_adjoint(),
        _check_gradient_probe(),
        _check_checkpoint_roundtrip(),
        _check_weight_sharing(),
        _check_blur_kernel(),
        _check_curriculum(),
        _check_bicubic(),
        _check_metric_identities(),
    ]
    return results
