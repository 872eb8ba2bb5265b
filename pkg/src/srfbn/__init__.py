"""Feedback super-resolution network on a self-contained numpy autodiff core."""

__version__ = "0.1.0"

from .degradation import DegradationSpec, degrade, derive_seed
from .metrics import EvalReport, evaluate, evaluate_baseline, psnr, rgb_to_y, ssim
from .model import (ModelConfig, build_model, forward_unrolled, parameter_count,
                    self_ensemble_infer)
from .training import TrainingConfig, curriculum_targets, lr_at_epoch, train

__all__ = [
    "__version__",
    "DegradationSpec", "degrade", "derive_seed",
    "EvalReport", "evaluate", "evaluate_baseline", "psnr", "rgb_to_y", "ssim",
    "ModelConfig", "build_model", "forward_unrolled", "parameter_count",
    "self_ensemble_infer",
    "TrainingConfig", "curriculum_targets", "lr_at_epoch", "train",
]
