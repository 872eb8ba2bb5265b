"""CSV/JSON run outputs and matplotlib figures.

Every tabular artifact is a headered CSV; each report figure is rendered
to a PNG file next to the CSV it illustrates. Manifest writes are atomic
(write to a temp file, then rename).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

import numpy as np  # noqa: E402


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(manifest: dict, path: str) -> None:
    _atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def write_loss_csv(history: list, iterations: int, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "lr", "loss_total"]
                        + [f"loss_t{t}" for t in range(1, iterations + 1)])
        for row in history:
            writer.writerow([row["epoch"], row["step"], f"{row['lr']:.10g}",
                             f"{row['loss_total']:.10g}"]
                            + [f"{v:.10g}" for v in row["loss_per_iteration"]])


def write_eval_csv(report, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "iteration", "psnr", "ssim"])
        for row in report.rows():
            writer.writerow([row["name"], row["iteration"], f"{row['psnr']:.6f}", f"{row['ssim']:.6f}"])


def write_eval_summary(report, path: str) -> None:
    _atomic_write(path, (report.summary() + "\n").encode())


def write_profile_csv(profile: np.ndarray, path: str) -> None:
    """Radial spectral profile; one row per annulus bin over [0, 0.5]."""
    bins = len(profile)
    edges = np.linspace(0.0, 0.5, bins + 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "freq_lo", "freq_hi", "mean_power"])
        for i, value in enumerate(profile):
            writer.writerow([i, f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}", f"{value:.10g}"])


def plot_loss_curve(history: list, path: str, window: int = 100) -> None:
    losses = [row["loss_total"] for row in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(losses, lw=0.6, alpha=0.5, label="per step")
    if len(losses) >= window:
        smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
        ax.plot(np.arange(window - 1, len(losses)), smooth, lw=1.5, label=f"{window}-step mean")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metrics_per_iteration(report, path: str) -> None:
    t_axis = np.arange(1, report.iterations + 1)
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(t_axis, report.mean_psnr(), "o-", color="tab:blue")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("mean PSNR (dB)", color="tab:blue")
    ax1.set_xticks(t_axis)
    ax2 = ax1.twinx()
    ax2.plot(t_axis, report.mean_ssim(), "s--", color="tab:red")
    ax2.set_ylabel("mean SSIM", color="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_spectral_profiles(profiles: dict, path: str) -> None:
    """profiles: label -> 1-D profile array; all profiles share a bin count."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, profile in profiles.items():
        centers = (np.arange(len(profile)) + 0.5) * 0.5 / len(profile)
        ax.plot(centers, np.maximum(profile, 1e-12), label=label)
    ax.set_yscale("log")
    ax.set_xlabel("normalized radial frequency")
    ax.set_ylabel("mean spectral power")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
