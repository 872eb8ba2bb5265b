"""Command line interface.

Subcommands: degrade, train, eval, infer, inspect, selfcheck. Exit codes
are a stable contract: 0 success, 1 usage or config error, 2 I/O error,
3 numerical failure, 4 selfcheck failure. Every command writes a
run_manifest.json into its output directory on completion.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
import time

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save
from .degradation import DegradationSpec, degrade, derive_seed
from .metrics import (average_feature_map, evaluate, evaluate_baseline, modcrop,
                      spectral_density)
from .model import forward_unrolled, self_ensemble_infer
from .pngio import load_dataset_dir, load_image, save_gray_map, save_image
from .reporting import (plot_loss_curve, plot_metrics_per_iteration,
                        plot_spectral_profiles, write_eval_csv, write_eval_summary,
                        write_loss_csv, write_manifest, write_profile_csv)
from .selfcheck import run_selfcheck
from .training import TrainingDivergedError, configs_from_dict, parse_config_file, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_SELFCHECK = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # the exit-code contract reserves 1 for usage errors; default argparse exits 2
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="srfbn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"srfbn {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("degrade", help="write degraded LR copies of an HR directory")
    p.add_argument("--model", choices=("bi", "bd", "dn"), default="bi")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--resume", default=None, metavar="CKPT")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("eval", help="evaluate a checkpoint on an HR directory")
    p.add_argument("--ckpt", default=None, metavar="PATH")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--model", choices=("bi", "bd", "dn"), default="bi")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), default=None)
    p.add_argument("--border-crop", type=int, default=None, help="pixels per edge; default = scale")
    p.add_argument("--bicubic-baseline", action="store_true",
                   help="score plain bicubic upsampling instead of a checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", metavar="DIR")

    p = sub.add_parser("infer", help="super-resolve LR image(s)")
    p.add_argument("--ckpt", required=True, metavar="PATH")
    p.add_argument("--in", dest="in_path", required=True, metavar="PATH", help="LR image or directory")
    p.add_argument("--out", required=True, metavar="DIR")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ensemble", action="store_true", help="dihedral-8 self-ensemble")
    group.add_argument("--all-iterations", action="store_true", help="write every iteration's output")

    p = sub.add_parser("inspect",
                       help="dump per-iteration average feature maps and spectral profiles")
    p.add_argument("--ckpt", required=True, metavar="PATH")
    p.add_argument("--in", dest="in_path", required=True, metavar="IMAGE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--bins", type=int, default=16, help="annulus count for spectral profiles")

    p = sub.add_parser("selfcheck", help="run the fast invariant suite")
    p.add_argument("--out", default=".", metavar="DIR")
    return parser


def _finish(out_dir: str, command: str, snapshot: dict, inputs: list, outputs: list,
            seeds: dict, started: float) -> None:
    def stamp(t):
        return datetime.datetime.fromtimestamp(t, tz=datetime.timezone.utc).isoformat()

    finished = time.time()
    write_manifest({
        "command": command,
        "config": snapshot,
        "seeds": seeds,
        "inputs": inputs,
        "outputs": sorted(outputs),
        "tool_version": __version__,
        "started": stamp(started),
        "finished": stamp(finished),
        "wall_seconds": round(finished - started, 3),
    }, os.path.join(out_dir, "run_manifest.json"))


def _snapshot(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("command", "func")}


def cmd_degrade(args) -> int:
    started = time.time()
    spec = DegradationSpec(kind=args.model.upper(), scale=args.scale)
    dataset = load_dataset_dir(args.in_dir)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    sidecar = []
    for name, hr in dataset:
        lr = degrade(modcrop(hr, args.scale), spec, derive_seed(args.seed, "degrade", name))
        fname = f"{name}.png"
        save_image(lr, os.path.join(args.out, fname))
        outputs.append(fname)
        sidecar.append(f"{fname} {spec.kind} {spec.scale} {args.seed}")
    with open(os.path.join(args.out, "manifest.txt"), "w") as fh:
        fh.write("\n".join(sidecar) + "\n")
    _finish(args.out, "degrade", _snapshot(args), [args.in_dir], outputs + ["manifest.txt"],
            {"seed": args.seed}, started)
    print(f"degraded {len(outputs)} image(s) -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    raw = parse_config_file(args.config)
    data_dir = raw.pop("data_dir", None)
    checkpoint_every = int(raw.pop("checkpoint_every", 0) or 0)
    if data_dir is None:
        raise _UsageError("config must set data_dir")
    model_cfg, train_cfg, spec = configs_from_dict(raw)
    dataset = load_dataset_dir(str(data_dir))
    hr_images = [modcrop(hr, model_cfg.scale) for _, hr in dataset]
    os.makedirs(args.out, exist_ok=True)
    outputs = ["final.srfb", "loss.csv", "loss_curve.png"]

    def on_epoch_end(epoch, weights, mean_loss):
        if checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            fname = f"ckpt_epoch{epoch + 1:04d}.srfb"
            checkpoint_save(weights, model_cfg, os.path.join(args.out, fname))
            outputs.append(fname)
        print(f"epoch {epoch + 1}/{train_cfg.epochs}  mean loss {mean_loss:.6f}")

    weights, history = train(model_cfg, train_cfg, spec, hr_images,
                             resume_checkpoint=args.resume, on_epoch_end=on_epoch_end)
    checkpoint_save(weights, model_cfg, os.path.join(args.out, "final.srfb"))
    write_loss_csv(history, model_cfg.iterations, os.path.join(args.out, "loss.csv"))
    plot_loss_curve(history, os.path.join(args.out, "loss_curve.png"))
    _finish(args.out, "train", {**_snapshot(args), "resolved": {**raw, "data_dir": data_dir}},
            [args.config, str(data_dir)], outputs, {"seed": train_cfg.seed}, started)
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.time()
    dataset = load_dataset_dir(args.data)
    if args.bicubic_baseline:
        if args.scale is None:
            raise _UsageError("--bicubic-baseline requires --scale")
        spec = DegradationSpec(kind=args.model.upper(), scale=args.scale)
        report = evaluate_baseline(dataset, spec, args.scale, args.border_crop,
                                   method="bicubic", seed=args.seed)
    else:
        if args.ckpt is None:
            raise _UsageError("--ckpt is required unless --bicubic-baseline is given")
        weights, cfg = checkpoint_load(args.ckpt)
        if args.scale is not None and args.scale != cfg.scale:
            raise _UsageError(f"--scale {args.scale} does not match checkpoint scale {cfg.scale}")
        spec = DegradationSpec(kind=args.model.upper(), scale=cfg.scale)
        report = evaluate(weights, cfg, dataset, spec, args.border_crop, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_eval_csv(report, os.path.join(args.out, "eval.csv"))
    write_eval_summary(report, os.path.join(args.out, "summary.txt"))
    plot_metrics_per_iteration(report, os.path.join(args.out, "metrics_per_iteration.png"))
    _finish(args.out, "eval", _snapshot(args), [args.data] + ([args.ckpt] if args.ckpt else []),
            ["eval.csv", "summary.txt", "metrics_per_iteration.png"], {"seed": args.seed}, started)
    print(report.summary())
    return EXIT_OK


def cmd_infer(args) -> int:
    started = time.time()
    weights, cfg = checkpoint_load(args.ckpt)
    if os.path.isdir(args.in_path):
        images = load_dataset_dir(args.in_path)
    else:
        images = [(os.path.splitext(os.path.basename(args.in_path))[0], load_image(args.in_path))]
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for name, lr in images:
        if lr.shape[1] != cfg.in_channels:
            raise ValueError(f"{name}: {lr.shape[1]} channels, model expects {cfg.in_channels}")
        if args.ensemble:
            results = [(f"{name}_sr.png", self_ensemble_infer(lr, weights, cfg))]
        else:
            trace = forward_unrolled(lr, weights, cfg)
            if args.all_iterations:
                results = [(f"{name}_sr_t{t}.png", sr) for t, sr in enumerate(trace.sr_images(), 1)]
            else:
                results = [(f"{name}_sr.png", trace.sr_images()[-1])]
        for fname, sr in results:
            save_image(np.clip(sr, 0.0, 1.0), os.path.join(args.out, fname))
            outputs.append(fname)
    _finish(args.out, "infer", _snapshot(args), [args.ckpt, args.in_path], outputs, {}, started)
    print(f"wrote {len(outputs)} image(s) -> {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    started = time.time()
    weights, cfg = checkpoint_load(args.ckpt)
    lr = load_image(args.in_path)
    if lr.shape[1] != cfg.in_channels:
        raise ValueError(f"input has {lr.shape[1]} channels, model expects {cfg.in_channels}")
    trace = forward_unrolled(lr, weights, cfg)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    profiles = {}
    for label, nodes in (("fout", trace.f_out), ("l0", trace.l0)):
        for t, node in enumerate(nodes, 1):
            fmap = average_feature_map(node.value)
            save_gray_map(fmap, os.path.join(args.out, f"{label}_t{t}.png"))
            profile = spectral_density(fmap, args.bins)
            write_profile_csv(profile, os.path.join(args.out, f"{label}_t{t}_profile.csv"))
            outputs += [f"{label}_t{t}.png", f"{label}_t{t}_profile.csv"]
            profiles[f"{label} t={t}"] = profile
    plot_spectral_profiles(profiles, os.path.join(args.out, "spectral_profiles.png"))
    outputs.append("spectral_profiles.png")
    _finish(args.out, "inspect", _snapshot(args), [args.ckpt, args.in_path], outputs, {}, started)
    print(f"wrote {len(outputs)} file(s) -> {args.out}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    started = time.time()
    results = run_selfcheck()
    for res in results:
        print(f"{'PASS' if res.ok else 'FAIL'}  {res.name}: {res.detail}")
    os.makedirs(args.out, exist_ok=True)
    _finish(args.out, "selfcheck", _snapshot(args), [],
            [f"{res.name}={'pass' if res.ok else 'fail'}" for res in results], {}, started)
    failed = [res for res in results if not res.ok]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_SELFCHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


_COMMANDS = {
    "degrade": cmd_degrade,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "inspect": cmd_inspect,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError(parser.format_usage())
        return _COMMANDS[args.command](args)
    except _UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except TrainingDivergedError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
