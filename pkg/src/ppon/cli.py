"""Command-line surface: train / sr / eval / degrade / fixture.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Set PPON_THREADS to pin the BLAS worker count (applied before numpy loads,
so it must be decided at process start).

Heavy imports happen inside the handlers so `ppon --help` stays instant
and the thread cap can take effect first.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _apply_thread_env():
    threads = os.environ.get("PPON_THREADS")
    if threads:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppon",
        description="Progressive three-branch 4x super-resolution: training, "
        "inference with a perception blend factor, evaluation and degradation tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training stage")
    p_train.add_argument("--config", help="run config file (key = value lines)")
    p_train.add_argument("--profile", choices=["full", "test"], help="model/schedule size")
    p_train.add_argument("--stage", choices=["content", "structure", "perception"])
    p_train.add_argument("--manifest", help="text file listing HR images, one per line")
    p_train.add_argument("--lr-dir", dest="lr_dir",
                         help="directory of pre-degraded LR images (optional)")
    p_train.add_argument("--out-dir", dest="out_dir", help="output directory")
    p_train.add_argument("--init-checkpoint", dest="init_checkpoint",
                         help="checkpoint from the previous stage")
    p_train.add_argument("--extractor-weights", dest="extractor_weights",
                         help="feature-extractor container for the perception stage")
    p_train.add_argument("--iters", type=int, help="iterations for this stage")
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--hr-patch", dest="hr_patch", type=int,
                         help="HR patch size (multiple of 4)")
    p_train.add_argument("--seed", type=int, help="run seed")
    p_train.add_argument("--degradation", help="'bicubic' or 'awgn:SIGMA'")
    p_train.add_argument("--log-every", dest="log_every", type=int,
                         help="progress print interval (0 = quiet)")

    p_sr = sub.add_parser("sr", help="super-resolve one image")
    p_sr.add_argument("--checkpoint", required=True)
    p_sr.add_argument("--input", required=True, help="RGB PNG to upscale 4x")
    p_sr.add_argument("--alpha", type=float, default=1.0,
                      help="perceptual blend in [0, 1]; 0 = structure output")
    p_sr.add_argument("--emit", choices=["c", "s", "p", "all"], default="all",
                      help="which outputs to write")
    p_sr.add_argument("--out-dir", dest="out_dir", default=".")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over a manifest")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out-dir", dest="out_dir", default="eval_out")
    p_eval.add_argument("--alpha", default="1.0",
                        help="comma-separated blend factors to evaluate")
    p_eval.add_argument("--degradation", default="bicubic",
                        help="'bicubic' or 'awgn:SIGMA'")
    p_eval.add_argument("--shave", type=int, default=4,
                        help="border pixels excluded from metrics")
    p_eval.add_argument("--ms-scales", dest="ms_scales", type=int, default=5)
    p_eval.add_argument("--seed", type=int, default=0)

    p_deg = sub.add_parser("degrade", help="write the degraded LR image tree")
    p_deg.add_argument("--manifest", required=True)
    p_deg.add_argument("--out-dir", dest="out_dir", required=True)
    p_deg.add_argument("--spec", default="bicubic", help="'bicubic' or 'awgn:SIGMA'")
    p_deg.add_argument("--seed", type=int, default=0)

    p_fix = sub.add_parser("fixture", help="generate the synthetic 8-image fixture")
    p_fix.add_argument("--out-dir", dest="out_dir", required=True)

    return parser


def _cmd_train(args) -> int:
    from .config import ConfigError, RunConfig
    from .data import DatasetManifest, DegradationSpec, load_sources
    from .losses import Discriminator, DiscriminatorConfig, desk_feature_extractor
    from .model import PPON, PponConfig
    from .train import (
        MissingPrerequisite,
        TrainingDiverged,
        make_schedule,
        prepare_stage_model,
        train_stage,
    )
    from .checkpoint import ContainerError

    overrides = {
        k: getattr(args, k)
        for k in (
            "profile", "stage", "manifest", "lr_dir", "out_dir", "init_checkpoint",
            "extractor_weights", "iters", "batch_size", "hr_patch", "seed",
            "degradation", "log_every",
        )
    }
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        cfg.apply_overrides(overrides).validate()
        if cfg.manifest is None:
            raise ConfigError("train needs a manifest (config key or --manifest)")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(cfg.out_dir)
    model_config = PponConfig.full() if cfg.profile == "full" else PponConfig.test()
    try:
        schedule = make_schedule(
            cfg.stage, cfg.profile, max_iters=cfg.iters,
            batch_size=cfg.batch_size, hr_patch=cfg.hr_patch,
        )
        model, history = prepare_stage_model(
            cfg.stage, model_config, seed=cfg.seed,
            init_checkpoint=cfg.init_checkpoint,
        )
    except (MissingPrerequisite, ContainerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        manifest = DatasetManifest.from_file(cfg.manifest, lr_dir=cfg.lr_dir)
        spec = DegradationSpec.parse(cfg.degradation)
        sources = load_sources(manifest, spec, seed=cfg.noise_seed)

        extractor = None
        discriminator = None
        if cfg.stage == "perception":
            if cfg.extractor_weights:
                from .extractor_io import load_feature_extractor

                extractor = load_feature_extractor(cfg.extractor_weights)
            else:
                extractor = desk_feature_extractor()
            disc_cfg = (
                DiscriminatorConfig(input_size=schedule.hr_patch)
                if cfg.profile == "full"
                else DiscriminatorConfig.desk(schedule.hr_patch)
            )
            discriminator = Discriminator(disc_cfg, seed=cfg.seed)

        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = out_dir / f"{cfg.stage}.ckpt"
        record = train_stage(
            model, schedule, sources, ckpt_path,
            run_seed=cfg.seed, log_path=out_dir / f"{cfg.stage}_log.jsonl",
            extractor=extractor, discriminator=discriminator,
            stage_history=history, progress_every=cfg.log_every,
        )
        final = [r for r in record.rows if r.get("record") == "iter"][-1]
        losses = {
            k: v
            for k, v in final.items()
            if k not in ("record", "iter", "lr", "wall")
        }
        print(f"stage {cfg.stage} done after {schedule.max_iters} iters: "
              + ", ".join(f"{k}={v:.5f}" for k, v in losses.items()))
        print(f"checkpoint: {ckpt_path}")
        return EXIT_OK
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _cmd_sr(args) -> int:
    from . import tensor as T
    from .data import load_image, save_image
    from .train import load_checkpoint

    if not 0.0 <= args.alpha <= 1.0:
        print(f"error: --alpha must be in [0, 1], got {args.alpha}", file=sys.stderr)
        return EXIT_USAGE
    try:
        model, _ = load_checkpoint(args.checkpoint)
        lr = load_image(args.input)
        outputs = model.infer(lr, alpha=args.alpha)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(args.input).stem
        emitted = []
        for tag, img in (("c", outputs.sr_c), ("s", outputs.sr_s), ("p", outputs.sr_p)):
            if args.emit in (tag, "all"):
                path = out_dir / f"{stem}_{tag}.png"
                save_image(img, path)
                emitted.append(str(path))
        print("wrote: " + ", ".join(emitted))
        return EXIT_OK
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _cmd_eval(args) -> int:
    from .config import ConfigError, _parse_alpha_list
    from .data import DatasetManifest, DegradationSpec
    from .metrics import evaluate_dataset

    try:
        alpha_list = _parse_alpha_list(args.alpha)
        spec = DegradationSpec.parse(args.degradation)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest = DatasetManifest.from_file(args.manifest, split="eval")
        report = evaluate_dataset(
            args.checkpoint, manifest, alpha_list=alpha_list, degradation=spec,
            shave=args.shave, ms_scales=args.ms_scales, seed=args.seed,
        )
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.to_jsonl(out_dir / "report.jsonl")
        table = report.to_text_table()
        (out_dir / "report.txt").write_text(table)
        print(table, end="")
        if report.failures:
            for fail in report.failures:
                print(f"failed: {fail['image']}: {fail['error']}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _cmd_degrade(args) -> int:
    import numpy as np

    from .data import (
        DatasetManifest,
        DegradationSpec,
        degrade_image,
        load_image,
        save_image,
    )

    try:
        spec = DegradationSpec.parse(args.spec)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest = DatasetManifest.from_file(args.manifest)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for index, name in enumerate(manifest.names):
            hr = load_image(manifest.hr_path(name))
            lr = degrade_image(
                hr, spec, seed=np.random.SeedSequence((args.seed, 0xDE64, index))
            )
            target = out_dir / name
            target.parent.mkdir(parents=True, exist_ok=True)
            save_image(lr, target)
        print(f"degraded {len(manifest.names)} images into {out_dir}")
        return EXIT_OK
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _cmd_fixture(args) -> int:
    from .fixture import write_fixture

    try:
        manifest = write_fixture(args.out_dir)
        print(f"fixture written; manifest: {manifest}")
        return EXIT_OK
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "sr": _cmd_sr,
        "eval": _cmd_eval,
        "degrade": _cmd_degrade,
        "fixture": _cmd_fixture,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
