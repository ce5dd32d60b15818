"""Command-line interface.

Subcommands: ``synth-gen`` (build a synthetic dataset), ``train p2b|b2f|fr``
(train one stage), ``infer`` (run the three-stage reenactment), and
``evaluate`` (score a run against ground truth). Every stochastic
component is seeded through ``--seed``; identical invocations produce
bit-identical output files. Exit codes: 0 success, 2 usage error, 1
runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bodymap, core, face_refine, metrics, pipeline, renderer, synthdata
from .config import EvalConfig, PipelineConfig, load_flat
from .perception import PerceptionProviders


def _pipeline_config(args) -> PipelineConfig:
    flat = load_flat(args.config) if getattr(args, "config", None) else {}
    cfg = PipelineConfig.from_flat(flat)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "size", None):
        from .config import _conv_size

        cfg.size = _conv_size(args.size)
        cfg.synth.size = cfg.size
    return cfg


def cmd_synth_gen(args) -> int:
    cfg = _pipeline_config(args)
    persons = args.persons if args.persons is not None else cfg.synth.persons
    frames = args.frames if args.frames is not None else cfg.synth.frames
    dataset = synthdata.generate_dataset(
        persons=persons,
        frames=frames,
        size=cfg.synth.size,
        seed=cfg.seed,
        max_joint_step_deg=cfg.synth.max_joint_step_deg,
    )
    synthdata.write_dataset(dataset, args.out)
    print(f"wrote {persons} persons x {frames} frames at {cfg.synth.size[1]}x{cfg.synth.size[0]} to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _pipeline_config(args)
    dataset = synthdata.load_dataset(args.data)
    cfg.size = dataset.size
    stage = args.stage
    if stage == "p2b":
        if args.steps is not None:
            cfg.p2b.steps = args.steps
        trainer = bodymap.BodyMapTrainer(dataset, cfg.p2b, cfg.augment, seed=cfg.seed)
        reports = trainer.train()
        ckpt = pipeline.checkpoint_from_stage(
            "p2b",
            {"generator": trainer.generator, "discriminator": trainer.discriminator},
            cfg,
            {"ngf": cfg.p2b.ngf, "n_res": cfg.p2b.n_res},
        )
    elif stage == "b2f":
        if args.steps is not None:
            cfg.b2f.steps = args.steps
        providers = PerceptionProviders.build(cfg.providers)
        trainer = renderer.RendererTrainer(dataset, providers, cfg.b2f, cfg.augment, seed=cfg.seed)
        reports = trainer.train()
        ckpt = pipeline.checkpoint_from_stage(
            "b2f",
            {"generator": trainer.generator, "discriminator": trainer.discriminator},
            cfg,
            {"base_channels": cfg.b2f.base_channels},
        )
    elif stage == "fr":
        if args.steps is not None:
            cfg.fr.steps = args.steps
        providers = PerceptionProviders.build(cfg.providers)
        trainer = face_refine.FaceRefinerTrainer(dataset, providers, cfg.fr, seed=cfg.seed)
        reports = trainer.train()
        ckpt = pipeline.checkpoint_from_stage(
            "fr",
            {"generator": trainer.model, "discriminator": trainer.discriminator},
            cfg,
            {"crop": cfg.fr.crop, "base_channels": cfg.fr.base_channels},
        )
    else:  # unreachable, argparse restricts choices
        raise core.ConfigError(f"unknown stage {stage!r}")
    pipeline.save_checkpoint(args.out, ckpt)
    bodymap.save_reports(reports, f"{args.out}.losses.json")
    last = reports[-1].values
    print(f"trained {stage} for {len(reports)} steps; final losses: " + ", ".join(f"{k}={v:.4f}" for k, v in last.items()))
    return 0


def cmd_infer(args) -> int:
    dataset = synthdata.load_dataset(args.data)
    reactor = pipeline.Reenactor(args.p2b, args.b2f, None if args.skip_fr else args.fr)
    target = pipeline.select_records(dataset, args.target)[0]
    driving = pipeline.select_records(dataset, args.driving)
    if args.frames is not None:
        driving = driving[: args.frames]
    backgrounds = pipeline.resolve_backgrounds(
        args.background, len(driving), driving, target, reactor.providers
    )
    outputs = reactor.reenact(
        target,
        driving,
        backgrounds,
        force_mask_zero=args.force_mask_zero,
        skip_fr=args.skip_fr,
    )
    pipeline.write_run(outputs, args.out, debug_dir=args.debug_dir)
    print(f"wrote {len(outputs)} frames to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    flat = load_flat(args.config) if args.config else {}
    cfg = PipelineConfig.from_flat(flat)
    providers = PerceptionProviders.build(cfg.providers)
    metadata = {}
    for name, path in (("p2b", args.p2b), ("b2f", args.b2f), ("fr", args.fr)):
        if path:
            metadata[f"checkpoint_{name}"] = metrics.checkpoint_digest(path)
    report = metrics.evaluate(
        args.gen, args.gt, providers, metric_names=cfg.eval.metrics, metadata=metadata
    )
    report.save(args.report)
    for name, entry in report.metrics.items():
        print(f"{name} ({entry['direction']} is better): {entry['value']:.6f} over {report.metadata['n_frames']} frames")
    print(f"report written to {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reenact",
        description="Single-shot person reenactment on procedural synthetic figures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("synth-gen", help="generate a synthetic dataset")
    p_gen.add_argument("--persons", type=int, default=None)
    p_gen.add_argument("--frames", type=int, default=None)
    p_gen.add_argument("--size", type=str, default=None, help="WxH, e.g. 80x128")
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--config", type=str, default=None)
    p_gen.add_argument("--out", type=str, required=True)
    p_gen.set_defaults(func=cmd_synth_gen)

    p_train = sub.add_parser("train", help="train one stage")
    p_train.add_argument("stage", choices=["p2b", "b2f", "fr"])
    p_train.add_argument("--data", type=str, required=True)
    p_train.add_argument("--steps", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--config", type=str, default=None)
    p_train.add_argument("--out", type=str, required=True)
    p_train.set_defaults(func=cmd_train)

    p_inf = sub.add_parser("infer", help="run the reenactment pipeline")
    p_inf.add_argument("--data", type=str, required=True)
    p_inf.add_argument("--target", type=str, required=True, help="person[:frame]")
    p_inf.add_argument("--driving", type=str, required=True, help="person[:a-b]")
    p_inf.add_argument("--p2b", type=str, required=True)
    p_inf.add_argument("--b2f", type=str, required=True)
    p_inf.add_argument("--fr", type=str, default=None)
    p_inf.add_argument(
        "--background",
        type=str,
        default="inpaint-driving",
        help="inpaint-driving | inpaint-target | image file | frame directory",
    )
    p_inf.add_argument("--frames", type=int, default=None)
    p_inf.add_argument("--seed", type=int, default=None)
    p_inf.add_argument("--config", type=str, default=None)
    p_inf.add_argument("--out", type=str, required=True)
    p_inf.add_argument("--debug-dir", type=str, default=None)
    p_inf.add_argument("--force-mask-zero", action="store_true")
    p_inf.add_argument("--skip-fr", action="store_true")
    p_inf.set_defaults(func=cmd_infer)

    p_eval = sub.add_parser("evaluate", help="score a run against ground truth")
    p_eval.add_argument("--gen", type=str, required=True)
    p_eval.add_argument("--gt", type=str, required=True)
    p_eval.add_argument("--report", type=str, required=True)
    p_eval.add_argument("--config", type=str, default=None)
    p_eval.add_argument("--p2b", type=str, default=None)
    p_eval.add_argument("--b2f", type=str, default=None)
    p_eval.add_argument("--fr", type=str, default=None)
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except core.ReenactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
