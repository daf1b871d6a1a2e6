"""Command-line entry point.

Subcommands: generate-data, train, evaluate, sweep-snr, sweep-cbr,
sweep-gop, baseline. Every run writes its resolved configuration, seeds,
and plan into a JSON manifest next to its outputs; report CSVs get PSNR
and MS-SSIM figures rendered alongside.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .baseline.ldpc import load_alist, make_regular_code, write_alist
from .baseline.qam import make_constellation
from .config import RunConfig, SyntheticSection, apply_overrides, load_config
from .errors import ConfigError, SemvidError
from .experiments import evaluate_baseline, evaluate_gop_sizes, evaluate_model
from .metrics import content_hash, write_report
from .pipeline import (
    TransceiverConfig,
    build_run_manifest,
    build_transceiver,
    plan_from_channels,
    plan_rates,
    write_manifest,
)
from .reporting import render_report_figures
from .training import TrainConfig, load_checkpoint, train_run
from .videoio import (
    VideoSequence,
    load_sequence,
    materialize_frames,
    split_train_test,
    synthesize_moving_shapes,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are exit code 1, not 2
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="semvid", description=__doc__)
    parser.add_argument("--version", action="version", version=f"semvid {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="YAML run configuration")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config value (repeatable)",
        )
        p.add_argument("--out", default=None, help="output directory override")
        return p

    add("generate-data", "materialize a synthetic dataset as train/ and test/ PNG dirs")

    p = add("train", "train the learned transceiver")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")

    for name in ("evaluate", "sweep-snr"):
        p = add(
            name,
            "evaluate a checkpoint at one SNR" if name == "evaluate" else "sweep SNR points",
        )
        p.add_argument("--checkpoint", default=None)
        p.add_argument(
            "--mode",
            default="full",
            choices=("full", "no-mfc", "iframe-only"),
            help="receiver ablation mode",
        )

    p = add("sweep-cbr", "evaluate several checkpoints at their bandwidth ratios")
    p.add_argument("--checkpoints", default=None, help="comma-separated checkpoint paths")
    p.add_argument("--snr", type=float, default=12.0, help="fixed SNR for the sweep")

    p = add("sweep-gop", "evaluate one checkpoint at several GoP sizes")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--sizes", default="5,10,20", help="comma-separated GoP sizes")

    p = add("baseline", "run the classical LDPC/QAM chain over the SNR sweep")
    p.add_argument("--snr", type=float, default=None, help="single SNR instead of the sweep")

    return parser


def _resolve_out(args, config: RunConfig) -> str:
    out = args.out if args.out else config.output_dir()
    os.makedirs(out, exist_ok=True)
    return out


def _load_splits(config: RunConfig, gop_size: int | None = None):
    """(train, test) sequences from a frame directory or inline synthesis."""
    size = gop_size or config.data.gop_size
    data = config.data
    if data.path:
        train_dir = os.path.join(data.path, "train")
        test_dir = os.path.join(data.path, "test")
        crop_seed = data.synthetic.seed if data.synthetic else 0
        if os.path.isdir(train_dir) and os.path.isdir(test_dir):
            return (
                load_sequence(train_dir, size, crop=data.crop, seed=crop_seed),
                load_sequence(test_dir, size, crop=data.crop, seed=crop_seed),
            )
        seq = load_sequence(data.path, size, crop=data.crop, seed=crop_seed)
        return split_train_test(seq, data.train_fraction)
    synth = data.synthetic or SyntheticSection()
    seq = synthesize_moving_shapes(synth.seed, synth.n_gops, size, synth.dims, synth.static)
    return split_train_test(seq, data.train_fraction)


def _load_model(args, config: RunConfig):
    path = getattr(args, "checkpoint", None) or config.model.checkpoint
    if not path:
        raise ConfigError("no checkpoint given (use --checkpoint or model.checkpoint)")
    ck = load_checkpoint(path)
    model = ck.build_model()
    model.eval()
    with open(path, "rb") as f:
        identity = content_hash(f.read())
    return model, ck, path, identity


def _emit(report, out_dir: str, stem: str, manifest: dict) -> str:
    csv_path = write_report(report, os.path.join(out_dir, f"{stem}.csv"))
    write_manifest(manifest, os.path.join(out_dir, f"{stem}.run.json"))
    figures = render_report_figures(csv_path, axis_name=report.axis_name)
    print(f"wrote {csv_path}")
    for fig in figures:
        print(f"wrote {fig}")
    return csv_path


def _cmd_generate_data(args, config: RunConfig) -> int:
    out = _resolve_out(args, config)
    synth = config.data.synthetic or SyntheticSection()
    size = config.data.gop_size
    seq = synthesize_moving_shapes(synth.seed, synth.n_gops, size, synth.dims, synth.static)
    train, test = split_train_test(seq, config.data.train_fraction)
    train_paths = materialize_frames(train, os.path.join(out, "train"))
    test_paths = materialize_frames(test, os.path.join(out, "test"))
    meta = {
        "synthetic": vars(synth) | {"dims": list(synth.dims)},
        "gop_size": size,
        "train_gops": train.n,
        "test_gops": test.n,
        "train_frames": len(train_paths),
        "test_frames": len(test_paths),
        "split_policy": "contiguous-by-gop",
        "config": config.to_dict(),
    }
    write_manifest(meta, os.path.join(out, "dataset.json"))
    print(f"wrote {train.n} train / {test.n} test GoPs under {out}")
    return 0


def _cmd_train(args, config: RunConfig) -> int:
    out = _resolve_out(args, config)
    train_seq, _ = _load_splits(config)
    dims = train_seq.frame_dims
    plan = plan_rates(
        config.rates.target_cbr, config.rates.ratio, dims, train_seq.gop_size
    )
    model_cfg = TransceiverConfig(
        i_channels=plan.i_channels,
        p_channels=plan.p_channels,
        codec_width=config.model.codec_width,
        coder_width=config.model.coder_width,
        offset_channels=config.model.offset_channels,
        history_window=config.model.history_window,
        profile=config.model.profile,
        seed=config.model.seed,
    )
    model = build_transceiver(model_cfg)
    train_cfg = TrainConfig(
        steps=config.train.steps,
        lr_start=config.train.lr_start,
        lr_end=config.train.lr_end,
        batch_size=config.train.batch_size,
        gop_size=train_seq.gop_size,
        snr_range_db=config.train.snr_range_db,
        seed=config.train.seed,
        checkpoint_every=config.train.checkpoint_every,
    )
    ck = train_run(train_seq, train_cfg, model, plan, out, resume_from=args.resume)
    manifest = build_run_manifest(
        plan,
        snr_db=list(config.train.snr_range_db),
        seeds={"train": config.train.seed, "model": config.model.seed},
        config=config.to_dict(),
        checkpoint=os.path.join(out, "checkpoint_latest.pt"),
        extra={"steps": ck.step, "final_loss": ck.loss_log[-1][3] if ck.loss_log else None},
    )
    write_manifest(manifest, os.path.join(out, "train.run.json"))
    print(f"trained {ck.step} steps; checkpoints under {out}")
    return 0


def _eval_common(args, config: RunConfig, snr_points, stem: str) -> int:
    out = _resolve_out(args, config)
    model, ck, path, identity = _load_model(args, config)
    _, test_seq = _load_splits(config)
    report = evaluate_model(
        model,
        test_seq,
        snr_points,
        base_seed=config.channel.seed,
        mode=args.mode,
        config_echo=config.to_dict(),
    )
    plan = plan_from_channels(
        model.config.i_channels, model.config.p_channels, test_seq.frame_dims, test_seq.gop_size
    )
    manifest = build_run_manifest(
        plan,
        snr_db=snr_points,
        seeds={"channel": config.channel.seed},
        config=config.to_dict(),
        checkpoint=f"{path}#{identity}",
        extra={"mode": args.mode, "test_gops": test_seq.n},
    )
    _emit(report, out, stem, manifest)
    return 0


def _cmd_evaluate(args, config: RunConfig) -> int:
    return _eval_common(args, config, float(config.channel.snr_db), "evaluate")


def _cmd_sweep_snr(args, config: RunConfig) -> int:
    return _eval_common(args, config, [float(s) for s in config.channel.sweep], "sweep_snr")


def _cmd_sweep_cbr(args, config: RunConfig) -> int:
    out = _resolve_out(args, config)
    paths = (
        [p for p in args.checkpoints.split(",") if p]
        if args.checkpoints
        else list(config.model.checkpoints)
    )
    if not paths:
        raise ConfigError("sweep-cbr needs --checkpoints or model.checkpoints")
    _, test_seq = _load_splits(config)
    from .metrics import MetricsReport

    report = MetricsReport(axis_name="cbr", config=config.to_dict())
    manifests = []
    for path in paths:
        ck = load_checkpoint(path)
        model = ck.build_model()
        model.eval()
        plan = plan_from_channels(
            model.config.i_channels,
            model.config.p_channels,
            test_seq.frame_dims,
            test_seq.gop_size,
        )
        point = evaluate_model(
            model, test_seq, args.snr, base_seed=config.channel.seed, config_echo={}
        )
        for row in point.frame_rows:
            report.frame_rows.append(
                type(row)(plan.achieved_cbr, row.gop_index, row.frame_index, row.psnr, row.ms_ssim, row.lpips)
            )
        for row in point.gop_rows:
            report.gop_rows.append(
                type(row)(plan.achieved_cbr, row.gop_index, row.psnr, row.ms_ssim, row.lpips)
            )
        manifests.append({"checkpoint": path, "achieved_cbr": plan.achieved_cbr})
    manifest = {
        "snr_db": args.snr,
        "points": manifests,
        "seeds": {"channel": config.channel.seed},
        "config": config.to_dict(),
    }
    write_manifest(manifest, os.path.join(out, "sweep_cbr.run.json"))
    csv_path = write_report(report, os.path.join(out, "sweep_cbr.csv"))
    for fig in render_report_figures(csv_path, axis_name="cbr"):
        print(f"wrote {fig}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_sweep_gop(args, config: RunConfig) -> int:
    out = _resolve_out(args, config)
    model, ck, path, identity = _load_model(args, config)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise ConfigError("no GoP sizes given")
    # load the test material as a flat frame stack and regroup per size
    _, test_seq = _load_splits(config, gop_size=max(sizes))
    frames = test_seq.all_frames()
    report = evaluate_gop_sizes(
        model,
        frames,
        sizes,
        snr_db=float(config.channel.snr_db),
        base_seed=config.channel.seed,
        config_echo=config.to_dict(),
    )
    plan = plan_from_channels(
        model.config.i_channels, model.config.p_channels, test_seq.frame_dims, sizes[0]
    )
    manifest = build_run_manifest(
        plan,
        snr_db=float(config.channel.snr_db),
        seeds={"channel": config.channel.seed},
        config=config.to_dict(),
        checkpoint=f"{path}#{identity}",
        extra={"gop_sizes": sizes, "test_frames": int(frames.shape[0])},
    )
    _emit(report, out, "sweep_gop", manifest)
    return 0


def _cmd_baseline(args, config: RunConfig) -> int:
    out = _resolve_out(args, config)
    b = config.baseline
    if b.code_file:
        code = load_alist(b.code_file)
        code_id = b.code_file
    else:
        code = make_regular_code(b.code_n, b.code_seed, b.col_weight, b.row_weight)
        code_id = os.path.join(out, f"ldpc_n{b.code_n}_seed{b.code_seed}.alist")
        if not os.path.exists(code_id):
            write_alist(code, code_id)
    constellation = make_constellation(b.constellation)
    _, test_seq = _load_splits(config)
    snr_points = [args.snr] if args.snr is not None else [float(s) for s in config.channel.sweep]
    report = evaluate_baseline(
        test_seq,
        snr_points,
        code,
        constellation,
        b.quality,
        base_seed=config.channel.seed,
        max_iters=b.max_iters,
        interleaver_seed=b.interleaver_seed,
        config_echo=config.to_dict(),
    )
    manifest = {
        "snr_db": snr_points,
        "code": {"file": code_id, "n": code.n, "k": code.k, "design_rate": code.design_rate},
        "constellation": b.constellation,
        "quality": b.quality,
        "seeds": {"channel": config.channel.seed, "interleaver": b.interleaver_seed},
        "config": config.to_dict(),
    }
    write_manifest(manifest, os.path.join(out, "baseline.run.json"))
    _emit_baseline = write_report(report, os.path.join(out, "baseline.csv"))
    for fig in render_report_figures(_emit_baseline, axis_name="snr_db"):
        print(f"wrote {fig}")
    print(f"wrote {_emit_baseline}")
    return 0


_COMMANDS = {
    "generate-data": _cmd_generate_data,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep-snr": _cmd_sweep_snr,
    "sweep-cbr": _cmd_sweep_cbr,
    "sweep-gop": _cmd_sweep_gop,
    "baseline": _cmd_baseline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("semvid: a command is required", file=sys.stderr)
            return 1
        config = load_config(args.config)
        apply_overrides(config, args.overrides)
        return _COMMANDS[args.command](args, config)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(str(exc), file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"semvid: config error: {exc}", file=sys.stderr)
        return 1
    except SemvidError as exc:
        print(f"semvid: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"semvid: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
