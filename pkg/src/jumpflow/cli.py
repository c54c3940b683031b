"""Command-line entry points.

Subcommands: ``gen-data`` (write a dataset), ``train`` (fit the reference net),
``sample`` (generate from a checkpoint or reconstruct through the exact
coupling), ``eval`` (length-distribution and context-fidelity report), and
``flops`` (cost table).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All randomness flows from ``--seed`` through named substreams.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import checkpoint as ckpt
from . import data as datamod
from . import fields
from .config import ConfigError, RunConfig, load_config
from .evalmetrics import LengthHistogram, evaluate_lengths
from .flopcost import analytic_costs, empirical_cost
from .frames import FrameSeq
from .net import NetConfig, ReferenceNet
from .oracle import ConditionalOracle
from .rng import substream
from .sampler import SampleTrace, generate
from .training import train_loop


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="jumpflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate and serialize a dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--kind", choices=("toy", "mixture"), default="toy")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--weights", default=None, help="comma list of toy length weights")

    t = sub.add_parser("train", help="train the reference net")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--resume", action="store_true")
    t.add_argument("--log", default=None, help="loss log path (default: <out>.log)")

    s = sub.add_parser("sample", help="generate sequences")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--oracle", help="dataset file of reconstruction targets")
    s.add_argument("--config", default=None)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--trace", default=None)
    s.add_argument("--task", choices=("uncond", "i2v", "prefix", "interp"), default="uncond")
    s.add_argument("--context-data", default=None)
    s.add_argument("--ws", type=float, default=None, help="override sampler.w_s")
    s.add_argument("--h", type=float, default=None, help="override sampler.h")
    s.add_argument("--seed", type=int, default=None, help="override sampler.seed")

    e = sub.add_parser("eval", help="compare generated lengths against a reference")
    e.add_argument("--generated", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--modes", default="15,20,25,30")
    e.add_argument("--context-data", default=None)
    e.add_argument("--task", choices=("uncond", "i2v", "prefix", "interp"), default="uncond")
    e.add_argument("--trace", default=None)

    f = sub.add_parser("flops", help="print the attention-cost table")
    f.add_argument("--n", type=int, required=True)
    f.add_argument("--tokens", type=int, required=True)
    f.add_argument("--t-full", type=float, required=True)
    f.add_argument("--t-ar", type=float, required=True)
    f.add_argument("--alpha", type=float, default=2.0)
    f.add_argument("--trace", default=None)
    return p


def _context_for(task: str, video: FrameSeq):
    if task == "uncond":
        return None
    if task == "i2v":
        return fields.first_frame(video.frame(0))
    if task == "prefix":
        k = min(2, len(video))
        return fields.prefix([video.frame(i) for i in range(k)])
    if task == "interp":
        return fields.interpolation([video.frame(0), video.frame(len(video) - 1)])
    raise UsageError(f"unknown task {task}")


def _context_frames_for(task: str, video: FrameSeq):
    ctx = _context_for(task, video)
    return [] if ctx is None else [c.frame for c in ctx.frames]


def cmd_gen_data(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    rng = substream(args.seed, "data")
    if args.kind == "toy":
        weights = None
        if args.weights:
            weights = [float(x) for x in args.weights.split(",")]
            if len(weights) != len(datamod.TOY_LENGTHS):
                raise UsageError("--weights needs one value per toy length mode")
        videos = datamod.gen_toy(args.count, rng, length_weights=weights)
    else:
        videos = datamod.gen_mixture(args.count, rng)
    datamod.write_dataset(args.out, videos)
    print(f"wrote {len(videos)} {args.kind} videos to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    videos = datamod.read_dataset(args.data)
    if not videos:
        raise datamod.DataFileError("training dataset is empty")
    frame_shape = videos[0].frame_shape
    net_cfg = NetConfig(
        frame_shape=frame_shape,
        hidden=cfg.model.hidden,
        blocks=cfg.model.blocks,
        mlp_ratio=cfg.model.mlp_ratio,
    )
    start_step = 0
    if args.resume:
        net, start_step = ckpt.load_checkpoint(args.out, expect_cfg=net_cfg)
    else:
        net = ReferenceNet(net_cfg, seed=cfg.train.seed)
    log_path = args.log if args.log else args.out + ".log"
    mode = "a" if args.resume else "w"
    with open(log_path, mode, encoding="utf-8") as log_file:

        def on_log(step, ins, vel):
            log_file.write(f"{step} {ins:.6f} {vel:.6f}\n")
            log_file.flush()
            print(f"step {step}: insertion_nll={ins:.4f} velocity_mse={vel:.4f}")

        train_loop(
            net,
            videos,
            cfg.train,
            cfg.scheduler,
            cfg.time_dist,
            cfg.loss,
            start_step=start_step,
            on_log=on_log,
        )
    ckpt.save_checkpoint(args.out, net, step=start_step + cfg.train.steps)
    print(f"saved checkpoint to {args.out}")
    return 0


def cmd_sample(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.ws is not None:
        overrides["w_s"] = args.ws
    if args.h is not None:
        overrides["h"] = args.h
    if args.seed is not None:
        overrides["seed"] = args.seed
    scfg = cfg.sampler_config(**overrides)

    ctx_videos = None
    if args.context_data:
        ctx_videos = datamod.read_dataset(args.context_data)
        if not ctx_videos:
            raise datamod.DataFileError("context dataset is empty")
    if args.task != "uncond" and ctx_videos is None:
        raise UsageError(f"--task {args.task} needs --context-data")

    oracle_targets = None
    model = None
    if args.oracle:
        oracle_targets = datamod.read_dataset(args.oracle)
        if not oracle_targets:
            raise datamod.DataFileError("oracle dataset is empty")
        if args.task != "uncond":
            raise UsageError("oracle reconstruction runs are unconditional")
    else:
        model, _ = ckpt.load_checkpoint(args.checkpoint)

    pick_rng = substream(scfg.seed, "sample")
    outputs, traces = [], []
    for run in range(args.count):
        run_rng = substream(scfg.seed, "sample", extra=run + 1)
        if oracle_targets is not None:
            target = oracle_targets[int(pick_rng.integers(0, len(oracle_targets)))]
            oracle = ConditionalOracle.build(
                target, scfg.scheduler, scfg.n_start, substream(scfg.seed, "times", extra=run + 1)
            )
            seq, trace = generate(oracle, scfg, rng=run_rng)
        else:
            ctx = None
            if ctx_videos is not None:
                ctx = _context_for(args.task, ctx_videos[run % len(ctx_videos)])
            seq, trace = generate(model, scfg, ctx=ctx, rng=run_rng)
        outputs.append(seq)
        traces.append(trace)

    datamod.write_dataset(args.out, outputs)
    if args.trace:
        write_trace_file(args.trace, traces)
    lengths = [len(v) for v in outputs]
    print(
        f"wrote {len(outputs)} videos to {args.out} "
        f"(mean length {np.mean(lengths):.2f}, min {min(lengths)}, max {max(lengths)})"
    )
    return 0


def write_trace_file(path, traces: list[SampleTrace]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for run, trace in enumerate(traces):
            for rec in trace.records:
                f.write(
                    json.dumps(
                        {
                            "run": run,
                            "step": rec.step,
                            "t_g": rec.t_g,
                            "n_active": rec.n_active,
                            "inserted_slots": list(rec.inserted_slots),
                        }
                    )
                    + "\n"
                )


def read_trace_step_counts(path) -> list[int]:
    counts: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            rec = json.loads(line)
            counts[rec["run"]] = counts.get(rec["run"], 0) + 1
    return [counts[k] for k in sorted(counts)]


def cmd_eval(args) -> int:
    generated = datamod.read_dataset(args.generated)
    reference = datamod.read_dataset(args.reference)
    if not generated or not reference:
        raise datamod.DataFileError("eval needs nonempty generated and reference sets")
    modes = tuple(int(x) for x in args.modes.split(","))
    ctx_frames = None
    if args.context_data:
        ctx_videos = datamod.read_dataset(args.context_data)
        ctx_frames = []
        for run, video in enumerate(generated):
            ctx_frames.append(_context_frames_for(args.task, ctx_videos[run % len(ctx_videos)]))
    step_counts = read_trace_step_counts(args.trace) if args.trace else ()

    gen_hist = LengthHistogram.from_videos(generated)
    ref_hist = LengthHistogram.from_videos(reference)
    report = evaluate_lengths(generated, reference, modes=modes, step_counts=step_counts)
    context_ok = None
    if ctx_frames is not None:
        from .evalmetrics import contains_context

        context_ok = all(
            contains_context(v, frames) for v, frames in zip(generated, ctx_frames)
        )
    out = report.as_dict()
    out["context_ok"] = context_ok
    out["generated_hist"] = {str(k): v for k, v in sorted(gen_hist.counts.items())}
    out["reference_hist"] = {str(k): v for k, v in sorted(ref_hist.counts.items())}
    print(json.dumps(out, indent=2))
    return 0


def cmd_flops(args) -> int:
    report = analytic_costs(args.n, args.tokens, args.t_full, args.t_ar, args.alpha)
    rows = report.rows()
    if args.trace:
        counts = {}
        with open(args.trace, "r", encoding="utf-8") as f:
            records = [json.loads(line) for line in f]
        per_run: dict[int, float] = {}
        for rec in records:
            per_run[rec["run"]] = per_run.get(rec["run"], 0.0) + (
                rec["n_active"] * args.tokens
            ) ** 2
            counts = per_run
        measured = float(np.mean(list(counts.values())))
        rows.append(("interleaved (measured)", measured))
    width = max(len(name) for name, _ in rows)
    print(f"{'paradigm':<{width}}  attention FLOPs")
    for name, value in rows:
        print(f"{name:<{width}}  {value:.6g}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "gen-data": cmd_gen_data,
            "train": cmd_train,
            "sample": cmd_sample,
            "eval": cmd_eval,
            "flops": cmd_flops,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (
        ConfigError,
        datamod.DataFileError,
        ckpt.CheckpointError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
