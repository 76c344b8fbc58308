"""``rlalign`` command line: gen-data, train, align, evaluate, baseline, report.

Exit codes: 0 ok, 2 config, 3 I/O, 4 numeric, 5 format.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import torch

from . import config as cfgmod
from .agent import VARIANTS, greedy_policy, train
from .dataset import DatasetSource, read_manifest, write_dataset
from .errors import ConfigError, FormatError, IOFailure, RLAlignError
from .evalkit import agent_aligner, baseline_aligner, compare, evaluate, write_comparison
from .imgcore import warp
from .imgio import read_image, write_img1
from .neural import load_checkpoint
from .phantom import PairStream
from .rlenv import RegistrationEnv, run_episode

log = logging.getLogger("rlalign")


def _looks(text: str) -> float:
    value = float(text)
    if math.isnan(value) or value <= 0:
        raise argparse.ArgumentTypeError("speckle looks must be a positive number or 'inf'")
    return value


def _triple(text: str) -> tuple:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return tuple(parts)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="flat JSON config file (default: none)")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default: ${cfgmod.SEED_ENV} or 0)")
    p.add_argument("--workers", type=int, default=None, help="parallel workers (default: all cores; 1 = deterministic timing fields)")


def _phantom_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--range", dest="motion_range", type=float, default=None, help="max |tx|,|ty|,|theta| of simulated motion (default: 3, limit 5)")
    p.add_argument("--noise", dest="speckle_looks", type=_looks, default=None, help="speckle looks, 'inf' for noise-free (default: 64)")
    p.add_argument("--window", type=int, default=None, help="crop size for each pair (default: 84)")
    p.add_argument("--translations-only", dest="rotate", action="store_const", const=False, default=None, help="simulate no rotation (default: off)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlalign", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress (default: off)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write synthetic phantom pairs and a manifest")
    g.add_argument("--out", type=Path, required=True, help="output directory")
    g.add_argument("--pairs", type=int, default=10, help="number of pairs (default: 10)")
    _phantom_flags(g)
    _common(g)

    t = sub.add_parser("train", help="train a Q-network agent")
    t.add_argument("--data", type=Path, default=None, help="dataset directory or manifest (default: stream fresh phantoms)")
    t.add_argument("--out", type=Path, required=True, help="checkpoint path")
    t.add_argument("--log", type=Path, default=None, help="epoch log path (default: <out>.log.jsonl)")
    t.add_argument("--preset", choices=sorted(cfgmod.PRESETS), default=None, help="parameter preset (default: none)")
    t.add_argument("--variant", default=None, help=f"one of {', '.join(VARIANTS)} (default: dueling)")
    t.add_argument("--reward-mode", dest="reward_mode", default=None, help="unsupervised or supervised (default: unsupervised)")
    t.add_argument("--reward-form", dest="reward_form", choices=("signed", "abs"), default=None, help="shaping reward form (default: signed)")
    t.add_argument("--aggregator", choices=("sum_fc", "mean"), default=None, help="dueling aggregation (default: sum_fc)")
    t.add_argument("--epochs", type=int, default=None, help="epochs (default: 30)")
    t.add_argument("--steps-per-epoch", dest="steps_per_epoch", type=int, default=None, help="environment steps per epoch (default: 2000)")
    t.add_argument("--batch-size", dest="batch_size", type=int, default=None, help="minibatch size (default: 64)")
    t.add_argument("--lr", type=float, default=None, help="Adam learning rate (default: 1e-3)")
    t.add_argument("--gamma", type=float, default=None, help="discount factor (default: 0.9)")
    t.add_argument("--warmup", type=int, default=None, help="transitions stored before updates start (default: 5000)")
    t.add_argument("--train-every", dest="train_every", type=int, default=None, help="environment steps per update (default: 1)")
    t.add_argument("--target-sync", dest="target_sync_every", type=int, default=None, help="steps between target syncs (default: 2500)")
    t.add_argument("--replay-capacity", dest="replay_capacity", type=int, default=None, help="replay memory size (default: 100000)")
    t.add_argument("--max-steps", dest="max_steps", type=int, default=None, help="episode step cap (default: 200)")
    t.add_argument("--epsilon-dist", dest="epsilon_dist", type=float, default=None, help="terminal D threshold (default: 0.05)")
    t.add_argument("--bonus", type=float, default=None, help="terminal bonus (default: 10)")
    _phantom_flags(t)
    _common(t)

    a = sub.add_parser("align", help="align one pair with a trained agent")
    a.add_argument("--fixed", type=Path, required=True, help="reference image (IMG1 or P5 PGM)")
    a.add_argument("--moving", type=Path, required=True, help="image to align (IMG1 or P5 PGM)")
    a.add_argument("--ckpt", type=Path, required=True, help="RLQNET1 checkpoint")
    a.add_argument("--out", type=Path, default=None, help="write the aligned moving image as IMG1 (default: none)")
    a.add_argument("--max-steps", dest="max_steps", type=int, default=None, help="episode step cap (default: from checkpoint)")

    e = sub.add_parser("evaluate", help="evaluate a checkpoint over a manifest")
    e.add_argument("--data", type=Path, required=True, help="dataset directory or manifest")
    e.add_argument("--ckpt", type=Path, required=True, help="RLQNET1 checkpoint")
    e.add_argument("--out", type=Path, required=True, help="report file (JSON lines)")
    e.add_argument("--label", default=None, help="method name in reports (default: checkpoint variant)")
    e.add_argument("--max-steps", dest="max_steps", type=int, default=None, help="episode step cap (default: from checkpoint)")
    _common(e)

    b = sub.add_parser("baseline", help="run the pattern-search registrar over a manifest")
    b.add_argument("--data", type=Path, required=True, help="dataset directory or manifest")
    b.add_argument("--out", type=Path, required=True, help="report file (JSON lines)")
    b.add_argument("--metric", dest="baseline_metric", choices=("nmi", "correlation", "dissimilarity"), default=None, help="similarity to optimise (default: nmi)")
    b.add_argument("--starts", dest="baseline_starts", type=int, default=None, help="multi-start count (default: 9)")
    b.add_argument("--max-evals", dest="baseline_max_evals", type=int, default=None, help="metric evaluations per start (default: 500)")
    b.add_argument("--initial-step", dest="baseline_initial_step", type=_triple, default=None, help="initial steps px,px,deg (default: 2,2,2)")
    b.add_argument("--shrink", dest="baseline_shrink", type=float, default=None, help="step shrink factor (default: 0.5)")
    b.add_argument("--tol", dest="baseline_tol", type=float, default=None, help="final step size (default: 0.05)")
    _common(b)

    r = sub.add_parser("report", help="compare two or more report files")
    r.add_argument("reports", type=Path, nargs="+", help="report files (JSON lines)")
    r.add_argument("--out", type=Path, required=True, help="output prefix; writes <out>.txt and <out>.csv")
    return parser


_FLAG_KEYS = (
    "seed", "workers", "motion_range", "speckle_looks", "window", "rotate", "variant", "reward_mode",
    "reward_form", "aggregator", "epochs", "steps_per_epoch", "batch_size", "lr", "gamma", "warmup",
    "train_every", "target_sync_every", "replay_capacity", "max_steps", "epsilon_dist", "bonus",
    "baseline_metric", "baseline_starts", "baseline_max_evals", "baseline_initial_step",
    "baseline_shrink", "baseline_tol",
)


def _run_config(args) -> cfgmod.RunConfig:
    overrides = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
    return cfgmod.build(getattr(args, "preset", None), getattr(args, "config", None), overrides)


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {path}: {exc}") from exc
    return path


def cmd_gen_data(args) -> int:
    if args.pairs < 1:
        raise ConfigError("--pairs must be >= 1")
    cfg = _run_config(args)
    out = _mkdir(args.out)
    write_dataset(out, args.pairs, cfg.motion_range, cfg.seed, cfg.phantom,
                  window=cfg.window, rotate=cfg.rotate)
    cfg.echo(out)
    print(f"wrote {args.pairs} pairs to {out}")
    return 0


def _set_threads(workers: int) -> None:
    if workers == 1:
        torch.set_num_threads(1)


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if args.data is not None:
        records = read_manifest(args.data)
        if not records:
            raise ConfigError(f"{args.data} lists no pairs")
        if cfg.agent.reward_mode == "supervised" and any(r.truth is None for r in records):
            raise ConfigError("supervised reward mode needs truth transforms in every manifest record")
        source = DatasetSource([(*r.load(), r.truth) for r in records])
    else:
        source = PairStream(cfg.phantom, cfg.motion_range, cfg.window, cfg.rotate)
    _set_threads(cfg.workers)
    out = args.out
    _mkdir(out.parent)
    log_path = args.log or out.with_name(out.name + ".log.jsonl")
    cfg.echo(out.parent)
    env = RegistrationEnv(source, cfg.env)
    meta = {"env": cfgmod.env_meta(cfg)}
    try:
        result = train(env, cfg.agent, cfg.schedule, checkpoint=out, log_path=log_path,
                       meta=meta, timed=cfg.workers != 1)
    except KeyboardInterrupt:
        print(f"interrupted; checkpoint flushed to {out}", file=sys.stderr)
        return 130
    print(f"trained {result.global_step} steps; checkpoint {out}; log {log_path}")
    return 0


def _load_agent(path: Path):
    params = load_checkpoint(path)
    env = cfgmod.env_from_meta(params.meta)
    if env is None:
        raise FormatError(f"{path} carries no environment settings")
    return params, env


def cmd_align(args) -> int:
    fixed = read_image(args.fixed)
    moving = read_image(args.moving)
    params, env = _load_agent(args.ckpt)
    if args.max_steps is not None:
        env = replace(env, max_steps=args.max_steps)
    arch = params.net.arch
    if fixed.shape != (arch.input_size, arch.input_size) or moving.shape != fixed.shape:
        raise FormatError(
            f"checkpoint expects {arch.input_size}x{arch.input_size} images, "
            f"got {fixed.shape} and {moving.shape}"
        )
    torch.set_num_threads(1)
    report = run_episode(fixed, moving, greedy_policy(params.net), env, timed=False)
    t = report.final_t
    print(f"tx {t.tx:.3f}")
    print(f"ty {t.ty:.3f}")
    print(f"theta {t.theta:.3f}")
    print(f"steps {report.steps}")
    print(f"nmi {report.nmi:.3f}")
    print(f"rho {report.rho:.3f}")
    if args.out is not None:
        write_img1(args.out, warp(moving, t))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    params, env = _load_agent(args.ckpt)
    if args.max_steps is not None:
        env = replace(env, max_steps=args.max_steps)
    _set_threads(cfg.workers)
    _mkdir(args.out.parent)
    evaluate(args.data, agent_aligner(params, env, args.label), args.out, workers=cfg.workers)
    cfg.echo(args.out.parent)
    print(f"wrote {args.out}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _run_config(args)
    _mkdir(args.out.parent)
    evaluate(args.data, baseline_aligner(cfg.baseline, cfg.env), args.out, workers=cfg.workers)
    cfg.echo(args.out.parent)
    print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    comparison = compare(args.reports)
    _mkdir(args.out.parent)
    txt, csv_path = write_comparison(comparison, args.out)
    print(comparison.to_text(), end="")
    print(f"wrote {txt} and {csv_path}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "align": cmd_align,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except RLAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
