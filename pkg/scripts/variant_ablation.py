#!/usr/bin/env python3
"""Train each Q-learning variant (and the supervised reward) on the desk preset and tabulate them.

Usage: python3 scripts/variant_ablation.py [--out runs/ablation] [--epochs 8]

One desk run takes roughly ten minutes on a single core, so the full sweep
of five runs takes close to an hour.
"""
import argparse
import sys
from pathlib import Path

from rlalign.agent import VARIANTS
from rlalign.cli import main as cli


def run(*argv):
    code = cli([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/ablation"))
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    held = args.out / "held"
    run("gen-data", "--out", held, "--pairs", 100, "--range", 3, "--translations-only", "--seed", 2024)

    arms = [(v, ["--variant", v]) for v in VARIANTS]
    arms.append(("supervised", ["--variant", "dueling", "--reward-mode", "supervised"]))
    reports = []
    for name, extra in arms:
        ckpt = args.out / name / "agent.bin"
        run("train", "--preset", "desk", "--epochs", args.epochs, "--out", ckpt, "--workers", 1,
            "--seed", args.seed, *extra)
        report = args.out / f"{name}.jsonl"
        run("evaluate", "--data", held, "--ckpt", ckpt, "--out", report, "--label", name,
            "--workers", 1, "--max-steps", 200)
        reports.append(report)
    run("report", *reports, "--out", args.out / "variants")


if __name__ == "__main__":
    main()
