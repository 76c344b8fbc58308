#!/usr/bin/env python3
"""Train the desk agent, evaluate it, and compare against the baseline registrar.

Usage: python3 scripts/desk_experiment.py [--out runs/desk] [--seed 0] [--noise 64]

Writes everything under ``--out``: held-out pairs, the checkpoint with its
epoch log, per-pair reports and a comparison table (``compare.txt``/``.csv``).
"""
import argparse
import json
import statistics
import sys
from pathlib import Path

from rlalign.cli import main as cli


def run(*argv):
    code = cli([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/desk"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--noise", default="64", help="speckle looks of the held-out pairs")
    args = p.parse_args()
    out = args.out
    held, ckpt = out / "held", out / "ckpt" / "agent.bin"

    run("gen-data", "--out", held, "--pairs", args.pairs, "--range", 3, "--translations-only",
        "--noise", args.noise, "--seed", 2024 + args.seed)
    run("train", "--preset", "desk", "--out", ckpt, "--workers", 1, "--seed", args.seed)
    run("evaluate", "--data", held, "--ckpt", ckpt, "--out", out / "agent.jsonl", "--workers", 1,
        "--max-steps", 200)
    run("baseline", "--data", held, "--out", out / "baseline.jsonl", "--workers", 1,
        "--starts", 1, "--max-evals", 200)
    run("report", out / "agent.jsonl", out / "baseline.jsonl", "--out", out / "compare")

    reports = [json.loads(line) for line in (out / "agent.jsonl").read_text().splitlines()]
    d0 = statistics.median(r["d_initial"] for r in reports)
    d1 = statistics.median(r["d_final"] for r in reports)
    hit = sum(r["success"] for r in reports) / len(reports)
    print(f"median D {d0:.3f} -> {d1:.3f} (ratio {d1 / d0:.2f}); success {hit:.0%}")


if __name__ == "__main__":
    main()
