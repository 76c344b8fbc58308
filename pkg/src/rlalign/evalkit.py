"""Batch evaluation, summary statistics and comparison tables.

Statistics use the population standard deviation and quartiles by linear
interpolation between closest ranks (numpy's default ``linear`` method).
Report files are JSON lines, one :class:`EpisodeReport` per pair, in
manifest order.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baseline import BaselineConfig, register
from .dataset import read_manifest
from .errors import InputError, IOFailure
from .imgcore import warp
from .neural import QNetworkParams
from .rlenv import EnvConfig, EpisodeReport, final_metrics, run_episode
from .simkit import dissimilarity

METRICS = ("nmi", "rho", "score", "wall_s")
METRIC_LABELS = {"nmi": "NMI", "rho": "rho", "score": "Episode score", "wall_s": "Time (sec)"}
SUMMARY_HEADER = ["method", "metric", "mean", "std", "q25", "median", "q75"]


@dataclass(frozen=True)
class StatSummary:
    mean: float
    std: float
    q25: float
    median: float
    q75: float

    def as_row(self) -> list[float]:
        return [self.mean, self.std, self.q25, self.median, self.q75]


def summarize(reports, metric) -> StatSummary:
    """Summary of one metric; ``metric`` is a field name or a report -> value callable."""
    if not reports:
        raise InputError("cannot summarize an empty report list")
    getter = metric if callable(metric) else (lambda r: getattr(r, metric))
    values = np.array([getter(r) for r in reports], dtype=np.float64)
    q25, median, q75 = np.percentile(values, [25, 50, 75])
    return StatSummary(float(values.mean()), float(values.std()), float(q25), float(median), float(q75))


def summaries(reports) -> dict:
    """Per-metric summaries, ``None`` where a metric is missing (e.g. baseline score)."""
    out = {}
    for m in METRICS:
        vals = [getattr(r, m) for r in reports]
        out[m] = None if any(v is None for v in vals) else summarize(reports, m)
    return out


# --- aligners -----------------------------------------------------------


def agent_aligner(params: QNetworkParams, env_cfg: EnvConfig, method: str | None = None):
    from .agent import greedy_policy

    policy = greedy_policy(params.net)
    name = method or params.meta.get("variant", "agent")

    def align(fixed, moving, truth, pair_id, timed):
        return run_episode(fixed, moving, policy, env_cfg, truth=truth, pair_id=pair_id,
                           method=name, timed=timed)

    return align


def baseline_aligner(cfg: BaselineConfig, env_cfg: EnvConfig = EnvConfig(), method: str = "baseline"):
    def align(fixed, moving, truth, pair_id, timed):
        start = time.perf_counter()
        result = register(fixed, moving, cfg)
        wall = time.perf_counter() - start if timed else 0.0
        nmi_v, rho_v = final_metrics(fixed, moving, result.transform, cfg.similarity.nmi_bins)
        d0 = dissimilarity(fixed, moving, env_cfg.similarity)
        d1 = dissimilarity(fixed, warp(moving, result.transform), env_cfg.similarity)
        return EpisodeReport(pair_id, method, nmi_v, rho_v, None, result.evals, wall,
                             result.transform, truth, d0, d1, d1 <= env_cfg.epsilon_dist)

    return align


# --- batch evaluation -----------------------------------------------------------

_WORKER = {}


def _worker_init(aligner, timed):
    _WORKER["align"] = aligner
    _WORKER["timed"] = timed


def _worker_run(record):
    fixed, moving = record.load()
    return _WORKER["align"](fixed, moving, record.truth, record.pair_id, _WORKER["timed"])


def evaluate_records(records, aligner, *, workers: int = 1, timed: bool | None = None) -> list[EpisodeReport]:
    """Align every record; output order always follows ``records``.

    ``timed`` defaults to ``workers != 1``: single-worker runs record zero wall
    time so their report files are reproducible byte for byte.
    """
    if timed is None:
        timed = workers != 1
    if workers <= 1:
        _worker_init(aligner, timed)
        return [_worker_run(r) for r in records]
    import multiprocessing as mp

    ctx = mp.get_context("fork")
    with ctx.Pool(workers, initializer=_worker_init, initargs=(aligner, timed)) as pool:
        return pool.map(_worker_run, records)


def write_reports(reports, path) -> None:
    try:
        with open(path, "w") as fh:
            for r in reports:
                fh.write(json.dumps(r.to_dict()) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write reports {path}: {exc}") from exc


def read_reports(path) -> list[EpisodeReport]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read reports {path}: {exc}") from exc
    return [EpisodeReport.from_dict(json.loads(line)) for line in lines if line.strip()]


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.3f}"


def render_summary_text(method: str, stats: dict) -> str:
    rows = [
        ("Average ± Std", lambda s: f"{s.mean:.3f} ± {s.std:.3f}"),
        ("Lower quartile (25%)", lambda s: f"{s.q25:.3f}"),
        ("Median (50%)", lambda s: f"{s.median:.3f}"),
        ("Upper quartile (75%)", lambda s: f"{s.q75:.3f}"),
    ]
    header = ["Statistical measure"] + [METRIC_LABELS[m] for m in METRICS]
    table = [header] + [[label] + ["n/a" if stats[m] is None else f(stats[m]) for m in METRICS]
                        for label, f in rows]
    return f"method: {method}\n" + _align(table)


def _align(table) -> str:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    return "\n".join(lines) + "\n"


def render_summary_csv(method: str, stats: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for m in METRICS:
        s = stats[m]
        w.writerow([method, m] + (["" for _ in range(5)] if s is None else [repr(v) for v in s.as_row()]))
    return buf.getvalue()


def summary_paths(out_path) -> tuple[Path, Path]:
    out = Path(out_path)
    stem = out.name[:-len(".jsonl")] if out.name.endswith(".jsonl") else out.stem
    return out.with_name(stem + ".summary.txt"), out.with_name(stem + ".summary.csv")


def evaluate(manifest, aligner, out_path, *, workers: int = 1, method: str | None = None) -> list[EpisodeReport]:
    """Evaluate every manifest pair; write reports plus summary text and CSV."""
    records = read_manifest(manifest)
    if not records:
        raise InputError(f"manifest {manifest} lists no pairs")
    reports = evaluate_records(records, aligner, workers=workers)
    write_reports(reports, out_path)
    name = method or reports[0].method
    stats = summaries(reports)
    txt, csv_path = summary_paths(out_path)
    try:
        txt.write_text(render_summary_text(name, stats))
        csv_path.write_text(render_summary_csv(name, stats))
    except OSError as exc:
        raise IOFailure(f"cannot write summary next to {out_path}: {exc}") from exc
    return reports


# --- comparison -----------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    methods: list
    stats: list  # one dict metric -> StatSummary | None per method

    def to_text(self) -> str:
        header = ["Method"] + [METRIC_LABELS[m] for m in METRICS]
        rows = [header]
        for name, st in zip(self.methods, self.stats):
            rows.append([name] + ["n/a" if st[m] is None else f"{st[m].mean:.3f} ± {st[m].std:.3f}"
                                  for m in METRICS])
        return _align(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + [f"{m}_{k}" for m in METRICS for k in ("mean", "std")])
        for name, st in zip(self.methods, self.stats):
            row = [name]
            for m in METRICS:
                row += ["", ""] if st[m] is None else [f"{st[m].mean:.3f}", f"{st[m].std:.3f}"]
            w.writerow(row)
        return buf.getvalue()


def compare(paths) -> Comparison:
    """Side-by-side mean ± std of several report files over the same pairs."""
    paths = [Path(p) for p in paths]
    if len(paths) < 2:
        raise InputError("compare needs at least two report files")
    loaded = [read_reports(p) for p in paths]
    reference = [r.pair_id for r in loaded[0]]
    ref_set = set(reference)
    for p, reports in zip(paths[1:], loaded[1:]):
        ids = {r.pair_id for r in reports}
        if ids != ref_set:
            odd = sorted(ids ^ ref_set)
            raise InputError(f"{p} covers a different pair set; mismatched ids: {', '.join(odd)}")
    methods, seen = [], {}
    for reports, p in zip(loaded, paths):
        name = reports[0].method if reports else p.stem
        seen[name] = seen.get(name, 0) + 1
        methods.append(name if seen[name] == 1 else f"{name}#{seen[name]}")
    return Comparison(methods, [summaries(r) for r in loaded])


def write_comparison(comparison: Comparison, out_prefix) -> tuple[Path, Path]:
    out = Path(out_prefix)
    txt, csv_path = out.with_name(out.name + ".txt"), out.with_name(out.name + ".csv")
    try:
        txt.write_text(comparison.to_text())
        csv_path.write_text(comparison.to_csv())
    except OSError as exc:
        raise IOFailure(f"cannot write comparison {out}: {exc}") from exc
    return txt, csv_path


def default_workers() -> int:
    return os.cpu_count() or 1


def correction_error(report: EpisodeReport) -> np.ndarray | None:
    """Absolute parameter error of the recovered correction against the inverted truth."""
    if report.truth_t is None:
        return None
    return np.abs(report.final_t.as_array() - report.truth_t.invert().as_array())

