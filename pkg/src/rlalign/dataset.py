"""On-disk pair datasets: IMG1 files plus a JSON-lines manifest.

Each manifest line is ``{"pair_id", "fixed", "moving", "truth"}`` with image
paths relative to the manifest's directory and ``truth`` either ``null`` or
``{"tx", "ty", "theta"}`` (the simulated corruption).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, IOFailure
from .imgcore import RigidTransform2D
from .imgio import read_image, write_img1
from .phantom import PhantomConfig, generate_pair

MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    fixed: Path
    moving: Path
    truth: RigidTransform2D | None = None

    def load(self):
        return read_image(self.fixed), read_image(self.moving)


def manifest_path(location) -> Path:
    p = Path(location)
    return p / MANIFEST_NAME if p.is_dir() else p


def read_manifest(location) -> list[PairRecord]:
    path = manifest_path(location)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    records = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            truth = d.get("truth")
            records.append(PairRecord(
                str(d["pair_id"]),
                base / d["fixed"],
                base / d["moving"],
                None if truth is None else RigidTransform2D(**truth),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}:{n}: bad manifest record ({exc})") from exc
    missing = [str(p) for r in records for p in (r.fixed, r.moving) if not p.is_file()]
    if missing:
        raise IOFailure("missing pair files: " + ", ".join(missing))
    return records


def write_dataset(
    out_dir,
    n_pairs: int,
    motion_range: float,
    seed: int,
    phantom: PhantomConfig = PhantomConfig(),
    *,
    window: int | None = 84,
    rotate: bool = True,
) -> Path:
    """Generate ``n_pairs`` phantom pairs and their manifest under ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {out}: {exc}") from exc
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=(n_pairs, 2))
    lines = []
    for i, (structure_seed, pair_seed) in enumerate(seeds):
        pair = generate_pair(replace(phantom, seed=int(structure_seed)), motion_range, int(pair_seed),
                             window=window, rotate=rotate)
        pid = f"pair_{i:05d}"
        write_img1(out / f"{pid}_fixed.img", pair.fixed)
        write_img1(out / f"{pid}_moving.img", pair.moving)
        lines.append(json.dumps({
            "pair_id": pid,
            "fixed": f"{pid}_fixed.img",
            "moving": f"{pid}_moving.img",
            "truth": pair.truth.as_dict(),
        }))
    path = out / MANIFEST_NAME
    try:
        path.write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    return path


@dataclass
class DatasetSource:
    """Training pair source drawing uniformly from loaded records."""

    pairs: list = field(default_factory=list)  # (fixed, moving, truth)

    @classmethod
    def from_manifest(cls, location) -> "DatasetSource":
        return cls([(*r.load(), r.truth) for r in read_manifest(location)])

    def __call__(self, rng: np.random.Generator):
        return self.pairs[int(rng.integers(len(self.pairs)))]
