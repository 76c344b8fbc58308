import json
import subprocess
import sys

import pytest

from rlalign.cli import main
from rlalign.config import SEED_ENV
from rlalign.imgio import write_img1

TINY = ["--epochs", "1", "--steps-per-epoch", "30", "--warmup", "16", "--batch-size", "8",
        "--max-steps", "10", "--workers", "1"]


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--out", str(out), "--pairs", "3", "--seed", "5", "--translations-only"]) == 0
    return out


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory, data):
    out = tmp_path_factory.mktemp("ck") / "agent.bin"
    assert main(["train", "--data", str(data), "--out", str(out), "--seed", "1", *TINY]) == 0
    return out


@pytest.mark.parametrize("cmd", ["gen-data", "train", "align", "evaluate", "baseline", "report"])
def test_help_exits_zero(cmd):
    proc = subprocess.run([sys.executable, "-m", "rlalign", cmd, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("usage:")


def test_gen_data_layout(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path), "--pairs", "10"]) == 0
    assert len(list(tmp_path.glob("*.img"))) == 20
    lines = (tmp_path / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 10
    assert set(json.loads(lines[0])) == {"pair_id", "fixed", "moving", "truth"}
    assert (tmp_path / "effective_config.json").is_file()


def test_gen_data_seed_from_environment(tmp_path, monkeypatch):
    assert main(["gen-data", "--out", str(tmp_path / "a"), "--pairs", "2", "--seed", "9"]) == 0
    monkeypatch.setenv(SEED_ENV, "9")
    assert main(["gen-data", "--out", str(tmp_path / "b"), "--pairs", "2"]) == 0
    assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (tmp_path / "b" / "manifest.jsonl").read_bytes()
    assert (tmp_path / "a" / "pair_00001_moving.img").read_bytes() == (tmp_path / "b" / "pair_00001_moving.img").read_bytes()


def test_config_errors_exit_2(tmp_path, data, capsys):
    assert main(["gen-data", "--out", str(tmp_path), "--range", "6"]) == 2
    assert main(["train", "--out", str(tmp_path / "x.bin"), "--variant", "foo"]) == 2
    assert "dqn, double, dueling, double_dueling" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "one.jsonl"), "--out", str(tmp_path / "t")]) == 2


def test_supervised_without_truth_exits_2(tmp_path, data):
    records = [json.loads(line) for line in (data / "manifest.jsonl").read_text().splitlines()]
    stripped = tmp_path / "manifest.jsonl"
    stripped.write_text("".join(json.dumps({**r, "truth": None, "fixed": str(data / r["fixed"]),
                                            "moving": str(data / r["moving"])}) + "\n" for r in records))
    assert main(["train", "--data", str(stripped), "--out", str(tmp_path / "s.bin"),
                 "--reward-mode", "supervised", *TINY]) == 2


def test_io_and_format_errors(tmp_path, data, ckpt):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    fixed = str(data / "pair_00000_fixed.img")
    assert main(["align", "--fixed", fixed, "--moving", fixed, "--ckpt", str(bad)]) == 5
    assert main(["align", "--fixed", fixed, "--moving", fixed, "--ckpt", str(tmp_path / "none.bin")]) == 3
    small = tmp_path / "small.img"
    write_img1(small, [[0.0] * 10] * 10)
    assert main(["align", "--fixed", str(small), "--moving", str(small), "--ckpt", str(ckpt)]) == 5
    assert main(["evaluate", "--data", str(tmp_path / "nowhere"), "--ckpt", str(ckpt),
                 "--out", str(tmp_path / "e.jsonl")]) == 3


def test_train_align_evaluate_report_chain(tmp_path, data, ckpt, capsys):
    assert (ckpt.parent / "agent.bin.log.jsonl").is_file()
    fixed, moving = str(data / "pair_00000_fixed.img"), str(data / "pair_00000_moving.img")
    assert main(["align", "--fixed", fixed, "--moving", moving, "--ckpt", str(ckpt),
                 "--out", str(tmp_path / "aligned.img")]) == 0
    keys = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert keys == ["tx", "ty", "theta", "steps", "nmi", "rho"]
    assert (tmp_path / "aligned.img").is_file()
    a, b = tmp_path / "agent.jsonl", tmp_path / "base.jsonl"
    assert main(["evaluate", "--data", str(data), "--ckpt", str(ckpt), "--out", str(a), "--workers", "1"]) == 0
    assert main(["baseline", "--data", str(data), "--out", str(b), "--workers", "1",
                 "--starts", "1", "--max-evals", "40"]) == 0
    assert main(["report", str(a), str(b), "--out", str(tmp_path / "cmp")]) == 0
    rows = (tmp_path / "cmp.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["dueling", "baseline"]


def test_commands_are_deterministic(tmp_path, data):
    outputs = []
    for run in ("r1", "r2"):
        d = tmp_path / run
        ck = d / "agent.bin"
        assert main(["gen-data", "--out", str(d / "data"), "--pairs", "2", "--seed", "3"]) == 0
        assert main(["train", "--data", str(d / "data"), "--out", str(ck), "--seed", "2", *TINY]) == 0
        assert main(["evaluate", "--data", str(data), "--ckpt", str(ck), "--out", str(d / "ev.jsonl"),
                     "--workers", "1"]) == 0
        outputs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) >= 10
