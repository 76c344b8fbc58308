import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_image(seed: int, size: int = 64) -> np.ndarray:
    """A smooth random image in [0, 1] built from a few low-frequency waves."""
    r = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size))
    for _ in range(4):
        fx, fy = r.uniform(0.5, 2.0, size=2)
        ph = r.uniform(0, 2 * np.pi)
        img += r.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fx * xs + fy * ys) + ph)
    img -= img.min()
    return img / img.max()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
