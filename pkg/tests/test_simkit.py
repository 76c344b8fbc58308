import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles as O
from rlalign.errors import ConfigError, DimensionError
from rlalign.simkit import SimilarityConfig, correlation, dissimilarity, nmi, ssim

C1, C2 = 0.01 ** 2, 0.03 ** 2
# Worst NMI between an 84x84 uniform image and a pixel shuffle of itself over
# seeds 0..19, from the pure-Python oracle.
SHUFFLED_NMI_ORACLE_MAX = 0.02194876372742135

images = arrays(np.float64, (6, 5), elements=st.floats(0, 1))


def test_config_validation():
    with pytest.raises(ConfigError):
        SimilarityConfig(ssim_c1=0)
    with pytest.raises(ConfigError):
        SimilarityConfig(nmi_bins=1)


def test_correlation_examples(rng):
    x = rng.random((16, 16))
    y = rng.random((16, 16))
    assert correlation(x, x) == pytest.approx(1.0, abs=1e-12)
    assert correlation(x, 1 - x) == pytest.approx(-1.0, abs=1e-12)
    assert correlation(x, y) == pytest.approx(O.correlation(x.tolist(), y.tolist()), abs=1e-12)
    assert correlation(np.ones((4, 4)), x[:4, :4]) == 0.0
    with pytest.raises(DimensionError):
        correlation(x, y[:3])


def test_ssim_examples(rng):
    x, y = rng.random((16, 16)), rng.random((16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    assert ssim(np.zeros((8, 8)), np.ones((8, 8))) == pytest.approx(C1 / (1 + C1), abs=1e-15)
    assert ssim(x, y) == pytest.approx(O.ssim(x.tolist(), y.tolist()), abs=1e-12)


def test_dissimilarity_examples(rng):
    x = rng.random((16, 16))
    assert dissimilarity(x, x) == pytest.approx(0.0, abs=1e-12)
    expected = 1 - (-1 + O.ssim(x.tolist(), (1 - x).tolist())) / 2
    assert dissimilarity(x, 1 - x) == pytest.approx(expected, abs=1e-12)


def test_dissimilarity_monotone_along_blend(rng):
    x = rng.random((32, 32))
    noise = rng.random((32, 32))
    values = [dissimilarity(x, a * x + (1 - a) * noise) for a in np.linspace(0, 1, 5)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_nmi_examples(rng):
    x = rng.random((84, 84))
    assert nmi(x, x) == pytest.approx(1.0, abs=1e-12)
    assert nmi(np.full((4, 4), 0.3), np.full((4, 4), 0.7)) == 1.0
    worst = max(_shuffled_nmi(s) for s in range(20))
    assert worst < 0.2
    assert worst == pytest.approx(SHUFFLED_NMI_ORACLE_MAX, abs=1e-12)
    with pytest.raises(ConfigError):
        nmi(x, x, bins=1)


def _shuffled_nmi(seed):
    r = np.random.default_rng(seed)
    x = r.random((84, 84))
    y = r.permutation(x.ravel()).reshape(84, 84)
    return nmi(x, y)


def test_nmi_invariant_under_bin_relabelling(rng):
    # Mapping each 32-bin slot onto another slot centre permutes histogram
    # labels without merging any, so NMI is unchanged.
    x = rng.random((20, 20))
    y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1)
    perm = rng.permutation(32)
    relabel = lambda img: (perm[np.minimum((img * 32).astype(int), 31)] + 0.5) / 32
    assert nmi(relabel(x), relabel(y)) == pytest.approx(nmi(x, y), abs=1e-12)


@given(images, images)
@settings(max_examples=40)
def test_metrics_symmetric_and_in_range(x, y):
    assert correlation(x, y) == pytest.approx(correlation(y, x), abs=1e-12)
    assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-12)
    d = dissimilarity(x, y)
    assert d == pytest.approx(dissimilarity(y, x), abs=1e-12)
    assert -1e-12 <= d <= 2 + 1e-12
    v = nmi(x, y)
    assert v == pytest.approx(nmi(y, x), abs=1e-12)
    assert -1e-12 <= v <= 1 + 1e-9


def test_metrics_match_oracles_on_fifty_pairs():
    for seed in range(50):
        r = np.random.default_rng(seed)
        x, y = r.random((16, 16)), r.random((16, 16))
        xs, ys = x.tolist(), y.tolist()
        assert correlation(x, y) == pytest.approx(O.correlation(xs, ys), abs=1e-9)
        assert ssim(x, y) == pytest.approx(O.ssim(xs, ys), abs=1e-9)
        assert dissimilarity(x, y) == pytest.approx(O.dissimilarity(xs, ys), abs=1e-9)
        assert nmi(x, y) == pytest.approx(O.nmi(xs, ys), abs=1e-9)
