import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rlalign.errors import FormatError, IOFailure
from rlalign.imgio import decode_img1, decode_pgm, encode_img1, encode_pgm, read_image, write_img1

pixels = arrays(np.float32, st.tuples(st.integers(1, 9), st.integers(1, 9)),
                elements=st.floats(0, 1, width=32))


def test_img1_layout():
    img = np.array([[0.0, 0.25], [0.5, 1.0], [0.75, 0.125]])
    data = encode_img1(img)
    assert data[:8] == b"RLALIGN1"
    assert struct.unpack("<II", data[8:16]) == (3, 2)
    assert np.frombuffer(data[16:], "<f4").tolist() == img.ravel().tolist()


@given(pixels)
def test_img1_round_trip(img):
    assert np.array_equal(decode_img1(encode_img1(img)), img.astype(np.float64))


def test_img1_rejects_bad_input():
    good = encode_img1(np.zeros((2, 2)))
    with pytest.raises(FormatError):
        decode_img1(b"NOTMAGIC" + good[8:])
    with pytest.raises(FormatError):
        decode_img1(good[:-1])
    with pytest.raises(FormatError):
        decode_img1(good[:5])


def test_pgm_import_maps_to_unit_range():
    data = b"P5\n# comment\n3 1\n255\n" + bytes([0, 51, 255])
    np.testing.assert_allclose(decode_pgm(data), [[0.0, 0.2, 1.0]])
    with pytest.raises(FormatError):
        decode_pgm(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError):
        decode_pgm(b"P5\n4 4\n255\n" + bytes(3))


def test_read_image_sniffs_format(tmp_path, rng):
    img = rng.random((4, 5))
    write_img1(tmp_path / "a.img", img)
    (tmp_path / "b.pgm").write_bytes(encode_pgm(img))
    np.testing.assert_allclose(read_image(tmp_path / "a.img"), img, atol=1e-7)
    np.testing.assert_allclose(read_image(tmp_path / "b.pgm"), img, atol=1 / 255)
    (tmp_path / "c.bin").write_bytes(b"junk")
    with pytest.raises(FormatError):
        read_image(tmp_path / "c.bin")
    with pytest.raises(IOFailure):
        read_image(tmp_path / "missing.img")
