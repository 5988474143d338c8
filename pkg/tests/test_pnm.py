import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lcmvos.pnm import read_frame, read_labels, read_pnm, write_pgm, write_ppm


@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))))
def test_ppm_round_trip(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("ppm") / "a.ppm"
    write_ppm(p, img)
    assert np.array_equal(read_pnm(p), img)
    np.testing.assert_array_equal(read_frame(p), img / 255.0)


def test_pgm_header_and_labels(tmp_path):
    lab = np.array([[0, 1], [2, 255]])
    write_pgm(tmp_path / "m.pgm", lab)
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert np.array_equal(read_labels(tmp_path / "m.pgm"), lab)


def test_header_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# note\n1 1\n255\n\x07")
    assert read_pnm(tmp_path / "c.pgm").tolist() == [[7]]


def test_bad_inputs(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n1")
    with pytest.raises(ValueError):
        read_pnm(tmp_path / "bad.pgm")
    (tmp_path / "short.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(ValueError):
        read_pnm(tmp_path / "short.pgm")
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.array([[300]]))
    write_ppm(tmp_path / "rgb.ppm", np.zeros((2, 2, 3), np.uint8))
    with pytest.raises(ValueError):
        read_labels(tmp_path / "rgb.ppm")
