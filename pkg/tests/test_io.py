
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from s2dl import io


def test_csv_cube_round_trip(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("2,2,1\n0\n1\n2\n3\n")
    cube = io.load_cube(path)
    assert cube.n_pixels == 4 and cube.bands == 1
    np.testing.assert_array_equal(cube.pixels()[:, 0], [0, 1, 2, 3])


def test_bsq_layout(tmp_path):
    path = tmp_path / "c.bsq"
    vals = np.arange(24, dtype="<f4")
    path.write_bytes(b"2 3 4\n" + vals.tobytes())
    cube = io.load_cube(path)
    assert cube.values.shape == (2, 3, 4)
    # band-sequential: band 1 of pixel (0, 0) is the seventh float
    assert cube.values[0, 0, 1] == 6.0
    assert cube.values[1, 2, 0] == 5.0


def test_bsq_size_mismatch(tmp_path):
    path = tmp_path / "c.bsq"
    path.write_bytes(b"2 2 2\n" + np.zeros(7, dtype="<f4").tobytes())
    with pytest.raises(io.LoadError, match="28 bytes"):
        io.load_cube(path)


def test_bsq_non_finite_names_offset(tmp_path):
    path = tmp_path / "c.bsq"
    vals = np.zeros(4, dtype="<f4")
    vals[2] = np.inf
    path.write_bytes(b"1 2 2\n" + vals.tobytes())
    with pytest.raises(io.LoadError, match="byte offset 14"):
        io.load_cube(path)


def test_csv_cube_bad_row(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("1,2,1\n0\nnan\n")
    with pytest.raises(io.LoadError, match="row 2"):
        io.load_cube(path)


@given(arrays(np.float32, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_bsq_bytes_round_trip(values):
    payload = f"{values.shape[0]} {values.shape[1]} {values.shape[2]}\n".encode() + \
        np.ascontiguousarray(values.transpose(2, 0, 1), dtype="<f4").tobytes()
    import tempfile, os
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "x.bsq")
        open(p, "wb").write(payload)
        assert io.cube_bsq_bytes(io.load_cube(p)) == payload


def test_labels_csv_and_errors(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("0,1;1,2\n")
    gt = io.load_labels(p)
    np.testing.assert_array_equal(gt.labels, [0, 1, 1, 2])
    assert gt.n_classes == 2
    p.write_text("0,0\n0,0\n")
    assert io.load_labels(p).n_classes == 0
    p.write_text("0,-1\n1,2\n")
    with pytest.raises(io.LoadError, match="negative"):
        io.load_labels(p)
    p.write_text("0,1\n1,2\n")
    with pytest.raises(io.LoadError, match="2x2"):
        io.load_labels(p, shape=(3, 3))


def test_pgm_round_trip(tmp_path):
    lab = np.array([0, 1, 2, 3, 3, 1])
    io.save_pgm(lab, (2, 3), tmp_path / "m.pgm", {"note": "x"})
    np.testing.assert_array_equal(io.read_label_map(tmp_path / "m.pgm"), lab.reshape(2, 3))
    raw = b"P5\n3 2\n255\n" + bytes([0, 1, 2, 3, 3, 1])
    (tmp_path / "b.pgm").write_bytes(raw)
    np.testing.assert_array_equal(io.read_label_map(tmp_path / "b.pgm"), lab.reshape(2, 3))


def test_label_csv_round_trip_with_metadata(tmp_path):
    lab = np.array([1, 2, 2, 1])
    io.save_label_csv(lab, (2, 2), tmp_path / "m.csv", {"k": 3})
    assert (tmp_path / "m.csv").read_text().startswith("# k = 3\n")
    np.testing.assert_array_equal(io.read_label_map(tmp_path / "m.csv").ravel(), lab)


def test_mat_cube(tmp_path):
    from scipy.io import savemat
    v = np.arange(12, dtype=float).reshape(2, 2, 3)
    savemat(tmp_path / "c.mat", {"cube": v})
    np.testing.assert_array_equal(io.load_cube(tmp_path / "c.mat").values, v)


def test_render_ppm(tmp_path):
    io.render_ppm(np.array([0, 1, 2, 1]), (2, 2), tmp_path / "r.ppm")
    data = (tmp_path / "r.ppm").read_bytes()
    assert data.startswith(b"P6\n2 2\n255\n")
    assert data[-12:-9] == bytes([0, 0, 0])
