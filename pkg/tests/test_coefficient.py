import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lodfem.coefficient import (AlignmentError, CoefficientError, CoefficientField, constant,
                                load_raster, random_cellwise, sample_on_elements, save_raster)
from lodfem.fem import element_geometry
from lodfem.mesh import Level, build_hierarchy


def test_constant():
    c = constant(1)
    assert c.alpha == c.beta == 1.0
    assert c.contrast == 1.0
    assert c.raster_m == 1
    assert np.all(constant(5)(np.array([[0.1, 0.9], [1.0, 0.0]])) == 5)


@pytest.mark.parametrize("value", [0, -1.0])
def test_constant_rejects_nonpositive(value):
    with pytest.raises(CoefficientError):
        constant(value)


def test_random_contrast_bound():
    f = random_cellwise(64, 1 / 20, 2, seed=7)
    assert f.raster_m == 64
    assert 1 / 20 <= f.alpha and f.beta <= 2
    assert f.contrast <= 40


def test_random_determinism():
    a = random_cellwise(16, 0.5, 3, seed=11)
    b = random_cellwise(16, 0.5, 3, seed=11)
    assert a.values.tobytes() == b.values.tobytes()
    assert random_cellwise(16, 0.5, 3, seed=12).values.tobytes() != a.values.tobytes()


@pytest.mark.parametrize("args", [(1, 2.0, 2.0), (4, 0.0, 1.0), (4, 2.0, 1.0), (0, 1.0, 2.0)])
def test_random_rejects(args):
    with pytest.raises(CoefficientError):
        random_cellwise(*args, seed=0)


def test_load_example(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("2 2 \n 1 2 \n 0.5 4")
    f = load_raster(path)
    assert f.raster_m == 2
    assert f.alpha == 0.5 and f.beta == 4 and f.contrast == 8
    # row 0 is the bottom row
    assert f(np.array([[0.75, 0.25]]))[0] == 2
    assert f(np.array([[0.25, 0.75]]))[0] == 0.5


@pytest.mark.parametrize("text", ["2 2\n1 0\n1 1", "2 2\n1 -3\n1 1"])
def test_load_rejects_nonelliptic(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(CoefficientError, match="ellipticity"):
        load_raster(path)


@pytest.mark.parametrize("text", ["2 3\n1 1 1\n1 1 1", "2 2\n1 1 1", "2 x\n1 1\n1 1", "", "2 2\n1 a\n1 1"])
def test_load_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(CoefficientError):
        load_raster(path)


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_raster(tmp_path / "nope.txt")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_save_load_roundtrip(tmp_path_factory, m, seed):
    f = random_cellwise(m, 1e-3, 1e3, seed)
    path = tmp_path_factory.mktemp("r") / "f.txt"
    save_raster(f, path)
    g = load_raster(path)
    assert g.values.tobytes() == f.values.tobytes()


def test_field_is_immutable():
    f = CoefficientField(np.ones((2, 2)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 3


def test_sample_constant():
    vals = sample_on_elements(constant(2.5), build_hierarchy(4, 1))
    assert np.all(vals == 2.5)


def test_sample_raster_equals_mesh():
    f = random_cellwise(8, 1, 2, seed=1)
    vals = sample_on_elements(f, Level(8))
    # triangles 2c and 2c+1 split square c
    np.testing.assert_array_equal(vals[0::2], vals[1::2])
    np.testing.assert_array_equal(vals[0::2], f.values.ravel())


def test_sample_checkerboard_bruteforce():
    f = CoefficientField(np.array([[1.0, 2.0], [3.0, 4.0]]))
    lv = Level(4)
    vals = sample_on_elements(f, lv)
    for t, tri in enumerate(lv.triangles):
        cx, cy = lv.coords[tri].mean(axis=0)
        quadrant = (0 if cy < 0.5 else 1, 0 if cx < 0.5 else 1)
        assert vals[t] == f.values[quadrant]


def test_sample_exact_integral():
    f = random_cellwise(4, 0.1, 10, seed=5)
    lv = Level(16)
    vals = sample_on_elements(f, lv)
    area, _ = element_geometry(lv)
    # each raster cell has area 1/16
    assert np.sum(vals * area) == pytest.approx(f.values.sum() / 16, rel=1e-13)
    assert vals.max() / vals.min() == pytest.approx(f.contrast)


def test_sample_alignment_error():
    with pytest.raises(AlignmentError, match="raster_m=3.*m=8"):
        sample_on_elements(random_cellwise(3, 1, 2, seed=0), Level(8))
