import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pifield.featext import (FeatureImage, PyramidExtractor, bilinear_sample, build_pyramid,
                             downsample, extract, level_coords, read_pfm, read_ppm, write_pfm,
                             write_ppm)


def ramp(w=5, h=5):
    j, i = np.mgrid[0:h, 0:w]
    return FeatureImage((i + 2.0 * j)[None])


def test_on_pixel():
    img = FeatureImage(np.random.default_rng(0).random((2, 4, 6)))
    v = bilinear_sample(img, np.array([3.0, 2.0]))
    assert np.array_equal(v, img.data[:, 2, 3])


def test_midpoint():
    img = FeatureImage(np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert bilinear_sample(img, np.array([0.5, 0.5]))[0] == 0.5


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 4), st.floats(0, 4))
def test_ramp_is_exact(x, y):
    v = bilinear_sample(ramp(), np.array([x, y]))[0]
    assert v == pytest.approx(x + 2 * y, abs=1e-9)


def test_clamp_outside():
    img = ramp()
    assert bilinear_sample(img, np.array([-3.0, 10.0]))[0] == img.data[0, 4, 0]


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 4), st.floats(0, 4), st.floats(-0.01, 0.01), st.floats(-0.01, 0.01))
def test_continuity(x, y, dx, dy):
    img = FeatureImage(np.random.default_rng(1).random((1, 5, 5)))
    a = bilinear_sample(img, np.array([x, y]))[0]
    b = bilinear_sample(img, np.array([x + dx, y + dy]))[0]
    # Lipschitz bound: max neighbor difference (< 1) times the L1 step
    assert abs(a - b) <= abs(dx) + abs(dy) + 1e-12


def test_pyramid_constant_and_sizes():
    img = FeatureImage(np.full((3, 512, 512), 0.7))
    pyr = build_pyramid(img, 4)
    assert [p.width for p in pyr] == [512, 256, 128, 64]
    assert all(np.allclose(p.data, 0.7) for p in pyr)


def test_box_mean_2x2():
    img = FeatureImage(np.array([[0.0, 0.0], [2.0, 2.0]]))
    assert build_pyramid(img, 2)[1].data.ravel().tolist() == [1.0]


def test_odd_size_downsample():
    img = FeatureImage(np.arange(9.0).reshape(3, 3))
    d = downsample(img).data[0]
    # last column/row average only the pixels that exist
    assert d.tolist() == [[2.0, 3.5], [6.5, 8.0]]


def test_constant_gray_features():
    img = FeatureImage(np.full((3, 64, 64), 0.5))
    f = extract(PyramidExtractor(4), img, np.array([[10.3, 40.7]]))
    assert f.shape == (1, 12) and np.all(f == 0.5)


def test_identity_projection():
    img = FeatureImage(np.random.default_rng(2).random((3, 32, 32)))
    xy = np.random.default_rng(3).uniform(0, 31, (20, 2))
    plain = extract(PyramidExtractor(3), img, xy)
    ex = PyramidExtractor(3, projection_dim=9, seed=4)
    ex.set_identity_projection()
    assert np.array_equal(extract(ex, img, xy), plain)


def test_translation_equivariance():
    # shifts by multiples of 2^(L-1) keep every level on the same sub-pixel phase
    rng = np.random.default_rng(5)
    img = FeatureImage(rng.random((3, 64, 64)))
    t = np.array([8, 16])
    shifted = FeatureImage(np.roll(img.data, shift=(t[1], t[0]), axis=(1, 2)))
    ex = PyramidExtractor(4)
    xy = rng.uniform(20, 36, (50, 2))
    a = extract(ex, img, xy)
    b = extract(ex, shifted, xy + t)
    assert np.abs(a - b).max() < 1e-9


def test_level_coords_align_centers():
    # the center of level-1 pixel 0 sits between level-0 pixels 0 and 1
    assert level_coords(np.array([0.5]), 1)[0] == 0.0


def test_projection_gradient_finite_differences():
    rng = np.random.default_rng(6)
    ex = PyramidExtractor(2, projection_dim=4, seed=1)
    img = FeatureImage(rng.random((3, 16, 16)))
    pyr = ex.pyramid(img)
    xy = rng.uniform(0, 15, (7, 2))
    w = rng.normal(size=(7, 4))
    raw = ex.raw(pyr, xy)
    grads = ex.backward(raw, w)
    h = 1e-6
    for p, g in zip(ex.params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = (ex.extract(pyr, xy) * w).sum()
            p[idx] = old - h
            down = (ex.extract(pyr, xy) * w).sum()
            p[idx] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - g[idx]) <= 1e-6 * max(1.0, abs(fd))


def test_channel_check():
    with pytest.raises(ValueError):
        PyramidExtractor(2).pyramid(FeatureImage(np.zeros((1, 4, 4))))


def test_ppm_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    rgb = FeatureImage(rng.random((3, 5, 7)))
    write_ppm(tmp_path / "a.ppm", rgb)
    back = read_ppm(tmp_path / "a.ppm")
    assert np.abs(back.data - rgb.data).max() <= 0.5 / 255 + 1e-12
    depth = FeatureImage(rng.random((1, 5, 7)))
    depth.data[0, 0, 0] = np.inf
    write_pfm(tmp_path / "d.pfm", depth)
    back = read_pfm(tmp_path / "d.pfm")
    assert np.array_equal(back.data, depth.data.astype(np.float32).astype(np.float64))
    write_pfm(tmp_path / "n.pfm", rgb)
    assert read_pfm(tmp_path / "n.pfm").channels == 3
    # PFM stores rows bottom-up
    raw = (tmp_path / "d.pfm").read_bytes()
    first = np.frombuffer(raw[-7 * 4 * 5:][:4], dtype="<f4")[0]
    assert first == np.float32(depth.data[0, 4, 0])
