import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lumenrec.core import DepthMap, read_depth_png, read_rgb_png, write_depth_png, write_rgb_png
from lumenrec.errors import DepthFormatError


def test_stored_5000_at_scale_5000_is_one_meter(tmp_path):
    from PIL import Image

    arr = np.full((4, 4), 5000, dtype=np.uint16)
    Image.fromarray(arr).save(tmp_path / "d.png")
    d = read_depth_png(tmp_path / "d.png", 5000)
    assert np.all(d.values == 1.0)
    assert d.valid_mask.all()


def test_stored_zero_is_invalid(tmp_path):
    from PIL import Image

    arr = np.zeros((4, 4), dtype=np.uint16)
    arr[0, 0] = 123
    Image.fromarray(arr).save(tmp_path / "d.png")
    d = read_depth_png(tmp_path / "d.png", 5000)
    assert d.valid_mask[0, 0]
    assert not d.valid_mask[1:, :].any()


def test_quantization_bound(tmp_path):
    scale = 5000
    d = DepthMap.from_values(np.full((2, 2), 1.23456))
    write_depth_png(d, tmp_path / "d.png", scale)
    back = read_depth_png(tmp_path / "d.png", scale)
    assert np.all(np.abs(back.values - 1.23456) <= 0.5 / scale)


def test_non_16bit_rejected(tmp_path):
    from PIL import Image

    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "d.png")
    with pytest.raises(DepthFormatError):
        read_depth_png(tmp_path / "d.png", 5000)


def test_negative_depth_write_rejected(tmp_path):
    # DepthMap construction forbids negative valid entries, so smuggle one in
    # to exercise the writer's own defensive check.
    values = np.array([[1.0, -0.5], [1.0, 1.0]])
    bad = DepthMap(np.abs(values), np.ones((2, 2), bool))
    object.__setattr__(bad, "values", values)
    with pytest.raises(ValueError):
        write_depth_png(bad, tmp_path / "d.png", 5000)


def test_out_of_range_depth_clamped(tmp_path):
    scale = 5000
    d = DepthMap.from_values(np.full((2, 2), 100.0))  # 500000 > 65535
    write_depth_png(d, tmp_path / "d.png", scale)
    back = read_depth_png(tmp_path / "d.png", scale)
    assert np.all(back.values == 65535 / scale)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1000, 5000, 65535]))
def test_depth_round_trip_property(seed, scale):
    import tempfile, os

    rng = np.random.default_rng(seed)
    values = rng.uniform(0.01, 65535 / scale, size=(8, 8))
    mask = rng.random((8, 8)) > 0.2
    mask[0, 0] = True
    d = DepthMap(np.where(mask, values, 0.0), mask)
    with tempfile.TemporaryDirectory() as td:
        path = os.path.join(td, "d.png")
        write_depth_png(d, path, scale)
        back = read_depth_png(path, scale)
    assert np.array_equal(back.valid_mask, d.valid_mask)
    err = np.abs(back.values - d.values)[d.valid_mask]
    assert np.all(err <= 0.5 / scale + 1e-12)


def test_rgb_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = rng.random((6, 5, 3))
    write_rgb_png(rgb, tmp_path / "x.png")
    back = read_rgb_png(tmp_path / "x.png")
    assert back.shape == rgb.shape
    assert np.all(np.abs(back - rgb) <= 0.5 / 255 + 1e-12)


def test_rgb_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    rgb = rng.random((6, 5, 3))
    write_rgb_png(rgb, tmp_path / "a.png")
    write_rgb_png(rgb, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
