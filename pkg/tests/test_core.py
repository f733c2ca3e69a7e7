import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphattack import (FlowField, Image, RoiMask, crop_roi, flow_norm,
                         flow_scale, morph)
from morphattack.errors import DimensionMismatch
from morphattack.rng import CounterRng

from conftest import random_flow, random_image


def grid_image(width, height):
    n = width * height
    return Image(np.arange(n, dtype=np.float64).reshape(height, width)
                 / max(n - 1, 1))


class TestTypes:
    def test_image_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Image(np.array([[0.0, 1.5]]))
        with pytest.raises(ValueError):
            Image(np.array([[np.nan, 0.5]]))

    def test_flow_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            FlowField(np.array([[np.inf]]), np.array([[0.0]]))

    def test_flow_rejects_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            FlowField(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_vectorize_round_trip_bit_exact(self):
        rng = CounterRng.from_seeds(11)
        img = random_image(rng, 7, 5)
        back = Image.devectorize(img.vectorize(), 7, 5)
        assert np.array_equal(back.pixels, img.pixels)

    def test_arrays_are_read_only(self):
        img = grid_image(3, 3)
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 0.5


class TestMorph:
    def test_zero_flow_is_bit_identical(self):
        img = grid_image(9, 7)
        out = morph(img, FlowField.zero(9, 7))
        assert np.array_equal(out.pixels, img.pixels)

    def test_constant_flow_is_column_shift(self):
        # 3x3 ramp, h=1: each output pixel takes the pixel one column to
        # the right; the rightmost column repeats itself (border clamp).
        img = Image(np.arange(9, dtype=np.float64).reshape(3, 3) / 8.0)
        out = morph(img, FlowField(np.ones((3, 3)), np.zeros((3, 3))))
        expected = img.pixels[:, [1, 2, 2]]
        assert np.array_equal(out.pixels, expected)

    def test_integer_shift_matches_array_shift_on_interior(self):
        rng = CounterRng.from_seeds(3)
        img = random_image(rng, 12, 10)
        for k in (1, 2):
            out = morph(img, FlowField(np.full((10, 12), float(k)),
                                       np.zeros((10, 12))))
            assert np.array_equal(out.pixels[:, :12 - k], img.pixels[:, k:])

    def test_bilinear_midpoint(self):
        # 1x2 image [0, 1], h=0.5 everywhere: left pixel samples the exact
        # midpoint, right pixel clamps to the border.
        img = Image(np.array([[0.0, 1.0]]))
        out = morph(img, FlowField(np.full((1, 2), 0.5), np.zeros((1, 2))))
        assert np.array_equal(out.pixels, np.array([[0.5, 1.0]]))

    def test_vertical_shift(self):
        rng = CounterRng.from_seeds(4)
        img = random_image(rng, 6, 8)
        out = morph(img, FlowField(np.zeros((8, 6)), np.ones((8, 6))))
        assert np.array_equal(out.pixels[:7, :], img.pixels[1:, :])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            morph(grid_image(3, 3), FlowField.zero(4, 3))


class TestNorms:
    def test_zero_flow_norms(self):
        z = FlowField.zero(4, 4)
        assert flow_norm(z, "l2") == 0.0
        assert flow_norm(z, "linf") == 0.0

    def test_pythagorean(self):
        f = FlowField(np.array([[3.0]]), np.array([[4.0]]))
        assert flow_norm(f, "l2") == pytest.approx(5.0, abs=0)

    def test_linf_max_abs(self):
        f = FlowField(np.array([[-2.0]]), np.array([[1.5]]))
        assert flow_norm(f, "linf") == 2.0

    def test_unknown_selector(self):
        with pytest.raises(ValueError):
            flow_norm(FlowField.zero(2, 2), "l1")

    def test_scale_identity_and_zero(self):
        rng = CounterRng.from_seeds(5)
        f = random_flow(rng, 5, 5)
        same = flow_scale(f, 1.0)
        assert np.array_equal(same.h, f.h) and np.array_equal(same.v, f.v)
        zero = flow_scale(f, 0.0)
        assert flow_norm(zero, "l2") == 0.0

    def test_scale_doubles_norm(self):
        f = FlowField(np.array([[3.0]]), np.array([[4.0]]))
        g = flow_scale(f, 2.0)
        assert g.h[0, 0] == 6.0 and g.v[0, 0] == 8.0
        assert flow_norm(g, "l2") == pytest.approx(10.0, rel=1e-15)

    @given(st.integers(0, 2 ** 32 - 1),
           st.floats(-8.0, 8.0, allow_nan=False).filter(
               lambda x: x == 0.0 or abs(x) > 1e-6))
    @settings(max_examples=60, deadline=None)
    def test_norm_scaling_linearity(self, seed, factor):
        # factors tiny enough to underflow the squared sum are out of scope
        f = random_flow(CounterRng.from_seeds(seed), 6, 6, scale=3.0)
        scaled = flow_scale(f, factor)
        for p in ("l2", "linf"):
            assert flow_norm(scaled, p) == pytest.approx(
                abs(factor) * flow_norm(f, p), rel=1e-12, abs=0.0)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_linf_bounded_by_l2(self, seed):
        f = random_flow(CounterRng.from_seeds(seed), 5, 4, scale=2.0)
        assert flow_norm(f, "linf") <= flow_norm(f, "l2") + 1e-15


class TestRoi:
    def test_full_roi_is_identity(self):
        img = grid_image(6, 4)
        out = crop_roi(img, RoiMask.full(6, 4))
        assert np.array_equal(out.pixels, img.pixels)

    def test_outside_roi_zeroed(self):
        img = Image(np.ones((4, 6)) * 0.5)
        roi = RoiMask(width=6, height=4, top=1, left=2, rows=2, cols=3)
        out = crop_roi(img, roi)
        assert out.pixels.sum() == pytest.approx(0.5 * 6)
        assert np.all(out.pixels[1:3, 2:5] == 0.5)
        assert out.pixels[0, 0] == 0.0

    def test_roi_rect_validation(self):
        with pytest.raises(DimensionMismatch):
            RoiMask(width=4, height=4, top=2, left=0, rows=3, cols=4)

    def test_roi_frame_mismatch(self):
        with pytest.raises(DimensionMismatch):
            crop_roi(grid_image(5, 5), RoiMask.full(4, 5))

    def test_weight_vector_matches_mask(self):
        rng = CounterRng.from_seeds(9)
        img = random_image(rng, 5, 5)
        roi = RoiMask(width=5, height=5, top=1, left=1, rows=3, cols=3)
        weighted = roi.weight_vector(img.vectorize())
        assert np.array_equal(weighted.reshape(5, 5),
                              img.pixels * roi.mask())
