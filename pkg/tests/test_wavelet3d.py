"""Haar transform tests against an independent separable 1D-matrix oracle."""

import itertools
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from svastin.wavelet3d import (
    BAND_ORDER_3D,
    SubbandLabel,
    dwt2d_forward,
    dwt2d_inverse,
    dwt3d_forward,
    dwt3d_inverse,
    subband,
)

SQRT2 = math.sqrt(2.0)


def haar_matrix(n: int) -> np.ndarray:
    """One-level 1D Haar analysis matrix: x -> (lows, highs), orthonormal rows."""
    m = np.zeros((n, n))
    for i in range(n // 2):
        m[i, 2 * i] = m[i, 2 * i + 1] = 1.0 / SQRT2
        m[n // 2 + i, 2 * i] = 1.0 / SQRT2
        m[n // 2 + i, 2 * i + 1] = -1.0 / SQRT2
    return m


def oracle_dwt3d(x: np.ndarray) -> np.ndarray:
    """Reference transform: independent 1D matrix products along T, W, H."""
    c, t, w, h = x.shape
    y = np.einsum("ij,cjwh->ciwh", haar_matrix(t), x)
    y = np.einsum("ij,ctjh->ctih", haar_matrix(w), y)
    y = np.einsum("ij,ctwj->ctwi", haar_matrix(h), y)
    out = np.zeros((8 * c, t // 2, w // 2, h // 2))
    for k in range(c):
        for i, (tb, wb, hb) in enumerate(itertools.product((0, 1), repeat=3)):
            out[8 * k + i] = y[
                k,
                tb * (t // 2) : (tb + 1) * (t // 2),
                wb * (w // 2) : (wb + 1) * (w // 2),
                hb * (h // 2) : (hb + 1) * (h // 2),
            ]
    return out


def random_video(shape, seed, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(shape, generator=g, dtype=dtype)


class TestForward:
    def test_constant_video(self):
        x = torch.ones(1, 2, 2, 2, dtype=torch.float64)
        c = dwt3d_forward(x)
        assert c[0, 0, 0, 0] == pytest.approx(2 * SQRT2, abs=1e-12)
        assert torch.all(c[1:] == 0)

    def test_zero_video(self):
        assert torch.all(dwt3d_forward(torch.zeros(2, 4, 4, 4)) == 0)

    def test_impulse_matches_oracle(self):
        x = torch.zeros(1, 2, 2, 2, dtype=torch.float64)
        x[0, 0, 0, 0] = 1.0
        c = dwt3d_forward(x)
        expected = oracle_dwt3d(x.numpy())
        np.testing.assert_allclose(c.numpy(), expected, atol=1e-15)
        # impulse at the (0,0,0) corner hits every band with weight +1/(2*sqrt(2))
        assert torch.allclose(c.flatten(), torch.full((8,), 1 / (2 * SQRT2), dtype=torch.float64))

    def test_all_binary_2x2x2_videos_match_oracle(self):
        for bits in itertools.product((0.0, 1.0), repeat=8):
            x = torch.tensor(bits, dtype=torch.float64).reshape(1, 2, 2, 2)
            got = dwt3d_forward(x).numpy()
            np.testing.assert_allclose(got, oracle_dwt3d(x.numpy()), atol=1e-12)

    def test_matches_oracle_on_larger_shape(self):
        x = random_video((3, 4, 8, 6), seed=7)
        np.testing.assert_allclose(dwt3d_forward(x).numpy(), oracle_dwt3d(x.numpy()), atol=1e-12)

    def test_constant_input_kills_detail_bands(self):
        x = torch.full((2, 4, 6, 8), 0.37, dtype=torch.float64)
        c = dwt3d_forward(x)
        for label in BAND_ORDER_3D[1:]:
            assert torch.all(subband(c, label) == 0)

    @pytest.mark.parametrize("shape,axis", [
        ((1, 3, 4, 4), "temporal"),
        ((1, 4, 5, 4), "width"),
        ((1, 4, 4, 7), "height"),
        ((1, 4, 4, 1), "height"),
    ])
    def test_odd_axis_rejected(self, shape, axis):
        with pytest.raises(ValueError, match=axis):
            dwt3d_forward(torch.zeros(shape))

    def test_wrong_rank_rejected(self):
        with pytest.raises(ValueError, match="dims"):
            dwt3d_forward(torch.zeros(4, 4, 4))


class TestInverse:
    def test_round_trip_100_seeds(self):
        worst = 0.0
        for seed in range(100):
            x = random_video((3, 4, 8, 8), seed=seed)
            err = (dwt3d_inverse(dwt3d_forward(x)) - x).abs().max().item()
            worst = max(worst, err)
        assert worst <= 1e-6

    def test_round_trip_float32(self):
        x = random_video((3, 8, 16, 16), seed=0, dtype=torch.float32)
        err = (dwt3d_inverse(dwt3d_forward(x)) - x).abs().max().item()
        assert err <= 1e-4

    def test_zero_coefficients(self):
        assert torch.all(dwt3d_inverse(torch.zeros(8, 2, 2, 2)) == 0)

    def test_lll_only_reconstructs_constant(self):
        c = torch.zeros(8, 1, 1, 1, dtype=torch.float64)
        c[0, 0, 0, 0] = 2 * SQRT2
        x = dwt3d_inverse(c)
        assert torch.allclose(x, torch.ones(1, 2, 2, 2, dtype=torch.float64))

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ValueError, match="divisible by 8"):
            dwt3d_inverse(torch.zeros(12, 2, 2, 2))


class TestProperties:
    @given(
        c=st.integers(1, 3),
        t=st.sampled_from([2, 4, 6]),
        w=st.sampled_from([2, 4, 8]),
        h=st.sampled_from([2, 4, 8]),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip_and_parseval(self, c, t, w, h, seed):
        x = random_video((c, t, w, h), seed=seed)
        coeffs = dwt3d_forward(x)
        assert (dwt3d_inverse(coeffs) - x).abs().max().item() <= 1e-6
        ex, ec = (x**2).sum().item(), (coeffs**2).sum().item()
        assert abs(ec - ex) <= 1e-6 * max(ex, 1e-30)

    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_linearity(self, a, b, seed):
        x = random_video((2, 4, 4, 4), seed=seed)
        y = random_video((2, 4, 4, 4), seed=seed + 1)
        lhs = dwt3d_forward(a * x + b * y)
        rhs = a * dwt3d_forward(x) + b * dwt3d_forward(y)
        scale = max(rhs.abs().max().item(), 1.0)
        assert (lhs - rhs).abs().max().item() <= 1e-6 * scale


class TestSubband:
    def test_lll_of_constant(self):
        c = dwt3d_forward(torch.ones(2, 2, 2, 2, dtype=torch.float64))
        lll = subband(c, "lll")
        assert lll.shape == (2, 1, 1, 1)
        assert torch.allclose(lll, torch.full((2, 1, 1, 1), 2 * SQRT2, dtype=torch.float64))

    def test_hhh_of_constant_is_zero(self):
        c = dwt3d_forward(torch.ones(1, 4, 4, 4))
        assert torch.all(subband(c, "hhh") == 0)

    def test_impulse_lll_value(self):
        x = torch.zeros(1, 2, 2, 2, dtype=torch.float64)
        x[0, 0, 0, 0] = 1.0
        lll = subband(dwt3d_forward(x), SubbandLabel("low", "low", "low"))
        assert lll[0, 0, 0, 0].item() == pytest.approx(1 / (2 * SQRT2), abs=1e-15)

    def test_channel_block_layout(self):
        # band i of channel k lives at packed channel 8k+i
        x = random_video((3, 4, 4, 4), seed=11)
        c = dwt3d_forward(x)
        for k in range(3):
            only = dwt3d_forward(x[k : k + 1])
            for i, label in enumerate(BAND_ORDER_3D):
                assert torch.equal(subband(c, label)[k], only[i])

    def test_band_order_is_temporal_width_height(self):
        assert [str(b) for b in BAND_ORDER_3D] == [
            "lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh",
        ]
        assert SubbandLabel.from_str("hll").index == 4  # high temporal leads the block's second half

    def test_bad_label_rejected(self):
        with pytest.raises(ValueError):
            SubbandLabel.from_str("llx")
        with pytest.raises(ValueError):
            SubbandLabel("low", "mid", "high")


class TestFramewise2d:
    def test_round_trip(self):
        x = random_video((3, 5, 8, 8), seed=3)  # odd T is fine framewise
        err = (dwt2d_inverse(dwt2d_forward(x)) - x).abs().max().item()
        assert err <= 1e-6

    def test_shape_and_energy(self):
        x = random_video((3, 4, 8, 8), seed=4)
        c = dwt2d_forward(x)
        assert c.shape == (12, 4, 4, 4)
        assert (c**2).sum().item() == pytest.approx((x**2).sum().item(), rel=1e-12)

    def test_odd_spatial_rejected(self):
        with pytest.raises(ValueError, match="width"):
            dwt2d_forward(torch.zeros(1, 4, 5, 4))
