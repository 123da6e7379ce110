"""Pin each oracle on closed-form cases before it is trusted elsewhere."""

import math

import numpy as np
import pytest

from tfcodec import testkit


class TestLengthAlgebra:
    def test_three_seconds(self):
        # 298 * 240 + (720 - 240)
        assert testkit.length_algebra(72000, 720, 240) == (298, 72000)

    def test_single_frame(self):
        assert testkit.length_algebra(720, 720, 240) == (1, 720)

    def test_sub_window(self):
        assert testkit.length_algebra(719, 720, 240) == (0, 0)


class TestNaiveDft:
    def test_impulse_is_flat(self):
        x = np.zeros(16)
        x[0] = 1.0
        np.testing.assert_allclose(testkit.naive_dft(x), np.ones(9), atol=1e-12)

    def test_dc_only_bin_zero(self):
        out = testkit.naive_dft(np.full(16, 2.0))
        assert out[0] == pytest.approx(32.0)
        np.testing.assert_allclose(out[1:], 0.0, atol=1e-12)

    def test_cosine_lands_in_its_bin(self):
        n = np.arange(32)
        out = testkit.naive_dft(np.cos(2 * np.pi * 3 * n / 32))
        assert abs(out[3]) == pytest.approx(16.0)


class TestExhaustiveNN:
    def test_exact_match(self):
        book = np.eye(4)
        assert testkit.exhaustive_nn([0, 0, 5, 0], book) == 2

    def test_tie_goes_to_lowest(self):
        book = np.random.default_rng(0).standard_normal((12, 3))
        book[3] = book[9] = [1.0, 2.0, 3.0]
        assert testkit.exhaustive_nn([2.0, 4.0, 6.0], book) == 3

    def test_cosine_not_euclidean(self):
        # (10, 0) is far in euclidean terms but has the same direction
        book = np.array([[0.7, 0.7], [10.0, 0.0]])
        assert testkit.exhaustive_nn([1.0, 0.05], book) == 1


class TestBitLayout:
    def test_all_ones(self):
        assert testkit.bit_layout([1023]) == bytes([0xFF, 0xC0])

    def test_two_indices(self):
        # 0000000001 1000000000 + 4 pad bits -> 00000000 01100000 00000000
        assert testkit.bit_layout([1, 512]) == bytes([0x00, 0x60, 0x00])


class TestNaiveConvAndAttention:
    def test_running_sum(self):
        y = testkit.naive_causal_conv1d([[1.0, 2.0, 3.0]], np.ones((1, 1, 3)), [0.0])
        np.testing.assert_allclose(y, [[1.0, 3.0, 6.0]])

    def test_single_frame_attention(self):
        rng = np.random.default_rng(0)
        c = 4
        mats = [rng.standard_normal((c, c)) for _ in range(4)]
        x = rng.standard_normal((c, 1))
        y = testkit.naive_attention(x, mats[0], 0, mats[1], 0, mats[2], 0, mats[3], 0)
        np.testing.assert_allclose(y[:, 0], mats[3] @ mats[2] @ x[:, 0])


class TestLossOracles:
    def test_si_snr_hand_case(self):
        # projection (1, 0), residual (0, 1): ratio 1
        assert testkit.si_snr_oracle([1, 1], [1, 0], eps=0.0, zero_mean=False) == 0.0

    def test_mse(self):
        assert testkit.mse_oracle([1, 2], [1, 4]) == 2.0

    def test_slaney_breakpoint(self):
        assert testkit._slaney_hz_to_mel(1000.0) == pytest.approx(15.0)
        assert testkit._slaney_mel_to_hz(15.0) == pytest.approx(1000.0)

    def test_phase(self):
        assert testkit.phase_oracle(complex(-1, -0.0)) == math.pi
        assert testkit.phase_oracle(0j) == 0.0


def test_planted_clusters_have_exact_count():
    latents, centers = testkit.planted_cluster_latents(n_centers=16, repeats=3, dim=5)
    assert latents.shape == (5, 48)
    assert len(np.unique(latents.T, axis=0)) == 16
