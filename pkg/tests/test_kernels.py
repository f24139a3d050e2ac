import math

import numpy as np
import pytest

from thermodet import reference
from thermodet.kernels import (
    activation,
    concat_channels,
    conv2d,
    conv2d_raw,
    fold_batchnorm,
    maxpool2d,
    maxpool2d_raw,
    upsample_nearest2x,
)
from thermodet.tensor import ConvSpec, Tensor


def _spec(in_ch, out_ch, k, s=1, p=0, groups=1, seed=0, bias=True):
    r = np.random.default_rng(seed)
    w = r.standard_normal((out_ch, in_ch // groups, k, k)).astype(np.float32)
    b = r.standard_normal(out_ch).astype(np.float32) if bias else np.zeros(out_ch, np.float32)
    return ConvSpec(in_ch, out_ch, (k, k), s, p, groups, weights=w, bias=b)


class TestConv2d:
    def test_identity_1x1(self):
        spec = ConvSpec(1, 1, (1, 1), 1, 0, weights=np.ones((1, 1, 1, 1), np.float32))
        x = Tensor(np.array([[[[3.5]]]], dtype=np.float32))
        out = conv2d(x, spec)
        assert out.dims == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == pytest.approx(3.5)

    def test_ones_3x3_padded(self):
        # all-ones 3x3 input, all-ones 3x3 kernel, pad 1: receptive-field counts
        spec = ConvSpec(1, 1, (3, 3), 1, 1, weights=np.ones((1, 1, 3, 3), np.float32))
        x = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
        out = conv2d(x, spec).data[0, 0]
        expected = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], dtype=np.float32)
        np.testing.assert_array_equal(out, expected)

    def test_against_naive_oracle_randomized(self):
        r = np.random.default_rng(42)
        for trial in range(100):
            c_in = int(r.integers(1, 5))
            c_out = int(r.integers(1, 7))
            k = int(r.choice([1, 3, 5]))
            s = int(r.choice([1, 2]))
            p = int(r.integers(0, k // 2 + 1))
            h = int(r.integers(k, 11))
            w = int(r.integers(k, 11))
            x = r.standard_normal((1, c_in, h, w)).astype(np.float32)
            spec = _spec(c_in, c_out, k, s, p, seed=trial)
            got = conv2d_raw(x, spec)
            want = reference.conv2d_naive(x, spec)
            assert got.shape == want.shape
            assert np.abs(got - want).max() < 1e-5

    def test_grouped_against_naive(self):
        r = np.random.default_rng(7)
        x = r.standard_normal((1, 4, 8, 8)).astype(np.float32)
        spec = _spec(4, 6, 3, s=1, p=1, groups=2, seed=9)
        got = conv2d_raw(x, spec)
        want = reference.conv2d_naive(x, spec)
        assert np.abs(got - want).max() < 1e-5

    def test_linearity_with_zero_bias(self):
        r = np.random.default_rng(1)
        spec = _spec(3, 4, 3, p=1, seed=2, bias=False)
        x = r.standard_normal((1, 3, 9, 9)).astype(np.float32)
        y = r.standard_normal((1, 3, 9, 9)).astype(np.float32)
        a, b = 1.7, -0.6
        lhs = conv2d_raw(a * x + b * y, spec)
        rhs = a * conv2d_raw(x, spec) + b * conv2d_raw(y, spec)
        assert np.abs(lhs - rhs).max() < 1e-5

    def test_channel_mismatch_raises(self):
        spec = _spec(3, 4, 3)
        with pytest.raises(ValueError, match="channels"):
            conv2d(Tensor(np.zeros((1, 2, 8, 8), np.float32)), spec)

    def test_zero_sized_output_raises(self):
        spec = _spec(1, 1, 5)
        with pytest.raises(ValueError, match="zero-sized"):
            conv2d(Tensor(np.zeros((1, 1, 3, 3), np.float32)), spec)

    def test_output_shape_formula(self):
        # every (k, stride, pad) combination the nano graph uses
        for k, s, p in [(6, 2, 2), (3, 2, 1), (1, 1, 0), (3, 1, 1)]:
            for hw in (32, 64, 96):
                spec = _spec(2, 3, k, s, p, seed=0)
                out = conv2d_raw(np.zeros((1, 2, hw, hw), np.float32), spec)
                expected = (hw + 2 * p - k) // s + 1
                assert out.shape == (1, 3, expected, expected)


class TestActivation:
    def test_silu_zero(self):
        out = activation(Tensor(np.zeros((1, 1, 1, 1), np.float32)), "silu")
        assert out.data[0, 0, 0, 0] == 0.0

    def test_sigmoid_zero(self):
        out = activation(Tensor(np.zeros((1, 1, 1, 1), np.float32)), "sigmoid")
        assert out.data[0, 0, 0, 0] == pytest.approx(0.5)

    def test_silu_ten(self):
        x = Tensor(np.full((1, 1, 1, 1), 10.0, np.float32))
        expected = 10.0 / (1.0 + math.exp(-10.0))
        assert activation(x, "silu").data[0, 0, 0, 0] == pytest.approx(expected, abs=1e-5)

    def test_against_naive(self, rng):
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32) * 20
        got = activation(Tensor(x), "silu").data
        want = reference.silu_naive(x)
        assert np.abs(got - want).max() < 1e-5
        got_s = activation(Tensor(x), "sigmoid").data
        want_s = reference.sigmoid_naive(x)
        assert np.abs(got_s - want_s).max() < 1e-5

    def test_extreme_values_finite(self):
        x = np.array([[[[-500.0, 500.0, 0.0, -30.0]]]], dtype=np.float32)
        out = activation(Tensor(x), "sigmoid").data
        assert np.all(np.isfinite(out))
        assert out[0, 0, 0, 0] == pytest.approx(0.0)
        assert out[0, 0, 0, 1] == pytest.approx(1.0)


class TestMaxPool:
    def test_constant_input(self):
        x = np.full((1, 2, 8, 8), 3.25, np.float32)
        for k, s in [(2, 2), (3, 1), (5, 1)]:
            out = maxpool2d(Tensor(x), k, s, 0)
            assert np.all(out.data == 3.25)

    def test_spike_fills_neighborhood(self):
        x = np.zeros((1, 1, 8, 8), np.float32)
        x[0, 0, 4, 4] = 9.0
        out = maxpool2d(Tensor(x), 5, 1, 2).data[0, 0]
        region = out[2:7, 2:7]
        assert np.all(region == 9.0)
        mask = np.zeros((8, 8), bool)
        mask[2:7, 2:7] = True
        assert np.all(out[~mask] == 0.0)

    def test_padding_never_wins(self):
        x = np.full((1, 1, 4, 4), -5.0, np.float32)
        out = maxpool2d(Tensor(x), 3, 1, 1)
        assert np.all(out.data == -5.0)  # -inf padding must not leak 0 or 114

    def test_against_naive_oracle_randomized(self, rng):
        for trial in range(100):
            k = int(rng.choice([2, 3, 5]))
            s = int(rng.choice([1, 2]))
            p = int(rng.integers(0, k // 2 + 1))
            h = int(rng.integers(k, 12))
            w = int(rng.integers(k, 12))
            x = rng.standard_normal((1, 2, h, w)).astype(np.float32)
            got = maxpool2d_raw(x, k, s, p)
            want = reference.maxpool2d_naive(x, k, s, p)
            np.testing.assert_array_equal(got, want)  # exact for maxpool


class TestUpsample:
    def test_single_value(self):
        out = upsample_nearest2x(Tensor(np.full((1, 1, 1, 1), 2.5, np.float32)))
        assert out.dims == (1, 1, 2, 2)
        assert np.all(out.data == 2.5)

    def test_shape_rule(self):
        out = upsample_nearest2x(Tensor(np.zeros((1, 3, 20, 20), np.float32)))
        assert out.dims == (1, 3, 40, 40)

    def test_checkerboard(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]], dtype=np.float32)
        out = upsample_nearest2x(Tensor(x)).data[0, 0]
        expected = np.array(
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=np.float32
        )
        np.testing.assert_array_equal(out, expected)

    def test_against_naive(self, rng):
        x = rng.standard_normal((2, 3, 5, 7)).astype(np.float32)
        np.testing.assert_array_equal(
            upsample_nearest2x(Tensor(x)).data, reference.upsample_nearest2x_naive(x)
        )


class TestConcat:
    def test_shape_rule(self):
        a = Tensor(np.zeros((1, 4, 8, 8), np.float32))
        b = Tensor(np.zeros((1, 8, 8, 8), np.float32))
        assert concat_channels(a, b).dims == (1, 12, 8, 8)

    def test_ordering(self, rng):
        a = Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
        b = Tensor(rng.standard_normal((1, 3, 4, 4)).astype(np.float32))
        out = concat_channels(a, b)
        np.testing.assert_array_equal(out.data[:, 0], a.data[:, 0])
        np.testing.assert_array_equal(out.data[:, 2:], b.data)

    def test_not_commutative(self, rng):
        a = Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
        b = Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
        ab = concat_channels(a, b).data
        ba = concat_channels(b, a).data
        assert not np.array_equal(ab, ba)

    def test_spatial_mismatch_raises(self):
        a = Tensor(np.zeros((1, 2, 4, 4), np.float32))
        b = Tensor(np.zeros((1, 2, 4, 5), np.float32))
        with pytest.raises(ValueError, match="spatial mismatch"):
            concat_channels(a, b)

    def test_against_naive(self, rng):
        a = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        b = rng.standard_normal((1, 5, 4, 4)).astype(np.float32)
        got = concat_channels(Tensor(a), Tensor(b)).data
        np.testing.assert_array_equal(got, reference.concat_channels_naive(a, b))


class TestFoldBatchnorm:
    def test_identity_bn_keeps_weights(self):
        spec = _spec(2, 3, 3, seed=5)
        ones, zeros = np.ones(3, np.float32), np.zeros(3, np.float32)
        folded = fold_batchnorm(spec, ones, zeros, zeros, ones, eps=0.0)
        np.testing.assert_array_equal(folded.weights, spec.weights)
        np.testing.assert_array_equal(folded.bias, spec.bias)

    def test_gamma_two_doubles(self):
        spec = _spec(2, 3, 3, seed=6)
        gamma = np.full(3, 2.0, np.float32)
        zeros, ones = np.zeros(3, np.float32), np.ones(3, np.float32)
        folded = fold_batchnorm(spec, gamma, zeros, zeros, ones, eps=0.0)
        np.testing.assert_allclose(folded.weights, 2.0 * spec.weights, rtol=1e-6)
        np.testing.assert_allclose(folded.bias, 2.0 * spec.bias, rtol=1e-6)

    def test_composition_equivalence_randomized(self, rng):
        for trial in range(50):
            spec = _spec(3, 4, 3, p=1, seed=100 + trial)
            gamma = rng.uniform(0.5, 2.0, 4).astype(np.float32)
            beta = rng.standard_normal(4).astype(np.float32)
            mean = rng.standard_normal(4).astype(np.float32)
            var = rng.uniform(0.1, 10.0, 4).astype(np.float32)
            eps = 1e-3
            x = rng.standard_normal((1, 3, 7, 7)).astype(np.float32)
            sequential = reference.batchnorm_apply(
                conv2d_raw(x, spec), gamma, beta, mean, var, eps
            )
            fused = conv2d_raw(x, fold_batchnorm(spec, gamma, beta, mean, var, eps))
            assert np.abs(fused - sequential).max() < 1e-5

    def test_length_mismatch_raises(self):
        spec = _spec(2, 3, 3)
        bad = np.ones(2, np.float32)
        ones, zeros = np.ones(3, np.float32), np.zeros(3, np.float32)
        with pytest.raises(ValueError, match="out_ch"):
            fold_batchnorm(spec, bad, zeros, zeros, ones, 1e-5)


class TestTensorInvariants:
    def test_buffer_length_checked(self):
        with pytest.raises(ValueError):
            Tensor(np.zeros((2, 3), np.float32))

    def test_qparams_iff_int8(self):
        with pytest.raises(ValueError, match="qparams"):
            Tensor(np.zeros((1, 1, 1, 1), np.int8))
        with pytest.raises(ValueError, match="qparams"):
            from thermodet.tensor import QuantParams

            Tensor(np.zeros((1, 1, 1, 1), np.float32), QuantParams(1.0, 0))

    def test_kernel_rejects_empty_dims(self):
        t = Tensor.__new__(Tensor)
        t.data = np.zeros((1, 0, 4, 4), np.float32)
        t.qparams = None
        with pytest.raises(ValueError, match="dims > 0"):
            upsample_nearest2x(t)
