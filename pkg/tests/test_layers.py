"""Sequence prep, transformer layer, and the two fusion heads."""

import math

import numpy as np
import pytest

from fmhca import tensor as T
from fmhca.attention import AttentionConfig, init_mhca_params
from fmhca.errors import ShapeMismatch
from fmhca.fusion import MfbParams, concat_fusion, init_mfb_params, mfb_pool
from fmhca.gradcheck import grad_check
from fmhca.layers import (
    feed_forward,
    init_transformer_params,
    positional_encoding,
    prepend_cls,
    transformer_layer,
)
from fmhca.rng import Rng
from fmhca.tensor import Tensor


class TestPrependCls:
    def test_empty_sequence(self):
        cls = Tensor([1.0, 2.0, 3.0])
        out = prepend_cls(Tensor(np.zeros((0, 3))), cls)
        assert out.shape == (1, 3)
        np.testing.assert_array_equal(out.data, [[1.0, 2.0, 3.0]])

    def test_row_order_preserved(self):
        x = Tensor([[1.0, 1.0], [2.0, 2.0]])
        out = prepend_cls(x, Tensor([9.0, 9.0]))
        np.testing.assert_array_equal(out.data, [[9, 9], [1, 1], [2, 2]])

    def test_gradient_reaches_cls(self, f64):
        x = Tensor(Rng(0).normal((2, 3)))
        cls = Tensor(Rng(1).normal(3), requires_grad=True)
        w = Rng(2).normal((3, 3))
        err = grad_check(lambda ts: T.sum_all(T.mul(prepend_cls(x, ts[0]), Tensor(w))), [cls])
        assert err <= 1e-5

    def test_width_mismatch(self):
        with pytest.raises(ShapeMismatch):
            prepend_cls(Tensor(np.ones((2, 3))), Tensor(np.ones(4)))


class TestPositionalEncoding:
    def test_position_zero(self):
        pe = positional_encoding(3, 6).data
        assert (pe[0, 0::2] == 0.0).all()
        assert (pe[0, 1::2] == 1.0).all()

    def test_position_one_first_column(self):
        pe = positional_encoding(2, 4).data
        assert pe[1, 0] == pytest.approx(0.8414709848078965, abs=1e-7)
        assert pe[1, 1] == pytest.approx(math.cos(1.0), abs=1e-7)

    def test_bounded(self):
        pe = positional_encoding(50, 16).data
        assert (pe >= -1.0).all() and (pe <= 1.0).all()

    def test_not_trainable(self):
        assert positional_encoding(4, 8).requires_grad is False


class TestTransformerLayer:
    def _cfg_params(self, d=8, heads=2, d_ff=16, seed=0):
        cfg = AttentionConfig(d_model=d, heads=heads)
        return cfg, init_transformer_params(cfg, d_ff, Rng(seed))

    def test_shape_preserved(self):
        cfg, p = self._cfg_params()
        for length in (1, 3, 7):
            x = Tensor(Rng(length).normal((length, 8)))
            assert transformer_layer(p, cfg, x).shape == (length, 8)

    def test_zero_weights_reduce_to_double_layer_norm(self, f64):
        cfg, p = self._cfg_params()
        for t in (p.w1, p.b1, p.w2, p.b2, *p.attn.wq, *p.attn.wk, *p.attn.wv, p.attn.wo):
            t.data[...] = 0.0
        x = Tensor(Rng(3).normal((4, 8)))
        got = transformer_layer(p, cfg, x).data
        ones, zeros = Tensor(np.ones(8)), Tensor(np.zeros(8))
        ref = T.layer_norm(T.layer_norm(x, ones, zeros), ones, zeros).data
        np.testing.assert_allclose(got, ref, atol=1e-9)

    def test_post_norm_rows_centered(self, f64):
        cfg, p = self._cfg_params(seed=4)  # affines at init: gamma 1, beta 0
        x = Tensor(Rng(5).normal((5, 8)) * 3)
        out = transformer_layer(p, cfg, x).data
        assert np.abs(out.mean(axis=1)).max() <= 1e-6

    def test_masked_row_does_not_leak(self, f64):
        cfg, p = self._cfg_params(seed=6)
        x = Rng(7).normal((5, 8))
        mask = np.array([True, True, True, False, False])
        ref = transformer_layer(p, cfg, Tensor(x), mask).data
        x2 = x.copy()
        x2[3:] = Rng(8).normal((2, 8)) * 40
        got = transformer_layer(p, cfg, Tensor(x2), mask).data
        np.testing.assert_allclose(got[mask], ref[mask], atol=1e-6)

    def test_gradients(self, f64):
        cfg, p = self._cfg_params(d=4, heads=2, d_ff=8, seed=9)
        x = Tensor(Rng(10).normal((3, 4)), requires_grad=True)
        w = Rng(11).normal((3, 4))
        tensors = [x] + [t for _, t in p.named("enc")]
        err = grad_check(lambda ts: T.sum_all(T.mul(transformer_layer(p, cfg, ts[0]), Tensor(w))), tensors)
        assert err <= 1e-4


class TestFeedForward:
    def test_zero_everything(self):
        cfg, p = AttentionConfig(4, 2), init_transformer_params(AttentionConfig(4, 2), 8, Rng(0))
        for t in (p.w1, p.b1, p.w2, p.b2):
            t.data[...] = 0.0
        out = feed_forward(p, Tensor(Rng(1).normal((3, 4))))
        assert (out.data == 0.0).all()

    def test_single_position_scalar_oracle(self, f64):
        cfg = AttentionConfig(2, 1)
        p = init_transformer_params(cfg, 3, Rng(2))
        x = Rng(3).normal((1, 2))
        got = feed_forward(p, Tensor(x)).data[0]
        hidden = np.maximum(0.0, x[0] @ p.w1.data + p.b1.data)
        ref = hidden @ p.w2.data + p.b2.data
        np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_position_wise(self, f64):
        cfg = AttentionConfig(4, 2)
        p = init_transformer_params(cfg, 8, Rng(4))
        x = Rng(5).normal((5, 4))
        perm = [3, 0, 4, 1, 2]
        base = feed_forward(p, Tensor(x)).data
        permuted = feed_forward(p, Tensor(x[perm])).data
        np.testing.assert_allclose(permuted, base[perm], atol=1e-12)


def mfb_oracle(p: MfbParams, f: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Brute-force summation over factors and output dims."""
    d_mfb = p.wf[0].shape[0]
    out = np.zeros(d_mfb)
    for wf_k, wh_k in zip(p.wf, p.wh):
        for o in range(d_mfb):
            left = sum(float(wf_k.data[o, j]) * float(f[j]) for j in range(f.shape[0]))
            right = sum(float(wh_k.data[o, j]) * float(h[j]) for j in range(h.shape[0]))
            out[o] += left * right
    return out


class TestMfbPool:
    def test_single_factor_identity_collapse(self):
        p = MfbParams(wf=[Tensor(np.eye(3))], wh=[Tensor(np.eye(3))])
        f, h = Tensor([1.0, 2.0, 3.0]), Tensor([4.0, 5.0, 6.0])
        np.testing.assert_allclose(mfb_pool(p, f, h).data, [4.0, 10.0, 18.0])

    def test_zero_input_annihilates(self):
        p = init_mfb_params(4, 5, 3, Rng(0))
        out = mfb_pool(p, Tensor(np.zeros(4)), Tensor(Rng(1).normal(4)))
        assert (out.data == 0.0).all()

    def test_homogeneity(self, f64):
        p = init_mfb_params(6, 4, 2, Rng(2))
        rng = Rng(3)
        for _ in range(5):
            f, h = rng.normal(6), rng.normal(6)
            alpha = float(rng.uniform()) * 4 - 2
            base = mfb_pool(p, Tensor(f), Tensor(h)).data
            scaled = mfb_pool(p, Tensor(alpha * f), Tensor(h)).data
            np.testing.assert_allclose(scaled, alpha * base, rtol=1e-6, atol=1e-9)

    def test_additivity_each_argument(self, f64):
        p = init_mfb_params(5, 4, 3, Rng(4))
        rng = Rng(5)
        f1, f2, h = rng.normal(5), rng.normal(5), rng.normal(5)
        left = mfb_pool(p, Tensor(f1 + f2), Tensor(h)).data
        right = mfb_pool(p, Tensor(f1), Tensor(h)).data + mfb_pool(p, Tensor(f2), Tensor(h)).data
        np.testing.assert_allclose(left, right, rtol=1e-6, atol=1e-9)

    def test_against_bruteforce_oracle(self, f64):
        p = init_mfb_params(d_in=128, d_mfb=8, factors=16, rng=Rng(6))
        rng = Rng(7)
        f, h = rng.normal(128), rng.normal(128)
        got = mfb_pool(p, Tensor(f), Tensor(h)).data
        ref = mfb_oracle(p, f, h)
        np.testing.assert_allclose(got, ref, rtol=1e-6)

    def test_width_mismatch(self):
        p = init_mfb_params(4, 4, 1, Rng(8))
        with pytest.raises(ShapeMismatch):
            mfb_pool(p, Tensor(np.ones(4)), Tensor(np.ones(5)))


class TestConcatFusion:
    def test_zero_weight_returns_bias(self):
        f, h = Tensor(np.ones(3)), Tensor(np.ones(3))
        b = Tensor([1.0, 2.0])
        out = concat_fusion(f, h, Tensor(np.zeros((2, 6))), b)
        np.testing.assert_array_equal(out.data, [1.0, 2.0])

    def test_identity_block_selects_first_input(self):
        d = 3
        w = np.concatenate([np.eye(d), np.zeros((d, d))], axis=1)
        f, h = Tensor([1.0, 2.0, 3.0]), Tensor([7.0, 8.0, 9.0])
        out = concat_fusion(f, h, Tensor(w), Tensor(np.zeros(d)))
        np.testing.assert_array_equal(out.data, f.data)

    def test_against_oracle(self, f64):
        rng = Rng(9)
        f, h = rng.normal(4), rng.normal(4)
        w, b = rng.normal((5, 8)), rng.normal(5)
        out = concat_fusion(Tensor(f), Tensor(h), Tensor(w), Tensor(b))
        np.testing.assert_allclose(out.data, w @ np.concatenate([f, h]) + b, rtol=1e-10)
