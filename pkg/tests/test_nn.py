import numpy as np
import pytest

from ditreg import nn
from ditreg import tensor as T


def probe(out, rng):
    w = T.Tensor(rng.normal(size=out.shape))
    return T.sum(T.mul(out, w))


def check_block(forward, params, x, rng, coords=4):
    flat = list(nn.flatten(params).values()) + [x]
    w = T.Tensor(rng.normal(size=forward(x).shape))
    return T.grad_check(lambda ps: T.sum(T.mul(forward(x), w)), flat, coords=coords, rng=rng)


def test_linear_and_mlp_gradients(rng):
    x = T.tensor(rng.normal(size=(6, 8)), requires_grad=True)
    assert check_block(lambda x: nn.linear(x, p), p := nn.init_linear(rng, 8, 5), x, rng) < 1e-6
    assert check_block(lambda x: nn.mlp(x, q), q := nn.init_mlp(rng, 8), x, rng) < 1e-6


def test_attention_gradients(rng):
    p = nn.init_attention(rng, 8, 2)
    x = T.tensor(rng.normal(size=(5, 8)), requires_grad=True)
    assert check_block(lambda x: nn.multi_head_attention(x, x, x, p, 2), p, x, rng) < 1e-6


@pytest.mark.parametrize("outside", [False, True])
def test_encoder_decoder_gradients(rng, outside):
    enc = nn.init_encoder_block(rng, 8, 2)
    dec = nn.init_decoder_block(rng, 8, 2)
    mem = T.Tensor(rng.normal(size=(7, 8)))
    x = T.tensor(rng.normal(size=(5, 8)), requires_grad=True)
    assert check_block(lambda x: nn.encoder_block(x, enc, 2, outside), enc, x, rng) < 1e-6
    assert check_block(lambda x: nn.decoder_block(mem, x, dec, 2, outside), dec, x, rng) < 1e-6


def test_se_gradients_and_gate_range(rng):
    p = nn.init_se(rng, 8, 4)
    x = T.tensor(rng.normal(size=(6, 8)), requires_grad=True)
    assert check_block(lambda x: nn.se_recalibrate(x, p), p, x, rng) < 1e-6
    out = nn.se_recalibrate(x, p).data
    ratio = out / x.data
    assert np.all((ratio > 0) & (ratio < 1))
    np.testing.assert_allclose(ratio, np.broadcast_to(ratio[0], ratio.shape))


def test_attention_weights_are_row_stochastic(rng):
    p = nn.init_attention(rng, 8, 4)
    q = T.Tensor(rng.normal(size=(5, 8)))
    kv = T.Tensor(rng.normal(size=(9, 8)))
    out, w = nn.multi_head_attention(q, kv, kv, p, 4, return_weights=True)
    assert out.shape == (5, 8) and w.shape == (4, 5, 9)
    np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)


def test_single_head_attention_by_hand(rng):
    p = nn.init_attention(rng, 4, 1)
    x = rng.normal(size=(3, 4))
    q, k, v = (x @ p[n].data for n in ("wq", "wk", "wv"))
    logits = q @ k.T / 2.0
    a = np.exp(logits - logits.max(axis=1, keepdims=True))
    a /= a.sum(axis=1, keepdims=True)
    expected = a @ v @ p["wo"].data
    np.testing.assert_allclose(nn.multi_head_attention(T.Tensor(x), T.Tensor(x), T.Tensor(x), p, 1).data,
                               expected, atol=1e-12)


def test_encoder_permutation_equivariance(rng):
    p = nn.init_encoder_block(rng, 8, 2)
    x = rng.normal(size=(10, 8))
    perm = rng.permutation(10)
    a = nn.encoder_block(T.Tensor(x), p, 2).data
    b = nn.encoder_block(T.Tensor(x[perm]), p, 2).data
    np.testing.assert_allclose(b, a[perm], atol=1e-12)


def test_layer_norm_output_statistics(rng):
    out = nn.layer_norm(T.Tensor(rng.normal(3, 5, size=(4, 16))), nn.init_layer_norm(16)).data
    np.testing.assert_allclose(out.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=1), 1, atol=1e-4)


def test_bad_head_count(rng):
    with pytest.raises(ValueError):
        nn.init_attention(rng, 10, 4)


def test_flatten_names(rng):
    flat = nn.flatten({"a": nn.init_linear(rng, 2, 3), "b": {"c": nn.init_layer_norm(3)}})
    assert list(flat) == ["a.w", "a.b", "b.c.g", "b.c.b"]
    assert nn.count_params({"a": nn.init_linear(rng, 2, 3)}) == 9
