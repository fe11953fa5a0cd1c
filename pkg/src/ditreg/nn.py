"""Attention building blocks on top of :mod:`ditreg.tensor`.

Parameters are nested dicts of Tensors, e.g. an encoder block is
``{"msa": {...}, "ln1": {...}, "mlp": {...}, "ln2": {...}}``. Per-head
projections ``W^Q_i`` are stored side by side as column blocks of one
``(d_model, h * d_head)`` matrix.
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


def uniform_param(rng, shape, fan_in, name=None) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def init_linear(rng, d_in, d_out, bias=True) -> dict:
    p = {"w": uniform_param(rng, (d_in, d_out), d_in)}
    if bias:
        p["b"] = uniform_param(rng, (d_out,), d_in)
    return p


def init_layer_norm(d) -> dict:
    return {"g": Tensor(np.ones(d), requires_grad=True), "b": Tensor(np.zeros(d), requires_grad=True)}


def init_attention(rng, d_model, heads) -> dict:
    if d_model % heads:
        raise ValueError(f"d_model={d_model} is not divisible by heads={heads}")
    return {
        "wq": uniform_param(rng, (d_model, d_model), d_model),
        "wk": uniform_param(rng, (d_model, d_model), d_model),
        "wv": uniform_param(rng, (d_model, d_model), d_model),
        "wo": uniform_param(rng, (d_model, d_model), d_model),
    }


def init_mlp(rng, d, hidden=None) -> dict:
    hidden = hidden or 2 * d
    return {"fc1": init_linear(rng, d, hidden), "fc2": init_linear(rng, hidden, d)}


def init_encoder_block(rng, d_model, heads) -> dict:
    return {
        "msa": init_attention(rng, d_model, heads),
        "ln1": init_layer_norm(d_model),
        "mlp": init_mlp(rng, d_model),
        "ln2": init_layer_norm(d_model),
    }


def init_decoder_block(rng, d_model, heads) -> dict:
    return {
        "msa": init_attention(rng, d_model, heads),
        "ln1": init_layer_norm(d_model),
        "mca": init_attention(rng, d_model, heads),
        "ln2": init_layer_norm(d_model),
        "mlp": init_mlp(rng, d_model),
        "ln3": init_layer_norm(d_model),
    }


def init_se(rng, d, reduction=4) -> dict:
    if d % reduction:
        raise ValueError(f"SE reduction {reduction} does not divide width {d}")
    return {"fc1": init_linear(rng, d, d // reduction), "fc2": init_linear(rng, d // reduction, d)}


def flatten(params, prefix="") -> dict:
    """Nested parameter dict -> ordered ``{"a.b.c": Tensor}``."""
    flat = {}
    for key, value in params.items():
        name = f"{prefix}{key}"
        if isinstance(value, Tensor):
            value.name = name
            flat[name] = value
        else:
            flat.update(flatten(value, name + "."))
    return flat


def count_params(params) -> int:
    return sum(p.data.size for p in flatten(params).values())


# ------------------------------------------------------------ forward ops

def linear(x: Tensor, p) -> Tensor:
    out = T.matmul(x, p["w"])
    if "b" in p:
        out = T.add(out, T.broadcast_rows(p["b"], x.shape[0]))
    return out


def mlp(x: Tensor, p) -> Tensor:
    return linear(T.relu(linear(x, p["fc1"])), p["fc2"])


def layer_norm(x: Tensor, p) -> Tensor:
    return T.layer_norm(x, p["g"], p["b"])


def _split_heads(x: Tensor, heads: int) -> Tensor:
    n, width = x.shape
    return T.transpose(T.reshape(x, (n, heads, width // heads)), (1, 0, 2))


def multi_head_attention(fq: Tensor, fk: Tensor, fv: Tensor, p, heads: int, return_weights=False):
    """``Concat(A_1..A_h) W^O`` with ``A_i = softmax(Q_i K_i^T / sqrt(d_K)) V_i``."""
    if fk.shape[0] != fv.shape[0]:
        raise T.ShapeError(f"keys and values need equal row counts, got {fk.shape[0]} and {fv.shape[0]}")
    d_model = p["wq"].shape[0]
    for f in (fq, fk, fv):
        if f.ndim != 2 or f.shape[1] != d_model:
            raise T.ShapeError(f"attention input width must be {d_model}, got {f.shape}")
    n = fq.shape[0]
    width = p["wq"].shape[1]
    d_head = width // heads
    q = _split_heads(T.matmul(fq, p["wq"]), heads)
    k = _split_heads(T.matmul(fk, p["wk"]), heads)
    v = _split_heads(T.matmul(fv, p["wv"]), heads)
    logits = T.scale(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(d_head))
    weights = T.softmax(logits, axis=-1)
    heads_out = T.matmul(weights, v)
    merged = T.reshape(T.transpose(heads_out, (1, 0, 2)), (n, width))
    out = T.matmul(merged, p["wo"])
    return (out, weights) if return_weights else out


def _residual(f_out: Tensor, x: Tensor, ln, residual_outside_ln: bool) -> Tensor:
    if residual_outside_ln:
        return T.add(layer_norm(f_out, ln), x)
    return layer_norm(T.add(f_out, x), ln)


def encoder_block(x: Tensor, p, heads: int, residual_outside_ln: bool = False) -> Tensor:
    """Post-LN Transformer encoder: self-attention then MLP, each with a residual.

    ``residual_outside_ln`` switches to ``LN(f(x)) + x``.
    """
    h = _residual(multi_head_attention(x, x, x, p["msa"], heads), x, p["ln1"], residual_outside_ln)
    return _residual(mlp(h, p["mlp"]), h, p["ln2"], residual_outside_ln)


def decoder_block(memory: Tensor, x: Tensor, p, heads: int, residual_outside_ln: bool = False) -> Tensor:
    """Decoder block: self-attention on ``x``, cross-attention into ``memory``, MLP."""
    if memory.shape[1] != x.shape[1]:
        raise T.ShapeError(f"decoder widths differ: {memory.shape} vs {x.shape}")
    xa = _residual(multi_head_attention(x, x, x, p["msa"], heads), x, p["ln1"], residual_outside_ln)
    cross = multi_head_attention(xa, memory, memory, p["mca"], heads)
    xa2 = _residual(cross, xa, p["ln2"], residual_outside_ln)
    return _residual(mlp(xa2, p["mlp"]), xa2, p["ln3"], residual_outside_ln)


def se_recalibrate(f_in: Tensor, p) -> Tensor:
    """Squeeze-and-excitation: column means -> FC/ReLU/FC/sigmoid gate -> rescale."""
    n, d = f_in.shape
    squeezed = T.reshape(T.mean(f_in, axis=0), (1, d))
    gate = T.sigmoid(linear(T.relu(linear(squeezed, p["fc1"])), p["fc2"]))
    return T.mul(f_in, T.broadcast_rows(T.reshape(gate, (d,)), n))
