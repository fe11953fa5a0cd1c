"""Point feature transformer: positional encoding, cross-cloud encoder-decoder, SE."""
from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .tensor import Tensor

POS_HIDDEN = 64


def init_positional(rng, width: int) -> dict:
    return {"fc1": nn.init_linear(rng, 3, POS_HIDDEN), "fc2": nn.init_linear(rng, POS_HIDDEN, width)}


def positional_encode(cloud, p) -> Tensor:
    """``ReLU(FC(Sigmoid(FC(xyz))))`` row by row."""
    x = Tensor(np.asarray(cloud, dtype=np.float64))
    return T.relu(nn.linear(T.sigmoid(nn.linear(x, p["fc1"])), p["fc2"]))


def init_interaction(rng, width: int, depth: int, heads: int) -> dict:
    if depth < 1:
        raise ValueError("interaction depth must be >= 1")
    return {
        "enc": {str(i): nn.init_encoder_block(rng, width, heads) for i in range(depth)},
        "dec": {str(i): nn.init_decoder_block(rng, width, heads) for i in range(depth)},
    }


def interaction(context: Tensor, query: Tensor, p, heads: int, residual_outside_ln: bool = False) -> Tensor:
    """Transformer ``phi(context, query)``.

    The encoder stack runs once over ``context``; every decoder layer on the
    ``query`` side cross-attends to that final encoding.
    """
    depth = len(p["enc"])
    memory = context
    for i in range(depth):
        memory = nn.encoder_block(memory, p["enc"][str(i)], heads, residual_outside_ln)
    out = query
    for i in range(depth):
        out = nn.decoder_block(memory, out, p["dec"][str(i)], heads, residual_outside_ln)
    return out


def init_pft(rng, width: int = 64, depth: int = 6, heads: int = 4, se_reduction: int = 4,
             positional: bool = True, tied: bool = True) -> dict:
    p = {"phi": init_interaction(rng, width, depth, heads), "se": nn.init_se(rng, width, se_reduction)}
    if not tied:
        p["phi_y"] = init_interaction(rng, width, depth, heads)
    if positional:
        p["pos"] = init_positional(rng, width)
    return p


def pft_forward(fx: Tensor, fy: Tensor, x, y, p, heads: int = 4, residual_outside_ln: bool = False):
    """Return ``(Phi_X, Phi_Y)``.

    ``Phi_X = SE(F_X + phi(F_Y + P_Y, F_X + P_X))`` and symmetrically for Y.
    Without a ``"pos"`` entry the positional terms are dropped.
    """
    if fx.shape[0] != len(x) or fy.shape[0] != len(y):
        raise T.ShapeError("feature rows must match cloud sizes")
    if "pos" in p:
        fx_pos = T.add(fx, positional_encode(x, p["pos"]))
        fy_pos = T.add(fy, positional_encode(y, p["pos"]))
    else:
        fx_pos, fy_pos = fx, fy
    phi_y = p.get("phi_y", p["phi"])
    psi_x = T.add(fx, interaction(fy_pos, fx_pos, p["phi"], heads, residual_outside_ln))
    psi_y = T.add(fy, interaction(fx_pos, fy_pos, phi_y, heads, residual_outside_ln))
    return nn.se_recalibrate(psi_x, p["se"]), nn.se_recalibrate(psi_y, p["se"])
