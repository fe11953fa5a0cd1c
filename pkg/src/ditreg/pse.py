"""Point cloud structure extractor: LFI + encoder stack, merged by concatenation."""
from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .knn import knn_indices
from .tensor import Tensor

LFI_WIDTH = 64


def init_pse(rng, k: int, layers: int = 3, heads: int = 4, out_width: int = 64) -> dict:
    if not 1 <= layers <= 4:
        raise ValueError(f"PSE layer count must be in 1..4, got {layers}")
    p = {}
    d_in = 3
    for n in range(layers):
        p[f"lfi{n}"] = nn.init_linear(rng, (k + 1) * d_in, LFI_WIDTH)
        p[f"enc{n}"] = nn.init_encoder_block(rng, LFI_WIDTH, heads)
        d_in = LFI_WIDTH
    p["merge_ln"] = nn.init_layer_norm(layers * LFI_WIDTH)
    p["merge"] = nn.init_linear(rng, layers * LFI_WIDTH, out_width)
    return p


def lfi_inputs(features: Tensor, neighbors: np.ndarray) -> Tensor:
    """Per point: its own feature row followed by its k neighbors' rows."""
    n, d = features.shape
    nbr = np.asarray(neighbors, dtype=np.int64)
    if nbr.shape[0] != n:
        raise ValueError(f"neighbor table has {nbr.shape[0]} rows for {n} points")
    if nbr.size and (nbr.min() < 0 or nbr.max() >= n):
        raise IndexError("neighbor index out of range")
    groups = np.concatenate([np.arange(n)[:, None], nbr], axis=1)
    return T.reshape(T.gather(features, groups), (n, groups.shape[1] * d))


def lfi(features: Tensor, neighbors: np.ndarray, p) -> Tensor:
    return T.relu(nn.linear(lfi_inputs(features, neighbors), p))


def pse_forward(cloud, p, k: int, heads: int = 4, neighbors=None, residual_outside_ln: bool = False) -> Tensor:
    """Pointwise features ``(N, out_width)`` for one cloud.

    Neighbors are found once in geometric space and reused by every layer.
    """
    pts = np.asarray(cloud, dtype=np.float64)
    if neighbors is None:
        neighbors = knn_indices(pts, k)
    layers = sum(1 for key in p if key.startswith("lfi"))
    feats = Tensor(pts)
    outputs = []
    for n in range(layers):
        feats = lfi(feats, neighbors, p[f"lfi{n}"])
        feats = nn.encoder_block(feats, p[f"enc{n}"], heads, residual_outside_ln)
        outputs.append(feats)
    merged = nn.layer_norm(T.relu(T.concat(outputs, axis=-1)), p["merge_ln"])
    return nn.linear(merged, p["merge"])


def init_coordinate_embedding(rng, out_width: int = 64) -> dict:
    """Per-point MLP on raw coordinates; stands in for PSE in the no-PSE ablation."""
    return {"fc1": nn.init_linear(rng, 3, LFI_WIDTH), "fc2": nn.init_linear(rng, LFI_WIDTH, out_width)}


def coordinate_embedding(cloud, p) -> Tensor:
    return nn.mlp(Tensor(np.asarray(cloud, dtype=np.float64)), p)
