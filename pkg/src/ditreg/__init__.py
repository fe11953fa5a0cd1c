"""Rigid point cloud registration with attention-based feature interaction.

The package is organised bottom-up: ``geometry`` and ``metrics`` hold the
rigid-motion primitives, ``tensor`` is a small reverse-mode autodiff
engine, ``nn``/``pse``/``pft`` build the feature network, ``matching`` and
``gmcce`` turn features into a transform, and ``pipeline``/``cli`` wire
everything together.
"""
from .geometry import RigidTransform, apply_transform, make_pair, sample_shape
from .kernels import BACKEND

__all__ = ["BACKEND", "RigidTransform", "apply_transform", "make_pair", "sample_shape"]
