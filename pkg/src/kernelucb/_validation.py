"""Input validation shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .kernels import KernelSpec


def check_gamma(gamma) -> float:
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"gamma must be finite and > 0, got {gamma}")
    return gamma


def check_reward(r) -> float:
    r = float(r)
    if not np.isfinite(r):
        raise ValueError(f"reward must be finite, got {r}")
    return r


def check_rewards(y, n: int) -> np.ndarray:
    y = check_array(y, ensure_2d=False, dtype=float, ensure_min_samples=0)
    if y.ndim != 1:
        raise ValueError(f"rewards must be 1-D, got shape {y.shape}")
    if len(y) != n:
        raise ValueError(f"{n} contexts but {len(y)} rewards")
    return y


def make_kernel(kernel, bandwidth=1.0, degree=2, similarity=None) -> KernelSpec:
    """Build a :class:`KernelSpec` from estimator parameters."""
    if isinstance(kernel, KernelSpec):
        return kernel
    if kernel == "precomputed":
        if similarity is None:
            raise ValueError("kernel='precomputed' needs a similarity matrix")
        S = check_array(similarity, dtype=float)
        return KernelSpec.precomputed(S)
    return KernelSpec(kernel, bandwidth=float(bandwidth), degree=int(degree))
