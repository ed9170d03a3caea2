"""Generation-quality evaluation via the sliced 1-Wasserstein distance."""

from __future__ import annotations

import numpy as np
from scipy.stats import wasserstein_distance

from .datasets import Dataset
from .errors import InputError

__all__ = ["wasserstein_eval", "sliced_wasserstein"]


def sliced_wasserstein(a, b, projections=128, seed=0):
    """Average exact 1-D W1 over random unit projections of flat samples.

    ``a`` and ``b`` are (n, d) arrays; sample counts may differ.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InputError(f"incompatible sample shapes {a.shape} and {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InputError("need at least one sample on each side")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    total = 0.0
    for u in dirs:
        total += wasserstein_distance(a @ u, b @ u)
    return total / projections


def wasserstein_eval(real: Dataset, generated: Dataset, projections=128,
                     seed=0):
    """Sliced W1 between two datasets of equally shaped series.

    Each series is flattened to a T*D vector; the distance is deterministic
    for a fixed seed, symmetric, and zero on identical inputs.
    """
    if real.T != generated.T or real.D != generated.D:
        raise InputError(
            f"shape mismatch: ({real.T},{real.D}) vs ({generated.T},{generated.D})")
    a = real.as_array().reshape(len(real), -1)
    b = generated.as_array().reshape(len(generated), -1)
    return sliced_wasserstein(a, b, projections=projections, seed=seed)
