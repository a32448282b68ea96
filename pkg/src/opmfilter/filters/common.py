"""Pieces shared by the single- and multi-possibility filters."""

from __future__ import annotations

import numpy as np

from ..possibility import GaussianKernel, wrap_angle
from ..sampling import make_pmf, pmf_local_entropy, sample_pmf, standard_global_entropy
from .config import FilterConfig


def safe_log(w) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(w, dtype=float))


def propagate(kernel: GaussianKernel, x: np.ndarray, method: str, rng) -> np.ndarray:
    """One draw from the continuous sampling law of ``kernel(. | x_i)`` per row."""
    means = kernel.mean(x)
    shape = means.shape
    if method == "scaled":
        z = rng.standard_normal(shape)
    elif method == "global":
        z = standard_global_entropy(rng, shape)
    else:
        raise ValueError(f"unknown continuous sampler {method!r}")
    out = means + z @ kernel.chol.T
    if kernel.wrap:
        out[:, kernel.wrap] = wrap_angle(out[:, kernel.wrap])
    return out


def resample_indices(weights: np.ndarray, size: int, cfg: FilterConfig, rng) -> np.ndarray:
    """Ancestor indices for ``size`` slots drawn from possibilistic ``weights``.

    In selective mode every sample left uncapped by water pouring is kept once
    and only the remaining slots are drawn, from the configured PMF restricted
    to the capped samples.
    """
    pmf = make_pmf(weights, cfg.discrete)
    if cfg.resampling == "all":
        return sample_pmf(pmf, rng, size)
    capped = pmf_local_entropy(weights).capped
    keep = np.flatnonzero(~capped)
    if len(keep) > size:
        # group shrank below its count of high-weight samples
        return sample_pmf(pmf, rng, size)
    missing = size - len(keep)
    if missing == 0:
        return keep
    pool = np.flatnonzero(capped)
    mass = pmf.probs[pool]
    if len(pool) == 0 or mass.sum() <= 0:
        drawn = sample_pmf(pmf, rng, missing)
    else:
        drawn = pool[sample_pmf(mass / mass.sum(), rng, missing)]
    return np.concatenate([keep, drawn])
