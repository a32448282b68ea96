"""Sequential Monte Carlo filter for a single possibility function.

The state is a set of support points whose weights (maximum one) sample the
current posterior possibility function. Prediction replaces the integral of
the Chapman-Kolmogorov equation by a maximum over the previous samples, and
the update multiplies by the observation possibility before renormalising
the maximum to one.
"""

from __future__ import annotations

import numpy as np

from ..possibility import GaussianKernel, PossibilityFunction, WeightedSampleSet
from ..sampling import sample_continuous
from .common import propagate, resample_indices, safe_log
from .config import FilterConfig

SinglePossibilityState = WeightedSampleSet


def initialize_single(prior: PossibilityFunction, cfg: FilterConfig, rng) -> WeightedSampleSet:
    points = sample_continuous(prior, rng, cfg.continuous, size=cfg.n)
    return WeightedSampleSet.from_log_weights(prior.log_eval(points), points)


def single_predict(
    state: WeightedSampleSet,
    kernel: GaussianKernel,
    cfg: FilterConfig,
    rng=None,
    proposals: np.ndarray | None = None,
) -> WeightedSampleSet:
    """Move every sample through the transition and recompute its weight.

    ``proposals`` replaces the random draws (one row per sample), which makes
    the weight computation testable on hand-picked points.
    """
    prev = state.points
    new = propagate(kernel, prev, cfg.continuous, rng) if proposals is None else np.atleast_2d(proposals)
    if len(new) != len(prev):
        raise ValueError("one proposal per sample is required")
    logw = safe_log(state.weights)
    if cfg.complexity == "quadratic":
        logw_pred = kernel.max_plus(new, prev, logw)
    else:
        logw_pred = logw + kernel.log_eval(new, prev)
    return WeightedSampleSet.from_log_weights(logw_pred, new)


def single_update(state: WeightedSampleSet, likelihood, y) -> WeightedSampleSet:
    logw = safe_log(state.weights) + likelihood.log_eval(y, state.points)
    return WeightedSampleSet.from_log_weights(logw, state.points)


def resample_single(state: WeightedSampleSet, cfg: FilterConfig, rng) -> WeightedSampleSet:
    if len(state) == 1:
        return state
    idx = resample_indices(state.weights, len(state), cfg, rng)
    w = state.weights[idx]
    return WeightedSampleSet(w / w.max(), state.points[idx])


def map_single(state: WeightedSampleSet) -> np.ndarray:
    return state.points[int(np.argmax(state.weights))].copy()


def run_single_filter(model, observations, cfg: FilterConfig, rng) -> np.ndarray:
    """Filter a whole observation sequence; returns the MAP estimate per step."""
    prior = model.prior[0][1]
    state = initialize_single(prior, cfg, rng)
    estimates = []
    for y in observations:
        state = single_predict(state, model.transition, cfg, rng)
        state = single_update(state, model.observation, y)
        estimates.append(map_single(state))
        state = resample_single(state, cfg, rng)
    return np.array(estimates)
