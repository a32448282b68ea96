"""Sequential Monte Carlo filter for general outer probability measures.

The filtering o.p.m. is a probability mixture over possibility functions,
each approximated by its own group of weighted samples. Group weights are
probabilities (sum one); within-group weights are possibilistic (max one).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from ..errors import FilterDegeneracyError
from ..possibility import OpmApproximation, PossibilityFunction, WeightedSampleSet
from ..sampling import sample_continuous, sample_pmf
from .common import propagate, resample_indices, safe_log
from .config import FilterConfig

MultiPossibilityState = OpmApproximation


@dataclass(frozen=True)
class LikelihoodFamily:
    """Finite support ``{(V_l, s_l)}`` of the likelihood's probability over kernels."""

    weights: Sequence[float]
    kernels: Sequence

    def __post_init__(self):
        if len(self.weights) != len(self.kernels) or not self.kernels:
            raise ValueError("one weight per likelihood kernel is required")


@dataclass(frozen=True)
class SampledLikelihood:
    """Likelihood kernels obtained by ``count`` calls of ``draw(rng)``."""

    draw: Callable
    count: int = 1


def _assemble(log_masses, weight_logs, points) -> OpmApproximation:
    """Normalise group masses to probabilities and weights to max one."""
    log_masses = np.asarray(log_masses, dtype=float)
    alive = np.isfinite(log_masses)
    if not alive.any():
        raise FilterDegeneracyError("every group weight vanished")
    W = np.exp(log_masses[alive] - logsumexp(log_masses[alive]))
    groups = [
        WeightedSampleSet.from_log_weights(lw, pts)
        for lw, pts, a in zip(weight_logs, points, alive)
        if a
    ]
    return OpmApproximation(W / W.sum(), tuple(groups))


def approximate_opm(
    mixture: Sequence[tuple[float, PossibilityFunction]], n: int, rng, cfg: FilterConfig
) -> OpmApproximation:
    """Sample ``n`` support points for a finite mixture of possibility functions.

    Component selections are drawn from the mixture probabilities; identical
    selections share a group, ordered by first appearance.
    """
    if not mixture:
        raise ValueError("empty mixture")
    probs = np.array([p for p, _ in mixture], dtype=float)
    if np.any(probs < 0) or probs.sum() <= 0:
        raise ValueError("mixture weights must be non-negative with positive total")
    picks = sample_pmf(probs / probs.sum(), rng, n)
    _, first = np.unique(picks, return_index=True)
    order = picks[np.sort(first)]
    counts = np.bincount(picks, minlength=len(mixture))
    log_masses, weight_logs, points = [], [], []
    for k in order:
        f = mixture[k][1]
        pts = sample_continuous(f, rng, cfg.continuous, size=int(counts[k]))
        raw = f.log_eval(pts)
        log_masses.append(np.log(counts[k]) + np.max(raw))
        weight_logs.append(raw)
        points.append(pts)
    return _assemble(log_masses, weight_logs, points)


def multi_predict(
    state: OpmApproximation, kernel, cfg: FilterConfig, rng=None, proposals=None
) -> OpmApproximation:
    """Per-group prediction; ``proposals`` optionally injects one array per group."""
    log_masses, weight_logs, points = [], [], []
    for i, (W, group) in enumerate(zip(state.group_weights, state.groups)):
        prev = group.points
        new = propagate(kernel, prev, cfg.continuous, rng) if proposals is None else np.atleast_2d(proposals[i])
        logw = safe_log(group.weights)
        if cfg.complexity == "quadratic":
            raw = kernel.max_plus(new, prev, logw)
        else:
            raw = logw + kernel.log_eval(new, prev)
        log_masses.append(safe_log(W) + np.max(raw))
        weight_logs.append(raw)
        points.append(new)
    return _assemble(log_masses, weight_logs, points)


def multi_update(state: OpmApproximation, likelihood, y, cfg: FilterConfig | None = None, rng=None):
    """Update by every likelihood kernel; each (kernel, group) pair becomes a group.

    ``likelihood`` is a :class:`LikelihoodFamily`, a :class:`SampledLikelihood`
    or a single kernel. Groups are ordered kernel-major. Sample positions are
    shared between the groups derived from the same predicted group.
    """
    if isinstance(likelihood, LikelihoodFamily):
        V = np.asarray(likelihood.weights, dtype=float)
        kernels = list(likelihood.kernels)
    elif isinstance(likelihood, SampledLikelihood):
        kernels = [likelihood.draw(rng) for _ in range(likelihood.count)]
        V = np.ones(len(kernels))
    else:
        kernels = [likelihood]
        V = np.ones(1)
    log_masses, weight_logs, points = [], [], []
    for v, s in zip(safe_log(V), kernels):
        for W, group in zip(state.group_weights, state.groups):
            raw = safe_log(group.weights) + s.log_eval(y, group.points)
            log_masses.append(safe_log(W) + v + np.max(raw))
            weight_logs.append(raw)
            points.append(group.points)
    return _assemble(log_masses, weight_logs, points)


def multi_resample(state: OpmApproximation, n: int, cfg: FilterConfig, rng) -> OpmApproximation:
    """Bring the budget back to ``n`` samples.

    Group indices are drawn from the group probabilities; within a chosen group
    the ancestors come from the configured discrete sampler (all or selective).
    """
    picks = sample_pmf(state.group_weights, rng, n)
    counts = np.bincount(picks, minlength=len(state.groups))
    log_masses, weight_logs, points = [], [], []
    for count, group in zip(counts, state.groups):
        if count == 0:
            continue
        idx = resample_indices(group.weights, int(count), cfg, rng)
        w = group.weights[idx]
        log_masses.append(np.log(count) + safe_log(w.max()))
        weight_logs.append(safe_log(w))
        points.append(group.points[idx])
    return _assemble(log_masses, weight_logs, points)


def map_multi(state: OpmApproximation) -> np.ndarray:
    """Sample maximising ``W_i * w_ij``; ties go to the lowest (i, j)."""
    best, best_score = None, -np.inf
    for W, group in zip(state.group_weights, state.groups):
        j = int(np.argmax(group.weights))
        score = W * group.weights[j]
        if score > best_score:
            best, best_score = group.points[j], score
    return np.array(best, copy=True)


def run_multi_filter(model, observations, cfg: FilterConfig, rng) -> np.ndarray:
    """MAP estimates per step.

    ``model.likelihood``, when present, is either a :class:`LikelihoodFamily` or
    a callable ``rng -> kernel`` drawn ``cfg.likelihood_draws`` times per step;
    otherwise ``model.observation`` is the only likelihood.
    """
    state = approximate_opm(model.prior, cfg.n, rng, cfg)
    likelihood = getattr(model, "likelihood", None) or model.observation
    if callable(likelihood):
        likelihood = SampledLikelihood(likelihood, cfg.likelihood_draws)
    estimates = []
    for y in observations:
        state = multi_predict(state, model.transition, cfg, rng)
        state = multi_update(state, likelihood, y, cfg, rng)
        estimates.append(map_multi(state))
        state = multi_resample(state, cfg.n, cfg, rng)
    return np.array(estimates)
