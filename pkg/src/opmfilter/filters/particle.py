"""Bootstrap particle filter used as the probabilistic baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import FilterDegeneracyError
from ..possibility import wrap_angle
from ..sampling import sample_pmf
from .common import propagate


@dataclass(frozen=True)
class ParticleState:
    """Equally weighted particles after resampling, plus what the MAP needs.

    ``prev_points``/``prev_weights`` hold the weighted set before prediction and
    ``updated_points``/``updated_weights`` the weighted set after the update.
    """

    points: np.ndarray
    weights: np.ndarray
    prev_points: np.ndarray | None = None
    prev_weights: np.ndarray | None = None
    updated_points: np.ndarray | None = None
    updated_weights: np.ndarray | None = None


def systematic_resample(weights, rng) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def initialize_particles(model, n: int, rng) -> ParticleState:
    """Draw from the probabilistic prior: a mixture of Gaussian densities."""
    probs = np.array([p for p, _ in model.prior], dtype=float)
    comps = sample_pmf(probs / probs.sum(), rng, n)
    dim = model.prior[0][1].dim
    points = np.empty((n, dim))
    for k, (_, f) in enumerate(model.prior):
        sel = comps == k
        points[sel] = f.mean + rng.standard_normal((int(sel.sum()), dim)) @ f.chol.T
    wrap = getattr(model.prior[0][1], "wrap", ())
    if wrap:
        points[:, wrap] = wrap_angle(points[:, wrap])
    return ParticleState(points, np.full(n, 1.0 / n))


def particle_filter_step(state: ParticleState, model, y, rng, systematic: bool = False) -> ParticleState:
    prev, prev_w = state.points, state.weights
    moved = propagate(model.transition, prev, "scaled", rng)
    with np.errstate(divide="ignore"):
        logw = np.log(prev_w) + model.observation.log_density(y, moved)
    top = np.max(logw)
    if not np.isfinite(top):
        raise FilterDegeneracyError("all particle likelihoods are zero")
    w = np.exp(logw - top)
    w /= w.sum()
    idx = systematic_resample(w, rng) if systematic else sample_pmf(w, rng, len(w))
    n = len(w)
    return ParticleState(moved[idx], np.full(n, 1.0 / n), prev, prev_w, moved, w)


def particle_map(state: ParticleState, model, y, complexity: str = "quadratic") -> np.ndarray:
    """MAP among the updated particles.

    Quadratic: maximise ``p(y | x_i) sum_j p(x_i | x'_j) w'_j`` over the updated
    particles ``x_i``, with ``(x'_j, w'_j)`` the weighted set before prediction.
    Linear: the particle of highest updated weight.
    """
    pts = state.updated_points
    if complexity == "linear":
        return pts[int(np.argmax(state.updated_weights))].copy()
    with np.errstate(divide="ignore"):
        log_prev = np.log(state.prev_weights)
    score = model.observation.log_density(y, pts) + model.transition.log_sum(
        pts, state.prev_points, log_prev
    )
    return pts[int(np.argmax(score))].copy()


def run_particle_filter(
    model, observations, n: int, rng, complexity: str = "quadratic", systematic: bool = False
) -> np.ndarray:
    state = initialize_particles(model, n, rng)
    estimates = []
    for y in observations:
        state = particle_filter_step(state, model, y, rng, systematic)
        estimates.append(particle_map(state, model, y, complexity))
    return np.array(estimates)
