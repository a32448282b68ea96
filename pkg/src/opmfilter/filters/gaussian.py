"""Closed-form recursions for linear models with Gaussian uncertainty.

``kalman_step`` is the textbook probabilistic filter. ``gaussian_possibility_step``
propagates Gaussian possibility parameters with sup-products instead of
integrals; the two recursions coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, dtype=float)))


def _mats(F, Q, H, R):
    return tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in (F, Q, H, R))


def kalman_step(belief: GaussianBelief, F, Q, H, R, y) -> GaussianBelief:
    F, Q, H, R = _mats(F, Q, H, R)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = F @ belief.mean
    P = F @ belief.cov @ F.T + Q
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is singular") from exc
    m = m + K @ (y - H @ m)
    P = P - K @ S @ K.T
    return GaussianBelief(m, 0.5 * (P + P.T))


def gaussian_possibility_step(belief: GaussianBelief, F, Q, H, R, y) -> GaussianBelief:
    """Prediction by max-propagation, update by completing the square.

    ``sup_x' N(x; F x', Q) N(x'; m, P)`` is ``N(x; F m, F P F^T + Q)``, and the
    product of the predicted possibility with ``N(y; H x, R)`` is, up to a
    constant, the Gaussian possibility in information form below.
    """
    F, Q, H, R = _mats(F, Q, H, R)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = F @ belief.mean
    sigma = F @ belief.cov @ F.T + Q
    try:
        info = np.linalg.inv(sigma)
        r_inv = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular predicted or observation shape matrix") from exc
    post_info = info + H.T @ r_inv @ H
    post = np.linalg.inv(post_info)
    mean = post @ (info @ mu + H.T @ r_inv @ y)
    return GaussianBelief(mean, 0.5 * (post + post.T))
