"""Possibility functions, conditional kernels and sample-based o.p.m. approximations.

A possibility function maps the state space to [0, 1] with supremum one. The
outer probability measures handled here are finite probability mixtures of
supremum functionals, approximated by groups of possibility-weighted samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, FilterDegeneracyError

#: Evaluations below this value are returned as exact zeros.
TINY = 1e-300
LOG_TINY = np.log(TINY)


def wrap_angle(theta):
    """Wrap angles into the half-open interval (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("cannot wrap a non-finite angle")
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    return wrapped if wrapped.ndim else float(wrapped)


def cholesky(cov: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
        raise ValueError("covariance-shape matrix is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance-shape matrix is not positive-definite") from exc


def _clamped_exp(logv):
    logv = np.asarray(logv, dtype=float)
    out = np.exp(logv)
    out[logv < LOG_TINY] = 0.0
    return out if out.ndim else float(out)


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x = np.atleast_1d(x)
    if single:
        x = x[None, :]
    if x.shape[-1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got {x.shape[-1]}")
    return x, single


class PossibilityFunction:
    """Base class: subclasses implement :meth:`log_eval` on an (M, d) array."""

    dim: int

    def log_eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        pts, single = _as_points(x, self.dim)
        out = _clamped_exp(self.log_eval(pts))
        return float(out[0]) if single else out


class Gaussian(PossibilityFunction):
    """Gaussian possibility ``exp(-0.5 (x - mu)^T cov^{-1} (x - mu))``.

    ``wrap`` lists coordinates that live on the circle; displacements along
    them are wrapped into (-pi, pi] before the quadratic form is evaluated.
    """

    def __init__(self, mean, cov, wrap: Sequence[int] = ()):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise DimensionError(
                f"mean of size {self.mean.size} does not match covariance {self.cov.shape}"
            )
        self.chol = cholesky(self.cov)
        self.wrap = tuple(wrap)
        self.dim = self.mean.size

    def log_eval(self, x):
        diff = x - self.mean
        if self.wrap:
            diff[:, self.wrap] = wrap_angle(diff[:, self.wrap])
        z = solve_triangular(self.chol, diff.T, lower=True)
        return -0.5 * np.sum(z * z, axis=0)

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


class BoxIndicator(PossibilityFunction):
    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise DimensionError("box bounds differ in dimension")
        if np.any(self.upper < self.lower):
            raise ValueError("box upper bound below lower bound")
        self.dim = self.lower.size

    def log_eval(self, x):
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
        return np.where(inside, 0.0, -np.inf)


class PointIndicator(PossibilityFunction):
    def __init__(self, point):
        self.point = np.atleast_1d(np.asarray(point, dtype=float))
        self.dim = self.point.size

    def log_eval(self, x):
        return np.where(np.all(x == self.point, axis=1), 0.0, -np.inf)


class MaxMixture(PossibilityFunction):
    """Pointwise maximum ``max_i w_i f_i(x)``.

    Weights are stored as given; :meth:`normalized` rescales them so that the
    largest is one, which restores the supremum-one property.
    """

    def __init__(self, weights, components: Sequence[PossibilityFunction]):
        self.weights = np.asarray(weights, dtype=float)
        self.components = list(components)
        if self.weights.shape != (len(self.components),) or not self.components:
            raise ValueError("max-mixture needs one weight per component")
        if np.any(self.weights < 0):
            raise ValueError("max-mixture weights must be non-negative")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise DimensionError("max-mixture components have different dimensions")
        self.dim = dims.pop()

    @classmethod
    def normalized(cls, weights, components):
        weights = np.asarray(weights, dtype=float)
        top = weights.max()
        if top <= 0:
            raise ValueError("max-mixture weights are all zero")
        return cls(weights / top, components)

    def log_eval(self, x):
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        stacked = np.stack([lw + c.log_eval(x) for lw, c in zip(logw, self.components)])
        return stacked.max(axis=0)


def sup_product_gaussian(a, A, b, B) -> float:
    """Supremum over x of ``N(x; a, A) * N(x; b, B)`` for Gaussian possibilities.

    Equals ``exp(-0.5 (a - b)^T (A + B)^{-1} (a - b))``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if a.shape != b.shape or A.shape != B.shape or A.shape != (a.size, a.size):
        raise DimensionError("sup_product_gaussian: inconsistent dimensions")
    try:
        sol = np.linalg.solve(A + B, a - b)
    except np.linalg.LinAlgError as exc:
        raise ValueError("A + B is singular") from exc
    return float(np.exp(-0.5 * float((a - b) @ sol)))


class GaussianKernel:
    """Conditional Gaussian possibility ``x -> N(. ; m(x), cov)``.

    ``transform`` is either a matrix (linear map ``m(x) = transform @ x``) or a
    vectorised callable taking an (M, d) array and returning (M, k) means.
    ``wrap`` names output coordinates that are angles.

    The same object doubles as a probability density: :meth:`log_density`
    adds the Gaussian normaliser to :meth:`log_eval`.
    """

    def __init__(self, transform, cov, wrap: Sequence[int] = ()):
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.chol = cholesky(self.cov)
        self.dim = self.cov.shape[0]
        if callable(transform):
            self.matrix = None
            self._fn = transform
        else:
            self.matrix = np.atleast_2d(np.asarray(transform, dtype=float))
            if self.matrix.shape[0] != self.dim:
                raise DimensionError(
                    f"transform maps to {self.matrix.shape[0]} dims, covariance is {self.dim}"
                )
            self._fn = None
        self.wrap = tuple(wrap)
        self._inv_chol = solve_triangular(self.chol, np.eye(self.dim), lower=True)
        self._log_norm = -0.5 * (
            self.dim * np.log(2.0 * np.pi) + 2.0 * np.sum(np.log(np.diag(self.chol)))
        )

    def mean(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.matrix is not None:
            if x.shape[1] != self.matrix.shape[1]:
                raise DimensionError(
                    f"kernel expects inputs of dimension {self.matrix.shape[1]}, got {x.shape[1]}"
                )
            return x @ self.matrix.T
        return np.atleast_2d(self._fn(x))

    def at(self, x) -> Gaussian:
        """The possibility function ``g(. | x)`` for a single conditioning point."""
        return Gaussian(self.mean(np.atleast_1d(x)[None, :])[0], self.cov, self.wrap)

    def _whiten(self, diff):
        if self.wrap:
            diff = diff.copy()
            diff[..., self.wrap] = wrap_angle(diff[..., self.wrap])
        return diff @ self._inv_chol.T

    def log_eval(self, y, x) -> np.ndarray:
        """``log g(y_i | x_i)``, with ``y`` broadcast against the rows of ``x``."""
        y = np.asarray(y, dtype=float)
        diff = np.broadcast_to(y, (len(np.atleast_2d(x)), self.dim)) - self.mean(x)
        z = self._whiten(diff)
        return -0.5 * np.sum(z * z, axis=-1)

    def log_density(self, y, x) -> np.ndarray:
        return self.log_eval(y, x) + self._log_norm

    def max_plus(self, targets, sources, log_weights) -> np.ndarray:
        """``max_j log_weights[j] + log g(targets[i] | sources[j])`` for every i."""
        targets = np.atleast_2d(targets)
        means = self.mean(sources)
        if self.wrap:
            return self._wrapped_pairwise(targets, means, log_weights, np.max)
        a, b = self._centered_whitened(targets, means)
        # -|a_i|^2 / 2 is constant along a row, so it drops out of the argmax
        col = log_weights - 0.5 * np.einsum("ij,ij->i", b, b)
        best = np.empty(len(a), dtype=np.intp)
        for rows in _row_blocks(len(a), len(b)):
            m = a[rows] @ b.T
            m += col
            best[rows] = np.argmax(m, axis=1)
        # the expanded distances lose precision for narrow kernels; redo the winners
        diff = self._whiten(targets - means[best])
        return log_weights[best] - 0.5 * np.sum(diff * diff, axis=1)

    def log_sum(self, targets, sources, log_weights) -> np.ndarray:
        """``log sum_j weights[j] p(targets[i] | sources[j])`` using densities."""
        targets = np.atleast_2d(targets)
        means = self.mean(sources)
        if self.wrap:
            out = self._wrapped_pairwise(
                targets, means, log_weights, lambda m, axis: _row_logsumexp(m)
            )
        else:
            a, b = self._centered_whitened(targets, means)
            col = log_weights - 0.5 * np.einsum("ij,ij->i", b, b)
            out = -0.5 * np.einsum("ij,ij->i", a, a)
            for rows in _row_blocks(len(a), len(b)):
                m = a[rows] @ b.T
                m += col
                out[rows] += _row_logsumexp(m)
        return out + self._log_norm

    def _centered_whitened(self, targets, means):
        center = means.mean(axis=0)
        return (targets - center) @ self._inv_chol.T, (means - center) @ self._inv_chol.T

    def _wrapped_pairwise(self, targets, means, log_weights, reducer, chunk=2**22):
        # wrapped displacements cannot be whitened before differencing
        rows = max(1, chunk // max(1, len(means) * self.dim))
        out = np.empty(len(targets))
        for s in range(0, len(targets), rows):
            z = self._whiten(targets[s : s + rows, None, :] - means[None, :, :])
            out[s : s + rows] = reducer(log_weights[None, :] - 0.5 * np.sum(z * z, axis=-1), axis=1)
        return out


def _row_blocks(n_rows: int, n_cols: int, budget: int = 2**22):
    """Row slices keeping each pairwise block under ``budget`` entries."""
    step = max(1, budget // max(1, n_cols))
    return [slice(s, min(s + step, n_rows)) for s in range(0, n_rows, step)]


def _row_logsumexp(m: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp; overwrites ``m``."""
    top = m.max(axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    s = m
    s -= safe[:, None]
    # terms this far below the row maximum are irrelevant, and exp() of them
    # would go through slow subnormal arithmetic
    np.maximum(s, -700.0, out=s)
    np.exp(s, out=s)
    out = s.sum(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(top), np.log(out) + safe, -np.inf)


@dataclass(frozen=True)
class WeightedSampleSet:
    """Possibility-weighted samples: ``weights`` (M,) with max one, ``points`` (M, d)."""

    weights: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if w.ndim != 1 or len(w) != len(p):
            raise DimensionError("weights and points disagree in size")
        if len(w) == 0:
            raise ValueError("empty sample set")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("sample weights must be finite and non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.weights)

    @classmethod
    def from_log_weights(cls, log_weights, points):
        """Max-normalise log-domain weights; raises if every weight vanishes."""
        log_weights = np.asarray(log_weights, dtype=float)
        top = np.max(log_weights)
        if not np.isfinite(top):
            raise FilterDegeneracyError("all sample weights are zero")
        return cls(_clamped_exp(log_weights - top), points)


@dataclass(frozen=True)
class OpmApproximation:
    """Groups ``(W_i, X_i)`` with probabilistic group weights summing to one."""

    group_weights: np.ndarray
    groups: tuple[WeightedSampleSet, ...]

    def __post_init__(self):
        W = np.asarray(self.group_weights, dtype=float)
        if W.shape != (len(self.groups),) or not self.groups:
            raise ValueError("one group weight per group is required")
        if np.any(W < 0) or not np.isclose(W.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValueError("group weights must be non-negative and sum to one")
        object.__setattr__(self, "group_weights", W)
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def size(self) -> int:
        return sum(len(g) for g in self.groups)


def evaluate_opm(approx: OpmApproximation, phi: Callable[[np.ndarray], float]) -> float:
    """Sum over groups of ``W_i * max_j w_ij * phi(x_ij)``."""
    total = 0.0
    for W, group in zip(approx.group_weights, approx.groups):
        if len(group) == 0:
            raise ValueError("empty group in o.p.m. approximation")
        vals = np.array([float(np.squeeze(phi(x))) for x in group.points])
        total += W * float(np.max(group.weights * vals))
    return total
