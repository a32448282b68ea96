"""Sampling distributions for placing support points.

Continuous spaces: the *scaled* law (the possibility function renormalised as
a density) and the *global entropy* law, i.e. the maximum-entropy density
bounded by a standard Gaussian possibility, sampled by inverse transform.

Discrete spaces: probability mass functions built from possibilistic weights,
either scaled, globally bounded (subset-wise) with maximum entropy, or locally
bounded (pointwise caps) with maximum entropy via water pouring.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .possibility import (
    BoxIndicator,
    Gaussian,
    PointIndicator,
    PossibilityFunction,
    cholesky,
    wrap_angle,
)

CONTINUOUS_METHODS = ("scaled", "global")
DISCRETE_METHODS = ("scaled", "global", "local")


@dataclass(frozen=True)
class GlobalEntropyTables:
    x_star: float
    f_star: float

    @property
    def breakpoint(self) -> float:
        return 0.5 * self.f_star


def _x_star_residual(x: float) -> float:
    return np.exp(-0.5 * x * x) * (x * x + 1.0) - 1.0


@lru_cache(maxsize=None)
def solve_x_star(iterations: int = 200) -> GlobalEntropyTables:
    """Negative root of ``exp(-x^2/2)(x^2 + 1) = 1`` by bisection on [-3, -1]."""
    lo, hi = -3.0, -1.0
    # residual(-3) < 0 < residual(-1)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if _x_star_residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    return GlobalEntropyTables(x_star=x, f_star=float(np.exp(-0.5 * x * x)))


def global_entropy_inverse_cdf(u, tables: GlobalEntropyTables | None = None):
    """Inverse CDF of the maximum-entropy density bounded by ``N(.; 0, 1)``.

    Tails follow ``1/2 N(x; 0, 1)``; between the two tangency points the CDF is
    affine, so the middle segment maps ``u`` linearly onto ``[x*, -x*]``.
    """
    tables = tables or solve_x_star()
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("uniform input must lie in the open interval (0, 1)")
    half = tables.breakpoint
    scale = abs(tables.x_star) / (1.0 - tables.f_star)
    out = (2.0 * u - 1.0) * scale
    low = u < half
    high = u > 1.0 - half
    out = np.where(low, -np.sqrt(-2.0 * np.log(2.0 * np.where(low, u, 0.5))), out)
    out = np.where(high, np.sqrt(-2.0 * np.log(2.0 * np.where(high, 1.0 - u, 0.5))), out)
    return out if out.ndim else float(out)


def standard_global_entropy(rng: np.random.Generator, size) -> np.ndarray:
    # Generator.random draws from [0, 1); zero is mapped to the smallest positive double
    u = rng.random(size)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return global_entropy_inverse_cdf(u)


def sample_global_entropy_gaussian(mean, cov, rng: np.random.Generator, size=None, chol=None):
    """Draw ``mean + L z`` with ``z`` having i.i.d. global-entropy coordinates.

    ``chol`` may be passed to reuse a precomputed lower factor of ``cov``.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    L = cholesky(cov) if chol is None else chol
    shape = (mean.shape[-1],) if size is None else (size, mean.shape[-1])
    z = standard_global_entropy(rng, shape)
    return mean + z @ L.T


def sample_scaled(f: PossibilityFunction, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw from the density proportional to ``f``."""
    n = 1 if size is None else size
    if isinstance(f, PointIndicator):
        out = np.tile(f.point, (n, 1))
    elif isinstance(f, Gaussian):
        out = f.mean + rng.standard_normal((n, f.dim)) @ f.chol.T
    elif isinstance(f, BoxIndicator):
        out = rng.uniform(f.lower, f.upper, size=(n, f.dim))
    else:
        raise TypeError(f"no scaled sampler for {type(f).__name__}")
    out = _wrap_output(f, out)
    return out[0] if size is None else out


def _wrap_output(f, pts):
    wrap = getattr(f, "wrap", ())
    if wrap:
        pts[..., wrap] = wrap_angle(pts[..., wrap])
    return pts


def sample_continuous(
    f: PossibilityFunction, rng: np.random.Generator, method: str = "scaled", size=None
) -> np.ndarray:
    """Draw support points for ``f`` with the named continuous method."""
    if method == "scaled":
        return sample_scaled(f, rng, size)
    if method != "global":
        raise ValueError(f"unknown continuous sampler {method!r}")
    if isinstance(f, Gaussian):
        pts = sample_global_entropy_gaussian(f.mean, f.cov, rng, size, chol=f.chol)
        return _wrap_output(f, pts)
    if isinstance(f, (PointIndicator, BoxIndicator)):
        # bounded by an indicator, the maximum-entropy law is the uniform one
        return sample_scaled(f, rng, size)
    raise TypeError(f"no global-entropy sampler for {type(f).__name__}")


@dataclass(frozen=True)
class Pmf:
    """Probabilities over indices; water-pouring output also carries the level."""

    probs: np.ndarray
    level: float | None = None
    capped: np.ndarray | None = None

    def __len__(self):
        return len(self.probs)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log(p)))


def _check_weights(w, require_unit_max: bool) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("empty weight array")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    if require_unit_max and abs(w.max() - 1.0) > 1e-9:
        raise ValueError(f"possibilistic weights must have maximum 1, got {w.max()!r}")
    if w.max() <= 0:
        raise ValueError("all weights are zero")
    return w


def pmf_scaled(w) -> Pmf:
    w = _check_weights(w, require_unit_max=False)
    return Pmf(w / w.sum())


def pmf_global_entropy(w) -> Pmf:
    """Maximum-entropy PMF with ``sum_{i in B} W_i <= max_{i in B} w_i`` for all B.

    In increasing weight order the prefix sums must stay below the weights, so
    the optimum follows the lower convex hull of ``(0, 0), (1, w_(1)), ...,
    (N, w_(N))``: each mass is the slope of the hull segment above its index.
    """
    w = _check_weights(w, require_unit_max=True)
    order = np.argsort(w, kind="stable")
    ws = w[order]
    n = len(ws)
    xs = np.arange(n + 1, dtype=float)
    ys = np.concatenate(([0.0], ws))
    ys[-1] = 1.0
    hull = [0]
    for k in range(1, n + 1):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j when it lies on or above the chord from i to k
            if (ys[j] - ys[i]) * (xs[k] - xs[i]) >= (ys[k] - ys[i]) * (xs[j] - xs[i]):
                hull.pop()
            else:
                break
        hull.append(k)
    sorted_probs = np.empty(n)
    for i, j in zip(hull[:-1], hull[1:]):
        sorted_probs[i:j] = (ys[j] - ys[i]) / (j - i)
    probs = np.empty(n)
    probs[order] = sorted_probs
    return Pmf(probs)


def pmf_global_entropy_direct(w) -> Pmf:
    """Greedy min-over-averages form of :func:`pmf_global_entropy`, O(N^2)."""
    w = _check_weights(w, require_unit_max=True)
    order = np.argsort(w, kind="stable")
    ws = w[order]
    n = len(ws)
    out = np.empty(n)
    used = 0.0
    for i in range(n):
        out[i] = np.min((ws[i:] - used) / np.arange(1, n - i + 1))
        used += out[i]
    probs = np.empty(n)
    probs[order] = out
    return Pmf(probs)


def pmf_local_entropy(w) -> Pmf:
    """Water pouring: ``W_i = min(w_i, level)`` with the level making the sum one.

    ``capped`` flags the indices whose mass equals their weight (``w_i <= level``).
    """
    w = _check_weights(w, require_unit_max=False)
    total = w.sum()
    if total < 1.0 - 1e-12:
        raise ValueError(f"weights sum to {total!r} < 1: unit mass cannot be poured")
    ws = np.sort(w)
    n = len(ws)
    below = np.concatenate(([0.0], np.cumsum(ws)[:-1]))
    # with the k smallest weights filled, the remaining n - k share the rest
    levels = (1.0 - below) / (n - np.arange(n))
    k = int(np.argmax(levels <= ws))
    level = float(min(levels[k], ws[k]))
    probs = np.minimum(w, level)
    probs /= probs.sum()
    capped = w <= level
    return Pmf(probs, level=level, capped=capped)


def make_pmf(w, method: str) -> Pmf:
    if method == "scaled":
        return pmf_scaled(w)
    if method == "global":
        return pmf_global_entropy(w)
    if method == "local":
        return pmf_local_entropy(w)
    raise ValueError(f"unknown discrete sampler {method!r}")


def sample_pmf(pmf: Pmf | np.ndarray, rng: np.random.Generator, size=None):
    """Inverse-CDF draws of indices, one uniform per draw."""
    probs = pmf.probs if isinstance(pmf, Pmf) else np.asarray(pmf, dtype=float)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, len(probs) - 1)
    return int(idx) if size is None else idx
