"""Benchmark models: simulation of ground truth and the models handed to filters.

Three scenarios are provided:

* ``"1"``: nearly-constant-velocity target in the plane, Gaussian noises.
* ``"2"``: the same dynamics on a line with Student's t noises; the filters
  only receive the linear-Gaussian model with matching variances.
* ``"disk"``: angle and rotation speed of a point on a spinning disk observed
  through ``cos(angle)``, with an unknown direction of rotation.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .possibility import Gaussian, GaussianKernel, wrap_angle


def ncv_matrices(delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Transition and noise shape of the nearly-constant-velocity model on one axis."""
    F = np.array([[1.0, delta], [0.0, 1.0]])
    Q = np.array([[delta**4 / 3.0, delta**3 / 2.0], [delta**3 / 2.0, delta**2]])
    return F, Q


def sample_student_t(nu: float, rng: np.random.Generator, size=None):
    """Standard Student's t draws as ``normal / sqrt(chi2(nu) / nu)``."""
    if nu <= 0:
        raise ValueError("degrees of freedom must be positive")
    z = rng.standard_normal(size)
    v = rng.chisquare(nu, size)
    return z / np.sqrt(v / nu)


@dataclass(frozen=True)
class StateSpaceModel:
    """What a filter is told about the system.

    ``prior`` is a list of ``(probability, Gaussian)`` pairs, read as a mixture of
    possibility functions by the possibility filters and as a Gaussian mixture
    density by the particle filter. The kernels likewise serve both readings.
    """

    transition: GaussianKernel
    observation: GaussianKernel
    prior: list
    position_indices: tuple[int, ...]
    angle_indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class Trajectory:
    initial_state: np.ndarray
    states: np.ndarray
    observations: np.ndarray

    def __len__(self):
        return len(self.states)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.initial_state, self.states, self.observations):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def position_errors(model: StateSpaceModel, estimates, truth, full=False) -> np.ndarray:
    """Squared position error per time step (angles compared on the circle)."""
    diff = np.asarray(estimates, dtype=float) - np.asarray(truth, dtype=float)
    if model.angle_indices:
        diff[:, model.angle_indices] = wrap_angle(diff[:, model.angle_indices])
    sel = diff if full else diff[:, list(model.position_indices)]
    return np.sum(sel * sel, axis=1)


@dataclass(frozen=True)
class LinearGaussianScenario:
    """Scenario 1: 4-D NCV model, state ``[px, vx, py, vy]``, positions observed."""

    delta: float = 0.1
    horizon: int = 100
    sigma: float = 1.0
    varsigma: float = 0.1
    x0: Sequence[float] = (0.0, 1.0, 0.0, 1.0)
    p0: float = 0.01

    id = "1"

    def matrices(self):
        F1, Q1 = ncv_matrices(self.delta)
        F = np.kron(np.eye(2), F1)
        Q = np.kron(np.eye(2), Q1)
        H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
        return F, Q, H

    def model(self) -> StateSpaceModel:
        F, Q, H = self.matrices()
        return StateSpaceModel(
            transition=GaussianKernel(F, self.sigma**2 * Q),
            observation=GaussianKernel(H, self.varsigma**2 * np.eye(2)),
            prior=[(1.0, Gaussian(self.x0, self.p0 * np.eye(4)))],
            position_indices=(0, 2),
        )

    def simulate(self, rng) -> Trajectory:
        F, Q, H = self.matrices()
        LQ = np.linalg.cholesky(Q)
        x = np.asarray(self.x0, dtype=float) + np.sqrt(self.p0) * rng.standard_normal(4)
        x0 = x.copy()
        states, obs = [], []
        for _ in range(self.horizon):
            x = F @ x + self.sigma * (LQ @ rng.standard_normal(4))
            y = H @ x + self.varsigma * rng.standard_normal(2)
            states.append(x)
            obs.append(y)
        return Trajectory(x0, np.array(states), np.array(obs))


@dataclass(frozen=True)
class StudentTScenario:
    """Scenario 2: 2-D NCV model with Student's t noises, Gaussian surrogate model.

    Process noise is ``(sigma / sigma_hat) L u`` with ``L L^T = Q'``, so its
    covariance is ``sigma^2 Q'``. With ``noise="independent"`` the coordinates
    of ``u`` are i.i.d. standard t; with ``noise="multivariate"`` they share one
    chi-square scale, making ``u`` a bivariate t vector.
    """

    delta: float = 0.1
    horizon: int = 100
    sigma: float = 1.0
    varsigma: float = 0.1
    nu: float = 5.0
    nu_obs: float = 5.0
    x0: Sequence[float] = (0.0, 1.0)
    p0: float = 0.01
    noise: str = "independent"

    id = "2"

    def __post_init__(self):
        if self.nu <= 2 or self.nu_obs <= 2:
            raise ValueError("degrees of freedom must exceed 2 for finite variance")
        if self.noise not in ("independent", "multivariate"):
            raise ValueError(f"noise must be 'independent' or 'multivariate', got {self.noise!r}")

    def _process_noise(self, rng):
        if self.noise == "independent":
            return sample_student_t(self.nu, rng, 2)
        z = rng.standard_normal(2)
        return z / np.sqrt(rng.chisquare(self.nu) / self.nu)

    @property
    def sigma_hat(self) -> float:
        return float(np.sqrt(self.nu / (self.nu - 2.0)))

    @property
    def varsigma_hat(self) -> float:
        return float(np.sqrt(self.nu_obs / (self.nu_obs - 2.0)))

    def model(self) -> StateSpaceModel:
        F, Q = ncv_matrices(self.delta)
        return StateSpaceModel(
            transition=GaussianKernel(F, self.sigma**2 * Q),
            observation=GaussianKernel(np.array([[1.0, 0.0]]), np.array([[self.varsigma**2]])),
            prior=[(1.0, Gaussian(self.x0, self.p0 * np.eye(2)))],
            position_indices=(0,),
        )

    def simulate(self, rng) -> Trajectory:
        F, Q = ncv_matrices(self.delta)
        LQ = np.linalg.cholesky(Q)
        x = np.asarray(self.x0, dtype=float) + np.sqrt(self.p0) * rng.standard_normal(2)
        x0 = x.copy()
        gain = self.sigma / self.sigma_hat
        obs_gain = self.varsigma / self.varsigma_hat
        states, obs = [], []
        for _ in range(self.horizon):
            x = F @ x + gain * (LQ @ self._process_noise(rng))
            y = np.array([x[0] + obs_gain * sample_student_t(self.nu_obs, rng)])
            states.append(x)
            obs.append(y)
        return Trajectory(x0, np.array(states), np.array(obs))


def _cos_angle(x: np.ndarray) -> np.ndarray:
    return np.cos(x[:, :1])


@dataclass(frozen=True)
class SpinningDiskScenario:
    """Spinning disk: state ``[angle, rate]``, observation ``cos(angle)`` plus noise.

    The prior is an equal mixture of rotation in either direction.
    ``true_x0`` pins the initial true state instead of drawing it from the prior.
    """

    delta: float = 0.1
    horizon: int = 100
    sigma: float = 1.0
    varsigma: float = 0.1
    prior_means: Sequence[Sequence[float]] = ((0.0, 1.0), (0.0, -1.0))
    prior_weights: Sequence[float] = (0.5, 0.5)
    prior_std: Sequence[float] = (0.1, 0.2)
    true_x0: Sequence[float] | None = None

    id = "disk"

    def model(self) -> StateSpaceModel:
        F, Q = ncv_matrices(self.delta)
        cov = np.diag(np.square(self.prior_std))
        prior = [
            (float(w), Gaussian(m, cov, wrap=(0,)))
            for w, m in zip(self.prior_weights, self.prior_means)
        ]
        return StateSpaceModel(
            transition=GaussianKernel(F, self.sigma**2 * Q, wrap=(0,)),
            observation=GaussianKernel(_cos_angle, np.array([[self.varsigma**2]])),
            prior=prior,
            position_indices=(0,),
            angle_indices=(0,),
        )

    def simulate(self, rng) -> Trajectory:
        F, Q = ncv_matrices(self.delta)
        LQ = np.linalg.cholesky(Q)
        if self.true_x0 is None:
            w = np.asarray(self.prior_weights, dtype=float)
            k = int(np.searchsorted(np.cumsum(w / w.sum()), rng.random(), side="right"))
            k = min(k, len(w) - 1)
            x = np.asarray(self.prior_means[k], dtype=float) + np.asarray(
                self.prior_std, dtype=float
            ) * rng.standard_normal(2)
        else:
            x = np.asarray(self.true_x0, dtype=float).copy()
        x[0] = wrap_angle(x[0])
        x0 = x.copy()
        states, obs = [], []
        for _ in range(self.horizon):
            x = F @ x + self.sigma * (LQ @ rng.standard_normal(2))
            x[0] = wrap_angle(x[0])
            y = np.array([np.cos(x[0]) + self.varsigma * rng.standard_normal()])
            states.append(x)
            obs.append(y)
        return Trajectory(x0, np.array(states), np.array(obs))


SCENARIOS = {
    "1": LinearGaussianScenario,
    "2": StudentTScenario,
    "disk": SpinningDiskScenario,
}


def make_scenario(scenario_id: str, **overrides):
    """Instantiate a scenario by id; unknown override keys raise ``KeyError``."""
    try:
        cls = SCENARIOS[str(scenario_id)]
    except KeyError:
        raise KeyError(f"unknown scenario {scenario_id!r}; choose from {sorted(SCENARIOS)}") from None
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise KeyError(f"unknown override(s) for scenario {scenario_id}: {sorted(unknown)}")
    return cls(**overrides)


def model_kernels(scenario):
    """``(transition, observation)`` kernels; each is both a density and a possibility."""
    m = scenario.model()
    return m.transition, m.observation
