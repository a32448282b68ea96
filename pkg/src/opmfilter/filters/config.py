from __future__ import annotations

from dataclasses import dataclass

from ..sampling import CONTINUOUS_METHODS, DISCRETE_METHODS

COMPLEXITIES = ("linear", "quadratic")
RESAMPLING_MODES = ("all", "selective")


@dataclass(frozen=True)
class FilterConfig:
    """Design choices of a possibility filter.

    continuous: sampler for continuous possibility functions (scaled | global).
    discrete: PMF built from possibilistic weights at resampling (scaled | global | local).
    complexity: quadratic uses every pair of samples in the prediction, linear
        only the sample's own ancestor.
    resampling: all samples, or only those capped by water pouring (selective).
    """

    continuous: str = "global"
    discrete: str = "local"
    complexity: str = "quadratic"
    resampling: str = "selective"
    n: int = 256
    likelihood_draws: int = 1

    def __post_init__(self):
        if self.continuous not in CONTINUOUS_METHODS:
            raise ValueError(f"continuous sampler must be one of {CONTINUOUS_METHODS}")
        if self.discrete not in DISCRETE_METHODS:
            raise ValueError(f"discrete sampler must be one of {DISCRETE_METHODS}")
        if self.complexity not in COMPLEXITIES:
            raise ValueError(f"complexity must be one of {COMPLEXITIES}")
        if self.resampling not in RESAMPLING_MODES:
            raise ValueError(f"resampling must be one of {RESAMPLING_MODES}")
        if self.n < 1 or self.likelihood_draws < 1:
            raise ValueError("sample budget and likelihood draw count must be >= 1")
