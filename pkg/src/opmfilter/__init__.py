"""Sequential Monte Carlo filtering with outer probability measures.

Possibility functions, sampling laws for placing support points, possibilistic
and particle filters, benchmark scenarios and a Monte Carlo harness.
"""

from .errors import DimensionError, FilterDegeneracyError
from .possibility import (
    BoxIndicator,
    Gaussian,
    GaussianKernel,
    MaxMixture,
    OpmApproximation,
    PointIndicator,
    WeightedSampleSet,
    evaluate_opm,
    sup_product_gaussian,
    wrap_angle,
)
from .sampling import (
    make_pmf,
    pmf_global_entropy,
    pmf_local_entropy,
    pmf_scaled,
    sample_continuous,
    sample_pmf,
    solve_x_star,
)

__version__ = "0.1.0"
