from .config import FilterConfig
from .gaussian import GaussianBelief, gaussian_possibility_step, kalman_step
from .multi import (
    LikelihoodFamily,
    MultiPossibilityState,
    SampledLikelihood,
    approximate_opm,
    map_multi,
    multi_predict,
    multi_resample,
    multi_update,
    run_multi_filter,
)
from .particle import (
    ParticleState,
    initialize_particles,
    particle_filter_step,
    particle_map,
    run_particle_filter,
    systematic_resample,
)
from .single import (
    SinglePossibilityState,
    initialize_single,
    map_single,
    resample_single,
    run_single_filter,
    single_predict,
    single_update,
)


def run_possibility_filter(model, observations, cfg: FilterConfig, rng):
    """Single-possibility recursion for a one-component prior, general one otherwise."""
    if len(model.prior) == 1:
        return run_single_filter(model, observations, cfg, rng)
    return run_multi_filter(model, observations, cfg, rng)
