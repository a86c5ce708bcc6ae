from .ode import alpha_bar_cont, beta_cont, integration_grid, linear_solution_factor, ode_denoise, velocity
from .rng import ATTACK, DATA, DEFENSE, RngStream
from .sampler import denoise, denoise_full, denoise_step, forward_noise, forward_noise_chain
from .schedule import (
    NoiseSchedule,
    REFERENCE_BETA_1,
    REFERENCE_BETA_T,
    REFERENCE_T,
    TOY_T,
    linear_schedule,
    reference_schedule,
    rescaled_schedule,
    sigma_tau,
    subsequence,
)

__all__ = [
    "ATTACK",
    "DATA",
    "DEFENSE",
    "NoiseSchedule",
    "REFERENCE_BETA_1",
    "REFERENCE_BETA_T",
    "REFERENCE_T",
    "RngStream",
    "TOY_T",
    "alpha_bar_cont",
    "beta_cont",
    "denoise",
    "denoise_full",
    "denoise_step",
    "forward_noise",
    "forward_noise_chain",
    "integration_grid",
    "linear_schedule",
    "linear_solution_factor",
    "ode_denoise",
    "reference_schedule",
    "rescaled_schedule",
    "sigma_tau",
    "subsequence",
    "velocity",
]
