"""Probability-flow ODE denoising.

The reverse dynamics use the continuous-time rate beta_c(u) on u in [0, 1]
(fraction of the schedule), defined as the linear interpolant of the
discrete schedule expressed per unit time:

    beta_c(u) = T * (beta_1 + u * (beta_T - beta_1))

with the matching closed-form cumulative product

    alpha_bar_c(u) = exp(-integral_0^u beta_c)

so the eps ~ 0 case has an exact linear-ODE solution to test against.
The score is -eps(x, uT) / sqrt(1 - alpha_bar_c(u)), giving the drift

    dx/du = -0.5 * beta_c(u) * (x - eps(x, uT) / sqrt(1 - alpha_bar_c(u)))

integrated by explicit Euler from u = t_frac down to 0.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, checkpoint
from ..errors import ConfigurationError, NumericDomainError
from .schedule import NoiseSchedule


def beta_cont(schedule: NoiseSchedule, u: float) -> float:
    b1, bT = schedule.betas[0], schedule.betas[-1]
    return schedule.T * (b1 + u * (bT - b1))


def alpha_bar_cont(schedule: NoiseSchedule, u: float) -> float:
    b1, bT = schedule.betas[0], schedule.betas[-1]
    integral = schedule.T * (b1 * u + 0.5 * u * u * (bT - b1))
    return float(np.exp(-integral))


def velocity(x: Tensor, u: float, schedule: NoiseSchedule, eps_model) -> Tensor:
    """Right-hand side of the probability-flow ODE in forward time u."""
    beta = beta_cont(schedule, u)
    if eps_model is None:
        return x * (-0.5 * beta)
    a_bar = alpha_bar_cont(schedule, u)
    denom = np.sqrt(max(1.0 - a_bar, 1e-12))
    eps_hat = eps_model(x, u * schedule.T)
    return (x - eps_hat * float(1.0 / denom)) * (-0.5 * beta)


def integration_grid(t_frac: float, step_size: float) -> tuple[int, float]:
    """Number of Euler steps and the effective step spanning [0, t_frac]."""
    if not 0.0 < t_frac <= 1.0:
        raise ConfigurationError(f"t_frac={t_frac} outside (0, 1]")
    if step_size <= 0.0:
        raise ConfigurationError(f"step_size must be positive, got {step_size}")
    n = max(1, round(t_frac / step_size))
    return n, t_frac / n


def ode_denoise(x_t: Tensor, schedule: NoiseSchedule, t_frac: float, step_size: float,
                eps_model, *, use_checkpoints: bool = True) -> Tensor:
    """Integrate the probability-flow ODE from u = t_frac down to 0.

    Deterministic; differentiable through the tape when x_t is recorded
    (one checkpoint segment per Euler step).
    """
    n, h = integration_grid(t_frac, step_size)
    x = x_t
    for k in range(n):
        u = t_frac - k * h

        def segment(xx, _u=u):
            return xx + velocity(xx, _u, schedule, eps_model) * (-h)

        x = checkpoint(segment, x) if use_checkpoints else segment(x)
        if not np.all(np.isfinite(x.data)):
            raise NumericDomainError(f"non-finite ODE state at step {k} (u={u:.4f})")
    return x


def linear_solution_factor(schedule: NoiseSchedule, t_frac: float) -> float:
    """Exact solution map of the eps == 0 drift: x(0) = factor * x(t_frac)."""
    b1, bT = schedule.betas[0], schedule.betas[-1]
    integral = schedule.T * (b1 * t_frac + 0.5 * t_frac * t_frac * (bT - b1))
    return float(np.exp(0.5 * integral))
