"""Forward noising and the accelerated denoising process.

Both directions operate on autodiff Tensors, so the same code path serves
plain evaluation and end-to-end differentiation: attach the input to a
tape and the whole chain is recorded.  All schedule coefficients are
plain floats (constants with respect to the input).

The noise-prediction model is passed as a callable eps_model(x, t) so this
module stays independent of any concrete architecture.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, checkpoint
from ..errors import ConfigurationError, NumericDomainError
from .rng import RngStream
from .schedule import NoiseSchedule, sigma_tau, subsequence


def forward_noise(x0: Tensor, t_star: int, schedule: NoiseSchedule, rng: RngStream,
                  *, examples=None, run=0, step=0) -> tuple[Tensor, np.ndarray]:
    """Single-shot forward noising to timestep t_star.

    Returns (x_t_star, eps); the drawn eps is retained so guided denoising
    can noise its target with the same realization.
    """
    if not 1 <= t_star <= schedule.T:
        raise ConfigurationError(f"t_star={t_star} outside [1, {schedule.T}]")
    a_bar = schedule.alpha_bar(t_star)
    dtype = x0.data.dtype
    if examples is None:
        eps = rng.normal(x0.data.shape, step=step, denoise=0, draw=0, dtype=dtype)
    else:
        eps = rng.normal_batch(x0.data.shape[1:], examples, run=run, step=step,
                               denoise=0, draw=0, dtype=dtype)
    scaled = x0 * float(np.sqrt(a_bar))
    noised = scaled + Tensor(eps * float(np.sqrt(1.0 - a_bar)))
    return noised, eps


def forward_noise_chain(x0: np.ndarray, t_star: int, schedule: NoiseSchedule,
                        rng: np.random.Generator) -> np.ndarray:
    """Iterated one-step noising q(x_t | x_{t-1}); test oracle for the
    closed form, numpy only."""
    if not 1 <= t_star <= schedule.T:
        raise ConfigurationError(f"t_star={t_star} outside [1, {schedule.T}]")
    x = np.asarray(x0, dtype=np.float64)
    for t in range(1, t_star + 1):
        beta = schedule.beta(t)
        x = np.sqrt(1.0 - beta) * x + np.sqrt(beta) * rng.standard_normal(x.shape)
    return x


def denoise_mean(x: Tensor, schedule: NoiseSchedule, tau_prev: int, tau_cur: int,
                 sigma: float, eps_model) -> Tensor:
    """Transition mean of one reverse step from tau_cur to tau_prev:

    sqrt(a_prev) * x0_hat + sqrt(1 - a_prev - sigma^2) * eps_hat,
    where x0_hat is the model's clean estimate.
    """
    a_prev = schedule.alpha_bar(tau_prev)
    a_cur = schedule.alpha_bar(tau_cur)
    residual = 1.0 - a_prev - sigma * sigma
    if residual < -1e-9:
        raise NumericDomainError(
            f"negative variance residual {residual} at tau={tau_cur}; sigma out of range"
        )
    residual = max(residual, 0.0)
    eps_hat = eps_model(x, tau_cur)
    x0_hat = (x - eps_hat * float(np.sqrt(1.0 - a_cur))) * float(1.0 / np.sqrt(a_cur))
    return x0_hat * float(np.sqrt(a_prev)) + eps_hat * float(np.sqrt(residual))


def denoise_step(x: Tensor, schedule: NoiseSchedule, tau_prev: int, tau_cur: int,
                 sigma: float, eps_model, eps_noise: np.ndarray | None) -> Tensor:
    """One reverse step: the transition mean plus sigma-scaled noise."""
    out = denoise_mean(x, schedule, tau_prev, tau_cur, sigma, eps_model)
    if sigma > 0.0 and eps_noise is not None:
        out = out + Tensor(np.asarray(eps_noise, dtype=x.data.dtype) * sigma)
    return out


def denoise(x_t: Tensor, schedule: NoiseSchedule, taus: list[int], eta: float,
            eps_model, rng: RngStream, *, examples=None, run=0, step=0,
            use_checkpoints: bool = True) -> Tensor:
    """Run the reverse process along the sub-sequence taus down to x_0.

    With eta = 0 the result is a deterministic function of (x_t, model,
    taus).  Each reverse step is a checkpoint segment so long chains keep
    a flat activation footprint when recorded.
    """
    if taus[0] != 0 or sorted(taus) != list(taus) or len(set(taus)) != len(taus):
        raise ConfigurationError(f"invalid sub-sequence {taus}")
    x = x_t
    dtype = x.data.dtype
    for i in range(len(taus) - 1, 0, -1):
        sigma = sigma_tau(schedule, taus, i, eta)
        if sigma > 0.0:
            if examples is None:
                eps = rng.normal(x.data.shape, step=step, denoise=i, draw=1, dtype=dtype)
            else:
                eps = rng.normal_batch(x.data.shape[1:], examples, run=run, step=step,
                                       denoise=i, draw=1, dtype=dtype)
        else:
            eps = None

        def segment(xx, _tp=taus[i - 1], _tc=taus[i], _sg=sigma, _eps=eps):
            return denoise_step(xx, schedule, _tp, _tc, _sg, eps_model, _eps)

        x = checkpoint(segment, x) if use_checkpoints else segment(x)
        if not np.all(np.isfinite(x.data)):
            raise NumericDomainError(f"non-finite state after denoise step at tau={taus[i]}")
    return x


def denoise_full(x_t: Tensor, schedule: NoiseSchedule, t_star: int, s: int, eta: float,
                 eps_model, rng: RngStream, **kw) -> Tensor:
    """Convenience wrapper building the uniform sub-sequence first."""
    taus = subsequence(t_star, s, schedule.T)
    return denoise(x_t, schedule, taus, eta, eps_model, rng, **kw)
