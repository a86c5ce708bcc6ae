"""Noise schedules and denoising sub-sequences.

The reference schedule is the linear one with beta from 1e-4 to 0.02 over
T = 1000 steps.  Desk-scale runs use T = 200 with both endpoints rescaled
by a common factor so the terminal cumulative product alpha_bar_T matches
the reference schedule, preserving the total amount of noise the sweeps
reason about.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError

REFERENCE_T = 1000
REFERENCE_BETA_1 = 1e-4
REFERENCE_BETA_T = 0.02

TOY_T = 200


@dataclass(frozen=True)
class NoiseSchedule:
    """Beta sequence plus cumulative products.

    betas[t-1] is beta_t for t = 1..T; alphas_bar[t] is the product of
    (1 - beta_i) for i <= t, with alphas_bar[0] = 1 so that timestep 0
    denotes the noiseless endpoint.
    """

    T: int
    betas: np.ndarray
    alphas_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.shape != (self.T,) or self.T < 1:
            raise ConfigurationError(f"need {self.T} betas, got shape {betas.shape}")
        if not (0.0 < betas[0] and betas[-1] < 1.0):
            raise ConfigurationError("betas must lie strictly inside (0, 1)")
        if np.any(np.diff(betas) < 0):
            raise ConfigurationError("betas must be non-decreasing")
        alphas_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if np.any(np.diff(alphas_bar) >= 0):
            raise ConfigurationError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas_bar", alphas_bar)

    def beta(self, t: int) -> float:
        """beta_t for t in [1, T]."""
        if not 1 <= t <= self.T:
            raise ConfigurationError(f"timestep {t} outside [1, {self.T}]")
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative product alpha_bar_t for t in [0, T]."""
        if not 0 <= t <= self.T:
            raise ConfigurationError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alphas_bar[t])


def linear_schedule(T: int, beta_1: float, beta_T: float) -> NoiseSchedule:
    """Linearly increasing betas from beta_1 to beta_T over T steps."""
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_1 <= beta_T < 1.0):
        raise ConfigurationError(f"need 0 < beta_1 <= beta_T < 1, got {beta_1}, {beta_T}")
    return NoiseSchedule(T=T, betas=np.linspace(beta_1, beta_T, T))


def reference_schedule() -> NoiseSchedule:
    """The T=1000 linear schedule all presets are scaled from."""
    return linear_schedule(REFERENCE_T, REFERENCE_BETA_1, REFERENCE_BETA_T)


def rescaled_schedule(T: int = TOY_T, ref: NoiseSchedule | None = None) -> NoiseSchedule:
    """Shorter schedule preserving the reference terminal alpha_bar.

    Endpoints start at the reference values scaled by (ref.T / T) and are
    then multiplied by a common factor found by bisection so that
    alpha_bar_T matches the reference exactly (to float64 resolution).
    """
    if ref is None:
        ref = reference_schedule()
    target = ref.alpha_bar(ref.T)
    scale = ref.T / T
    b1, bT = REFERENCE_BETA_1 * scale, REFERENCE_BETA_T * scale

    def terminal(c):
        betas = np.linspace(c * b1, c * bT, T)
        return np.prod(1.0 - betas)

    lo, hi = 0.5, 1.5
    while terminal(lo) < target:
        lo *= 0.5
    while terminal(hi) > target:
        hi *= 1.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if terminal(mid) > target:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    return linear_schedule(T, c * b1, c * bT)


def subsequence(t_star: int, s: int, T: int | None = None) -> list[int]:
    """Uniformly spaced denoising sub-sequence 0 = tau_0 < ... < tau_s = t_star.

    tau_i = round(i * t_star / s), deduplicated, endpoints forced.  The
    returned list can be shorter than s + 1 when rounding collides.
    """
    if t_star < 1:
        raise ConfigurationError(f"t_star must be >= 1, got {t_star}")
    if T is not None and t_star > T:
        raise ConfigurationError(f"t_star={t_star} exceeds schedule T={T}")
    if not 1 <= s <= t_star:
        raise ConfigurationError(f"denoise steps s={s} outside [1, t_star={t_star}]")
    taus = sorted({round(i * t_star / s) for i in range(s + 1)})
    taus[0], taus[-1] = 0, t_star
    return taus


def sigma_tau(schedule: NoiseSchedule, taus: list[int], i: int, eta: float) -> float:
    """Sampler noise scale at sub-sequence position i.

    eta = 1 recovers the DDPM posterior scale, eta = 0 the deterministic
    DDIM sampler; the scale is linear in eta.
    """
    if not 1 <= i < len(taus):
        raise ConfigurationError(f"sub-sequence index {i} outside [1, {len(taus) - 1}]")
    if not 0.0 <= eta <= 1.0:
        raise ConfigurationError(f"eta={eta} outside [0, 1]")
    a_prev = schedule.alpha_bar(taus[i - 1])
    a_cur = schedule.alpha_bar(taus[i])
    return float(eta * np.sqrt((1.0 - a_prev) / (1.0 - a_cur)) * np.sqrt(1.0 - a_cur / a_prev))
