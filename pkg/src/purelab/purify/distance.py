"""Guidance distances between an image being denoised and the noised
adversarial target: per-image MSE and a global-window SSIM.

Each distance ships as a value function (numpy, used by tests as the
finite-difference reference) and a gradient expression built from tape
primitives, so the guidance shift itself stays differentiable when an
attacker back-propagates through the guided defense.

SSIM uses one global window; on 8x8 images sliding windows are
meaningless.  Stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L = 1, so
zero-variance windows are well defined rather than an error.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, tmean

C1 = 0.01**2
C2 = 0.03**2


# -- values (numpy, per image) -------------------------------------------------


def mse_value(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-image mean squared error over the last axis."""
    d = x - y
    return np.mean(d * d, axis=-1)


def ssim_value(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-image global-window SSIM."""
    mx = x.mean(axis=-1, keepdims=True)
    my = y.mean(axis=-1, keepdims=True)
    vx = ((x - mx) ** 2).mean(axis=-1, keepdims=True)
    vy = ((y - my) ** 2).mean(axis=-1, keepdims=True)
    cov = ((x - mx) * (y - my)).mean(axis=-1, keepdims=True)
    a1 = 2 * mx * my + C1
    a2 = 2 * cov + C2
    b1 = mx * mx + my * my + C1
    b2 = vx + vy + C2
    return ((a1 * a2) / (b1 * b2))[..., 0]


def distance_value(kind: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind == "mse":
        return mse_value(x, y)
    return 1.0 - ssim_value(x, y)


# -- gradient expressions (tape primitives) --------------------------------------


def mse_grad(x: Tensor, y: Tensor) -> Tensor:
    """d/dx of mean squared error: 2 (x - y) / N per image."""
    n = x.shape[-1]
    return (x - y) * (2.0 / n)


def ssim_grad(x: Tensor, y: Tensor) -> Tensor:
    """d/dx of the global-window SSIM, in closed form.

    With A1 = 2 mx my + C1, A2 = 2 cov + C2, B1 = mx^2 + my^2 + C1,
    B2 = vx + vy + C2 and S = A1 A2 / (B1 B2):

        dS/dx = 2/(N B1 B2) * (my A2 + A1 (y - my))
              - 2 S/(N B1 B2) * (mx B2 + B1 (x - mx))

    At x == y the gradient of the distance 1 - S vanishes (SSIM = 1 is the
    maximum).
    """
    n = x.shape[-1]
    mx = tmean(x, axis=-1, keepdims=True)
    my = tmean(y, axis=-1, keepdims=True)
    xc = x - mx
    yc = y - my
    vx = tmean(xc * xc, axis=-1, keepdims=True)
    vy = tmean(yc * yc, axis=-1, keepdims=True)
    cov = tmean(xc * yc, axis=-1, keepdims=True)
    a1 = mx * my * 2.0 + C1
    a2 = cov * 2.0 + C2
    b1 = mx * mx + my * my + C1
    b2 = vx + vy + C2
    denom = b1 * b2
    s = (a1 * a2) / denom
    term1 = (my * a2 + a1 * yc) / denom
    term2 = (mx * b2 + b1 * xc) * (s / denom)
    return (term1 - term2) * (2.0 / n)


def distance_grad(kind: str, x: Tensor, y: Tensor) -> Tensor:
    """d/dx of the configured distance (for SSIM, of 1 - SSIM)."""
    if kind == "mse":
        return mse_grad(x, y)
    return ssim_grad(x, y) * -1.0
