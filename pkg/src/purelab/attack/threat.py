"""Threat models: norm-ball constraints around an anchor, intersected with
the [0, 1] data box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

NORMS = ("linf", "l2")


@dataclass(frozen=True)
class ThreatModel:
    norm: str
    eps: float
    box_lo: float = 0.0
    box_hi: float = 1.0

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ConfigurationError(f"norm must be one of {NORMS}")
        if self.eps < 0:
            raise ConfigurationError("eps must be non-negative")


def project(x: np.ndarray, anchor: np.ndarray, tm: ThreatModel) -> np.ndarray:
    """Project onto the eps-ball around the anchor, then clamp to the box.

    Box clamping moves every coordinate toward the anchor (the anchor lies
    in the box), so the result stays inside the ball; the composite is
    idempotent.  Rows are treated as independent examples for l2.  Points
    on the ball boundary are placed one part in 1e5 inside it so the
    constraint still holds exactly after rounding back to float32.
    """
    x = np.asarray(x)
    anchor = np.asarray(anchor)
    if x.shape != anchor.shape:
        raise ConfigurationError(f"shape mismatch: {x.shape} vs {anchor.shape}")
    narrow = x.dtype.itemsize < 8
    eps_eff = tm.eps * (1.0 - 1e-5) if narrow and tm.eps > 0 else tm.eps
    delta = np.asarray(x, dtype=np.float64) - np.asarray(anchor, dtype=np.float64)
    if tm.norm == "linf":
        delta = np.clip(delta, -eps_eff, eps_eff)
    else:
        flat = delta.reshape(len(delta), -1) if delta.ndim > 1 else delta.reshape(1, -1)
        norms = np.linalg.norm(flat, axis=-1, keepdims=True)
        # relative tolerance keeps re-projection a bit-exact fixed point
        scale = np.where(norms > eps_eff * (1.0 + 1e-12), eps_eff / np.maximum(norms, 1e-30), 1.0)
        delta = (flat * scale).reshape(delta.shape)
    return np.clip(anchor + delta, tm.box_lo, tm.box_hi).astype(x.dtype)


def satisfies(x: np.ndarray, anchor: np.ndarray, tm: ThreatModel, slack: float = 1e-9) -> bool:
    """Membership check: inside the ball (with slack) and the box."""
    if np.any(x < tm.box_lo - slack) or np.any(x > tm.box_hi + slack):
        return False
    delta = np.asarray(x, dtype=np.float64) - np.asarray(anchor, dtype=np.float64)
    if tm.norm == "linf":
        return bool(np.max(np.abs(delta)) <= tm.eps + slack)
    flat = delta.reshape(len(delta), -1) if delta.ndim > 1 else delta.reshape(1, -1)
    return bool(np.max(np.linalg.norm(flat, axis=-1)) <= tm.eps + slack)
