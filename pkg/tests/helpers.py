"""Shared test utilities: finite-difference oracles and fixtures."""

from __future__ import annotations

import numpy as np

from purelab.autodiff import Tape, Tensor, WIDE


def central_diff(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central finite-difference gradient of scalar-valued f at x.

    f takes and leaves numpy arrays; the returned gradient has x's shape.
    Stays independent of the tape machinery it is used to check.
    """
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Relative error between gradient vectors, guarded near zero."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def tape_gradient(build, x: np.ndarray, dtype=WIDE) -> np.ndarray:
    """Gradient of a scalar tape expression w.r.t. a single input array.

    build(t: Tensor) -> scalar Tensor must use only tape operations.
    """
    tape = Tape()
    t = tape.watch(Tensor(x, dtype=dtype))
    out = build(t)
    return tape.gradients(out)[t.uid].data


def fd_check(build, value_fn, x, *, h=1e-6, dtype=WIDE):
    """Compare a tape gradient against the central-difference oracle.

    Returns (analytic, numeric, relative error).
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = tape_gradient(build, x.astype(dtype), dtype=dtype)
    numeric = central_diff(value_fn, x.copy(), h)
    return analytic, numeric, rel_error(analytic, numeric)
