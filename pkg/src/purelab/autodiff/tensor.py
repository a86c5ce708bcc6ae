"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor is a thin wrapper around a numpy array.  Operations work with or
without a recording context: when any operand is attached to a Tape, the
result is attached to the same Tape together with a backward rule, so a
whole purification chain can be differentiated end to end.

Two precision modes are supported: narrow (float32, the runtime default)
and wide (float64, used by all finite-difference verification).  Mixed
precision inside one expression is treated as a bug and rejected.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError, DataError, NumericDomainError, UsageError

NARROW = np.float32
WIDE = np.float64

_uid_counter = itertools.count(1)


def resolve_dtype(precision) -> np.dtype:
    """Map 'narrow'/'wide' (or a numpy dtype) to the backing dtype."""
    if precision in ("narrow", NARROW, np.dtype(NARROW)):
        return np.dtype(NARROW)
    if precision in ("wide", WIDE, np.dtype(WIDE)):
        return np.dtype(WIDE)
    raise ConfigurationError(f"unknown precision {precision!r}")


class _ActivationCounter:
    """Tracks how many arrays are currently retained for backward rules.

    Shared between a Tape and the sub-tapes its checkpoints spawn, so the
    peak reflects true simultaneous retention including recomputation.
    """

    __slots__ = ("current", "peak")

    def __init__(self):
        self.current = 0
        self.peak = 0

    def add(self, n: int):
        self.current += n
        if self.current > self.peak:
            self.peak = self.current

    def free(self, n: int):
        self.current -= n


class _Node:
    __slots__ = ("out_uid", "in_uids", "vjp", "n_saved")

    def __init__(self, out_uid, in_uids, vjp, n_saved):
        self.out_uid = out_uid
        self.in_uids = in_uids
        self.vjp = vjp
        self.n_saved = n_saved


class Tape:
    """Recording context: an ordered record of primitive operations.

    Gradients are computed by a single reverse traversal; each recorded
    operation is visited exactly once and its saved arrays are released
    immediately after use.  A tape can be consumed only once.
    """

    def __init__(self, counter: _ActivationCounter | None = None):
        self._nodes: list[_Node] = []
        self._watched: dict[int, Tensor] = {}
        self._counter = counter if counter is not None else _ActivationCounter()
        self._consumed = False
        self.checkpoint_indices: list[int] = []
        self.recompute_count = 0

    # -- recording ---------------------------------------------------------

    def watch(self, t: "Tensor") -> "Tensor":
        """Mark t as a gradient leaf and attach it to this tape."""
        if t.tape is not None and t.tape is not self:
            raise UsageError("tensor already participates in another recording context")
        t.tape = self
        self._watched[t.uid] = t
        return t

    def _record(self, out_uid, in_uids, vjp, n_saved=0):
        self._nodes.append(_Node(out_uid, in_uids, vjp, n_saved))
        self._counter.add(n_saved)

    def _discard(self):
        """Drop all recorded state, releasing saved activations."""
        for node in self._nodes:
            self._counter.free(node.n_saved)
            node.vjp = None
        self._nodes.clear()
        self._consumed = True

    # -- introspection -----------------------------------------------------

    @property
    def num_ops(self) -> int:
        return len(self._nodes)

    @property
    def peak_saved(self) -> int:
        return self._counter.peak

    @property
    def current_saved(self) -> int:
        return self._counter.current

    # -- backward ----------------------------------------------------------

    def gradients(self, output: "Tensor") -> dict[int, "Tensor"]:
        """Reverse-mode gradients of a scalar output w.r.t. watched leaves.

        Returns a map tensor-uid -> gradient Tensor covering every watched
        leaf the output actually depends on.
        """
        if output.data.size != 1:
            raise UsageError("backward target must be a scalar (one element)")
        if output.tape is not self:
            raise UsageError("output does not live on this tape")
        seed = np.ones_like(output.data)
        grads = self._backprop(output.uid, seed)
        return {uid: Tensor(g) for uid, g in grads.items() if uid in self._watched}

    def _backprop(self, out_uid: int, seed: np.ndarray) -> dict[int, np.ndarray]:
        """Seeded vector-Jacobian backward pass (internal, any seed shape)."""
        if self._consumed:
            raise UsageError("tape has already been consumed by a backward pass")
        self._consumed = True
        grads: dict[int, np.ndarray] = {out_uid: seed}
        for node in reversed(self._nodes):
            g = grads.get(node.out_uid)
            if g is None:
                node.vjp = None
                self._counter.free(node.n_saved)
                continue
            in_grads = node.vjp(g)
            for uid, gi in zip(node.in_uids, in_grads):
                if gi is None:
                    continue
                acc = grads.get(uid)
                grads[uid] = gi if acc is None else acc + gi
            node.vjp = None
            self._counter.free(node.n_saved)
        return grads


class Tensor:
    """Dense numeric array, optionally attached to a recording context."""

    __slots__ = ("data", "tape", "uid")

    def __init__(self, data, dtype=None, tape: Tape | None = None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = np.asarray(arr, dtype=resolve_dtype(dtype))
        elif arr.dtype not in (np.dtype(NARROW), np.dtype(WIDE)):
            arr = arr.astype(NARROW)
        self.data = arr
        self.tape = tape
        self.uid = next(_uid_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def precision(self) -> str:
        return "wide" if self.data.dtype == np.dtype(WIDE) else "narrow"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        taped = " taped" if self.tape is not None else ""
        return f"Tensor(shape={self.data.shape}, {self.precision}{taped})"

    # operator sugar; implementations live at module level
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


# -- helpers ---------------------------------------------------------------


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise UsageError("operands belong to different recording contexts")
    return tape


def _check_dtypes(*tensors: Tensor):
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ConfigurationError(f"mixed precision operands: {sorted(map(str, dtypes))}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcastable(a: tuple, b: tuple) -> bool:
    for x, y in zip(a[::-1], b[::-1]):
        if x != y and x != 1 and y != 1:
            return False
    return True


def _binary(a, b, fwd, vjp_builder, n_saved=0):
    b = _coerce(b, a) if not isinstance(b, Tensor) else b
    a = _coerce(a, b) if not isinstance(a, Tensor) else a
    _check_dtypes(a, b)
    if not _broadcastable(a.shape, b.shape):
        raise ConfigurationError(f"shape mismatch: {a.shape} vs {b.shape}")
    out_data = fwd(a.data, b.data)
    tape = _tape_of(a, b)
    out = Tensor(out_data, tape=tape)
    if tape is not None:
        tape._record(out.uid, (a.uid, b.uid), vjp_builder(a.data, b.data), n_saved)
    return out


def _unary(a: Tensor, fwd, vjp_builder, n_saved=0):
    out_data = fwd(a.data)
    out = Tensor(out_data, tape=a.tape)
    if a.tape is not None:
        a.tape._record(out.uid, (a.uid,), vjp_builder(a.data, out_data), n_saved)
    return out


# -- elementwise arithmetic --------------------------------------------------


def add(a, b) -> Tensor:
    def vjp_builder(ad, bd):
        ash, bsh = ad.shape, bd.shape
        return lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh))

    return _binary(a, b, np.add, vjp_builder)


def sub(a, b) -> Tensor:
    def vjp_builder(ad, bd):
        ash, bsh = ad.shape, bd.shape
        return lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh))

    return _binary(a, b, np.subtract, vjp_builder)


def mul(a, b) -> Tensor:
    def vjp_builder(ad, bd):
        return lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))

    return _binary(a, b, np.multiply, vjp_builder, n_saved=2)


def div(a, b) -> Tensor:
    bd_arr = b.data if isinstance(b, Tensor) else np.asarray(b)
    if np.any(bd_arr == 0):
        raise NumericDomainError("division by zero")

    def vjp_builder(ad, bd):
        return lambda g: (
            _unbroadcast(g / bd, ad.shape),
            _unbroadcast(-g * ad / (bd * bd), bd.shape),
        )

    return _binary(a, b, np.divide, vjp_builder, n_saved=2)


def neg(a: Tensor) -> Tensor:
    return _unary(a, np.negative, lambda ad, od: lambda g: (-g,))


# -- matrix product ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(a, Tensor) or not isinstance(b, Tensor):
        raise ConfigurationError("matmul requires two tensors")
    _check_dtypes(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, tape=_tape_of(a, b))
    if out.tape is not None:
        ad, bd = a.data, b.data
        out.tape._record(
            out.uid,
            (a.uid, b.uid),
            lambda g: (g @ bd.T, ad.T @ g),
            n_saved=2,
        )
    return out


# -- reductions ---------------------------------------------------------------


def _reduce(a: Tensor, axis, keepdims, fwd, scale):
    if axis not in (None, -1):
        raise ConfigurationError("reductions support axis None or -1 only")
    out_data = fwd(a.data, axis=axis, keepdims=keepdims)
    out = Tensor(np.asarray(out_data, dtype=a.data.dtype), tape=a.tape)
    if a.tape is not None:
        shape = a.data.shape

        def vjp(g):
            gg = g
            if axis == -1 and not keepdims:
                gg = np.expand_dims(gg, -1)
            return (np.broadcast_to(gg, shape).astype(g.dtype) * scale(shape),)

        a.tape._record(out.uid, (a.uid,), vjp)
    return out


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    return _reduce(a, axis, keepdims, np.sum, lambda shape: 1.0)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def scale(shape):
        n = np.prod(shape) if axis is None else shape[-1]
        return 1.0 / n

    return _reduce(a, axis, keepdims, np.mean, scale)


# -- transcendental / pointwise ------------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = _unary(a, np.exp, lambda ad, od: lambda g: (g * od,), n_saved=1)
    if not np.all(np.isfinite(out.data)):
        raise NumericDomainError("exp overflowed to a non-finite value")
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericDomainError("log of a non-positive value")
    return _unary(a, np.log, lambda ad, od: lambda g: (g / ad,), n_saved=1)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise NumericDomainError("sqrt of a negative value")
    return _unary(a, np.sqrt, lambda ad, od: lambda g: (g * 0.5 / od,), n_saved=1)


def tanh(a: Tensor) -> Tensor:
    return _unary(a, np.tanh, lambda ad, od: lambda g: (g * (1.0 - od * od),), n_saved=1)


def sigmoid(a: Tensor) -> Tensor:
    def fwd(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _unary(a, fwd, lambda ad, od: lambda g: (g * od * (1.0 - od),), n_saved=1)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    if lo > hi:
        raise ConfigurationError(f"clamp bounds inverted: [{lo}, {hi}]")

    def vjp_builder(ad, od):
        mask = (ad >= lo) & (ad <= hi)
        return lambda g: (g * mask,)

    return _unary(a, lambda x: np.clip(x, lo, hi), vjp_builder, n_saved=1)


def sign(a: Tensor) -> Tensor:
    # sign(0) = 0; gradient is zero almost everywhere, so the rule is zero.
    return _unary(a, np.sign, lambda ad, od: lambda g: (np.zeros_like(g),))


# -- shape ops -----------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.data.size:
        raise ConfigurationError(f"cannot reshape {a.shape} to {shape}")
    old = a.data.shape
    return _unary(a, lambda x: x.reshape(shape), lambda ad, od: lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if axis != -1:
        raise ConfigurationError("concat supports the last axis only")
    tensors = list(tensors)
    _check_dtypes(*tensors)
    lead = {t.shape[:-1] for t in tensors}
    if len(lead) > 1:
        raise ConfigurationError(f"concat leading shape mismatch: {sorted(lead)}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=-1), tape=_tape_of(*tensors))
    if out.tape is not None:
        widths = [t.shape[-1] for t in tensors]
        splits = np.cumsum(widths)[:-1]

        def vjp(g):
            return tuple(np.split(g, splits, axis=-1))

        out.tape._record(out.uid, tuple(t.uid for t in tensors), vjp)
    return out


# -- fused classifier losses ----------------------------------------------------


def softmax(a: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""

    def fwd(x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def vjp_builder(ad, od):
        def vjp(g):
            dot = (g * od).sum(axis=-1, keepdims=True)
            return (od * (g - dot),)

        return vjp

    return _unary(a, fwd, vjp_builder, n_saved=1)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of row-wise logits against integer labels."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ConfigurationError(
            f"cross_entropy expects [B,C] logits and [B] labels, got {logits.shape} / {labels.shape}"
        )
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise DataError(f"label out of range [0, {c})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=-1))
    nll = logsumexp - z[np.arange(n), labels]
    out = Tensor(np.asarray(nll.mean(), dtype=logits.data.dtype), tape=logits.tape)
    if logits.tape is not None:
        probs = np.exp(z - logsumexp[:, None])

        def vjp(g):
            grad = probs.copy()
            grad[np.arange(n), labels] -= 1.0
            return (grad * (g / n),)

        logits.tape._record(out.uid, (logits.uid,), vjp, n_saved=1)
    return out


def mse(a: Tensor, b) -> Tensor:
    """Mean squared error over all elements."""
    b = _coerce(b, a)
    _check_dtypes(a, b)
    if a.shape != b.shape:
        raise ConfigurationError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = Tensor(np.asarray(np.mean(diff * diff), dtype=a.data.dtype), tape=_tape_of(a, b))
    if out.tape is not None:
        scale = 2.0 / diff.size

        def vjp(g):
            gd = g * scale * diff
            return (gd, -gd)

        out.tape._record(out.uid, (a.uid, b.uid), vjp, n_saved=1)
    return out
