"""Gradient checkpointing: drop a segment's interior activations and
recompute them once during the backward pass.

The segment must be a pure function of the tensors passed in; noise draws
and schedule coefficients have to be materialized by the caller and handed
over as inputs.  Purity is enforced at backward time by comparing the
recomputed output against the recorded forward value bit for bit.
"""

from __future__ import annotations

import numpy as np

from ..errors import UsageError
from .tensor import Tape, Tensor, _tape_of


def checkpoint(fn, *inputs: Tensor) -> Tensor:
    """Run fn(*inputs) without retaining its interior activations.

    Forward value is identical to the plain execution.  On the backward
    pass the segment is replayed exactly once on a scratch tape to obtain
    the vector-Jacobian products for the inputs.  When no input is being
    recorded the segment simply runs in place.
    """
    tape = _tape_of(*inputs)
    if tape is None:
        out = fn(*inputs)
        if not isinstance(out, Tensor):
            raise UsageError("checkpoint segment must return a Tensor")
        return out

    def replay():
        sub = Tape(counter=tape._counter)
        shadows = [sub.watch(Tensor(t.data)) for t in inputs]
        out = fn(*shadows)
        if not isinstance(out, Tensor):
            raise UsageError("checkpoint segment must return a Tensor")
        return sub, shadows, out

    sub, _, first = replay()
    forward_value = first.data
    sub._discard()

    result = Tensor(forward_value, tape=tape)
    input_uids = tuple(t.uid for t in inputs)

    def vjp(g: np.ndarray):
        tape.recompute_count += 1
        sub2, shadows2, out2 = replay()
        if not np.array_equal(out2.data, forward_value):
            raise UsageError(
                "checkpoint segment recomputation differs from the recorded "
                "forward value; the segment is not a pure function of its inputs"
            )
        grads = sub2._backprop(out2.uid, g)
        return tuple(grads.get(s.uid) for s in shadows2)

    # retained: the inputs plus the forward value
    tape._record(result.uid, input_uids, vjp, n_saved=len(inputs) + 1)
    tape.checkpoint_indices.append(len(tape._nodes) - 1)
    return result
