"""Autodiff primitive suite: values, backward rules, tape semantics.

Every primitive with a backward rule is checked against the central
finite-difference oracle over 100 seeds in wide precision and again in
narrow precision at a looser tolerance.
"""

import numpy as np
import pytest

from purelab import autodiff as ad
from purelab.autodiff import NARROW, WIDE, Tape, Tensor
from purelab.errors import ConfigurationError, DataError, NumericDomainError, UsageError

from helpers import central_diff, rel_error

SEEDS = range(100)


def test_add_elementwise():
    out = ad.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    assert np.allclose(out.data, [4.0, 6.0])


def test_softmax_uniform():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0], dtype=WIDE))
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(42)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    got = ad.matmul(Tensor(a, dtype=WIDE), Tensor(b, dtype=WIDE)).data
    want = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                want[i, j] += a[i, k] * b[k, j]
    assert np.allclose(got, want, atol=1e-12)


def test_simple_square_gradient():
    tape = Tape()
    x = tape.watch(Tensor(3.0, dtype=WIDE))
    y = ad.mul(x, x)
    grads = tape.gradients(y)
    assert grads[x.uid].item() == pytest.approx(6.0)


def test_backward_requires_scalar():
    tape = Tape()
    x = tape.watch(Tensor([1.0, 2.0]))
    y = ad.mul(x, x)
    with pytest.raises(UsageError):
        tape.gradients(y)


def test_backward_requires_same_tape():
    tape = Tape()
    other = Tape()
    x = other.watch(Tensor(2.0))
    y = ad.mul(x, x)
    with pytest.raises(UsageError):
        tape.gradients(y)


def test_mixing_tapes_rejected():
    t1, t2 = Tape(), Tape()
    a = t1.watch(Tensor([1.0]))
    b = t2.watch(Tensor([2.0]))
    with pytest.raises(UsageError):
        ad.add(a, b)


def test_shape_mismatch_is_configuration_error():
    with pytest.raises(ConfigurationError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    with pytest.raises(ConfigurationError):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_domain_errors():
    with pytest.raises(NumericDomainError):
        ad.log(Tensor([-1.0]))
    with pytest.raises(NumericDomainError):
        ad.div(Tensor([1.0]), Tensor([0.0]))
    with pytest.raises(NumericDomainError):
        ad.sqrt(Tensor([-0.5]))


def test_cross_entropy_label_range():
    with pytest.raises(DataError):
        ad.cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_fanout_gradients_accumulate():
    tape = Tape()
    x = tape.watch(Tensor(2.0, dtype=WIDE))
    y = ad.add(ad.mul(x, x), ad.mul(x, Tensor(3.0, dtype=WIDE)))
    g = tape.gradients(y)[x.uid].item()
    assert g == pytest.approx(2 * 2.0 + 3.0)


def test_tape_consumed_once():
    tape = Tape()
    x = tape.watch(Tensor(1.0))
    y = ad.mul(x, x)
    tape.gradients(y)
    with pytest.raises(UsageError):
        tape.gradients(y)


def test_replay_determinism():
    def run():
        tape = Tape()
        x = tape.watch(Tensor(np.linspace(-1, 1, 12).reshape(3, 4), dtype=WIDE))
        h = ad.tanh(ad.matmul(x, Tensor(np.full((4, 2), 0.3), dtype=WIDE)))
        loss = ad.tmean(ad.mul(h, h))
        g = tape.gradients(loss)[x.uid].data
        return loss.data.copy(), g

    l1, g1 = run()
    l2, g2 = run()
    assert np.array_equal(l1, l2)
    assert np.array_equal(g1, g2)


# -- finite-difference suite over every primitive ----------------------------


def _safe_uniform(rng, shape, lo, hi):
    return rng.uniform(lo, hi, size=shape)


def _primitive_cases(seed, dtype):
    """Yield (name, build(tensor)->scalar, value_fn(np)->float, x0) tuples."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    yv = rng.normal(size=(3, 4))
    pos = _safe_uniform(rng, (3, 4), 0.3, 2.5)
    # keep divisors away from zero
    divisor = np.where(yv >= 0, yv + 0.5, yv - 0.5)
    labels = rng.integers(0, 4, size=3)
    probe = rng.normal(size=(3, 4))
    probe2 = rng.normal(size=(3, 2))

    def scalarize(arr_expr, probe_arr):
        return lambda t: ad.tsum(ad.mul(arr_expr(t), Tensor(probe_arr, dtype=dtype)))

    def nscalarize(arr_fn, probe_arr):
        return lambda a: float(np.sum(arr_fn(a) * probe_arr))

    wt = Tensor(w, dtype=dtype)
    yt = Tensor(yv, dtype=dtype)
    dt = Tensor(divisor, dtype=dtype)

    cases = [
        ("add", scalarize(lambda t: ad.add(t, yt), probe), nscalarize(lambda a: a + yv, probe), x),
        ("sub", scalarize(lambda t: ad.sub(t, yt), probe), nscalarize(lambda a: a - yv, probe), x),
        ("mul", scalarize(lambda t: ad.mul(t, yt), probe), nscalarize(lambda a: a * yv, probe), x),
        ("div", scalarize(lambda t: ad.div(t, dt), probe), nscalarize(lambda a: a / divisor, probe), x),
        ("neg", scalarize(ad.neg, probe), nscalarize(lambda a: -a, probe), x),
        ("matmul", scalarize(lambda t: ad.matmul(t, wt), probe2), nscalarize(lambda a: a @ w, probe2), x),
        ("sum", lambda t: ad.tsum(t), lambda a: float(np.sum(a)), x),
        ("mean", lambda t: ad.tmean(t), lambda a: float(np.mean(a)), x),
        (
            "sum_last",
            scalarize(lambda t: ad.tsum(t, axis=-1, keepdims=True), probe[:, :1]),
            nscalarize(lambda a: a.sum(-1, keepdims=True), probe[:, :1]),
            x,
        ),
        (
            "mean_last",
            scalarize(lambda t: ad.tmean(t, axis=-1, keepdims=True), probe[:, :1]),
            nscalarize(lambda a: a.mean(-1, keepdims=True), probe[:, :1]),
            x,
        ),
        ("exp", scalarize(ad.exp, probe), nscalarize(np.exp, probe), x),
        ("log", scalarize(ad.log, probe), nscalarize(np.log, probe), pos),
        ("sqrt", scalarize(ad.sqrt, probe), nscalarize(np.sqrt, probe), pos),
        ("tanh", scalarize(ad.tanh, probe), nscalarize(np.tanh, probe), x),
        (
            "sigmoid",
            scalarize(ad.sigmoid, probe),
            nscalarize(lambda a: 1.0 / (1.0 + np.exp(-a)), probe),
            x,
        ),
        ("softmax", scalarize(ad.softmax, probe), nscalarize(_np_softmax, probe), x),
        (
            "cross_entropy",
            lambda t: ad.cross_entropy(t, labels),
            lambda a: _np_cross_entropy(a, labels),
            x,
        ),
        ("mse", lambda t: ad.mse(t, yt), lambda a: float(np.mean((a - yv) ** 2)), x),
        (
            "concat",
            scalarize(lambda t: ad.concat([t, yt]), np.concatenate([probe, probe], axis=-1)),
            nscalarize(lambda a: np.concatenate([a, yv], -1), np.concatenate([probe, probe], -1)),
            x,
        ),
        (
            "reshape",
            scalarize(lambda t: ad.reshape(t, (4, 3)), probe.reshape(4, 3)),
            nscalarize(lambda a: a.reshape(4, 3), probe.reshape(4, 3)),
            x,
        ),
    ]
    # clamp: keep samples clear of the kink at the bounds
    xc = np.where(np.abs(np.abs(x) - 1.0) < 0.05, x * 1.2, x)
    cases.append(
        (
            "clamp",
            scalarize(lambda t: ad.clamp(t, -1.0, 1.0), probe),
            nscalarize(lambda a: np.clip(a, -1.0, 1.0), probe),
            xc,
        )
    )
    # sign: piecewise constant, gradient zero almost everywhere
    xs = np.where(np.abs(x) < 0.05, x + 0.2, x)
    cases.append(
        (
            "sign",
            scalarize(ad.sign, probe),
            nscalarize(np.sign, probe),
            xs,
        )
    )
    return cases


def _np_softmax(a):
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _np_cross_entropy(a, labels):
    p = _np_softmax(a)
    n = a.shape[0]
    return float(-np.mean(np.log(p[np.arange(n), labels])))


@pytest.mark.parametrize("dtype,h,tol", [(WIDE, 1e-6, 1e-6), (NARROW, 5e-3, 1e-3)])
def test_every_primitive_matches_finite_differences(dtype, h, tol):
    worst = {}
    for seed in SEEDS:
        for name, build, value_fn, x0 in _primitive_cases(seed, dtype):
            tape = Tape()
            t = tape.watch(Tensor(x0, dtype=dtype))
            out = build(t)
            analytic = tape.gradients(out)[t.uid].data

            def value(a, value_fn=value_fn, dtype=dtype):
                return value_fn(a.astype(dtype))

            numeric = central_diff(value, x0.astype(np.float64), h)
            err = rel_error(analytic, numeric)
            if err > worst.get(name, 0.0):
                worst[name] = err
    failures = {k: v for k, v in worst.items() if v >= tol}
    assert not failures, f"primitives exceeding tolerance {tol}: {failures}"


def test_sign_zero_is_zero():
    out = ad.sign(Tensor([-2.0, 0.0, 3.0]))
    assert np.array_equal(out.data, np.asarray([-1.0, 0.0, 1.0], dtype=out.data.dtype))


def test_mixed_precision_rejected():
    with pytest.raises(ConfigurationError):
        ad.add(Tensor([1.0], dtype=WIDE), Tensor([1.0], dtype=NARROW))
