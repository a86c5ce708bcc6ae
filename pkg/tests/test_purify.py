"""Purification engine: single/multi-step contracts, guidance, distances,
ensembles."""

import numpy as np
import pytest

from purelab.autodiff import Tape, Tensor, WIDE, tsum
from purelab.diffusion import DEFENSE, RngStream, rescaled_schedule
from purelab.errors import ConfigurationError
from purelab.models import ClassifierParams, DenoiserParams
from purelab.purify import (
    Defense,
    GuidanceConfig,
    ModelContext,
    OdeConfig,
    PurificationPlan,
    average_probs,
    distance_grad,
    distance_value,
    ensemble_classify,
    mse_value,
    purify_multi,
    purify_once,
    ssim_value,
)

from helpers import central_diff, rel_error


@pytest.fixture(scope="module")
def ctx():
    sched = rescaled_schedule()
    denoiser = DenoiserParams.init(16, (24,), t_max=sched.T, seed=3)
    classifier = ClassifierParams.init(16, (12,), 4, seed=4)
    return ModelContext(sched, denoiser, classifier)


@pytest.fixture(scope="module")
def ctx_wide(ctx):
    return ModelContext(ctx.schedule, ctx.denoiser.astype(np.float64),
                        ctx.classifier.astype(np.float64))


def _x(batch=3, dim=16, dtype=np.float32, lo=0.25, hi=0.75, seed=0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(lo, hi, size=(batch, dim)).astype(dtype))


def test_purify_once_output_in_box(ctx):
    out = purify_once(_x(), 20, 5, 1.0, ctx, RngStream(0, DEFENSE))
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_purify_once_rejects_out_of_box_input(ctx):
    bad = Tensor(np.full((1, 16), 1.4, dtype=np.float32))
    with pytest.raises(ConfigurationError):
        purify_once(bad, 10, 2, 1.0, ctx, RngStream(0, DEFENSE))


def test_purify_once_deterministic_ddim(ctx):
    x = _x()
    a = purify_once(x, 30, 5, 0.0, ctx, RngStream(5, DEFENSE), examples=[0, 1, 2])
    b = purify_once(x, 30, 5, 0.0, ctx, RngStream(5, DEFENSE), examples=[0, 1, 2])
    assert np.array_equal(a.data, b.data)


def test_guidance_scale_zero_is_bit_transparent(ctx):
    x = _x()
    plain = purify_once(x, 25, 4, 1.0, ctx, RngStream(9, DEFENSE), examples=[5, 6, 7])
    guided = purify_once(x, 25, 4, 1.0, ctx, RngStream(9, DEFENSE), examples=[5, 6, 7],
                         guidance=GuidanceConfig("mse", 0.0))
    assert np.array_equal(plain.data, guided.data)


def test_purify_multi_trace_matches_plan(ctx):
    plan = PurificationPlan(steps=((30, 30),) * 4 + ((50, 50),) * 2 + ((125, 125),) * 2)
    x = _x()
    out, trace = purify_multi(x, plan, ctx, RngStream(2, DEFENSE), examples=[0, 1, 2])
    assert [t for t, _ in trace] == [30, 30, 30, 30, 50, 50, 125, 125]
    assert len(trace) == 8
    assert out.data.shape == x.data.shape


def test_purify_multi_single_step_equals_purify_once(ctx):
    plan = PurificationPlan(steps=((20, 5),), eta=1.0)
    x = _x()
    multi, trace = purify_multi(x, plan, ctx, RngStream(3, DEFENSE), examples=[1, 2, 3])
    once = purify_once(x, 20, 5, 1.0, ctx, RngStream(3, DEFENSE), examples=[1, 2, 3], step=0)
    assert np.array_equal(multi.data, once.data)
    assert trace == [(20, 5)]


def test_purify_multi_gradient_matches_finite_differences(ctx_wide):
    """Frozen noise, wide precision: gradient through a 3-step plan."""
    plan = PurificationPlan(steps=((6, 2), (10, 2), (25, 3)), eta=1.0)
    rng = RngStream(17, DEFENSE)
    x0 = np.random.default_rng(8).uniform(0.3, 0.7, size=(2, 16))

    def forward(a):
        out, _ = purify_multi(Tensor(a, dtype=WIDE), plan, ctx_wide, rng, examples=[0, 1])
        return float(np.sum(out.data))

    tape = Tape()
    x = tape.watch(Tensor(x0, dtype=WIDE))
    out, _ = purify_multi(x, plan, ctx_wide, rng, examples=[0, 1])
    analytic = tape.gradients(tsum(out))[x.uid].data
    numeric = central_diff(forward, x0.copy(), 1e-6)
    assert rel_error(analytic, numeric) < 1e-4


# -- distances -------------------------------------------------------------------


def test_mse_gradient_closed_form():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, size=(2, 16))
    yv = rng.uniform(0, 1, size=(2, 16))
    g = distance_grad("mse", Tensor(x, dtype=WIDE), Tensor(yv, dtype=WIDE)).data
    assert np.allclose(g, 2.0 * (x - yv) / 16, atol=1e-12)


@pytest.mark.parametrize("kind", ["mse", "ssim"])
def test_distance_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(11)
    x0 = rng.uniform(0.2, 0.8, size=(1, 16))
    yv = rng.uniform(0.2, 0.8, size=(1, 16))

    def value(a):
        return float(distance_value(kind, a, yv).sum())

    analytic = distance_grad(kind, Tensor(x0, dtype=WIDE), Tensor(yv, dtype=WIDE)).data
    numeric = central_diff(value, x0.copy(), 1e-6)
    assert rel_error(analytic, numeric) < 1e-6


def test_distance_gradients_vanish_at_identical_inputs():
    x = np.random.default_rng(1).uniform(0.2, 0.8, size=(2, 16))
    for kind in ("mse", "ssim"):
        g = distance_grad(kind, Tensor(x, dtype=WIDE), Tensor(x.copy(), dtype=WIDE)).data
        assert np.max(np.abs(g)) < 1e-12, kind


def test_ssim_identical_is_one_and_bounded():
    x = np.random.default_rng(2).uniform(0, 1, size=(3, 16))
    s = ssim_value(x, x)
    assert np.allclose(s, 1.0, atol=1e-12)
    yv = np.random.default_rng(3).uniform(0, 1, size=(3, 16))
    assert np.all(ssim_value(x, yv) <= 1.0 + 1e-12)


def test_ssim_constant_images_stable():
    x = np.full((1, 16), 0.5)
    s = ssim_value(x, x)
    assert np.isfinite(s).all() and s[0] == pytest.approx(1.0)


def test_guided_step_pulls_toward_target(ctx):
    """MSE guidance with a large scale keeps the output closer to the step
    input than the unguided chain does."""
    x = _x(batch=4, seed=21)
    rng = RngStream(23, DEFENSE)
    plain = purify_once(x, 40, 10, 1.0, ctx, rng, examples=[0, 1, 2, 3])
    guided = purify_once(x, 40, 10, 1.0, ctx, rng, examples=[0, 1, 2, 3],
                         guidance=GuidanceConfig("mse", 200.0))
    d_plain = float(mse_value(plain.data, x.data).mean())
    d_guided = float(mse_value(guided.data, x.data).mean())
    assert d_guided < d_plain


# -- ensembles ---------------------------------------------------------------------


def test_average_probs_hand_case():
    probs = np.array([[0.6, 0.4], [0.3, 0.7], [0.45, 0.55]])
    assert average_probs(probs) == 1
    assert np.allclose(probs.mean(axis=0), [0.45, 0.55])


def test_average_probs_tie_breaks_low():
    probs = np.array([[0.5, 0.5]])
    assert average_probs(probs) == 0


def test_ensemble_single_run_equals_plain_classification(ctx):
    x = _x(batch=4, seed=31).data
    defense = Defense(plan=PurificationPlan(steps=((20, 5),), ensemble_runs=1))
    labels, record = ensemble_classify(x, defense, ctx, RngStream(7, DEFENSE),
                                       examples=[0, 1, 2, 3])
    assert np.array_equal(labels, record["per_run_labels"][0])


def test_ensemble_unanimous_returns_that_label(ctx):
    x = _x(batch=4, seed=33).data
    defense = Defense(plan=PurificationPlan(steps=((10, 2),), ensemble_runs=5))
    labels, record = ensemble_classify(x, defense, ctx, RngStream(13, DEFENSE),
                                       examples=[0, 1, 2, 3])
    per_run = record["per_run_labels"]
    for i in range(4):
        if len(set(per_run[:, i])) == 1:
            assert labels[i] == per_run[0, i]


def test_defense_kinds():
    assert Defense().kind == "identity"
    assert Defense(plan=PurificationPlan(steps=((10, 5),))).kind == "plan"
    assert Defense(ode=OdeConfig(0.1, 0.01)).kind == "ode"
    with pytest.raises(ConfigurationError):
        Defense(plan=PurificationPlan(steps=((10, 5),)), ode=OdeConfig(0.1, 0.01))


def test_defense_runs_resolution():
    plan = PurificationPlan(steps=((10, 5),), ensemble_runs=7)
    assert Defense(plan=plan).runs == 7
    assert Defense(plan=plan, ensemble_runs=2).runs == 2
    assert Defense().runs == 1
