"""Adjoint sensitivity: linear-ODE oracle, convergence ladders."""

import numpy as np
import pytest

from purelab.attack import adjoint_gradient_at_noised, ode_forward_trajectory
from purelab.autodiff import Tape, Tensor, WIDE, tsum
from purelab.diffusion import linear_solution_factor, ode_denoise, rescaled_schedule
from purelab.models import DenoiserParams, make_eps_model
from purelab.purify import ModelContext


class _LinearCtx:
    """eps == 0 context: the ODE reduces to a closed-form linear system."""

    schedule = rescaled_schedule()
    eps_model = None


@pytest.fixture(scope="module")
def nonlinear_ctx():
    """Moderate random-weights model: nonlinear but Lipschitz enough that
    the reverse reconstruction converges at the ladder's step sizes.  (The
    trained model's score blows up off-manifold near u = 0, which pins the
    adjoint error at a plateau; that plateau is what weakens the adjoint
    attack, but it hides the clean O(h) ladder this test pins down.)"""
    sched = rescaled_schedule()
    denoiser = DenoiserParams.init(64, (64, 64), t_max=sched.T, seed=3).astype(np.float64)
    ctx = ModelContext.__new__(ModelContext)
    ctx.schedule = sched
    ctx.denoiser = denoiser
    ctx.classifier = None
    ctx.eps_model = make_eps_model(denoiser)
    return ctx


def test_linear_adjoint_matches_analytic_within_order_h():
    ctx = _LinearCtx()
    t_frac = 0.1
    x_t = np.full((1, 4), 0.3)
    seed = np.ones_like(x_t)
    analytic = linear_solution_factor(ctx.schedule, t_frac)
    errors = []
    for h in (0.01, 0.005, 0.0025):
        adj = adjoint_gradient_at_noised(x_t, seed, t_frac, h, ctx)
        errors.append(abs(float(adj[0, 0]) - analytic))
    # O(h) consistency: error shrinks roughly linearly with the step
    assert errors[0] < 0.05 * analytic
    assert errors[1] < errors[0] and errors[2] < errors[1]
    assert errors[0] / errors[1] > 1.5


def test_linear_adjoint_equals_tape_backprop():
    """With state-independent dynamics the reverse reconstruction is exact,
    so the adjoint reproduces the tape gradient to roundoff."""
    ctx = _LinearCtx()
    t_frac, h = 0.1, 0.01
    x_np = np.full((1, 4), 0.3)
    tape = Tape()
    x = tape.watch(Tensor(x_np, dtype=WIDE))
    out = ode_denoise(x, ctx.schedule, t_frac, h, None)
    tape_grad = tape.gradients(tsum(out))[x.uid].data
    adj = adjoint_gradient_at_noised(x_np, np.ones_like(x_np), t_frac, h, ctx)
    assert np.allclose(adj, tape_grad, rtol=1e-12)


def test_adjoint_vs_tape_discrepancy_shrinks_with_step(nonlinear_ctx):
    """Nonlinear dynamics: the reverse-reconstruction error decreases
    monotonically across a x2 refinement ladder; coarse steps are worse."""
    ctx = nonlinear_ctx
    rng = np.random.default_rng(0)
    x_t = rng.uniform(0.2, 0.8, size=(4, 64))
    t_frac = 0.1
    discrepancies = []
    for h in (0.025, 0.0125, 0.00625, 0.003125):
        tape = Tape()
        x = tape.watch(Tensor(x_t, dtype=WIDE))
        out = ode_denoise(x, ctx.schedule, t_frac, h, ctx.eps_model)
        tape_grad = tape.gradients(tsum(out))[x.uid].data
        adj = adjoint_gradient_at_noised(x_t, np.ones_like(x_t), t_frac, h, ctx)
        discrepancies.append(np.linalg.norm(adj - tape_grad) / np.linalg.norm(tape_grad))
    assert all(a > b for a, b in zip(discrepancies, discrepancies[1:])), discrepancies
    assert discrepancies[0] > discrepancies[-1] * 1.2


def test_forward_trajectory_matches_ode_denoise(nonlinear_ctx):
    ctx = nonlinear_ctx
    x_t = np.random.default_rng(4).uniform(0.3, 0.7, size=(2, 64))
    manual = ode_forward_trajectory(x_t, 0.1, 0.01, ctx)
    tape_free = ode_denoise(Tensor(x_t, dtype=WIDE), ctx.schedule, 0.1, 0.01,
                            ctx.eps_model).data
    assert np.allclose(manual, tape_free, rtol=1e-12)
