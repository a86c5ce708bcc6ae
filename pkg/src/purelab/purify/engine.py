"""Purification policies: single and multi-step purification, guided
denoising, ensembles, and the Defense bundle evaluation uses.

Everything operates on autodiff Tensors, so attaching the input to a tape
differentiates the whole policy; defense-side evaluation passes plain
tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, checkpoint, clamp, softmax
from ..diffusion.ode import alpha_bar_cont, ode_denoise
from ..diffusion.rng import RngStream
from ..diffusion.sampler import denoise_mean, forward_noise
from ..diffusion.schedule import NoiseSchedule, sigma_tau, subsequence
from ..errors import ConfigurationError
from ..models.nets import ClassifierParams, DenoiserParams, classifier_forward, make_eps_model
from .distance import distance_grad
from .plan import GuidanceConfig, PurificationPlan

BOX_TOLERANCE = 1e-6


@dataclass
class ModelContext:
    """Schedule plus the two trained components, bound once per experiment."""

    schedule: NoiseSchedule
    denoiser: DenoiserParams
    classifier: ClassifierParams

    def __post_init__(self):
        self.eps_model = make_eps_model(self.denoiser)


@dataclass(frozen=True)
class OdeConfig:
    """Probability-flow defense: noise to t_frac, integrate back with the
    given Euler step."""

    t_frac: float
    step_size: float

    def __post_init__(self):
        if not 0.0 < self.t_frac <= 1.0:
            raise ConfigurationError(f"t_frac={self.t_frac} outside (0, 1]")
        if self.step_size <= 0:
            raise ConfigurationError("step_size must be positive")


@dataclass(frozen=True)
class Defense:
    """What stands between the input and the classifier."""

    plan: PurificationPlan | None = None
    ode: OdeConfig | None = None
    ensemble_runs: int | None = None

    def __post_init__(self):
        if self.plan is not None and self.ode is not None:
            raise ConfigurationError("defense is either a plan or an ODE, not both")

    @property
    def kind(self) -> str:
        if self.plan is not None:
            return "plan"
        if self.ode is not None:
            return "ode"
        return "identity"

    @property
    def runs(self) -> int:
        if self.ensemble_runs is not None:
            return self.ensemble_runs
        if self.plan is not None:
            return self.plan.ensemble_runs
        return 1

    def describe(self) -> str:
        if self.kind == "plan":
            return f"plan[{self.plan.canonical()}]"
        if self.kind == "ode":
            return f"ode[t_frac={self.ode.t_frac},step={self.ode.step_size}]"
        return "identity"


def _check_box(x: Tensor):
    lo, hi = float(x.data.min()), float(x.data.max())
    if lo < -BOX_TOLERANCE or hi > 1.0 + BOX_TOLERANCE:
        raise ConfigurationError(f"input outside the [0,1] data box: [{lo}, {hi}]")


def purify_once(x: Tensor, t_star: int, s: int, eta: float, ctx: ModelContext,
                rng: RngStream, *, guidance: GuidanceConfig | None = None,
                examples=None, run=0, step=0, use_checkpoints=True,
                check_box=True) -> Tensor:
    """One forward + denoise round, output clamped back to the data box.

    With guidance, each reverse step's mean is shifted against the gradient
    of the distance to the step input noised to the same timestep with the
    forward pass's own draw.
    """
    if check_box:
        _check_box(x)
    schedule = ctx.schedule
    dtype = x.data.dtype
    x_t, eps_fwd = forward_noise(x, t_star, schedule, rng, examples=examples, run=run, step=step)
    taus = subsequence(t_star, s, schedule.T)
    guided = guidance is not None and guidance.scale > 0.0
    eps_shared = Tensor(np.asarray(eps_fwd, dtype=dtype)) if guided else None

    cur = x_t
    for i in range(len(taus) - 1, 0, -1):
        sigma = sigma_tau(schedule, taus, i, eta)
        if sigma > 0.0:
            if examples is None:
                eps_i = rng.normal(cur.data.shape, step=step, denoise=i, draw=1, dtype=dtype)
            else:
                eps_i = rng.normal_batch(cur.data.shape[1:], examples, run=run, step=step,
                                         denoise=i, draw=1, dtype=dtype)
        else:
            eps_i = None

        tau_prev, tau_cur = taus[i - 1], taus[i]
        if guided:
            # eta=0 would zero the shift; fall back to the DDPM posterior
            # scale so DDIM guidance stays meaningful
            var_mult = sigma * sigma if sigma > 0.0 else sigma_tau(schedule, taus, i, 1.0) ** 2
            a_cur = schedule.alpha_bar(tau_cur)

            def segment(xx, ref, shared, _tp=tau_prev, _tc=tau_cur, _sg=sigma,
                        _vm=var_mult, _ac=a_cur, _eps=eps_i):
                target = ref * float(np.sqrt(_ac)) + shared * float(np.sqrt(1.0 - _ac))
                mean = denoise_mean(xx, schedule, _tp, _tc, _sg, ctx.eps_model)
                shift = distance_grad(guidance.kind, xx, target)
                mean = mean - shift * float(guidance.scale * _vm)
                if _sg > 0.0 and _eps is not None:
                    mean = mean + Tensor(np.asarray(_eps, dtype=dtype) * _sg)
                return mean

            args = (cur, x, eps_shared)
        else:

            def segment(xx, _tp=tau_prev, _tc=tau_cur, _sg=sigma, _eps=eps_i):
                mean = denoise_mean(xx, schedule, _tp, _tc, _sg, ctx.eps_model)
                if _sg > 0.0 and _eps is not None:
                    mean = mean + Tensor(np.asarray(_eps, dtype=dtype) * _sg)
                return mean

            args = (cur,)

        cur = checkpoint(segment, *args) if use_checkpoints else segment(*args)
    return clamp(cur, 0.0, 1.0)


def purify_multi(x: Tensor, plan: PurificationPlan, ctx: ModelContext, rng: RngStream,
                 *, examples=None, run=0, use_checkpoints=True) -> tuple[Tensor, list[tuple[int, int]]]:
    """Apply the plan's purification steps sequentially, each re-noising the
    previous step's output.  Returns (purified, executed (t*, s) trace)."""
    plan.validate_for(ctx.schedule.T)
    trace = []
    cur = x
    for p_idx, (t_star, s) in enumerate(plan.steps):
        cur = purify_once(cur, t_star, s, plan.eta, ctx, rng, guidance=plan.guidance,
                          examples=examples, run=run, step=p_idx,
                          use_checkpoints=use_checkpoints, check_box=(p_idx == 0))
        trace.append((t_star, s))
    return cur, trace


def defense_apply(defense: Defense, x: Tensor, ctx: ModelContext, rng: RngStream,
                  *, examples=None, run=0, use_checkpoints=True) -> Tensor:
    """One purification run of the configured defense."""
    if defense.kind == "identity":
        return x
    if defense.kind == "plan":
        out, _ = purify_multi(x, defense.plan, ctx, rng, examples=examples, run=run,
                              use_checkpoints=use_checkpoints)
        return out
    ode = defense.ode
    a_bar = alpha_bar_cont(ctx.schedule, ode.t_frac)
    dtype = x.data.dtype
    if examples is None:
        eps = rng.normal(x.data.shape, step=0, denoise=0, draw=0, dtype=dtype)
    else:
        eps = rng.normal_batch(x.data.shape[1:], examples, run=run, step=0,
                               denoise=0, draw=0, dtype=dtype)
    x_t = x * float(np.sqrt(a_bar)) + Tensor(eps * float(np.sqrt(1.0 - a_bar)))
    out = ode_denoise(x_t, ctx.schedule, ode.t_frac, ode.step_size, ctx.eps_model,
                      use_checkpoints=use_checkpoints)
    return clamp(out, 0.0, 1.0)


def average_probs(prob_rows: np.ndarray) -> int:
    """Mean the per-run probability rows and take argmax; ties resolve to
    the lowest class index (argmax returns the first maximum)."""
    return int(np.argmax(np.mean(prob_rows, axis=0)))


def ensemble_classify(x_np: np.ndarray, defense: Defense, ctx: ModelContext,
                      rng: RngStream, *, examples=None) -> tuple[np.ndarray, dict]:
    """Ensemble of purification runs: average the classifier's softmax over
    runs, then argmax.  Returns (labels, per-run record)."""
    runs = defense.runs
    x = Tensor(np.asarray(x_np, dtype=ctx.classifier.arrays[0].dtype))
    prob_runs = []
    for j in range(runs):
        xp = defense_apply(defense, x, ctx, rng, examples=examples, run=j,
                           use_checkpoints=False)
        logits = classifier_forward(ctx.classifier, xp)
        prob_runs.append(softmax(logits).data)
    probs = np.stack(prob_runs)  # [runs, B, C]
    mean_probs = probs.mean(axis=0)
    labels = np.argmax(mean_probs, axis=-1)
    record = {
        "per_run_labels": np.argmax(probs, axis=-1),
        "mean_probs": mean_probs,
    }
    return labels, record
