"""PGD with EOT and the gradient pathways through the defense.

Pathways:
  full       back-propagate the loss through the entire defense
  surrogate  back-propagate through a shorter stand-in process
  bpda       defense treated as identity on the backward pass
  adjoint    gradient via backward integration of the ODE defense

The attacker's randomness is domain-separated from the defense's: EOT
samples simulate the defense with attacker-side draws, and the defended
evaluation afterwards uses noise the attacker never saw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tape, Tensor, cross_entropy
from ..diffusion.rng import ATTACK, RngStream
from ..errors import AttackError, ConfigurationError
from ..models.nets import classifier_forward
from ..purify.engine import Defense, ModelContext, OdeConfig, defense_apply
from ..purify.plan import PurificationPlan, SurrogateSpec, build_surrogate
from .adjoint import adjoint_input_gradient
from .threat import ThreatModel, project

PATHWAYS = ("full", "surrogate", "bpda", "adjoint")


@dataclass(frozen=True)
class AttackConfig:
    """Threat model, PGD settings and the gradient pathway selection.

    surrogate names the attacker's stand-in process: either a SurrogateSpec
    (per-step denoise budgets shadowing the defense plan) or an explicit
    tuple of (forward, denoise) steps, e.g. a collapsed process.  eta and
    guidance are inherited from the defense unless attack_eta overrides
    the sampler.  ode_attack_step is the attacker's integration step for
    ODE defenses (surrogate and adjoint pathways).
    """

    norm: str = "linf"
    eps: float = 8.0 / 255.0
    alpha: float = 0.007
    iterations: int = 200
    eot_samples: int = 20
    pathway: str = "full"
    surrogate: SurrogateSpec | tuple | None = None
    attack_eta: float | None = None
    ode_attack_step: float | None = None
    seed: int = 0
    random_start: bool = False

    def __post_init__(self):
        if self.eps < 0 or self.alpha <= 0:
            raise ConfigurationError("eps must be non-negative and alpha positive")
        if self.iterations < 1 or self.eot_samples < 1:
            raise ConfigurationError("iterations and eot_samples must be >= 1")
        if self.pathway not in PATHWAYS:
            raise ConfigurationError(f"pathway must be one of {PATHWAYS}")

    def threat_model(self) -> ThreatModel:
        return ThreatModel(norm=self.norm, eps=self.eps)


@dataclass
class AttackStats:
    """Instrumentation filled in while an attack runs."""

    gradient_calls: int = 0
    peak_saved: int = 0

    def update_peak(self, value: int):
        if value > self.peak_saved:
            self.peak_saved = value


def attacker_view(defense: Defense, cfg: AttackConfig) -> Defense:
    """The defense the attacker differentiates through.

    full/bpda/adjoint see the defense itself; surrogate swaps in the
    configured stand-in process (inheriting eta and guidance unless
    overridden) or a coarser ODE integration.
    """
    if defense.kind == "identity":
        return defense
    if defense.kind == "ode":
        if cfg.pathway == "surrogate" and cfg.ode_attack_step is not None:
            return Defense(ode=OdeConfig(defense.ode.t_frac, cfg.ode_attack_step))
        return defense
    plan = defense.plan
    if cfg.pathway == "surrogate":
        if isinstance(cfg.surrogate, SurrogateSpec):
            plan = build_surrogate(plan, cfg.surrogate)
        elif cfg.surrogate is not None:
            plan = plan.with_(steps=tuple((int(t), int(s)) for t, s in cfg.surrogate))
    if cfg.attack_eta is not None:
        plan = plan.with_(eta=cfg.attack_eta)
    return Defense(plan=plan, ensemble_runs=1)


def loss_gradient(x_np: np.ndarray, labels: np.ndarray, defense: Defense,
                  ctx: ModelContext, rng: RngStream, *, pathway: str,
                  examples, run: int, ode_attack_step: float | None = None,
                  stats: AttackStats | None = None) -> np.ndarray:
    """Single-sample gradient of the defended cross-entropy loss at x."""
    dtype = x_np.dtype
    if pathway == "adjoint":
        if defense.kind != "ode":
            raise ConfigurationError("adjoint pathway requires an ODE defense")
        step = ode_attack_step if ode_attack_step is not None else defense.ode.step_size
        g = adjoint_input_gradient(x_np, labels, defense.ode.t_frac, step, ctx, rng,
                                   examples=examples, run=run)
        if stats is not None:
            stats.gradient_calls += 1
        return g.astype(dtype)

    if pathway == "bpda":
        purified = defense_apply(defense, Tensor(x_np), ctx, rng, examples=examples,
                                 run=run, use_checkpoints=False)
        tape = Tape()
        x_hat = tape.watch(Tensor(purified.data))
        loss = cross_entropy(classifier_forward(ctx.classifier, x_hat), labels)
        g = tape.gradients(loss)[x_hat.uid].data
    else:
        tape = Tape()
        x = tape.watch(Tensor(x_np))
        purified = defense_apply(defense, x, ctx, rng, examples=examples, run=run)
        loss = cross_entropy(classifier_forward(ctx.classifier, purified), labels)
        grads = tape.gradients(loss)
        g = grads[x.uid].data if x.uid in grads else np.zeros_like(x_np)
    if stats is not None:
        stats.gradient_calls += 1
        stats.update_peak(tape.peak_saved)
    return g.astype(dtype)


def eot_gradient(x_np: np.ndarray, labels: np.ndarray, defense: Defense,
                 ctx: ModelContext, rng: RngStream, n: int, *, pathway: str,
                 examples, run_base: int, ode_attack_step: float | None = None,
                 stats: AttackStats | None = None) -> np.ndarray:
    """Mean of n per-sample gradients, each with fresh rng coordinates."""
    if n < 1:
        raise ConfigurationError("eot_samples must be >= 1")
    acc = np.zeros_like(x_np, dtype=np.float64)
    for j in range(n):
        g = loss_gradient(x_np, labels, defense, ctx, rng, pathway=pathway,
                          examples=examples, run=run_base + j,
                          ode_attack_step=ode_attack_step, stats=stats)
        acc += g.astype(np.float64)
    return (acc / n).astype(x_np.dtype)


def pgd_attack(x0: np.ndarray, labels: np.ndarray, defense: Defense, ctx: ModelContext,
               cfg: AttackConfig, *, examples=None, stats: AttackStats | None = None) -> np.ndarray:
    """Iterative ascent on the defended loss under the threat model.

    l-inf uses the sign step, l2 the normalized-gradient step; every
    iterate is projected onto the ball and the box.  Starts at the clean
    point unless random_start is set.
    """
    tm = cfg.threat_model()
    x0 = np.asarray(x0)
    if cfg.eps == 0.0:
        return x0.copy()
    if examples is None:
        examples = np.arange(len(x0))
    rng = RngStream(cfg.seed, ATTACK)
    view = attacker_view(defense, cfg)
    pathway = cfg.pathway if cfg.pathway in ("bpda", "adjoint") else "full"

    x = x0.copy()
    if cfg.random_start:
        start = rng.normal_batch(x0.shape[1:], examples, run=0, step=0, draw=2, dtype=np.float64)
        if cfg.norm == "linf":
            x = x0 + cfg.eps * np.sign(start).astype(x0.dtype)
        else:
            x = x0 + (0.5 * cfg.eps * start / max(np.linalg.norm(start), 1e-30)).astype(x0.dtype)
        x = project(x, x0, tm)

    for i in range(cfg.iterations):
        g = eot_gradient(x, labels, view, ctx, rng, cfg.eot_samples,
                         pathway=pathway, examples=examples,
                         run_base=i * cfg.eot_samples,
                         ode_attack_step=cfg.ode_attack_step, stats=stats)
        if not np.all(np.isfinite(g)):
            raise AttackError(f"non-finite gradient at iteration {i}")
        if cfg.norm == "linf":
            x = x + cfg.alpha * np.sign(g).astype(x.dtype)
        else:
            flat = g.reshape(len(g), -1)
            norms = np.linalg.norm(flat, axis=-1, keepdims=True)
            direction = np.where(norms > 0, flat / np.maximum(norms, 1e-30), 0.0)
            x = x + cfg.alpha * direction.reshape(g.shape).astype(x.dtype)
        x = project(x, x0, tm)
    return x


def attack_success(labels_pred: np.ndarray, labels_true: np.ndarray) -> float:
    """Fraction of examples the defended classifier now gets wrong."""
    return float(np.mean(labels_pred != labels_true))
