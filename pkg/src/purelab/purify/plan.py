"""Purification plans, guidance configuration and surrogate construction.

Two textual notations are parsed:

  schedule strings   "{30x4,50x2,125x2}"   forward-step counts with
                     multiplicities; denoise steps default to the forward
                     steps of that purification step
  process strings    "(30,5),(50,5)" or "(30,1)x4,(50,1)x2"    explicit
                     (forward, denoise) pairs, optional multiplicity

A surrogate keeps the defense's forward-step structure and reduces the
per-step denoise budget; arbitrary attack processes (including collapsed
ones) are expressed as explicit plans instead.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from ..errors import ConfigurationError

GUIDANCE_KINDS = ("mse", "ssim")


@dataclass(frozen=True)
class GuidanceConfig:
    """Distance-gradient guidance of the denoising mean."""

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in GUIDANCE_KINDS:
            raise ConfigurationError(f"guidance kind must be one of {GUIDANCE_KINDS}")
        if self.scale < 0:
            raise ConfigurationError("guidance scale must be >= 0")


@dataclass(frozen=True)
class PurificationPlan:
    """Ordered (forward steps, denoise steps) pairs plus sampler settings."""

    steps: tuple[tuple[int, int], ...]
    eta: float = 1.0
    guidance: GuidanceConfig | None = None
    ensemble_runs: int = 1

    def __post_init__(self):
        if not self.steps:
            raise ConfigurationError("plan needs at least one purification step")
        for t_star, s in self.steps:
            if t_star < 1 or not 1 <= s <= t_star:
                raise ConfigurationError(f"invalid step (t*={t_star}, s={s})")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError(f"eta={self.eta} outside [0, 1]")
        if self.ensemble_runs < 1:
            raise ConfigurationError("ensemble_runs must be >= 1")

    def validate_for(self, T: int):
        for t_star, _ in self.steps:
            if t_star > T:
                raise ConfigurationError(f"plan step t*={t_star} exceeds schedule T={T}")

    @property
    def forward_trace(self) -> list[int]:
        return [t for t, _ in self.steps]

    @property
    def total_forward_steps(self) -> int:
        return sum(self.forward_trace)

    def canonical(self) -> str:
        parts = [f"({t},{s})" for t, s in self.steps]
        guid = "none" if self.guidance is None else f"{self.guidance.kind}:{self.guidance.scale!r}"
        return f"steps={','.join(parts)};eta={self.eta!r};guidance={guid};ensemble={self.ensemble_runs}"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]

    def with_(self, **kw) -> "PurificationPlan":
        cur = dict(steps=self.steps, eta=self.eta, guidance=self.guidance,
                   ensemble_runs=self.ensemble_runs)
        cur.update(kw)
        return PurificationPlan(**cur)


@dataclass(frozen=True)
class SurrogateSpec:
    """Per-purification-step denoise budgets shadowing a defense plan."""

    budgets: tuple[int, ...]

    def __post_init__(self):
        if not self.budgets or any(b < 1 for b in self.budgets):
            raise ConfigurationError("surrogate budgets must be positive")


def build_surrogate(plan: PurificationPlan, spec: SurrogateSpec) -> PurificationPlan:
    """Shadow plan with identical forward steps and reduced denoise budgets."""
    if len(spec.budgets) != len(plan.steps):
        raise ConfigurationError(
            f"budget lists {len(spec.budgets)} steps, defense has {len(plan.steps)}"
        )
    steps = []
    for (t_star, s), budget in zip(plan.steps, spec.budgets):
        if budget > s:
            raise ConfigurationError(f"budget {budget} exceeds defense denoise steps {s}")
        steps.append((t_star, budget))
    return plan.with_(steps=tuple(steps))


_SCHEDULE_RE = re.compile(r"^\{(.+)\}$")
_PAIR_RE = re.compile(r"^\((\d+)\s*,\s*(\d+)\)(?:x(\d+))?$")


def parse_schedule_string(text: str) -> tuple[tuple[int, int], ...]:
    """Parse "{30x4,50x2,125x2}": forward steps with multiplicities,
    denoise steps equal to forward steps."""
    m = _SCHEDULE_RE.match(text.strip().replace(" ", ""))
    if not m:
        raise ConfigurationError(f"malformed schedule string {text!r}")
    steps: list[tuple[int, int]] = []
    for item in m.group(1).split(","):
        if "x" in item:
            t_str, _, n_str = item.partition("x")
        else:
            t_str, n_str = item, "1"
        try:
            t_star, count = int(t_str), int(n_str)
        except ValueError as exc:
            raise ConfigurationError(f"malformed schedule item {item!r}") from exc
        if count < 1:
            raise ConfigurationError(f"multiplicity must be >= 1 in {item!r}")
        steps.extend([(t_star, t_star)] * count)
    return tuple(steps)


def parse_process_string(text: str) -> tuple[tuple[int, int], ...]:
    """Parse "(30,5),(50,5)" with optional "x4" multiplicities."""
    cleaned = text.strip().replace(" ", "")
    items = re.findall(r"\(\d+,\d+\)(?:x\d+)?", cleaned)
    if not items or "".join(items).replace(",", "") != cleaned.replace(",", ""):
        raise ConfigurationError(f"malformed process string {text!r}")
    steps: list[tuple[int, int]] = []
    for item in items:
        m = _PAIR_RE.match(item)
        if not m:
            raise ConfigurationError(f"malformed process item {item!r}")
        t_star, s = int(m.group(1)), int(m.group(2))
        count = int(m.group(3)) if m.group(3) else 1
        steps.extend([(t_star, s)] * count)
    return tuple(steps)


def parse_plan_steps(text: str) -> tuple[tuple[int, int], ...]:
    """Accept either notation, dispatching on the leading brace."""
    text = text.strip()
    if text.startswith("{"):
        return parse_schedule_string(text)
    return parse_process_string(text)


def format_steps(steps) -> str:
    return ",".join(f"({t},{s})" for t, s in steps)
