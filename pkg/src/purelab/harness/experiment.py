"""Seeded multi-run evaluation: standard and robust accuracy with
mean/std over runs, per-example verdicts and config hashes.

A single evaluation run r uses seed base+r for both the defense's noise
stream and the attacker; the defense evaluation of clean and adversarial
inputs reuses identical rng coordinates, so a degenerate attack (eps = 0)
reproduces the standard accuracy bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..attack.pgd import AttackConfig, AttackStats, pgd_attack
from ..diffusion.rng import DEFENSE, RngStream
from ..errors import ConfigurationError, PurelabError
from ..purify.engine import Defense, ModelContext, OdeConfig, ensemble_classify
from ..purify.plan import (
    GuidanceConfig,
    PurificationPlan,
    SurrogateSpec,
    format_steps,
    parse_plan_steps,
)
from .config import config_hash
from .dataset import Dataset, make_dataset

SUBSET_SEED = 512  # pinned sampling seed for the fixed evaluation subset


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_seed: int = 7
    dataset_n: int = 2048
    classes: int = 4
    defense: Defense = field(default_factory=Defense)
    attack: AttackConfig | None = None
    subset: int = 256
    runs: int = 5
    seed: int = 1234
    subset_seed: int = SUBSET_SEED

    def __post_init__(self):
        if self.subset < 1 or self.runs < 1:
            raise ConfigurationError("subset and runs must be >= 1")


@dataclass
class EvalReport:
    standard_mean: float
    standard_std: float
    robust_mean: float
    robust_std: float
    per_run: list[dict]
    config_hashes: dict[str, str]
    failures: list[dict]
    invalid: bool
    wall_clock_s: float
    peak_saved: int
    gradient_calls: int
    subset_indices: list[int]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# -- config (de)serialization -------------------------------------------------


def defense_sections(defense: Defense) -> dict:
    sec: dict[str, object] = {"kind": defense.kind}
    if defense.kind == "plan":
        plan = defense.plan
        sec.update(
            steps=format_steps(plan.steps),
            eta=plan.eta,
            ensemble_runs=defense.runs,
            guidance="none" if plan.guidance is None else plan.guidance.kind,
            guidance_scale=0.0 if plan.guidance is None else plan.guidance.scale,
        )
    elif defense.kind == "ode":
        sec.update(t_frac=defense.ode.t_frac, step_size=defense.ode.step_size,
                   ensemble_runs=defense.runs)
    return sec


def defense_from_section(sec: dict) -> Defense:
    kind = str(sec.get("kind", "identity"))
    ensemble = int(sec.get("ensemble_runs", 1))
    if kind == "identity":
        return Defense()
    if kind == "ode":
        return Defense(ode=OdeConfig(float(sec["t_frac"]), float(sec["step_size"])),
                       ensemble_runs=ensemble)
    if kind != "plan":
        raise ConfigurationError(f"unknown defense kind {kind!r}")
    guidance_kind = str(sec.get("guidance", "none"))
    guidance = None
    if guidance_kind != "none":
        guidance = GuidanceConfig(guidance_kind, float(sec.get("guidance_scale", 0.0)))
    plan = PurificationPlan(
        steps=parse_plan_steps(str(sec["steps"])),
        eta=float(sec.get("eta", 1.0)),
        guidance=guidance,
        ensemble_runs=ensemble,
    )
    return Defense(plan=plan)


def attack_sections(cfg: AttackConfig) -> dict:
    sec: dict[str, object] = dict(
        norm=cfg.norm, eps=cfg.eps, alpha=cfg.alpha, iterations=cfg.iterations,
        eot_samples=cfg.eot_samples, pathway=cfg.pathway, seed=cfg.seed,
        random_start=cfg.random_start,
    )
    if isinstance(cfg.surrogate, SurrogateSpec):
        sec["budget"] = ",".join(str(b) for b in cfg.surrogate.budgets)
    elif cfg.surrogate is not None:
        sec["budget"] = format_steps(cfg.surrogate)
    if cfg.attack_eta is not None:
        sec["attack_eta"] = cfg.attack_eta
    if cfg.ode_attack_step is not None:
        sec["ode_attack_step"] = cfg.ode_attack_step
    return sec


def attack_from_section(sec: dict) -> AttackConfig:
    budget = sec.get("budget")
    surrogate = None
    if budget is not None:
        text = str(budget)
        surrogate = parse_plan_steps(text) if "(" in text else SurrogateSpec(
            tuple(int(b) for b in text.split(","))
        )
    return AttackConfig(
        norm=str(sec.get("norm", "linf")),
        eps=float(sec.get("eps", 8.0 / 255.0)),
        alpha=float(sec.get("alpha", 0.007)),
        iterations=int(sec.get("iterations", 200)),
        eot_samples=int(sec.get("eot_samples", 20)),
        pathway=str(sec.get("pathway", "full")),
        surrogate=surrogate,
        attack_eta=float(sec["attack_eta"]) if "attack_eta" in sec else None,
        ode_attack_step=float(sec["ode_attack_step"]) if "ode_attack_step" in sec else None,
        seed=int(sec.get("seed", 0)),
        random_start=str(sec.get("random_start", "false")).lower() in ("true", "1"),
    )


def experiment_sections(cfg: ExperimentConfig) -> dict[str, dict]:
    sections = {
        "dataset": dict(seed=cfg.dataset_seed, n=cfg.dataset_n, classes=cfg.classes),
        "defense": defense_sections(cfg.defense),
        "eval": dict(subset=cfg.subset, runs=cfg.runs, seed=cfg.seed,
                     subset_seed=cfg.subset_seed),
    }
    if cfg.attack is not None:
        sections["attack"] = attack_sections(cfg.attack)
    return sections


def experiment_hashes(cfg: ExperimentConfig) -> dict[str, str]:
    sections = experiment_sections(cfg)
    hashes = {"experiment": config_hash(sections),
              "defense": config_hash({"defense": sections["defense"]})}
    if "attack" in sections:
        hashes["attack"] = config_hash({"attack": sections["attack"]})
    return hashes


def experiment_from_sections(sections: dict[str, dict]) -> ExperimentConfig:
    ds = sections.get("dataset", {})
    ev = sections.get("eval", {})
    return ExperimentConfig(
        dataset_seed=int(ds.get("seed", 7)),
        dataset_n=int(ds.get("n", 2048)),
        classes=int(ds.get("classes", 4)),
        defense=defense_from_section(sections.get("defense", {})),
        attack=attack_from_section(sections["attack"]) if "attack" in sections else None,
        subset=int(ev.get("subset", 256)),
        runs=int(ev.get("runs", 5)),
        seed=int(ev.get("seed", 1234)),
        subset_seed=int(ev.get("subset_seed", SUBSET_SEED)),
    )


# -- evaluation ----------------------------------------------------------------


def select_subset(dataset: Dataset, subset: int, subset_seed: int) -> np.ndarray:
    """Fixed evaluation subset drawn from the test split."""
    test_idx = np.flatnonzero(~dataset.is_train)
    if subset > len(test_idx):
        raise ConfigurationError(f"subset {subset} exceeds test split size {len(test_idx)}")
    rng = np.random.default_rng(subset_seed)
    return np.sort(rng.choice(test_idx, size=subset, replace=False))


def _classify_with_fallback(x, defense, ctx, rng, examples, failures, run, stage):
    """Batch ensemble classification; on failure, isolate per example."""
    try:
        labels, _ = ensemble_classify(x, defense, ctx, rng, examples=examples)
        return labels, np.zeros(len(x), dtype=bool)
    except PurelabError:
        labels = np.full(len(x), -1, dtype=np.int64)
        failed = np.zeros(len(x), dtype=bool)
        for i in range(len(x)):
            try:
                li, _ = ensemble_classify(x[i : i + 1], defense, ctx, rng,
                                          examples=examples[i : i + 1])
                labels[i] = li[0]
            except PurelabError as exc:
                failed[i] = True
                failures.append(dict(run=run, example=int(examples[i]), stage=stage,
                                     error=str(exc)))
        return labels, failed


def _attack_with_fallback(x, y, defense, ctx, attack_cfg, examples, failures, run, stats):
    try:
        return pgd_attack(x, y, defense, ctx, attack_cfg, examples=examples, stats=stats), \
            np.zeros(len(x), dtype=bool)
    except PurelabError:
        adv = x.copy()
        failed = np.zeros(len(x), dtype=bool)
        for i in range(len(x)):
            try:
                adv[i] = pgd_attack(x[i : i + 1], y[i : i + 1], defense, ctx, attack_cfg,
                                    examples=examples[i : i + 1], stats=stats)[0]
            except PurelabError as exc:
                failed[i] = True
                failures.append(dict(run=run, example=int(examples[i]), stage="attack",
                                     error=str(exc)))
        return adv, failed


def evaluate(cfg: ExperimentConfig, ctx: ModelContext, dataset: Dataset | None = None) -> EvalReport:
    """Standard and robust accuracy over cfg.runs seeded runs.

    Failed examples are recorded and counted as incorrect; a report with
    more than 1% failures is flagged invalid.
    """
    start = time.perf_counter()
    if dataset is None:
        dataset = make_dataset(cfg.dataset_seed, cfg.dataset_n, cfg.classes)
    if cfg.defense.kind == "plan":
        cfg.defense.plan.validate_for(ctx.schedule.T)
    idx = select_subset(dataset, cfg.subset, cfg.subset_seed)
    x = dataset.images[idx].reshape(len(idx), -1).astype(np.float32)
    y = dataset.labels[idx]

    per_run, failures = [], []
    stats = AttackStats()
    for r in range(cfg.runs):
        run_seed = cfg.seed + r
        defense_rng = RngStream(run_seed, DEFENSE)
        std_labels, std_failed = _classify_with_fallback(
            x, cfg.defense, ctx, defense_rng, idx, failures, r, "standard")
        clean_correct = (std_labels == y) & ~std_failed

        if cfg.attack is not None:
            attack_cfg = replace(cfg.attack, seed=run_seed)
            if attack_cfg.eps == 0.0:
                adv, adv_failed = x.copy(), np.zeros(len(x), dtype=bool)
            else:
                adv, adv_failed = _attack_with_fallback(
                    x, y, cfg.defense, ctx, attack_cfg, idx, failures, r, stats)
            rob_labels, rob_cls_failed = _classify_with_fallback(
                adv, cfg.defense, ctx, defense_rng, idx, failures, r, "robust")
            adv_correct = (rob_labels == y) & ~adv_failed & ~rob_cls_failed
        else:
            adv_correct = clean_correct

        per_run.append(dict(
            seed=run_seed,
            standard=100.0 * float(np.mean(clean_correct)),
            robust=100.0 * float(np.mean(adv_correct)),
            verdicts=[
                dict(example=int(i), clean=bool(c), robust=bool(a))
                for i, c, a in zip(idx, clean_correct, adv_correct)
            ],
        ))

    standard = np.array([r["standard"] for r in per_run])
    robust = np.array([r["robust"] for r in per_run])
    n_checks = cfg.runs * len(idx) * (3 if cfg.attack is not None else 1)
    invalid = len(failures) > 0.01 * n_checks
    return EvalReport(
        standard_mean=float(standard.mean()),
        standard_std=float(standard.std()),
        robust_mean=float(robust.mean()),
        robust_std=float(robust.std()),
        per_run=per_run,
        config_hashes=experiment_hashes(cfg),
        failures=failures,
        invalid=invalid,
        wall_clock_s=time.perf_counter() - start,
        peak_saved=stats.peak_saved,
        gradient_calls=stats.gradient_calls,
        subset_indices=[int(i) for i in idx],
    )
