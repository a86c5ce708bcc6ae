"""Command-line interface.

Subcommands: gen-data, train-denoiser, train-classifier, train-at,
purify, attack, evaluate, preset, profile.  --json switches stdout to
machine-readable JSON; errors exit nonzero (2 for usage errors).
Values from --config take precedence over individual flags, which take
precedence over defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..attack.pgd import AttackConfig, attack_success, pgd_attack
from ..diffusion.rng import DEFENSE, RngStream
from ..diffusion.schedule import rescaled_schedule
from ..errors import PurelabError, UsageError
from ..models.nets import ClassifierParams, DenoiserParams
from ..models.train import AdvTrainConfig, TrainConfig, train_classifier, train_denoiser
from ..purify.engine import Defense, ModelContext, ensemble_classify
from .checkpoint_io import (
    file_hash,
    load_classifier,
    load_denoiser,
    save_classifier,
    save_denoiser,
)
from .config import load_config
from .dataset import make_dataset
from .experiment import (
    ExperimentConfig,
    attack_from_section,
    defense_from_section,
    evaluate,
    experiment_from_sections,
    select_subset,
)
from .presets import list_presets, run_preset


def _emit(args, payload: dict, human: str):
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(human)


def _defense_from_args(args) -> Defense:
    sec: dict = {"kind": "identity"}
    if getattr(args, "ode_t_frac", None) is not None:
        sec = dict(kind="ode", t_frac=args.ode_t_frac,
                   step_size=args.ode_step or 0.01,
                   ensemble_runs=getattr(args, "ensemble", 1) or 1)
    elif getattr(args, "plan", None):
        sec = dict(kind="plan", steps=args.plan, eta=args.eta,
                   ensemble_runs=getattr(args, "ensemble", 1) or 1,
                   guidance=getattr(args, "guidance", "none") or "none",
                   guidance_scale=getattr(args, "guidance_scale", 0.0) or 0.0)
    return defense_from_section(sec)


def _attack_from_args(args) -> AttackConfig:
    sec = dict(norm=args.norm, eps=args.eps, alpha=args.alpha,
               iterations=args.iterations, eot_samples=args.eot,
               pathway=args.pathway, seed=args.seed)
    if args.budget:
        sec["budget"] = args.budget
    if getattr(args, "ode_attack_step", None) is not None:
        sec["ode_attack_step"] = args.ode_attack_step
    if getattr(args, "attack_eta", None) is not None:
        sec["attack_eta"] = args.attack_eta
    return attack_from_section(sec)


def _load_ctx(args) -> ModelContext:
    return ModelContext(rescaled_schedule(), load_denoiser(args.denoiser),
                        load_classifier(args.classifier))


def cmd_gen_data(args) -> int:
    ds = make_dataset(args.seed, args.n, args.classes)
    np.savez(args.out, images=ds.images, labels=ds.labels, is_train=ds.is_train,
             seed=ds.seed)
    _emit(args, dict(out=args.out, n=len(ds.images), classes=ds.classes),
          f"wrote {len(ds.images)} images ({ds.classes} classes) to {args.out}")
    return 0


def cmd_train_denoiser(args) -> int:
    ds = make_dataset(args.data_seed, args.n, args.classes)
    xtr, _ = ds.split(True)
    schedule = rescaled_schedule()
    params = DenoiserParams.init(ds.image_dim, tuple(args.hidden), t_max=schedule.T,
                                 seed=args.init_seed)
    params, curve = train_denoiser(params, xtr, schedule,
                                   TrainConfig(epochs=args.epochs, lr=args.lr,
                                               batch_size=args.batch_size, seed=args.seed))
    digest = save_denoiser(params, args.out)
    _emit(args, dict(out=args.out, hash=digest, first_loss=curve[0], final_loss=curve[-1]),
          f"denoiser saved to {args.out} (hash {digest[:12]}); "
          f"loss {curve[0]:.4f} -> {curve[-1]:.4f}")
    return 0


def _train_classifier_common(args, adversarial: AdvTrainConfig | None) -> int:
    ds = make_dataset(args.data_seed, args.n, args.classes)
    xtr, ytr = ds.split(True)
    xte, yte = ds.split(False)
    params = ClassifierParams.init(ds.image_dim, tuple(args.hidden), ds.classes,
                                   seed=args.init_seed)
    params, curve = train_classifier(params, xtr, ytr,
                                     TrainConfig(epochs=args.epochs, lr=args.lr,
                                                 batch_size=args.batch_size, seed=args.seed,
                                                 adversarial=adversarial))
    from ..models.train import accuracy

    acc = accuracy(params, xte, yte)
    digest = save_classifier(params, args.out)
    _emit(args, dict(out=args.out, hash=digest, final_loss=curve[-1], heldout_accuracy=acc),
          f"classifier saved to {args.out} (hash {digest[:12]}); held-out accuracy {acc:.3f}")
    return 0


def cmd_train_classifier(args) -> int:
    return _train_classifier_common(args, None)


def cmd_train_at(args) -> int:
    adv = AdvTrainConfig(iterations=args.pgd_iterations, eps=args.eps, alpha=args.pgd_alpha)
    return _train_classifier_common(args, adv)


def cmd_purify(args) -> int:
    ctx = _load_ctx(args)
    defense = _defense_from_args(args)
    if defense.kind == "identity":
        raise UsageError("purify needs --plan or --ode-t-frac")
    ds = make_dataset(args.data_seed, args.n, args.classes)
    idx = select_subset(ds, args.subset, args.subset_seed)
    x = ds.images[idx].reshape(len(idx), -1).astype(np.float32)
    rng = RngStream(args.seed, DEFENSE)
    labels, _ = ensemble_classify(x, defense, ctx, rng, examples=idx)
    acc = float(np.mean(labels == ds.labels[idx]))
    from ..purify.engine import defense_apply
    from ..autodiff import Tensor

    purified = defense_apply(defense, Tensor(x), ctx, rng, examples=idx, run=0,
                             use_checkpoints=False).data
    if args.out:
        np.savez(args.out, purified=purified, indices=idx, labels=ds.labels[idx])
    _emit(args, dict(accuracy=acc, subset=len(idx), defense=defense.describe(),
                     out=args.out),
          f"purified accuracy {acc:.3f} over {len(idx)} examples ({defense.describe()})")
    return 0


def cmd_attack(args) -> int:
    ctx = _load_ctx(args)
    defense = _defense_from_args(args)
    attack_cfg = _attack_from_args(args)
    ds = make_dataset(args.data_seed, args.n, args.classes)
    idx = select_subset(ds, args.subset, args.subset_seed)
    x = ds.images[idx].reshape(len(idx), -1).astype(np.float32)
    y = ds.labels[idx]
    adv = pgd_attack(x, y, defense, ctx, attack_cfg, examples=idx)
    rng = RngStream(attack_cfg.seed, DEFENSE)
    labels, _ = ensemble_classify(adv, defense, ctx, rng, examples=idx)
    success = attack_success(labels, y)
    if args.out:
        np.savez(args.out, adversarial=adv, indices=idx, labels=y)
    _emit(args, dict(attack_success=success, robust_accuracy=1.0 - success,
                     subset=len(idx), pathway=attack_cfg.pathway, out=args.out),
          f"attack success {success:.3f} (robust accuracy {1 - success:.3f}) "
          f"over {len(idx)} examples via {attack_cfg.pathway}")
    return 0


def cmd_evaluate(args) -> int:
    if args.config:
        sections = load_config(args.config)
        cfg = experiment_from_sections(sections)
    else:
        cfg = ExperimentConfig(
            dataset_seed=args.data_seed, dataset_n=args.n, classes=args.classes,
            defense=_defense_from_args(args),
            attack=_attack_from_args(args) if args.plan or args.ode_t_frac is not None
            or args.pathway != "full" else None,
            subset=args.subset, runs=args.runs, seed=args.seed,
        )
    ctx = _load_ctx(args)
    report = evaluate(cfg, ctx)
    if args.json:
        print(report.to_json())
    else:
        print(f"standard accuracy {report.standard_mean:.2f} +- {report.standard_std:.2f}")
        print(f"robust accuracy   {report.robust_mean:.2f} +- {report.robust_std:.2f}")
        print(f"config hash {report.config_hashes['experiment']}  "
              f"failures {len(report.failures)}  invalid {report.invalid}")
    return 0


def cmd_preset(args) -> int:
    if args.list:
        _emit(args, dict(presets=list_presets()), "\n".join(list_presets()))
        return 0
    if not args.name:
        raise UsageError(f"preset name required; available: {', '.join(list_presets())}")
    scale = dict(subset=args.subset, iterations=args.iterations,
                 eot_samples=args.eot, runs=args.runs)
    rows, path = run_preset(args.name, out_dir=args.out, scale=scale)
    if args.json:
        print(json.dumps(dict(preset=args.name, csv=str(path), rows=rows),
                         indent=2, default=str))
    else:
        cols = list(rows[0].keys())
        print(" | ".join(cols))
        for row in rows:
            print(" | ".join(str(row[c]) for c in cols))
        if path:
            print(f"csv written to {path}")
    return 0


def cmd_profile(args) -> int:
    scale = dict(subset=None, iterations=None, eot_samples=None, runs=None)
    rows, path = run_preset("profiling", out_dir=args.out, scale=scale)
    if args.json:
        print(json.dumps(dict(rows=rows, csv=str(path)), indent=2, default=str))
    else:
        for row in rows:
            print(f"s={row['denoise_steps']:>2} checkpointing={row['checkpointing']!s:>5} "
                  f"peak_saved={row['peak_saved_activations']:>5} "
                  f"wall={row['wall_s_per_iteration']:.4f}s")
    return 0


def _add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--data-seed", type=int, default=7)
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--classes", type=int, default=4)


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--denoiser", required=True, help="denoiser checkpoint path")
    p.add_argument("--classifier", required=True, help="classifier checkpoint path")


def _add_defense_flags(p: argparse.ArgumentParser):
    p.add_argument("--plan", help="purification plan, '{30x4,50x2,125x2}' or '(30,5),(50,5)'")
    p.add_argument("--eta", type=float, default=1.0, help="sampler: 1=DDPM, 0=DDIM")
    p.add_argument("--ensemble", type=int, default=1)
    p.add_argument("--guidance", choices=("none", "mse", "ssim"), default="none")
    p.add_argument("--guidance-scale", type=float, default=0.0)
    p.add_argument("--ode-t-frac", type=float, default=None,
                   help="ODE defense: forward-noise fraction of the schedule")
    p.add_argument("--ode-step", type=float, default=None, help="ODE defense Euler step")


def _add_attack_flags(p: argparse.ArgumentParser):
    p.add_argument("--norm", choices=("linf", "l2"), default="linf")
    p.add_argument("--eps", type=float, default=8.0 / 255.0)
    p.add_argument("--alpha", type=float, default=0.007)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--eot", type=int, default=20)
    p.add_argument("--pathway", choices=("full", "surrogate", "bpda", "adjoint"),
                   default="full")
    p.add_argument("--budget", help="surrogate: '(30,1),(50,1),(125,5)' or '5,5,2'")
    p.add_argument("--ode-attack-step", type=float, default=None)
    p.add_argument("--attack-eta", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="purelab",
                                     description="diffusion-based purification lab")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-denoiser", help="train the noise-prediction model")
    _add_data_flags(p)
    p.add_argument("--hidden", type=int, nargs="+", default=[256, 256])
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--init-seed", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_denoiser)

    for name, fn in (("train-classifier", cmd_train_classifier), ("train-at", cmd_train_at)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')}")
        _add_data_flags(p)
        p.add_argument("--hidden", type=int, nargs="+", default=[64, 32])
        p.add_argument("--epochs", type=int, default=30)
        p.add_argument("--lr", type=float, default=2e-3)
        p.add_argument("--batch-size", type=int, default=64)
        p.add_argument("--seed", type=int, default=5)
        p.add_argument("--init-seed", type=int, default=1)
        p.add_argument("--out", required=True)
        if name == "train-at":
            p.add_argument("--pgd-iterations", type=int, default=10)
            p.add_argument("--eps", type=float, default=8.0 / 255.0)
            p.add_argument("--pgd-alpha", type=float, default=2.0 / 255.0)
        p.set_defaults(func=fn)

    p = sub.add_parser("purify", help="purify an evaluation subset and classify it")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_defense_flags(p)
    p.add_argument("--subset", type=int, default=64)
    p.add_argument("--subset-seed", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_purify)

    p = sub.add_parser("attack", help="run a PGD attack against a defense")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_defense_flags(p)
    _add_attack_flags(p)
    p.add_argument("--subset", type=int, default=32)
    p.add_argument("--subset-seed", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="seeded multi-run evaluation")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_defense_flags(p)
    _add_attack_flags(p)
    p.add_argument("--config", help="experiment config file (overrides flags)")
    p.add_argument("--subset", type=int, default=256)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=1234)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("preset", help="run a paper-mapped experiment preset")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    p.add_argument("--out", default="purelab_runs")
    p.add_argument("--subset", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--eot", type=int)
    p.add_argument("--runs", type=int)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("profile", help="memory/time profile of one PGD iteration")
    p.add_argument("--out", default="purelab_runs")
    p.set_defaults(func=cmd_profile)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except PurelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
