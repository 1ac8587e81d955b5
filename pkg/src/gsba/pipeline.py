"""Glue between configs and the harness: artifact paths, caching, and the
command-level workflows.

Expensive artifacts (target checkpoints, evaluation sets, trained surrogate
bundles) are cached in the experiment directory keyed by the configuration
that produced them, so re-running a command reuses instead of retraining.
Final report directories are never silently clobbered.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .config import ExperimentConfig
from .data import EvalSet, build_eval_set, load_dataset
from .harness import (
    ABLATION_VARIANTS,
    run_ablation,
    run_baseline_surrogate_pgd,
    run_budget_sweep,
    run_gsba,
    variant_schedule,
)
from .oracle import BlackBoxOracle, QueryLedger
from .surrogate import SurrogateBundle, train_surrogate
from .targets import TargetTrainConfig, load_target, train_target


class OutputExists(RuntimeError):
    """Refusing to overwrite an existing report directory."""


def _short_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()[:10]


def target_id(cfg: ExperimentConfig) -> str:
    return f"{cfg.dataset}-{cfg.arch}-seed{cfg.seed}"


def target_path(cfg: ExperimentConfig, workdir) -> Path:
    return Path(workdir) / f"target_{target_id(cfg)}.pt"


def ensure_target(cfg: ExperimentConfig, workdir):
    """Load the cached target checkpoint or train and checkpoint it."""
    path = target_path(cfg, workdir)
    if path.exists():
        return load_target(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    train = load_dataset(cfg.dataset, "train")
    test = load_dataset(cfg.dataset, "test")
    tc = TargetTrainConfig(
        epochs=cfg.target_epochs, batch_size=cfg.target_batch_size, lr=cfg.target_lr, seed=cfg.seed
    )
    return train_target(cfg.arch, train, tc, test_data=test, checkpoint_path=path)


def eval_set_path(cfg: ExperimentConfig, workdir) -> Path:
    return Path(workdir) / f"eval_{target_id(cfg)}_n{cfg.eval_n}_s{cfg.eval_seed}.npz"


def ensure_eval_set(cfg: ExperimentConfig, workdir, target) -> EvalSet:
    path = eval_set_path(cfg, workdir)
    if path.exists():
        return EvalSet.load(path)
    test = load_dataset(cfg.dataset, "test")
    eval_set = build_eval_set(target, test, cfg.eval_n, cfg.eval_seed, target_id=target_id(cfg))
    path.parent.mkdir(parents=True, exist_ok=True)
    eval_set.save(path)
    return eval_set


def make_oracle(cfg: ExperimentConfig, target, budget: int | None = None) -> BlackBoxOracle:
    """Fresh oracle with a fresh ledger at the configured training budget."""
    budget = cfg.budget if budget is None else budget
    return BlackBoxOracle(target, cfg.oracle_mode, QueryLedger(budget))


def bundle_key(cfg: ExperimentConfig, variant: str, budget: int | None = None, seed: int | None = None) -> str:
    payload = {
        "dataset": cfg.dataset,
        "arch": cfg.arch,
        "mode": cfg.oracle_mode,
        "budget": cfg.budget if budget is None else budget,
        "weights": [cfg.alpha1, cfg.alpha2, cfg.alpha3],
        "schedule": vars(cfg.surrogate_schedule(seed=seed)),
        "variant": variant,
    }
    return _short_hash(payload)


def bundle_path(cfg: ExperimentConfig, workdir, variant: str = "+div", budget=None, seed=None) -> Path:
    tag = variant.replace("+", "plus_")
    return Path(workdir) / "bundles" / f"{tag}_{bundle_key(cfg, variant, budget, seed)}.pt"


def ensure_bundle(
    cfg: ExperimentConfig,
    workdir,
    target,
    variant: str = "+div",
    budget: int | None = None,
    seed: int | None = None,
    log_path=None,
) -> SurrogateBundle:
    """Load the cached surrogate bundle for this exact configuration or
    train it from scratch against a fresh oracle."""
    path = bundle_path(cfg, workdir, variant, budget, seed)
    if path.exists():
        return SurrogateBundle.load(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    oracle = make_oracle(cfg, target, budget)
    schedule = variant_schedule(variant, cfg.surrogate_schedule(seed=seed, log_path=log_path))
    train = load_dataset(cfg.dataset, "train")
    bundle = train_surrogate(oracle, train, cfg.loss_weights(), schedule)
    bundle.save(path)
    return bundle


def claim_output_dir(path, overwrite: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not overwrite:
        raise OutputExists(f"{out} already has contents; pass --overwrite to replace them")
    out.mkdir(parents=True, exist_ok=True)
    return out


def gsba_report(cfg: ExperimentConfig, workdir, target=None, bundle=None, eval_set=None):
    """End-to-end single attack: ensure artifacts, attack, verify, score."""
    target = target or ensure_target(cfg, workdir)
    eval_set = eval_set or ensure_eval_set(cfg, workdir, target)
    bundle = bundle or ensure_bundle(cfg, workdir, target)
    oracle = make_oracle(cfg, target)
    return run_gsba(
        bundle,
        oracle,
        eval_set,
        cfg.setting,
        cfg.delta,
        cfg.inversion_params(),
        seed=cfg.seed,
        config=cfg.to_dict(),
    )


def ablation_reports(cfg: ExperimentConfig, workdir, variants=ABLATION_VARIANTS):
    target = ensure_target(cfg, workdir)
    eval_set = ensure_eval_set(cfg, workdir, target)
    train = load_dataset(cfg.dataset, "train")
    return run_ablation(
        lambda: make_oracle(cfg, target),
        train,
        eval_set,
        cfg.setting,
        cfg.delta,
        cfg.loss_weights(),
        cfg.surrogate_schedule(),
        cfg.inversion_params(),
        attack_seed=cfg.seed,
        variants=variants,
        bundle_cache=lambda v: bundle_path(cfg, workdir, v),
    )


def baseline_report(cfg: ExperimentConfig, workdir, bundle=None):
    target = ensure_target(cfg, workdir)
    eval_set = ensure_eval_set(cfg, workdir, target)
    bundle = bundle or ensure_bundle(cfg, workdir, target)
    oracle = make_oracle(cfg, target)
    return run_baseline_surrogate_pgd(
        bundle, oracle, eval_set, cfg.pgd_params(), setting=cfg.setting, seed=cfg.seed
    )


def sweep_reports(cfg: ExperimentConfig, workdir):
    target = ensure_target(cfg, workdir)
    eval_set = ensure_eval_set(cfg, workdir, target)
    train = load_dataset(cfg.dataset, "train")
    return run_budget_sweep(
        cfg.fractions,
        lambda budget: make_oracle(cfg, target, budget),
        train,
        eval_set,
        cfg.setting,
        cfg.delta,
        cfg.loss_weights(),
        cfg.surrogate_schedule(),
        cfg.inversion_params(),
        full_budget=cfg.budget,
        attack_seed=cfg.seed,
        bundle_cache=lambda frac: bundle_path(cfg, workdir, "+div", budget=int(round(cfg.budget * frac))),
    )
