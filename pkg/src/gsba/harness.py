"""Evaluation protocol: verified scoring, ablations, the transfer baseline,
and the query-budget sweep.

No metric here trusts the attacker's own bookkeeping: every claimed success
is re-checked against the live oracle (uncharged) and against the
perturbation budget before it counts toward the attack success rate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .attack import AttackOutcome, InversionParams, attack_batch
from .data import EvalSet, ImageBatch
from .losses import AdvLossSpec
from .oracle import BlackBoxOracle
from .surrogate import LossWeights, SurrogateBundle, SurrogateSchedule, train_surrogate
from .whitebox import AttackParams, pgd

ABLATION_VARIANTS = ("base", "+adv", "+sim", "+div")


@dataclass
class ExperimentReport:
    """Scored results of one attack run over an evaluation set."""

    config: dict
    outcomes: list[AttackOutcome]
    asr: float
    avg_steps: float | None  # None marks "no successes to average"
    step_histogram: list[int]
    histogram_edges: list[float]
    ledger: dict
    verification_queries: int
    wall_time: float
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "asr": self.asr,
            "avg_steps": self.avg_steps,
            "n_samples": len(self.outcomes),
            "n_verified": int(round(self.asr * len(self.outcomes))),
            "step_histogram": self.step_histogram,
            "histogram_edges": self.histogram_edges,
            "ledger": self.ledger,
            "verification_queries": self.verification_queries,
            "wall_time": self.wall_time,
            **self.extras,
        }


def step_histogram(steps, max_steps: int | None = None):
    """10 equal-width, left-closed bins over [1, max_steps].

    Returns (counts, edges). With max_steps == 1 every success lands in the
    first bin and the remaining nine stay empty.
    """
    steps = [int(s) for s in steps]
    if max_steps is None:
        max_steps = max(steps, default=1)
    max_steps = max(int(max_steps), 1)
    if max_steps == 1:
        counts = [len(steps)] + [0] * 9
        return counts, [1.0] * 11
    counts, edges = np.histogram(steps, bins=10, range=(1, max_steps))
    return counts.astype(int).tolist(), edges.tolist()


def verify_and_score(
    oracle: BlackBoxOracle,
    outcomes: list[AttackOutcome],
    setting: str,
    delta: float,
    max_steps: int | None = None,
    config: dict | None = None,
    wall_time: float = 0.0,
) -> ExperimentReport:
    """Re-check every claimed success against the live oracle and the
    perturbation budget, then assemble ASR, average steps over verified
    successes, and the 10-bin step histogram."""
    verify_start = time.time()
    start_verification = oracle.verification_used
    claimed = [o for o in outcomes if o.success and o.adversarial is not None]
    if claimed:
        pixels = torch.stack([o.adversarial for o in claimed])
        response = oracle.query(pixels, charge=False)
        labels = response if response.ndim == 1 else response.argmax(dim=1)
        for o, lbl in zip(claimed, labels.tolist()):
            o.verified_label = int(lbl)
            within = o.linf_perturbation <= delta + 1e-6
            if setting == "targeted":
                o.verified = bool(within and lbl == o.target_class)
            else:
                o.verified = bool(within and lbl != o.original_label)
    for o in outcomes:
        if o.verified is None:
            o.verified = False
    verified = [o for o in outcomes if o.verified]
    asr = len(verified) / len(outcomes) if outcomes else 0.0
    steps = [o.reported_steps for o in verified]
    avg_steps = float(np.mean(steps)) if steps else None
    counts, edges = step_histogram(steps, max_steps)
    return ExperimentReport(
        config=dict(config or {}),
        outcomes=outcomes,
        asr=asr,
        avg_steps=avg_steps,
        step_histogram=counts,
        histogram_edges=edges,
        ledger=oracle.ledger.snapshot(),
        verification_queries=oracle.verification_used - start_verification,
        wall_time=wall_time + (time.time() - verify_start),
    )


def variant_schedule(variant: str, schedule: SurrogateSchedule) -> SurrogateSchedule:
    """Cumulative loss-term toggles, in ablation order."""
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}; known: {ABLATION_VARIANTS}")
    from dataclasses import replace

    k = ABLATION_VARIANTS.index(variant)
    return replace(
        schedule,
        use_adversarial_stream=k >= 1,
        use_similarity=k >= 2,
        use_diversity=k >= 3,
    )


def run_gsba(
    bundle: SurrogateBundle,
    oracle: BlackBoxOracle,
    eval_set: EvalSet,
    setting: str,
    delta: float,
    inversion: InversionParams,
    seed: int = 0,
    config: dict | None = None,
) -> ExperimentReport:
    """Attack the evaluation set via latent inversion and score it."""
    start = time.time()
    outcomes = attack_batch(bundle.generator, eval_set.samples, setting, delta, inversion, seed=seed)
    return verify_and_score(
        oracle, outcomes, setting, delta, max_steps=1, config=config, wall_time=time.time() - start
    )


def run_ablation(
    oracle_factory,
    real_data: ImageBatch,
    eval_set: EvalSet,
    setting: str,
    delta: float,
    weights: LossWeights,
    schedule: SurrogateSchedule,
    inversion: InversionParams,
    attack_seed: int = 0,
    variants=ABLATION_VARIANTS,
    bundle_cache=None,
) -> dict:
    """One full train+attack+score cycle per variant under identical seeds
    and budgets. `oracle_factory()` must hand out a fresh oracle (fresh
    ledger) per variant. `bundle_cache(variant)` may return a path used to
    reuse/persist trained bundles."""
    reports = {}
    for variant in variants:
        oracle = oracle_factory()
        sched = variant_schedule(variant, schedule)
        path = bundle_cache(variant) if bundle_cache else None
        if path is not None and path.exists():
            bundle = SurrogateBundle.load(path)
        else:
            bundle = train_surrogate(oracle, real_data, weights, sched)
            if path is not None:
                bundle.save(path)
        reports[variant] = run_gsba(
            bundle,
            oracle,
            eval_set,
            setting,
            delta,
            inversion,
            seed=attack_seed,
            config={"variant": variant},
        )
    return reports


def run_baseline_surrogate_pgd(
    bundle: SurrogateBundle,
    oracle: BlackBoxOracle,
    eval_set: EvalSet,
    params: AttackParams,
    setting: str = "untargeted",
    seed: int = 0,
    target_fn=None,
) -> ExperimentReport:
    """Transfer baseline: PGD against the bundle's substitute, scored on the
    live oracle.

    Every crafted example lies inside the delta-ball by construction, so all
    of them are submitted for verification; reported steps count the first
    iteration that fooled the substitute (the full budget where it never
    did)."""
    start = time.time()
    pixels, labels = eval_set.samples.pixels, eval_set.samples.labels
    if setting == "targeted":
        from .attack import default_target_class

        target_fn = target_fn or default_target_class
        t = torch.tensor(
            [target_fn(int(y), bundle.substitute.num_classes) for y in labels], dtype=torch.long
        )
        spec = AdvLossSpec("classification", targeted=True, target=t)
    else:
        spec = AdvLossSpec("classification", targeted=False)
    rng = torch.Generator().manual_seed(seed)
    result = pgd(bundle.substitute, pixels, labels, spec, params, generator=rng)
    outcomes = []
    for i in range(len(eval_set)):
        steps = int(result.first_success_step[i])
        adv = result.x_adv[i]
        outcomes.append(
            AttackOutcome(
                original=pixels[i].clone(),
                original_label=int(labels[i]),
                setting=setting,
                success=True,  # in-ball by construction; the oracle decides
                adversarial=adv.clone(),
                linf_perturbation=float((adv - pixels[i]).abs().max()),
                reported_steps=steps if steps > 0 else params.iterations,
                adversarial_class=None,
                target_class=int(t[i]) if setting == "targeted" else None,
                sample_id=i,
            )
        )
    return verify_and_score(
        oracle,
        outcomes,
        setting,
        params.epsilon,
        max_steps=params.iterations,
        config={"baseline": "surrogate+pgd"},
        wall_time=time.time() - start,
    )


def run_budget_sweep(
    fractions,
    oracle_factory,
    real_data: ImageBatch,
    eval_set: EvalSet,
    setting: str,
    delta: float,
    weights: LossWeights,
    schedule: SurrogateSchedule,
    inversion: InversionParams,
    full_budget: int,
    attack_seed: int = 0,
    bundle_cache=None,
) -> list[tuple[float, ExperimentReport]]:
    """Train a fresh surrogate at budget*fraction for every fraction and
    report ASR per fraction, in the order given."""
    results = []
    for fraction in fractions:
        if not (0 < fraction <= 1):
            raise ValueError(f"budget fractions must lie in (0, 1], got {fraction}")
        budget = int(round(full_budget * fraction))
        oracle = oracle_factory(budget)
        path = bundle_cache(fraction) if bundle_cache else None
        if path is not None and path.exists():
            bundle = SurrogateBundle.load(path)
        else:
            bundle = train_surrogate(oracle, real_data, weights, schedule)
            if path is not None:
                bundle.save(path)
        report = run_gsba(
            bundle,
            oracle,
            eval_set,
            setting,
            delta,
            inversion,
            seed=attack_seed,
            config={"budget_fraction": fraction, "budget": budget},
        )
        results.append((fraction, report))
    return results
