"""Reference white-box attacks under an l-infinity ball: FGSM, BIM, PGD,
and a projected margin-descent C&W variant.

All attacks keep every iterate inside both the epsilon-ball around the
original batch and [0, 1], and record the 1-based iteration at which each
sample first fooled the attacked model (0 = never). They are pure functions
of (model, batch) apart from PGD/C&W's seeded random start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .losses import CW_MARGIN, AdvLossSpec, attack_margin


@dataclass
class AttackParams:
    """l-infinity attack budget: radius, per-step size, iteration count."""

    epsilon: float
    step_size: float
    iterations: int
    norm: float = math.inf

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.epsilon > 0 and self.step_size > self.epsilon:
            raise ValueError("step_size must not exceed epsilon")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not math.isinf(self.norm):
            raise ValueError("only the l-infinity norm is supported")


@dataclass
class WhiteboxResult:
    """Final adversarial batch plus per-sample first-success step (0=never)."""

    x_adv: torch.Tensor
    first_success_step: torch.Tensor
    claimed_success: torch.Tensor = field(init=False)

    def __post_init__(self):
        self.claimed_success = self.first_success_step > 0


def _project(x_adv: torch.Tensor, x: torch.Tensor, epsilon: float) -> torch.Tensor:
    return torch.clamp(torch.clamp(x_adv, x - epsilon, x + epsilon), 0.0, 1.0)


@torch.no_grad()
def _goal_met(model, x_adv: torch.Tensor, labels: torch.Tensor, spec: AdvLossSpec) -> torch.Tensor:
    pred = model(x_adv).argmax(dim=1)
    if spec.targeted:
        return pred == spec.target_vector(labels)
    return pred != labels


def _ascent_grad(model, x_adv: torch.Tensor, labels: torch.Tensor, spec: AdvLossSpec) -> torch.Tensor:
    x_adv = x_adv.detach().requires_grad_(True)
    obj = attack_margin(model(x_adv), labels, spec).sum()
    (grad,) = torch.autograd.grad(obj, x_adv)
    return grad


def _iterated_attack(
    model,
    x: torch.Tensor,
    labels: torch.Tensor,
    spec: AdvLossSpec,
    params: AttackParams,
    random_start: bool,
    generator: torch.Generator | None = None,
) -> WhiteboxResult:
    was_training = model.training
    model.eval()
    try:
        x = x.detach()
        x_adv = x.clone()
        if random_start and params.epsilon > 0:
            noise = torch.empty_like(x).uniform_(-params.epsilon, params.epsilon, generator=generator)
            x_adv = _project(x + noise, x, params.epsilon)
        steps = torch.zeros(x.shape[0], dtype=torch.long)
        for k in range(1, params.iterations + 1):
            active = steps == 0
            if not active.any():
                break
            grad = _ascent_grad(model, x_adv[active], labels[active], _subspec(spec, active))
            stepped = x_adv[active] + params.step_size * grad.sign()
            x_adv[active] = _project(stepped, x[active], params.epsilon)
            hit = _goal_met(model, x_adv[active], labels[active], _subspec(spec, active))
            idx = active.nonzero(as_tuple=True)[0][hit]
            steps[idx] = k
        return WhiteboxResult(x_adv, steps)
    finally:
        model.train(was_training)


def _subspec(spec: AdvLossSpec, mask: torch.Tensor) -> AdvLossSpec:
    if spec.targeted and isinstance(spec.target, torch.Tensor) and spec.target.ndim:
        return AdvLossSpec(spec.kind, True, spec.target[mask])
    return spec


def fgsm(model, x: torch.Tensor, labels: torch.Tensor, spec: AdvLossSpec, params: AttackParams) -> WhiteboxResult:
    """Single signed-gradient step of size epsilon."""
    if params.iterations != 1:
        raise ValueError("fgsm requires iterations == 1")
    one_step = AttackParams(params.epsilon, max(params.epsilon, params.step_size), 1)
    if params.epsilon == 0:
        one_step = AttackParams(0.0, params.step_size, 1)
    return _iterated_attack(model, x, labels, spec, one_step, random_start=False)


def bim(model, x, labels, spec: AdvLossSpec, params: AttackParams) -> WhiteboxResult:
    """Iterated signed-gradient steps with per-step projection, no random start."""
    return _iterated_attack(model, x, labels, spec, params, random_start=False)


def pgd(
    model, x, labels, spec: AdvLossSpec, params: AttackParams, generator: torch.Generator | None = None
) -> WhiteboxResult:
    """BIM plus a uniform random start inside the epsilon-ball."""
    return _iterated_attack(model, x, labels, spec, params, random_start=True, generator=generator)


def cw_attack(
    model, x, labels, spec: AdvLossSpec, params: AttackParams, generator: torch.Generator | None = None
) -> WhiteboxResult:
    """PGD-style projected ascent on the C&W log-probability margin."""
    margin_spec = AdvLossSpec(CW_MARGIN, spec.targeted, spec.target)
    return _iterated_attack(model, x, labels, margin_spec, params, random_start=True, generator=generator)
