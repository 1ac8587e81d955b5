"""Loss functions: adversarial objectives for attacks, and the generator,
discriminator, and substitute training terms.

Conventions used throughout:
- probabilities are clamped to [1e-12, 1] before any logarithm;
- `adv_loss` values are "higher = more adversarial", so attacks ascend them;
  the hinged margin losses are positive exactly when the attack goal holds;
- generator training MINIMIZES its combined objective, so terms that must
  grow (boundary margin, diversity entropy) enter it negated.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

PROB_EPS = 1e-12

CLASSIFICATION = "classification"
CW_MARGIN = "cw-margin"


class DivergenceError(RuntimeError):
    """A training loss became non-finite."""


@dataclass
class AdvLossSpec:
    """Which adversarial objective to use and toward which class.

    For targeted attacks `target` is the desired class (int, or a per-sample
    label vector) and must differ from the true label everywhere.
    """

    kind: str = CLASSIFICATION
    targeted: bool = False
    target: int | torch.Tensor | None = None

    def __post_init__(self):
        if self.kind not in (CLASSIFICATION, CW_MARGIN):
            raise ValueError(f"unknown adversarial loss kind {self.kind!r}")
        if self.targeted and self.target is None:
            raise ValueError("targeted spec requires a target class")

    def target_vector(self, labels: torch.Tensor) -> torch.Tensor:
        t = torch.as_tensor(self.target, dtype=torch.long)
        t = t.expand_as(labels) if t.ndim == 0 else t
        if torch.any(t == labels):
            raise ValueError("targeted attack with target equal to the true label")
        return t


def _validate_probs(probs: torch.Tensor) -> torch.Tensor:
    if probs.ndim != 2:
        raise ValueError(f"expected (N, C) probability matrix, got {tuple(probs.shape)}")
    sums = probs.sum(dim=1)
    if torch.any((sums - 1.0).abs() > 1e-5) or torch.any(probs < -1e-7):
        raise ValueError("rows are not valid probability vectors")
    return probs.clamp_min(PROB_EPS)


def _max_other_logprob(logp: torch.Tensor, exclude: torch.Tensor) -> torch.Tensor:
    masked = logp.scatter(1, exclude.unsqueeze(1), float("-inf"))
    return masked.max(dim=1).values


def adv_loss(probs: torch.Tensor, labels: torch.Tensor, spec: AdvLossSpec) -> torch.Tensor:
    """Per-sample adversarial objective on an (N, C) probability matrix.

    classification: untargeted -log p(y|x), targeted +log p(t|x).
    cw-margin: hinged log-probability margin, zero until the goal class
    leads and positive afterwards, so value > 0 iff argmax != y
    (untargeted) or argmax == t (targeted).
    """
    probs = _validate_probs(probs)
    logp = probs.log()
    idx = torch.arange(labels.shape[0])
    if spec.kind == CLASSIFICATION:
        if spec.targeted:
            t = spec.target_vector(labels)
            return logp[idx, t]
        return -logp[idx, labels]
    if spec.targeted:
        t = spec.target_vector(labels)
        margin = logp[idx, t] - _max_other_logprob(logp, t)
    else:
        margin = _max_other_logprob(logp, labels) - logp[idx, labels]
    return margin.clamp_min(0.0)


def attack_margin(logits: torch.Tensor, labels: torch.Tensor, spec: AdvLossSpec) -> torch.Tensor:
    """Unhinged ascent objective on logits, used inside gradient attacks.

    Same direction as `adv_loss` but without the hinge (which has zero
    gradient before the goal is reached) and computed via log_softmax for
    numerical stability.
    """
    idx = torch.arange(labels.shape[0])
    if spec.kind == CLASSIFICATION:
        if spec.targeted:
            return -F.cross_entropy(logits, spec.target_vector(labels), reduction="none")
        return F.cross_entropy(logits, labels, reduction="none")
    logp = F.log_softmax(logits, dim=1)
    if spec.targeted:
        t = spec.target_vector(labels)
        return logp[idx, t] - _max_other_logprob(logp, t)
    return _max_other_logprob(logp, labels) - logp[idx, labels]


def _clamped_probs(logits: torch.Tensor) -> torch.Tensor:
    return F.softmax(logits, dim=1).clamp_min(PROB_EPS)


def gan_losses(disc, x_real: torch.Tensor, x_fake: torch.Tensor):
    """Realness objectives for one (real-stream, fake) pair.

    Returns (loss_d, loss_g) where loss_d is the negated discriminator
    objective E[log D(real)] + E[log(1 - D(fake))] (so a minimizer maximizes
    it) and loss_g = E[log(1 - D(fake))], minimized by the generator.
    """
    d_real = disc(x_real).clamp(PROB_EPS, 1.0 - PROB_EPS)
    d_fake = disc(x_fake).clamp(PROB_EPS, 1.0 - PROB_EPS)
    loss_d = -(d_real.log().mean() + (1.0 - d_fake).log().mean())
    loss_g = (1.0 - d_fake).log().mean()
    if not (torch.isfinite(loss_d) and torch.isfinite(loss_g)):
        raise DivergenceError("GAN loss became non-finite")
    return loss_d, loss_g


def generator_realness(disc, x_fake: torch.Tensor) -> torch.Tensor:
    """The generator's half of `gan_losses` alone: E[log(1 - D(fake))]."""
    d_fake = disc(x_fake).clamp(PROB_EPS, 1.0 - PROB_EPS)
    loss_g = (1.0 - d_fake).log().mean()
    if not torch.isfinite(loss_g):
        raise DivergenceError("generator realness loss became non-finite")
    return loss_g


def control_from_logits(logits: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(logits, y)


def class_control_loss(substitute, x_fake: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Cross-entropy between the substitute's prediction on generated images
    and the labels they were conditioned on."""
    return control_from_logits(substitute(x_fake), y)


def distill_loss(substitute, oracle, x: torch.Tensor) -> torch.Tensor:
    """Match the substitute to the target's response on x (charged queries).

    Label mode: cross-entropy against the returned labels. Probability mode:
    mean squared l2 distance between the two probability vectors.
    """
    response = oracle.query(x.detach(), charge=True)
    logits = substitute(x)
    if response.ndim == 1:
        return F.cross_entropy(logits, response)
    return ((response - F.softmax(logits, dim=1)) ** 2).sum(dim=1).mean()


def similarity_from_logits(logits: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    logp = _clamped_probs(logits).log()
    idx = torch.arange(y.shape[0])
    return (_max_other_logprob(logp, y) - logp[idx, y]).mean()


def boundary_hinge_from_logits(
    logits: torch.Tensor, y: torch.Tensor, confidence: float = 0.0
) -> torch.Tensor:
    """Training form of the boundary-proximity pressure: mean per-sample
    hinge max{0, log p_y - max_other log p_j - confidence}.

    Positive while a sample is confidently on-class and zero once its margin
    shrinks to `confidence`, so minimizing it pulls samples toward their
    nearest boundary without pushing them across (the class-control term
    keeps the label; a positive confidence keeps samples that many nats
    inside their class). The unhinged margin (`similarity_from_logits`) is
    the diagnostic view of the same quantity and rises toward zero from
    below as this shrinks.
    """
    logp = _clamped_probs(logits).log()
    idx = torch.arange(y.shape[0])
    margin = logp[idx, y] - _max_other_logprob(logp, y)
    return (margin - confidence).clamp_min(0.0).mean()


def inter_class_similarity(substitute, x_fake: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean log-probability margin of the best wrong class over the
    conditioning class: negative for confidently on-class samples, zero on
    a decision boundary. The generator pushes this up toward zero."""
    return similarity_from_logits(substitute(x_fake), y)


def intra_class_diversity(
    substitute, x_fake: torch.Tensor, y: torch.Tensor, formula: str = "entropy"
) -> torch.Tensor:
    """Spread each class's samples across its boundaries with all other
    classes.

    For every conditioning class in the batch: average the samples'
    probability vectors with the own-class entry removed, renormalize, and
    take Shannon entropy. Returned negated (weighted by class frequency) so
    that minimizing the total training loss maximizes the entropy.

    formula="negative_mean" instead scores -mean of the unrenormalized
    average vector, kept only for fidelity experiments.
    """
    return diversity_from_logits(substitute(x_fake), y, formula)


def diversity_from_logits(logits: torch.Tensor, y: torch.Tensor, formula: str = "entropy") -> torch.Tensor:
    if formula not in ("entropy", "negative_mean"):
        raise ValueError(f"unknown diversity formula {formula!r}")
    probs = _clamped_probs(logits)
    n, c = probs.shape
    total = probs.new_zeros(())
    for cls in y.unique():
        group = probs[y == cls]
        keep = torch.arange(c) != cls
        avg = group[:, keep].mean(dim=0)
        if formula == "entropy":
            p = (avg / avg.sum()).clamp_min(PROB_EPS)
            score = -(p * p.log()).sum()
        else:
            score = -avg.mean()
        total = total + (group.shape[0] / n) * (-score)
    return total
