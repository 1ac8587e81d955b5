"""Crafting adversarial examples by latent inversion of the trained
conditional generator.

For every candidate class the latent code is optimized so the generated
image reconstructs the original sample; the candidate with the smallest
l-infinity distance wins. No target queries happen anywhere in this module:
at attack time the generator has fully replaced the target. Each outcome
reports exactly one step, since a single candidate image is ever submitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .data import ImageBatch


class InversionError(RuntimeError):
    """Every restart diverged to a non-finite objective."""


@dataclass
class InversionParams:
    """Latent-descent budget: restarts, iterations, step size, objective norm.

    The objective norm shapes the descent only; candidate selection and the
    success check always use the l-infinity distance, because that is the
    norm the perturbation budget is stated in.
    """

    restarts: int = 8
    iterations: int = 200
    step_size: float = 0.05
    distance: str = "l2"

    def __post_init__(self):
        if self.restarts < 1 or self.iterations < 1:
            raise ValueError("restarts and iterations must be at least 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.distance not in ("l2", "linf"):
            raise ValueError(f"objective norm must be 'l2' or 'linf', got {self.distance!r}")


@dataclass
class AttackOutcome:
    """Per-sample attack record."""

    original: torch.Tensor
    original_label: int
    setting: str  # "untargeted" | "targeted"
    success: bool
    adversarial: torch.Tensor | None
    linf_perturbation: float
    reported_steps: int = 1
    adversarial_class: int | None = None
    target_class: int | None = None
    verified_label: int | None = None
    sample_id: int = -1
    verified: bool | None = field(default=None)

    def record(self) -> dict:
        """Pixel-free summary for newline-delimited serialization."""
        return {
            "sample_id": self.sample_id,
            "setting": self.setting,
            "original_label": self.original_label,
            "target_class": self.target_class,
            "success": self.success,
            "adversarial_class": self.adversarial_class,
            "linf_perturbation": self.linf_perturbation,
            "reported_steps": self.reported_steps,
            "verified_label": self.verified_label,
            "verified": self.verified,
        }


def _objective(diff: torch.Tensor, distance: str) -> torch.Tensor:
    """Per-row reconstruction objective on (M, C, H, W) differences."""
    flat = diff.flatten(1)
    if distance == "l2":
        return flat.pow(2).mean(dim=1)
    # smooth sup-norm: softmax-of-abs weighting, temperature fixed
    a = flat.abs()
    return (torch.softmax(100.0 * a, dim=1) * a).sum(dim=1)


def _descend(gen, targets, labels, z0, params: InversionParams, chunk: int = 2048):
    """Optimize each latent row against its target image; returns the final
    latents, images, and their l-infinity distances (rows with a non-finite
    objective get an infinite distance)."""
    was_training = gen.training
    gen.eval()
    try:
        z_final = torch.empty_like(z0)
        images = torch.empty_like(targets)
        dists = torch.full((targets.shape[0],), float("inf"))
        for lo in range(0, targets.shape[0], chunk):
            hi = min(lo + chunk, targets.shape[0])
            z = z0[lo:hi].clone().requires_grad_(True)
            opt = torch.optim.Adam([z], lr=params.step_size)
            for _ in range(params.iterations):
                out = gen(z, labels[lo:hi])
                loss = _objective(out - targets[lo:hi], params.distance).sum()
                opt.zero_grad()
                loss.backward()
                opt.step()
            with torch.no_grad():
                out = gen(z, labels[lo:hi])
                obj = _objective(out - targets[lo:hi], params.distance)
                linf = (out - targets[lo:hi]).flatten(1).abs().max(dim=1).values
                ok = torch.isfinite(obj) & torch.isfinite(linf)
                z_final[lo:hi] = z.detach()
                images[lo:hi] = out
                dists[lo:hi] = torch.where(ok, linf, torch.full_like(linf, float("inf")))
        return z_final, images, dists
    finally:
        gen.train(was_training)


def invert(gen, x_orig: torch.Tensor, y: int, params: InversionParams, generator=None):
    """Find the class-y generator output closest to x_orig.

    Runs `restarts` independent latent descents from standard-normal
    initializations (drawn sequentially, so a longer run's starting points
    extend a shorter run's) and returns (z_best, image, linf_distance) of
    the restart whose final image is closest in l-infinity.
    """
    if x_orig.ndim != 3:
        raise ValueError(f"x_orig must be a single (C, H, W) image, got {tuple(x_orig.shape)}")
    r = params.restarts
    # one stream draw per restart: torch's bulk randn consumes the stream
    # differently per total size, which would break the prefix property
    z0 = torch.cat([torch.randn(1, gen.latent_dim, generator=generator) for _ in range(r)])
    targets = x_orig.unsqueeze(0).expand(r, -1, -1, -1)
    labels = torch.full((r,), int(y), dtype=torch.long)
    # chunk=1 keeps each restart's float trajectory independent of how many
    # restarts run alongside it, so a longer run extends a shorter one exactly
    z_final, images, dists = _descend(gen, targets, labels, z0, params, chunk=1)
    if not torch.isfinite(dists).any():
        raise InversionError("all inversion restarts produced non-finite objectives")
    best = int(dists.argmin())
    return z_final[best], images[best], float(dists[best])


def _best_per_class(images, dists, n_classes_rows, restarts):
    """Reduce (rows = classes x restarts) to per-class winners."""
    per = dists.view(n_classes_rows, restarts)
    best_r = per.argmin(dim=1)
    idx = torch.arange(n_classes_rows) * restarts + best_r
    return images[idx], per[torch.arange(n_classes_rows), best_r]


def attack_untargeted(
    gen, x_orig: torch.Tensor, y_orig: int, delta: float, params: InversionParams, generator=None
) -> AttackOutcome:
    """Invert every class other than the original, pick the closest
    candidate, succeed iff it sits within the l-infinity budget.

    Ties break toward the lowest class index. The candidate image is never
    clipped into the ball: the attack either finds a naturally close sample
    or fails.
    """
    classes = [c for c in range(gen.num_classes) if c != int(y_orig)]
    r = params.restarts
    z0 = torch.randn(len(classes) * r, gen.latent_dim, generator=generator)
    labels = torch.tensor(classes, dtype=torch.long).repeat_interleave(r)
    targets = x_orig.unsqueeze(0).expand(len(classes) * r, -1, -1, -1)
    _, images, dists = _descend(gen, targets, labels, z0, params)
    if not torch.isfinite(dists).any():
        raise InversionError("all inversion restarts produced non-finite objectives")
    best_images, best_dists = _best_per_class(images, dists, len(classes), r)
    k = int(best_dists.argmin())  # first minimum = lowest class index
    dist = float(best_dists[k])
    success = dist <= delta
    return AttackOutcome(
        original=x_orig.clone(),
        original_label=int(y_orig),
        setting="untargeted",
        success=success,
        adversarial=best_images[k].clone() if success else None,
        linf_perturbation=dist,
        adversarial_class=classes[k],
    )


def attack_targeted(
    gen, x_orig: torch.Tensor, y_orig: int, t: int, delta: float, params: InversionParams, generator=None
) -> AttackOutcome:
    """Single inversion at the required target class."""
    if int(t) == int(y_orig):
        raise ValueError("target class must differ from the original class")
    r = params.restarts
    z0 = torch.randn(r, gen.latent_dim, generator=generator)
    labels = torch.full((r,), int(t), dtype=torch.long)
    targets = x_orig.unsqueeze(0).expand(r, -1, -1, -1)
    _, images, dists = _descend(gen, targets, labels, z0, params)
    if not torch.isfinite(dists).any():
        raise InversionError("all inversion restarts produced non-finite objectives")
    best = int(dists.argmin())
    dist = float(dists[best])
    success = dist <= delta
    return AttackOutcome(
        original=x_orig.clone(),
        original_label=int(y_orig),
        setting="targeted",
        success=success,
        adversarial=images[best].clone() if success else None,
        linf_perturbation=dist,
        adversarial_class=int(t) if success else int(t),
        target_class=int(t),
    )


def default_target_class(y: int, num_classes: int) -> int:
    """Evaluation default for targeted attacks: the next class around."""
    return (int(y) + 1) % num_classes


def attack_batch(
    gen,
    batch: ImageBatch,
    setting: str,
    delta: float,
    params: InversionParams,
    seed: int = 0,
    target_fn=None,
) -> list[AttackOutcome]:
    """Attack every sample of a batch, jointly optimizing all latent rows.

    Latent starts are drawn sample-major from one seeded stream, so results
    are reproducible from (seed, params) alone regardless of chunking.
    """
    if setting not in ("untargeted", "targeted"):
        raise ValueError(f"setting must be 'untargeted' or 'targeted', got {setting!r}")
    target_fn = target_fn or default_target_class
    n, c = len(batch), gen.num_classes
    r = params.restarts
    rng = torch.Generator().manual_seed(seed)

    rows_labels, rows_targets, spans = [], [], []
    for i in range(n):
        y = int(batch.labels[i])
        classes = [target_fn(y, c)] if setting == "targeted" else [k for k in range(c) if k != y]
        rows_labels.append(torch.tensor(classes, dtype=torch.long).repeat_interleave(r))
        rows_targets.append(batch.pixels[i].unsqueeze(0).expand(len(classes) * r, -1, -1, -1))
        spans.append(len(classes))
    labels = torch.cat(rows_labels)
    targets = torch.cat(rows_targets)
    z0 = torch.randn(labels.shape[0], gen.latent_dim, generator=rng)
    _, images, dists = _descend(gen, targets, labels, z0, params)

    outcomes, base = [], 0
    for i in range(n):
        span = spans[i]
        y = int(batch.labels[i])
        sl = slice(base, base + span * r)
        best_images, best_dists = _best_per_class(images[sl], dists[sl], span, r)
        k = int(best_dists.argmin())
        dist = float(best_dists[k])
        success = bool(dist <= delta) and bool(torch.isfinite(best_dists[k]))
        cls = int(rows_labels[i][k * r])
        outcomes.append(
            AttackOutcome(
                original=batch.pixels[i].clone(),
                original_label=y,
                setting=setting,
                success=success,
                adversarial=best_images[k].clone() if success else None,
                linf_perturbation=dist,
                adversarial_class=cls,
                target_class=cls if setting == "targeted" else None,
                sample_id=i,
            )
        )
        base += span * r
    return outcomes
