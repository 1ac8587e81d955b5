"""Training of the generative surrogate: a conditional generator shaped to
emit realistic, boundary-proximal, boundary-diverse samples, alongside the
substitute classifier distilled from charged target queries.

Per batch the loop runs substitute -> discriminator -> generator, one
optimizer step each. The substitute's distillation update is the only place
the target is ever queried, and every one of those queries is charged.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import torch

from .data import ImageBatch
from .losses import (
    AdvLossSpec,
    boundary_hinge_from_logits,
    control_from_logits,
    distill_loss,
    diversity_from_logits,
    gan_losses,
    generator_realness,
    similarity_from_logits,
)
from .models import (
    ConditionalGenerator,
    Discriminator,
    build_classifier,
    init_gan_weights,
)
from .oracle import BudgetExhausted, QueryLedger
from .whitebox import AttackParams, bim


@dataclass
class LossWeights:
    """Weights on the class-control, similarity, and diversity terms."""

    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class SurrogateSchedule:
    """Hyperparameters of one surrogate training run."""

    batch_size: int = 128
    max_steps: int | None = None
    latent_dim: int = 128
    gen_width: int = 64
    disc_width: int = 32
    substitute_arch: str = "small-cnn"
    lr_gen: float = 2e-4
    lr_disc: float = 2e-4
    lr_sub: float = 5e-4
    adam_beta1: float = 0.5
    bim_epsilon: float = 8 / 255
    bim_step_size: float = 2 / 255
    bim_iterations: int = 10
    use_adversarial_stream: bool = True
    use_similarity: bool = True
    similarity_confidence: float = 1.0
    use_diversity: bool = True
    diversity_formula: str = "entropy"
    seed: int = 0
    log_every: int = 10
    log_path: str | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")

    def bim_params(self) -> AttackParams:
        return AttackParams(self.bim_epsilon, self.bim_step_size, self.bim_iterations)


@dataclass
class SurrogateBundle:
    """The trained trio plus everything needed to audit the run."""

    generator: ConditionalGenerator
    discriminator: Discriminator
    substitute: torch.nn.Module
    weights: LossWeights
    ledger: QueryLedger
    schedule: SurrogateSchedule
    history: list = field(default_factory=list)

    def save(self, path) -> None:
        torch.save(
            {
                "generator": self.generator.state_dict(),
                "discriminator": self.discriminator.state_dict(),
                "substitute": self.substitute.state_dict(),
                "image_shape": self.generator.image_shape,
                "num_classes": self.generator.num_classes,
                "weights": asdict(self.weights),
                "schedule": asdict(self.schedule),
                "ledger": self.ledger.snapshot(),
                "history": self.history,
            },
            path,
        )

    @staticmethod
    def load(path) -> "SurrogateBundle":
        ckpt = torch.load(path, map_location="cpu", weights_only=False)
        schedule = SurrogateSchedule(**ckpt["schedule"])
        weights = LossWeights(**ckpt["weights"])
        gen, disc, sub = _build_nets(ckpt["image_shape"], ckpt["num_classes"], schedule)
        gen.load_state_dict(ckpt["generator"])
        disc.load_state_dict(ckpt["discriminator"])
        sub.load_state_dict(ckpt["substitute"])
        gen.eval(), disc.eval(), sub.eval()
        ledger = QueryLedger(ckpt["ledger"]["budget"])
        if ckpt["ledger"]["used"]:
            ledger.charge(ckpt["ledger"]["used"])
        return SurrogateBundle(gen, disc, sub, weights, ledger, schedule, ckpt["history"])


def _build_nets(image_shape, num_classes, schedule: SurrogateSchedule):
    gen = ConditionalGenerator(schedule.latent_dim, num_classes, image_shape, schedule.gen_width)
    disc = Discriminator(image_shape, schedule.disc_width)
    init_gan_weights(gen)
    init_gan_weights(disc)
    sub = build_classifier(schedule.substitute_arch, image_shape, num_classes)
    return gen, disc, sub


class _RealStream:
    """Endless seeded pass over the real training images."""

    def __init__(self, data: ImageBatch, seed: int):
        self._data = data
        self._gen = torch.Generator().manual_seed(seed)
        self._order = torch.randperm(len(data), generator=self._gen)
        self._pos = 0

    def next_batch(self, n: int):
        idx = []
        while n > 0:
            take = min(n, len(self._order) - self._pos)
            idx.append(self._order[self._pos : self._pos + take])
            self._pos += take
            n -= take
            if self._pos == len(self._order):
                self._order = torch.randperm(len(self._data), generator=self._gen)
                self._pos = 0
        idx = torch.cat(idx)
        return self._data.pixels[idx], self._data.labels[idx]


def train_surrogate(
    oracle,
    real_data: ImageBatch,
    weights: LossWeights | None = None,
    schedule: SurrogateSchedule | None = None,
) -> SurrogateBundle:
    """Run the full surrogate training loop until the query budget or the
    step schedule is exhausted, whichever comes first.

    Budget exhaustion is a clean halt, not a failure: the bundle returned
    reflects the last completed step, and `oracle.ledger.used` never exceeds
    the budget.
    """
    weights = weights or LossWeights()
    schedule = schedule or SurrogateSchedule()
    torch.manual_seed(schedule.seed)
    image_shape = real_data.image_shape
    num_classes = oracle.num_classes
    gen, disc, sub = _build_nets(image_shape, num_classes, schedule)
    betas = (schedule.adam_beta1, 0.999)
    opt_g = torch.optim.Adam(gen.parameters(), lr=schedule.lr_gen, betas=betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=schedule.lr_disc, betas=betas)
    opt_s = torch.optim.Adam(sub.parameters(), lr=schedule.lr_sub, betas=betas)
    sample_rng = torch.Generator().manual_seed(schedule.seed + 1)
    stream = _RealStream(real_data, schedule.seed + 2)
    bundle = SurrogateBundle(gen, disc, sub, weights, oracle.ledger, schedule)
    bim_spec = AdvLossSpec("classification", targeted=False)
    log_file = open(schedule.log_path, "w") if schedule.log_path else None

    step = 0
    batch = schedule.batch_size
    half = batch // 2
    start = time.time()
    try:
        while schedule.max_steps is None or step < schedule.max_steps:
            remaining = oracle.ledger.remaining
            if remaining is not None and remaining < batch:
                break
            z = torch.randn(batch, schedule.latent_dim, generator=sample_rng)
            y = torch.randint(0, num_classes, (batch,), generator=sample_rng)
            x_fake = gen(z, y)
            x_fake_d = x_fake.detach()

            # substitute: distill the target's response (the charged queries)
            try:
                loss_s = distill_loss(sub, oracle, x_fake_d)
            except BudgetExhausted:
                break
            opt_s.zero_grad()
            loss_s.backward()
            opt_s.step()

            # discriminator: real vs fake, plus the adversarial-real stream
            if schedule.use_adversarial_stream:
                x_real, _ = stream.next_batch(half)
                x_src, y_src = stream.next_batch(half)
                sub.eval()
                x_adv = bim(sub, x_src, y_src, bim_spec, schedule.bim_params()).x_adv
                sub.train()
                loss_d_main, _ = gan_losses(disc, x_real, x_fake_d[:half])
                loss_d_adv, _ = gan_losses(disc, x_adv, x_fake_d[half:])
                loss_d = loss_d_main + loss_d_adv
            else:
                x_real, _ = stream.next_batch(batch)
                loss_d, _ = gan_losses(disc, x_real, x_fake_d)
                loss_d_adv = None
            opt_d.zero_grad()
            loss_d.backward()
            opt_d.step()

            # generator: realness + class control + boundary margin + spread;
            # with the adversarial stream on, the combined objective carries
            # the realness term once per stream, and both evaluate to the
            # same expectation over fakes, hence the factor of two.
            realness = generator_realness(disc, x_fake)
            if schedule.use_adversarial_stream:
                realness = 2.0 * realness
            sub_logits = sub(x_fake)
            control = control_from_logits(sub_logits, y)
            loss_g = realness + weights.alpha1 * control
            sim = div = None
            if schedule.use_similarity:
                # minimized hinge pulls samples onto their nearest boundary;
                # the unhinged margin is logged as the diagnostic view
                loss_g = loss_g + weights.alpha2 * boundary_hinge_from_logits(
                    sub_logits, y, schedule.similarity_confidence
                )
                sim = similarity_from_logits(sub_logits.detach(), y)
            if schedule.use_diversity:
                div = diversity_from_logits(sub_logits, y, schedule.diversity_formula)
                loss_g = loss_g + weights.alpha3 * div
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()
            sub.zero_grad(set_to_none=True)
            disc.zero_grad(set_to_none=True)

            step += 1
            if step % schedule.log_every == 0 or step == 1:
                record = {
                    "step": step,
                    "used": oracle.ledger.used,
                    "loss_sub": loss_s.item(),
                    "loss_disc": loss_d.item(),
                    "loss_disc_adv": None if loss_d_adv is None else loss_d_adv.item(),
                    "loss_gen": loss_g.item(),
                    "realness": realness.item(),
                    "control": control.item(),
                    "similarity": None if sim is None else sim.item(),
                    "diversity": None if div is None else div.item(),
                    "elapsed": time.time() - start,
                }
                bundle.history.append(record)
                if log_file:
                    log_file.write(json.dumps(record) + "\n")
                    log_file.flush()
    finally:
        if log_file:
            log_file.close()
    gen.eval(), disc.eval(), sub.eval()
    return bundle
