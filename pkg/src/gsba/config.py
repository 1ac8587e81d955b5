"""One experiment configuration schema shared by every CLI command.

A config is assembled from an optional JSON file plus flag overrides (flags
win), validated as a whole before any compute; unknown keys are rejected.
The perturbation budget accepts fraction literals like "8/255" so common
bounds survive exactly instead of as rounded decimals.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .attack import InversionParams
from .data import DATASET_CLASSES
from .models import CLASSIFIER_ARCHS, default_substitute_arch
from .oracle import normalize_mode
from .surrogate import LossWeights, SurrogateSchedule
from .whitebox import AttackParams


def parse_fraction(value) -> float:
    """Parse a number or a 'p/q' fraction literal into a float."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


@dataclass
class ExperimentConfig:
    """Everything a pipeline run needs; commands consume the fields they use."""

    dataset: str = "digits"
    arch: str = "small-cnn"
    substitute_arch: str | None = None
    oracle_mode: str = "P"
    setting: str = "untargeted"
    delta: float = 8 / 255
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    budget: int = 1_000_000
    eval_n: int = 1000
    eval_seed: int = 7
    batch_size: int = 128
    max_steps: int | None = None
    latent_dim: int = 128
    gen_width: int = 64
    disc_width: int = 32
    lr_gen: float = 2e-4
    lr_disc: float = 2e-4
    lr_sub: float = 5e-4
    diversity_formula: str = "entropy"
    target_epochs: int = 30
    target_lr: float = 1e-3
    target_batch_size: int = 128
    restarts: int = 8
    inversion_iterations: int = 200
    inversion_step: float = 0.05
    inversion_distance: str = "l2"
    pgd_iterations: int = 100
    pgd_step: float | None = None
    seed: int = 0
    fractions: list = field(default_factory=lambda: [0.1, 0.25, 0.5, 1.0])
    output_dir: str = "runs/experiment"
    overwrite: bool = False

    def __post_init__(self):
        self.delta = parse_fraction(self.delta)
        self.oracle_mode = normalize_mode(self.oracle_mode)
        if self.dataset not in DATASET_CLASSES:
            raise ValueError(f"unknown dataset {self.dataset!r}; known: {sorted(DATASET_CLASSES)}")
        if self.arch not in CLASSIFIER_ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}; known: {CLASSIFIER_ARCHS}")
        if self.setting not in ("untargeted", "targeted"):
            raise ValueError(f"setting must be 'untargeted' or 'targeted', got {self.setting!r}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.eval_n < 1:
            raise ValueError("eval_n must be at least 1")
        if self.pgd_iterations < 1:
            raise ValueError("pgd_iterations must be at least 1")
        self.fractions = [parse_fraction(f) for f in self.fractions]
        if any(not (0 < f <= 1) for f in self.fractions):
            raise ValueError("budget fractions must lie in (0, 1]")
        # constructing the nested parameter objects runs their validation too
        self.loss_weights()
        self.inversion_params()
        self.surrogate_schedule()

    @classmethod
    def from_mapping(cls, mapping: dict, overrides: dict | None = None) -> "ExperimentConfig":
        """Build from a config-file mapping plus flag overrides; flags win.
        Unknown keys in either source are rejected."""
        known = {f.name for f in fields(cls)}
        merged = dict(mapping)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        unknown = set(merged) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**merged)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "ExperimentConfig":
        mapping = {}
        if path is not None:
            mapping = json.loads(Path(path).read_text())
            if not isinstance(mapping, dict):
                raise ValueError("config file must contain a JSON object")
        return cls.from_mapping(mapping, overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    def substitute(self) -> str:
        return self.substitute_arch or default_substitute_arch(self.dataset)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.alpha1, self.alpha2, self.alpha3)

    def inversion_params(self) -> InversionParams:
        return InversionParams(
            self.restarts, self.inversion_iterations, self.inversion_step, self.inversion_distance
        )

    def pgd_params(self) -> AttackParams:
        step = self.pgd_step if self.pgd_step is not None else self.delta / 20
        return AttackParams(self.delta, min(step, self.delta), self.pgd_iterations)

    def surrogate_schedule(self, seed: int | None = None, log_path=None) -> SurrogateSchedule:
        return SurrogateSchedule(
            batch_size=self.batch_size,
            max_steps=self.max_steps,
            latent_dim=self.latent_dim,
            gen_width=self.gen_width,
            disc_width=self.disc_width,
            substitute_arch=self.substitute(),
            lr_gen=self.lr_gen,
            lr_disc=self.lr_disc,
            lr_sub=self.lr_sub,
            diversity_formula=self.diversity_formula,
            seed=self.seed if seed is None else seed,
            log_path=log_path,
        )
