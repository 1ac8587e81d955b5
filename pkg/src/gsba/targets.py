"""Train, evaluate, and checkpoint target classifiers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from .data import ImageBatch
from .models import build_classifier


@dataclass
class TargetTrainConfig:
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0


@torch.no_grad()
def accuracy(model, data: ImageBatch, batch_size: int = 512) -> float:
    """Top-1 accuracy of a classifier on a batch."""
    was_training = model.training
    model.eval()
    correct = 0
    for i in range(0, len(data), batch_size):
        logits = model(data.pixels[i : i + batch_size])
        correct += (logits.argmax(dim=1) == data.labels[i : i + batch_size]).sum().item()
    model.train(was_training)
    return correct / max(len(data), 1)


def train_target(
    arch: str,
    train_data: ImageBatch,
    config: TargetTrainConfig | None = None,
    test_data: ImageBatch | None = None,
    checkpoint_path=None,
):
    """Train a classifier from scratch; deterministic given config.seed.

    Returns the model with a `meta` dict attached (test accuracy when
    test_data is given). Writes a checkpoint when checkpoint_path is set.
    """
    config = config or TargetTrainConfig()
    torch.manual_seed(config.seed)
    model = build_classifier(arch, train_data.image_shape, train_data.num_classes)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    order_gen = torch.Generator().manual_seed(config.seed)
    model.train()
    for _ in range(config.epochs):
        perm = torch.randperm(len(train_data), generator=order_gen)
        for i in range(0, len(train_data), config.batch_size):
            idx = perm[i : i + config.batch_size]
            loss = F.cross_entropy(model(train_data.pixels[idx]), train_data.labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    model.eval()
    meta = {"arch": arch, "train_config": asdict(config), "train_size": len(train_data)}
    if test_data is not None:
        meta["test_accuracy"] = accuracy(model, test_data)
    model.meta = meta
    if checkpoint_path is not None:
        save_target(checkpoint_path, model)
    return model


def save_target(path, model) -> None:
    torch.save(
        {
            "arch": model.arch_id,
            "image_shape": model.image_shape,
            "num_classes": model.num_classes,
            "state_dict": model.state_dict(),
            "meta": getattr(model, "meta", {}),
        },
        path,
    )


def load_target(path):
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    model = build_classifier(ckpt["arch"], ckpt["image_shape"], ckpt["num_classes"])
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    model.meta = ckpt.get("meta", {})
    return model
