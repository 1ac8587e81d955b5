"""Dataset ingestion, normalization, and the fixed evaluation set.

All images are float32 tensors in [0, 1]; labels are int64 class indices.
The attacker-visible pixel space is always [0, 1] — any per-channel
standardization lives inside model forward passes, never here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

DATA_DIR_ENV = "GSBA_DATA_DIR"
MIRROR_ENV = "GSBA_DATASET_MIRROR"

DATASET_CLASSES = {
    "digits": 10,
    "digits16": 10,
    "digits28": 10,
    "mnist": 10,
    "cifar10": 10,
    "cifar100": 100,
}
DATASET_SHAPES = {
    "digits": (1, 8, 8),
    "digits16": (1, 16, 16),
    "digits28": (1, 28, 28),
    "mnist": (1, 28, 28),
    "cifar10": (3, 32, 32),
    "cifar100": (3, 32, 32),
}


class DatasetError(RuntimeError):
    """Unknown dataset id, or dataset files missing/corrupt."""


class InsufficientCorrectSamples(RuntimeError):
    """The target classifies fewer samples correctly than requested."""


@dataclass
class ImageBatch:
    """A batch of images with labels.

    pixels: (N, C, H, W) float32, every value in [0, 1].
    labels: (N,) int64, every value in [0, num_classes).
    """

    pixels: torch.Tensor
    labels: torch.Tensor
    num_classes: int

    def __post_init__(self):
        if self.pixels.ndim != 4:
            raise ValueError(f"pixels must be (N, C, H, W), got {tuple(self.pixels.shape)}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.pixels.shape[0]:
            raise ValueError(
                f"labels length {tuple(self.labels.shape)} does not match "
                f"pixels first dimension {self.pixels.shape[0]}"
            )
        if self.pixels.numel() and (self.pixels.min() < 0 or self.pixels.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")
        if self.labels.numel() and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.pixels.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.pixels.shape[1:])

    def subset(self, indices) -> "ImageBatch":
        idx = torch.as_tensor(indices, dtype=torch.long)
        return ImageBatch(self.pixels[idx].clone(), self.labels[idx].clone(), self.num_classes)


@dataclass
class EvalSet:
    """Fixed set of correctly classified samples used to score attacks.

    Regenerating with the same (seed, target, data) yields byte-identical
    pixel data; the set is read-only after construction.
    """

    samples: ImageBatch
    seed: int
    target_id: str

    def __len__(self) -> int:
        return len(self.samples)

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            pixels=self.samples.pixels.numpy(),
            labels=self.samples.labels.numpy(),
            num_classes=np.int64(self.samples.num_classes),
            seed=np.int64(self.seed),
            target_id=np.str_(self.target_id),
        )

    @staticmethod
    def load(path) -> "EvalSet":
        with np.load(path) as f:
            batch = ImageBatch(
                torch.from_numpy(f["pixels"]),
                torch.from_numpy(f["labels"]),
                int(f["num_classes"]),
            )
            return EvalSet(batch, int(f["seed"]), str(f["target_id"]))


def data_dir() -> str:
    """Dataset cache directory (GSBA_DATA_DIR, default ~/.gsba/data)."""
    return os.environ.get(DATA_DIR_ENV, os.path.join(os.path.expanduser("~"), ".gsba", "data"))


def _load_digits(split: str, size: int = 8) -> ImageBatch:
    # Ships inside scikit-learn: 1797 8x8 grayscale digits, no download.
    # digits16/digits28 are bilinear upscales, giving an MNIST-like regime
    # (28x28-level attack vulnerability) without any network access.
    from sklearn.datasets import load_digits

    bunch = load_digits()
    pixels = torch.from_numpy(bunch.images.astype(np.float32) / 16.0).unsqueeze(1)
    labels = torch.from_numpy(bunch.target.astype(np.int64))
    if size != 8:
        pixels = torch.nn.functional.interpolate(
            pixels, size=(size, size), mode="bilinear", align_corners=False
        ).clamp(0.0, 1.0)
    cut = 1437  # fixed 80/20 split; sklearn's ordering is deterministic
    sl = slice(0, cut) if split == "train" else slice(cut, None)
    return ImageBatch(pixels[sl].contiguous(), labels[sl].contiguous(), 10)


def _load_torchvision(name: str, split: str) -> ImageBatch:
    import torchvision

    cls = {
        "mnist": torchvision.datasets.MNIST,
        "cifar10": torchvision.datasets.CIFAR10,
        "cifar100": torchvision.datasets.CIFAR100,
    }[name]
    mirror = os.environ.get(MIRROR_ENV)
    if mirror and name == "mnist":
        cls.mirrors = [mirror]
    elif mirror and hasattr(cls, "url"):
        cls.url = mirror
    root = data_dir()
    try:
        ds = cls(root=root, train=(split == "train"), download=False)
    except RuntimeError:
        try:
            ds = cls(root=root, train=(split == "train"), download=True)
        except Exception as e:
            raise DatasetError(
                f"dataset '{name}' not found under {root} and download failed: {e}"
            ) from e
    raw = ds.data.numpy() if isinstance(ds.data, torch.Tensor) else np.asarray(ds.data)
    if raw.ndim == 3:  # grayscale (N, H, W)
        raw = raw[:, None, :, :]
    else:  # (N, H, W, 3) -> (N, 3, H, W)
        raw = raw.transpose(0, 3, 1, 2)
    pixels = torch.from_numpy(raw.astype(np.float32) / 255.0)
    labels = torch.as_tensor(ds.targets, dtype=torch.int64)
    return ImageBatch(pixels, labels, DATASET_CLASSES[name])


def load_dataset(name: str, split: str) -> ImageBatch:
    """Load a dataset split with pixels scaled to [0, 1], deterministic order.

    Supported ids: digits (bundled, hermetic), mnist, cifar10, cifar100
    (cached under the data dir, downloaded if the environment allows).
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    if name == "digits":
        return _load_digits(split)
    if name in ("digits16", "digits28"):
        return _load_digits(split, size=int(name[6:]))
    if name in ("mnist", "cifar10", "cifar100"):
        return _load_torchvision(name, split)
    raise DatasetError(f"unknown dataset id {name!r}")


def dataset_available(name: str) -> bool:
    """True if load_dataset(name, 'test') would succeed right now."""
    try:
        load_dataset(name, "test")
        return True
    except DatasetError:
        return False


@torch.no_grad()
def _predict_labels(model, pixels: torch.Tensor, batch_size: int = 512) -> torch.Tensor:
    outs = []
    for i in range(0, pixels.shape[0], batch_size):
        outs.append(model(pixels[i : i + batch_size]).argmax(dim=1))
    return torch.cat(outs) if outs else torch.empty(0, dtype=torch.int64)


def build_eval_set(target, data: ImageBatch, n: int, seed: int, target_id: str = "") -> EvalSet:
    """Select n samples the target classifies correctly, reproducibly from seed.

    `target` is the bare model (experimenter tooling), not the query-counted
    oracle: these selection queries are never charged to any attack budget.
    """
    preds = _predict_labels(target, data.pixels)
    correct = (preds == data.labels).nonzero(as_tuple=True)[0]
    if correct.numel() < n:
        raise InsufficientCorrectSamples(
            f"target classifies only {correct.numel()} samples correctly, need {n}"
        )
    gen = torch.Generator().manual_seed(seed)
    order = torch.randperm(len(data), generator=gen)
    mask = torch.zeros(len(data), dtype=torch.bool)
    mask[correct] = True
    chosen = order[mask[order]][:n]
    return EvalSet(data.subset(chosen), seed, target_id)
