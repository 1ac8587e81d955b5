"""Closed-form expectations and finite-difference oracles for the loss
suite, shared between the unit tests and the acceptance gate.

Every expected value here is computed independently of the library: by hand
arithmetic (frozen constants) or by central finite differences over the
library function treated as a black box.
"""

import math

import torch

# hand-computed closed forms: (probs, label(s), expected value)
CONTROL_CASES = [
    # one-hot at the conditioning label -> zero cross-entropy
    ([[0.0, 1.0, 0.0]], [1], 0.0),
    # uniform over 10 classes -> log 10
    ([[0.1] * 10], [0], math.log(10.0)),
    # 3-class hand case
    ([[0.5, 0.25, 0.25]], [0], -math.log(0.5)),
]

SIMILARITY_CASES = [
    # uniform -> zero margin by symmetry
    ([[1 / 3, 1 / 3, 1 / 3]], [0], 0.0),
    # log 0.3 - log 0.6
    ([[0.6, 0.3, 0.1]], [0], math.log(0.3) - math.log(0.6)),
    # two-way tie at the boundary -> zero margin
    ([[0.5, 0.5, 0.0]], [0], 0.0),
]

# (probs rows, labels, formula, expected): entropy of the renormalized
# non-label average, negated
DIVERSITY_CASES = [
    # uniform over the 9 non-label classes -> -log 9 (the minimum)
    ([[0.0] + [1.0 / 9] * 9], [0], "entropy", -math.log(9.0)),
    # all mass on one other class -> zero entropy (the maximum)
    ([[0.0, 1.0, 0.0, 0.0]], [0], "entropy", 0.0),
    # C=4, renormalized average [0.5, 0.25, 0.25] -> 1.5*log 2 nats
    ([[0.0, 0.5, 0.25, 0.25]], [0], "entropy", -(1.5 * math.log(2.0))),
]

DISTILL_P_CASES = [
    # identical probability vectors -> zero distance
    ([[0.25, 0.75]], [[0.25, 0.75]], 0.0),
    # opposite one-hots -> (1-0)^2 + (0-1)^2 = 2
    ([[1.0, 0.0]], [[0.0, 1.0]], 2.0),
]

ADV_LOSS_CASES = [
    # untargeted classification: -log p_y
    ("classification", False, None, [[0.7, 0.2, 0.1]], [0], -math.log(0.7)),
    # uniform -> zero margin either way
    ("cw-margin", False, None, [[1 / 3, 1 / 3, 1 / 3]], [0], 0.0),
    # already misclassified: hinge holds the positive crossing margin
    ("cw-margin", False, None, [[0.1, 0.8, 0.1]], [0], math.log(0.8) - math.log(0.1)),
    # targeted classification: +log p_t
    ("classification", True, 1, [[0.5, 0.25, 0.25]], [0], math.log(0.25)),
    # targeted margin: goal class leads by log 0.8 - log 0.1
    ("cw-margin", True, 1, [[0.1, 0.8, 0.1]], [0], math.log(0.8) - math.log(0.1)),
    # targeted margin hinges at zero while the goal class trails
    ("cw-margin", True, 2, [[0.7, 0.2, 0.1]], [0], 0.0),
]


def finite_difference_grad(fn, x: torch.Tensor, eps: float = 1e-4) -> torch.Tensor:
    """Central-difference gradient of a scalar function of a tensor."""
    grad = torch.zeros_like(x)
    flat = x.flatten()
    gflat = grad.flatten()
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(fn(x))
        flat[i] = orig - eps
        lo = float(fn(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom


class TwoLayerNet(torch.nn.Module):
    """Tiny dense 2-layer classifier used by the gradient checks."""

    def __init__(self, in_dim=12, hidden=8, classes=3, seed=0):
        super().__init__()
        torch.manual_seed(seed)
        self.fc1 = torch.nn.Linear(in_dim, hidden)
        self.fc2 = torch.nn.Linear(hidden, classes)
        self.num_classes = classes
        self.double()

    def forward(self, x):
        return self.fc2(torch.tanh(self.fc1(x.flatten(1).double())))


class TwoParamGenerator(torch.nn.Module):
    """Toy generator with exactly two scalar parameters (float64 so the
    finite-difference comparison is not noise-limited)."""

    def __init__(self, base: torch.Tensor):
        super().__init__()
        self.scale = torch.nn.Parameter(torch.tensor(0.8, dtype=torch.float64))
        self.shift = torch.nn.Parameter(torch.tensor(0.1, dtype=torch.float64))
        self.base = base.double()

    def forward(self):
        return torch.sigmoid(self.scale * self.base + self.shift)
