"""Query-counted black-box access to a target classifier.

The oracle is the only channel to the target during surrogate training:
no gradients and no parameters cross this boundary. One image = one query,
regardless of batching. Uncharged calls (verification during scoring) are
tracked in a separate counter and never touch the training budget.
"""

from __future__ import annotations

import threading

import torch
import torch.nn.functional as F

PROBABILITY = "probability"
LABEL = "label"


class BudgetExhausted(RuntimeError):
    """Charging this batch would exceed the training query budget."""


def normalize_mode(mode: str) -> str:
    m = mode.strip().lower()
    if m in ("p", "prob", "probability", "probability-only"):
        return PROBABILITY
    if m in ("l", "label", "label-only"):
        return LABEL
    raise ValueError(f"unknown oracle mode {mode!r}")


class QueryLedger:
    """Monotone counter enforcing the training-time query budget.

    `used` never decreases and never exceeds `budget`; the check and the
    increment are one atomic unit, so concurrent callers cannot overdraw.
    """

    def __init__(self, budget: int | None = None):
        if budget is not None and budget < 0:
            raise ValueError("budget must be non-negative or None (unlimited)")
        self.budget = budget
        self._used = 0
        self._lock = threading.Lock()

    @property
    def used(self) -> int:
        return self._used

    @property
    def remaining(self) -> int | None:
        return None if self.budget is None else self.budget - self._used

    def charge(self, n: int) -> None:
        """Atomically add n queries, refusing if the budget would be exceeded."""
        if n < 0:
            raise ValueError("cannot charge a negative query count")
        with self._lock:
            if self.budget is not None and self._used + n > self.budget:
                raise BudgetExhausted(
                    f"charging {n} queries would exceed budget "
                    f"({self._used} used of {self.budget})"
                )
            self._used += n

    def snapshot(self) -> dict:
        return {"used": self._used, "budget": self.budget}


class BlackBoxOracle:
    """The attacker's only view of the target: probabilities or labels.

    The wrapped classifier is deliberately not reachable through any public
    attribute; responses are detached tensors computed under no_grad.
    """

    def __init__(self, model, mode: str, ledger: QueryLedger):
        self.__model = model
        self.mode = normalize_mode(mode)
        self.ledger = ledger
        self.num_classes = model.num_classes
        self._verify_lock = threading.Lock()
        self._verification_used = 0

    @property
    def verification_used(self) -> int:
        """Uncharged queries spent re-checking claimed adversarial examples."""
        return self._verification_used

    def query(self, x: torch.Tensor, charge: bool = True) -> torch.Tensor:
        """Query the target on a pixel batch (N, C, H, W) in [0, 1].

        Returns an (N, num_classes) probability matrix in probability mode,
        or an (N,) int64 label vector in label mode. Charged calls increment
        the ledger by N before the model runs; a refused charge leaves the
        ledger untouched and raises BudgetExhausted.
        """
        if x.ndim != 4:
            raise ValueError(f"expected (N, C, H, W) batch, got shape {tuple(x.shape)}")
        n = x.shape[0]
        if charge:
            self.ledger.charge(n)
        else:
            with self._verify_lock:
                self._verification_used += n
        with torch.no_grad():
            probs = F.softmax(self.__model(x), dim=1)
        if self.mode == PROBABILITY:
            return probs.detach()
        return probs.argmax(dim=1).detach()
