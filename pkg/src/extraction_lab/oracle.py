"""The black-box teacher boundary: budgeted queries, soft or hard answers.

An oracle is anything with `query`, `budget_status`, and the `num_classes` /
`input_dim` / `label_mode` attributes. The in-process implementation lives
here; the wire-protocol twin is in `service`. Diagnostic helpers that peek at
a local teacher without spending budget are deliberately free functions on
the raw network, so code holding only an oracle handle cannot reach them.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .network import Network, forward, forward_batch, softmax

LABEL_MODES = ("soft", "hard")


class BudgetExhausted(Exception):
    def __init__(self, used: int, limit: int):
        self.used = used
        self.limit = limit
        super().__init__(f"oracle budget exhausted ({used}/{limit} calls)")


class DimensionMismatch(Exception):
    pass


@dataclass
class Budget:
    """Hard cap and counter on oracle calls; `used` only ever grows."""

    limit: int
    used: int = 0

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError("budget limit must be >= 1")

    @property
    def remaining(self) -> int:
        return self.limit - self.used


@dataclass
class OracleResponse:
    kind: str  # "soft" | "hard"
    probs: np.ndarray | None = None
    label: int | None = None

    def top_class(self) -> int:
        if self.kind == "hard":
            return int(self.label)
        return int(np.argmax(self.probs))

    def as_distribution(self, num_classes: int) -> np.ndarray:
        if self.kind == "soft":
            return np.asarray(self.probs, dtype=float)
        one_hot = np.zeros(num_classes)
        one_hot[self.label] = 1.0
        return one_hot


def _respond(net: Network, sample: np.ndarray, label_mode: str) -> OracleResponse:
    logits = forward(net, sample).logits
    if label_mode == "soft":
        return OracleResponse(kind="soft", probs=softmax(logits))
    # argmax with ties broken by lowest class index
    return OracleResponse(kind="hard", label=int(np.argmax(logits)))


class LocalOracle:
    """In-process teacher with a linearizable call counter.

    The reserve-then-answer sequence holds a lock around the counter, so
    concurrent callers can never drive `used` past `limit`; failed calls
    (exhausted budget, bad dimensions) leave the counter untouched.
    """

    def __init__(self, teacher: Network, label_mode: str, budget_limit: int):
        if label_mode not in LABEL_MODES:
            raise ValueError(f"label_mode must be one of {LABEL_MODES}")
        self._teacher = teacher
        self.label_mode = label_mode
        self.budget = Budget(limit=budget_limit)
        self._lock = threading.Lock()

    @property
    def num_classes(self) -> int:
        return self._teacher.spec.num_classes

    @property
    def input_dim(self) -> int:
        return self._teacher.spec.input_dim

    def query(self, sample: np.ndarray) -> OracleResponse:
        sample = np.asarray(sample, dtype=float)
        if sample.shape != (self.input_dim,):
            raise DimensionMismatch(
                f"sample has shape {sample.shape}, oracle expects ({self.input_dim},)"
            )
        with self._lock:
            if self.budget.used >= self.budget.limit:
                raise BudgetExhausted(self.budget.used, self.budget.limit)
            self.budget.used += 1
        return _respond(self._teacher, sample, self.label_mode)

    def budget_status(self) -> tuple[int, int]:
        with self._lock:
            return self.budget.used, self.budget.limit


def unbudgeted_reference_labels(
    teacher: Network, samples: np.ndarray, label_mode: str
) -> list[OracleResponse]:
    """Diagnostic-only labels from a local teacher; never touches any budget.

    Only usable when the teacher network itself is in hand, which the attack
    loop (holding an oracle handle) never has.
    """
    if label_mode not in LABEL_MODES:
        raise ValueError(f"label_mode must be one of {LABEL_MODES}")
    return [_respond(teacher, np.asarray(s, dtype=float), label_mode) for s in samples]


def reference_top_classes(teacher: Network, samples: np.ndarray) -> np.ndarray:
    """Batched diagnostic argmax labels; same tie-break as `query`."""
    logits, _ = forward_batch(teacher, samples)
    return np.argmax(logits, axis=1)
