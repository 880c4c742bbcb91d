"""Backoff-counter allocation policies.

Two schemes over a fixed contention window of cw slots:

* traditional -- every station draws uniformly from the full range [0, cw-1]
  (single-stage: broadcast has no retransmission, so the window never grows).
* proposed -- the range is cut into three priority chunks at floor((cw-1)/3)
  and floor(2(cw-1)/3); the most dangerous category gets the lowest chunk.
  A cut point itself belongs to the lower (more dangerous) chunk, so the
  three chunks are disjoint integer ranges that partition {0, ..., cw-1}.

Uncategorized stations contend with the highest chunk (same range as CAT3);
reporting-level exclusion is handled downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Category, CategoryThresholds

__all__ = ["PolicyKind", "BackoffPolicy", "BackoffRange", "backoff_range", "draw_backoff", "draw_matrix"]


class PolicyKind(Enum):
    TRADITIONAL = "traditional"
    PROPOSED = "proposed"


@dataclass(frozen=True)
class BackoffRange:
    """Inclusive integer slot range [lo, hi] a station draws its counter from."""

    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi):
            raise ValueError(f"invalid backoff range [{self.lo}, {self.hi}]")

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @property
    def mean(self) -> float:
        return (self.lo + self.hi) / 2.0


@dataclass(frozen=True)
class BackoffPolicy:
    kind: PolicyKind
    cw: int
    thresholds: CategoryThresholds | None = None

    def __post_init__(self):
        if self.cw < 1:
            raise ValueError("contention window must be a positive slot count")
        if self.kind is PolicyKind.PROPOSED:
            if self.cw < 3:
                raise ValueError("proposed policy needs cw >= 3 for three non-degenerate chunks")
            if self.thresholds is None:
                raise ValueError("proposed policy requires category thresholds")

    @staticmethod
    def traditional(cw: int) -> "BackoffPolicy":
        return BackoffPolicy(PolicyKind.TRADITIONAL, cw)

    @staticmethod
    def proposed(cw: int, thresholds: CategoryThresholds | None = None) -> "BackoffPolicy":
        return BackoffPolicy(PolicyKind.PROPOSED, cw, thresholds or CategoryThresholds())


def backoff_range(policy: BackoffPolicy, category: Category) -> BackoffRange:
    """Backoff-counter range for a station of the given category.

    Traditional ignores the category.  Proposed maps CAT1/CAT2/CAT3 to the
    three disjoint chunks; uncategorized stations use CAT3's chunk.
    """
    top = policy.cw - 1
    if policy.kind is PolicyKind.TRADITIONAL:
        return BackoffRange(0, top)
    cut1 = top // 3
    cut2 = (2 * top) // 3
    if category is Category.CAT1:
        return BackoffRange(0, cut1)
    if category is Category.CAT2:
        return BackoffRange(cut1 + 1, cut2)
    return BackoffRange(cut2 + 1, top)


def draw_backoff(policy: BackoffPolicy, category: Category, rng: np.random.Generator) -> int:
    """One uniform draw from the station's backoff range."""
    r = backoff_range(policy, category)
    return int(rng.integers(r.lo, r.hi + 1))


def draw_matrix(policy: BackoffPolicy, categories: np.ndarray, n_periods: int, rng: np.random.Generator) -> np.ndarray:
    """(n_periods, n_nodes) matrix of backoff draws, one column per node.

    Column i draws uniformly from node i's range; a single generator call
    keeps the draw stream independent of how the matrix is later consumed.
    """
    ranges = {int(c): backoff_range(policy, Category(int(c))) for c in np.unique(categories)}
    lo = np.array([ranges[int(c)].lo for c in categories], dtype=np.int64)
    hi = np.array([ranges[int(c)].hi for c in categories], dtype=np.int64)
    return rng.integers(lo, hi + 1, size=(n_periods, categories.shape[0]))
