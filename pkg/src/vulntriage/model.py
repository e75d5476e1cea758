"""Domain types shared across the toolkit, plus attribute quantization rules.

Raw scan/host/IDS fields are turned into numeric attribute vectors on a
priority scale: within each categorical attribute the highest-priority
category maps to 1.0, the lowest to 0.1, and intermediate categories sit on
a linear grid between them.  Five equally weighted attributes make up every
vulnerability instance's score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

NUM_ATTRIBUTES = 5

DEFAULT_CATEGORIES = ("high", "medium", "low")

# Share of the weekly score a vulnerability needs to count as critical.
CRITICAL_SCORE_THRESHOLD = 0.75


@dataclass(frozen=True, slots=True)
class RawVulnEntry:
    """One consolidated vulnerability instance before quantization.

    Category labels are priority tiers drawn from the configured ordered
    list (highest priority first).  For protection level the top tier
    corresponds to the least-protected machines: every attribute points in
    the "more concerning" direction.
    """

    host_id: str
    cve_id: str
    cvss_raw: float
    asset_criticality_cat: str
    protection_level_cat: str
    org_relevance_cat: str
    ids_flagged: bool
    mitigation_minutes: float

    def __post_init__(self):
        if not 1.0 <= self.cvss_raw <= 10.0:
            raise ValueError(
                f"cvss_raw must lie in [1, 10], got {self.cvss_raw!r}"
            )
        if not self.mitigation_minutes > 0:
            raise ValueError(
                f"mitigation_minutes must be positive, got {self.mitigation_minutes!r}"
            )


@dataclass(frozen=True, slots=True)
class AttributeVector:
    """Five equally weighted per-instance scores, each in [0, 1]."""

    asset_criticality: float
    protection_level: float
    org_relevance: float
    cvss_norm: float
    ids_flag: float

    def total(self) -> float:
        """Sum of the five components."""
        return (
            self.asset_criticality
            + self.protection_level
            + self.org_relevance
            + self.cvss_norm
            + self.ids_flag
        )

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (
            self.asset_criticality,
            self.protection_level,
            self.org_relevance,
            self.cvss_norm,
            self.ids_flag,
        )


@dataclass(frozen=True, slots=True)
class VulnRecord:
    """A live vulnerability instance inside an episode.

    ``avg_score`` caches the mean of the five attribute values; it is what
    both the selection objective and the critical threshold consume.
    """

    uid: int
    attrs: AttributeVector
    mitigation_minutes: float
    arrival_step: int
    avg_score: float

    @property
    def is_critical(self) -> bool:
        return self.avg_score >= CRITICAL_SCORE_THRESHOLD


@dataclass(frozen=True)
class SystemState:
    """The agent's observation: zero-padded attribute matrix plus pool.

    ``rows`` is an N x (NUM_ATTRIBUTES + 1) read-only array.  Each populated
    row holds the five attribute values followed by normalized mitigation
    time; rows past the backlog are all-zero, and populated rows are sorted
    by avg_score descending.
    """

    rows: np.ndarray
    pool_minutes: float
    pool_norm: float

    def __post_init__(self):
        self.rows.flags.writeable = False

    def flatten(self) -> np.ndarray:
        """Policy-network input: row matrix raveled, pool share appended."""
        return np.concatenate([self.rows.ravel(), [self.pool_norm]])


@dataclass(frozen=True, slots=True)
class RewardBreakdown:
    """Weekly reward split into its two weighted terms.

    r1 rewards the quality (average attribute score) of the mitigated set;
    r2 penalizes the analyst minutes spent.  ``total`` is exactly
    ``w1 * r1 + w2 * r2``.
    """

    r1: float
    r2: float
    total: float
    w1: float
    w2: float


def quantize_categorical(label: str, ordered_categories: Sequence[str]) -> float:
    """Map a priority category to its grid value.

    ``ordered_categories`` lists labels highest-priority first.  The top
    label maps to 1.0 and the bottom to 0.1; with k categories the grid is
    ``1.0 - i * (0.9 / (k - 1))`` for position i.
    """
    if len(ordered_categories) < 2:
        raise ValueError("ordered_categories needs at least 2 entries")
    try:
        idx = list(ordered_categories).index(label)
    except ValueError:
        raise ValueError(
            f"unknown category {label!r}; configured categories are "
            f"{list(ordered_categories)}"
        ) from None
    return 1.0 - idx * (0.9 / (len(ordered_categories) - 1))


def normalize_cvss(cvss_raw: float) -> float:
    """Scale a raw scanner severity in [1, 10] down to [0.1, 1.0]."""
    if not 1.0 <= cvss_raw <= 10.0:
        raise ValueError(f"cvss_raw must lie in [1, 10], got {cvss_raw!r}")
    return cvss_raw / 10.0


def build_record(
    entry: RawVulnEntry,
    arrival_step: int,
    uid: int,
    categories: Sequence[str] = DEFAULT_CATEGORIES,
) -> VulnRecord:
    """Quantize a consolidated entry into a live VulnRecord."""
    attrs = AttributeVector(
        asset_criticality=quantize_categorical(entry.asset_criticality_cat, categories),
        protection_level=quantize_categorical(entry.protection_level_cat, categories),
        org_relevance=quantize_categorical(entry.org_relevance_cat, categories),
        cvss_norm=normalize_cvss(entry.cvss_raw),
        ids_flag=1.0 if entry.ids_flagged else 0.0,
    )
    return VulnRecord(
        uid=uid,
        attrs=attrs,
        mitigation_minutes=entry.mitigation_minutes,
        arrival_step=arrival_step,
        avg_score=attrs.total() / NUM_ATTRIBUTES,
    )


def compute_reward(
    selected: Sequence[VulnRecord],
    w1: float,
    w2: float,
    cost_per_minute: float,
) -> RewardBreakdown:
    """Score one week's mitigation set.

    r1 is the mean attribute value over the selected instances (0 for an
    empty selection), r2 is minus the cost-weighted minutes used.
    """
    if not math.isclose(w1 + w2, 1.0, rel_tol=0.0, abs_tol=1e-9):
        raise ValueError(f"reward weights must sum to 1, got {w1} + {w2}")
    if cost_per_minute < 0:
        raise ValueError(f"cost_per_minute must be >= 0, got {cost_per_minute}")
    if selected:
        attr_sum = sum(rec.attrs.total() for rec in selected)
        r1 = attr_sum / (NUM_ATTRIBUTES * len(selected))
    else:
        r1 = 0.0
    r2 = -sum(cost_per_minute * rec.mitigation_minutes for rec in selected)
    return RewardBreakdown(r1=r1, r2=r2, total=w1 * r1 + w2 * r2, w1=w1, w2=w2)
