"""Vulnerability selection solvers.

The production objective picks the subset of backlog instances with the
highest *average* attribute score subject to an allocated-time cap, plus an
optional utilization floor that forces the selection to actually consume
most of the allocation (a pure average is otherwise maximized by a single
best-scoring item).  The fractional objective is solved exactly with
Dinkelbach's parametric iteration over a time-indexed dynamic program.

``brute_force_select`` is the enumeration oracle for small instances and
``knapsack_max_total`` is the total-score baseline that the average
objective is meant to improve on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import VulnRecord

# Guard rails for the DP tables (1-minute ticks).
MAX_DP_TICKS = 2_000_000
MAX_DP_CELLS = 200_000_000

BRUTE_FORCE_ITEM_LIMIT = 20

_EPS = 1e-9


@dataclass(frozen=True, slots=True)
class SelectionItem:
    """One candidate instance: uid, cumulative attribute value, time cost.

    Mitigation time is rounded up to whole minutes when the problem is
    built, so ``time_minutes`` is integral and the DP can index it exactly.
    """

    uid: int
    value: float
    time_minutes: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"item {self.uid}: value must be >= 0, got {self.value}")
        if not self.time_minutes > 0:
            raise ValueError(
                f"item {self.uid}: time must be positive, got {self.time_minutes}"
            )

    @property
    def ticks(self) -> int:
        return int(self.time_minutes)


@dataclass(frozen=True)
class SelectionProblem:
    """Inputs to one selection solve.

    ``utilization_floor`` is the minimum fraction of ``budget_minutes`` the
    chosen set must consume; 0 reproduces the bare time-cap formulation.
    """

    items: tuple[SelectionItem, ...]
    budget_minutes: float
    utilization_floor: float = 0.0

    def __post_init__(self):
        if self.budget_minutes < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget_minutes}")
        if not 0.0 <= self.utilization_floor <= 1.0:
            raise ValueError(
                f"utilization_floor must lie in [0, 1], got {self.utilization_floor}"
            )
        uids = [it.uid for it in self.items]
        if len(set(uids)) != len(uids):
            raise ValueError("duplicate uids in selection problem")

    @classmethod
    def build(
        cls,
        items: Iterable[tuple[int, float, float]],
        budget_minutes: float,
        utilization_floor: float = 0.0,
    ) -> "SelectionProblem":
        """Build from (uid, value, minutes) triples, rounding times up."""
        rounded = tuple(
            SelectionItem(uid, value, float(math.ceil(minutes - _EPS)))
            for uid, value, minutes in items
        )
        return cls(rounded, budget_minutes, utilization_floor)

    @classmethod
    def from_records(
        cls,
        records: Sequence[VulnRecord],
        budget_minutes: float,
        utilization_floor: float = 0.0,
    ) -> "SelectionProblem":
        return cls.build(
            ((rec.uid, rec.attrs.total(), rec.mitigation_minutes) for rec in records),
            budget_minutes,
            utilization_floor,
        )


@dataclass(frozen=True)
class SelectionResult:
    """A solved selection: chosen uids plus the objective bookkeeping.

    ``objective`` is the average value of the chosen set (0 when empty) and
    ``floor_relaxed`` flags solves where no subset could reach the
    utilization floor so the cap-only problem was solved instead.
    """

    chosen_uids: frozenset[int] = field(default_factory=frozenset)
    objective: float = 0.0
    total_time: float = 0.0
    total_value: float = 0.0
    floor_relaxed: bool = False

    def __len__(self) -> int:
        return len(self.chosen_uids)


def _empty_result(floor_relaxed: bool = False) -> SelectionResult:
    return SelectionResult(floor_relaxed=floor_relaxed)


def _result_from_indices(
    idx: Sequence[int],
    uids: np.ndarray,
    values: np.ndarray,
    ticks: np.ndarray,
    floor_relaxed: bool,
) -> SelectionResult:
    if len(idx) == 0:
        return _empty_result(floor_relaxed)
    idx = np.asarray(idx, dtype=np.int64)
    total_value = float(values[idx].sum())
    total_time = float(ticks[idx].sum())
    return SelectionResult(
        chosen_uids=frozenset(int(u) for u in uids[idx]),
        objective=total_value / len(idx),
        total_time=total_time,
        total_value=total_value,
        floor_relaxed=floor_relaxed,
    )


def _dp_tables(
    profits: np.ndarray,
    ticks: np.ndarray,
    t_cap: int,
    prefer_cardinality: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact-time 0/1 DP.

    Returns (profit, cardinality, take) where profit[T] is the best profit
    over subsets whose tick total is exactly T (-inf if unreachable) and
    take[j, T] marks cells last improved by taking item j, which is enough
    to backtrack one realizing subset.  With ``prefer_cardinality`` a cell
    tie at *exactly* equal profit is resolved toward more items.
    """
    n = len(profits)
    prof = np.full(t_cap + 1, -np.inf)
    prof[0] = 0.0
    card = np.zeros(t_cap + 1, dtype=np.int64)
    take = np.zeros((n, t_cap + 1), dtype=bool)
    for j in range(n):
        t = int(ticks[j])
        if t > t_cap:
            continue
        cand_prof = prof[:-t] + profits[j]
        cur_prof = prof[t:]
        if prefer_cardinality:
            cand_card = card[:-t] + 1
            with np.errstate(invalid="ignore"):
                better = (cand_prof > cur_prof) | (
                    (cand_prof == cur_prof) & (cand_card > card[t:])
                )
            card[t:][better] = cand_card[better]
        else:
            better = cand_prof > cur_prof
            card[t:][better] = card[: -t][better] + 1
        prof[t:][better] = cand_prof[better]
        take[j, t:][better] = True
    return prof, card, take


def _backtrack(take: np.ndarray, ticks: np.ndarray, t_star: int) -> list[int]:
    chosen = []
    t = t_star
    for j in range(take.shape[0] - 1, -1, -1):
        if take[j, t]:
            chosen.append(j)
            t -= int(ticks[j])
    if t != 0:
        raise RuntimeError("DP backtrack did not land on the empty cell")
    chosen.reverse()
    return chosen


def _check_dp_size(n_items: int, t_cap: int) -> None:
    if t_cap > MAX_DP_TICKS or n_items * (t_cap + 1) > MAX_DP_CELLS:
        raise ValueError(
            f"DP table of {n_items} items x {t_cap} one-minute ticks exceeds the "
            f"configured cap; rescale the problem to coarser ticks"
        )


def _window(problem: SelectionProblem) -> tuple[int, int]:
    """Tick window [lo, hi] the chosen set's total time must fall in."""
    t_cap = int(math.floor(problem.budget_minutes + _EPS))
    if problem.utilization_floor > 0.0:
        t_lo = int(math.ceil(problem.utilization_floor * problem.budget_minutes - _EPS))
    else:
        t_lo = 0
    return max(1, t_lo), t_cap


def dinkelbach_solve(
    problem: SelectionProblem,
    tol: float = 1e-12,
    max_iterations: int = 100,
) -> SelectionResult:
    """Exactly maximize average value under the time window.

    Iterates lambda <- value(X)/|X| where X maximizes the lambda-discounted
    profit sum over the window-feasible subsets; on a finite item set the
    ratio sequence is strictly increasing and terminates at the optimum.
    The final harvest pass re-solves at the optimal ratio preferring larger
    sets among exact profit ties, so equal-average optima resolve toward
    larger total value with a deterministic uid preference.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    order = sorted(range(len(problem.items)), key=lambda j: problem.items[j].uid)
    uids = np.array([problem.items[j].uid for j in order], dtype=np.int64)
    values = np.array([problem.items[j].value for j in order], dtype=np.float64)
    ticks = np.array([problem.items[j].ticks for j in order], dtype=np.int64)

    t_lo, t_cap = _window(problem)
    if len(values) == 0 or t_cap <= 0:
        return _empty_result()
    _check_dp_size(len(values), t_cap)

    lam = 0.0
    floor_relaxed = False
    window_lo = t_lo
    for iteration in range(max_iterations):
        prof, card, take = _dp_tables(values - lam, ticks, t_cap, prefer_cardinality=False)
        reachable = np.isfinite(prof)
        if iteration == 0:
            if not reachable[window_lo : t_cap + 1].any():
                if window_lo > 1 and reachable[1 : t_cap + 1].any():
                    window_lo = 1
                    floor_relaxed = True
                else:
                    return _empty_result()
        window = prof[window_lo : t_cap + 1]
        best = float(np.nanmax(window[np.isfinite(window)].max() if False else window))
        # nanmax over -inf entries is fine; unreachable stays -inf
        t_star = window_lo + int(np.argmax(window))
        if best <= tol:
            # lam is the optimal ratio; harvest the preferred optimal set
            prof, card, take = _dp_tables(
                values - lam, ticks, t_cap, prefer_cardinality=True
            )
            window = prof[window_lo : t_cap + 1]
            best = window.max()
            tie = np.flatnonzero(window == best)
            t_star = window_lo + int(tie[np.argmax(card[window_lo + tie])])
            chosen = _backtrack(take, ticks, t_star)
            return _result_from_indices(chosen, uids, values, ticks, floor_relaxed)
        chosen = _backtrack(take, ticks, t_star)
        lam = float(values[chosen].sum()) / len(chosen)
    raise RuntimeError(
        f"Dinkelbach iteration failed to converge in {max_iterations} steps; "
        f"this indicates an internal solver bug"
    )


def select_max_average(problem: SelectionProblem) -> SelectionResult:
    """Solve the average-value selection model (exact)."""
    return dinkelbach_solve(problem)


def knapsack_max_total(problem: SelectionProblem) -> SelectionResult:
    """Baseline: maximize *total* value under the time cap (no floor).

    Exact dynamic programming over 1-minute ticks.  This is the selection
    style the average objective is contrasted against: it happily trades
    one important instance for many cheap unimportant ones.
    """
    order = sorted(range(len(problem.items)), key=lambda j: problem.items[j].uid)
    uids = np.array([problem.items[j].uid for j in order], dtype=np.int64)
    values = np.array([problem.items[j].value for j in order], dtype=np.float64)
    ticks = np.array([problem.items[j].ticks for j in order], dtype=np.int64)

    t_cap = int(math.floor(problem.budget_minutes + _EPS))
    if len(values) == 0 or t_cap <= 0:
        return _empty_result()
    _check_dp_size(len(values), t_cap)

    prof, _card, take = _dp_tables(values, ticks, t_cap, prefer_cardinality=False)
    reachable = np.isfinite(prof)
    prof = np.where(reachable, prof, -np.inf)
    t_star = int(np.argmax(prof))
    if prof[t_star] <= 0.0 and t_star == 0:
        return _empty_result()
    chosen = _backtrack(take, ticks, t_star)
    return _result_from_indices(chosen, uids, values, ticks, floor_relaxed=False)


def brute_force_select(problem: SelectionProblem) -> SelectionResult:
    """Enumeration oracle applying the documented feasibility and tie rules.

    Ties on the average objective prefer larger total value, then the
    lexicographically smallest sorted uid tuple.  Limited to
    BRUTE_FORCE_ITEM_LIMIT items.
    """
    n = len(problem.items)
    if n > BRUTE_FORCE_ITEM_LIMIT:
        raise ValueError(
            f"brute force limited to {BRUTE_FORCE_ITEM_LIMIT} items, got {n}"
        )
    order = sorted(range(n), key=lambda j: problem.items[j].uid)
    uids = np.array([problem.items[j].uid for j in order], dtype=np.int64)
    values = np.array([problem.items[j].value for j in order], dtype=np.float64)
    ticks = np.array([problem.items[j].ticks for j in order], dtype=np.int64)

    t_lo, t_cap = _window(problem)
    if n == 0 or t_cap <= 0:
        return _empty_result()

    masks = np.arange(1, 2**n, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.float64)
    subset_time = bits @ ticks.astype(np.float64)
    subset_value = bits @ values
    subset_card = bits.sum(axis=1)

    feasible = (subset_time <= t_cap) & (subset_time >= t_lo)
    floor_relaxed = False
    if not feasible.any():
        if t_lo > 1:
            feasible = subset_time <= t_cap
            floor_relaxed = feasible.any()
        if not feasible.any():
            return _empty_result()

    avg = np.where(feasible, subset_value / subset_card, -np.inf)
    best_avg = avg.max()
    tied = np.flatnonzero(avg == best_avg)
    best_value = subset_value[tied].max()
    tied = tied[subset_value[tied] == best_value]
    best_mask = min(
        (int(masks[t]) for t in tied),
        key=lambda m: tuple(int(uids[j]) for j in range(n) if m >> j & 1),
    )
    chosen = [j for j in range(n) if best_mask >> j & 1]
    return _result_from_indices(chosen, uids, values, ticks, floor_relaxed)
