"""
Lag-tolerant asynchronous scheduling.

Each AP serves the shortest prefix of its UEs, sorted by large-scale gain,
that covers a lag percent of its total gain. A UE left unserved is forced onto
its strongest AP before its staleness reaches the lag tolerance.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from sim.errors import InvalidArgumentError, ProtocolError

logger = logging.getLogger(__name__)

_PREFIX_SLACK = 1e-12


class UeCategory(str, Enum):
    SYNCHRONOUS = "synchronous"
    ASYNCHRONOUS = "asynchronous"
    NEED_SYNC = "need-to-be-synchronized"


@dataclass(frozen=True)
class ScheduleState:
    """Serving mask of the latest round plus per-UE staleness counters."""
    mask: np.ndarray            # L x K, 0/1
    staleness: Tuple[int, ...]  # rounds since last served
    lag_tolerance: int
    lag_percent: float

    def __post_init__(self):
        if self.lag_tolerance < 1:
            raise InvalidArgumentError("lag tolerance must be >= 1", lag_tolerance=self.lag_tolerance)
        if not 0 < self.lag_percent <= 100:
            raise InvalidArgumentError("lag percent must be in (0, 100]", lag_percent=self.lag_percent)

    @classmethod
    def initial(cls, num_aps: int, num_ues: int, lag_tolerance: int, lag_percent: float) -> "ScheduleState":
        return cls(mask=np.ones((num_aps, num_ues), dtype=np.int8), staleness=(0,) * num_ues,
                   lag_tolerance=lag_tolerance, lag_percent=lag_percent)


@dataclass(frozen=True)
class RoundSchedule:
    """Audit record of one round."""
    round: int
    mask: np.ndarray
    active: Tuple[int, ...]
    categories: Tuple[UeCategory, ...]
    staleness: Tuple[int, ...]  # after the round


def select_ues(beta_col: np.ndarray, lag_percent: float) -> Tuple[int, ...]:
    """Shortest beta-descending prefix whose share reaches lag_percent / 100 (ties: lower index first)."""
    if not 0 < lag_percent <= 100:
        raise InvalidArgumentError("lag percent must be in (0, 100]", lag_percent=lag_percent)
    beta_col = np.asarray(beta_col, dtype=float)
    order = sorted(range(beta_col.size), key=lambda i: (-beta_col[i], i))
    shares = np.cumsum(beta_col[order]) / beta_col.sum()
    cut = int(np.searchsorted(shares, lag_percent / 100.0 - _PREFIX_SLACK)) + 1
    return tuple(sorted(order[:min(cut, len(order))]))


def propose_masks(beta: np.ndarray, lag_percent: float) -> np.ndarray:
    """Per-AP selection as an L x K mask."""
    mask = np.zeros(beta.shape, dtype=np.int8)
    for l in range(beta.shape[0]):
        mask[l, list(select_ues(beta[l], lag_percent))] = 1
    return mask


def active_set(mask: np.ndarray) -> Tuple[int, ...]:
    """Union over APs of the served UEs."""
    served = tuple(int(k) for k in np.flatnonzero(np.asarray(mask).any(axis=0)))
    if not served:
        raise ProtocolError("no UE is served by any AP")
    return served


def _forced(state: ScheduleState) -> np.ndarray:
    return np.asarray(state.staleness) + 1 >= state.lag_tolerance


def enforce_lag_tolerance(state: ScheduleState, proposed: np.ndarray, beta: np.ndarray) -> ScheduleState:
    """
    Add every UE about to hit the lag tolerance to its strongest AP, then
    update the counters (served -> 0, otherwise +1).
    """
    mask = np.array(proposed, dtype=np.int8, copy=True)
    for k in np.flatnonzero(_forced(state)):
        if not mask[:, k].any():
            mask[int(np.argmax(beta[:, k])), k] = 1
    served = mask.any(axis=0)
    staleness = tuple(0 if served[k] else s + 1 for k, s in enumerate(state.staleness))
    return replace(state, mask=mask, staleness=staleness)


def classify_ues(state: ScheduleState, mask: np.ndarray) -> Tuple[UeCategory, ...]:
    """Categories of one round from the pre-round counters and the round's mask."""
    served = np.asarray(mask).any(axis=0)
    # an up-to-date UE is never behind, whatever the tolerance
    forced = _forced(state) & (np.asarray(state.staleness) > 0)
    categories = []
    for k in range(served.size):
        if forced[k]:
            categories.append(UeCategory.NEED_SYNC)
        elif served[k]:
            categories.append(UeCategory.SYNCHRONOUS)
        else:
            categories.append(UeCategory.ASYNCHRONOUS)
    return tuple(categories)


def schedule_rounds(beta: np.ndarray, lag_tolerance: int, lag_percent: float, rounds: int) -> List[RoundSchedule]:
    """Replay the protocol for a fixed beta over the given number of rounds."""
    state = ScheduleState.initial(beta.shape[0], beta.shape[1], lag_tolerance, lag_percent)
    proposed = propose_masks(beta, lag_percent)
    trace = []
    for t in range(rounds):
        nxt = enforce_lag_tolerance(state, proposed, beta)
        trace.append(RoundSchedule(
            round=t,
            mask=nxt.mask,
            active=active_set(nxt.mask),
            categories=classify_ues(state, nxt.mask),
            staleness=nxt.staleness,
        ))
        state = nxt
    logger.debug("scheduled %d rounds, mean served %.2f", rounds,
                 np.mean([len(r.active) for r in trace]) if trace else 0.0)
    return trace


def full_masks(num_aps: int, num_ues: int, rounds: int) -> List[np.ndarray]:
    """Every AP serves every UE in every round."""
    return [np.ones((num_aps, num_ues), dtype=np.int8) for _ in range(rounds)]


def schedule_csv_rows(trace: Sequence[RoundSchedule]) -> List[list]:
    """Rows of (round, ue, category, staleness, serving_aps)."""
    rows = []
    for record in trace:
        for k, category in enumerate(record.categories):
            aps = ";".join(str(l) for l in np.flatnonzero(record.mask[:, k]))
            rows.append([record.round, k, category.value, record.staleness[k], aps])
    return rows
