"""Broker-side job allocation.

The broker collects one bid and one ask per open job and ships the subset
that maximizes total bid-ask spread subject to the vehicle capacity — an
exact 0-1 knapsack over integer volumes with real-valued profits. Jobs
whose spread is not strictly positive are filtered out before the DP: a
negative spread would cost the broker money, and at zero spread the broker
is indifferent, so the strict filter keeps the selection rule simple (the
theoretical equilibrium sits exactly at bid == ask; learned equilibria
therefore hover at ask slightly below bid).

A volume-maximizing variant of the same knapsack provides the denominator
of the capacity-utilization metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import MarketState

__all__ = [
    "QuoteSheet",
    "Allocation",
    "solve_knapsack",
    "allocate",
    "broker_reward",
    "max_volume_allocation",
]


@dataclass(frozen=True)
class QuoteSheet:
    """One epoch's prices: per job id, the shipper bid and the carrier ask."""

    epoch: int
    bids: dict[int, float]
    asks: dict[int, float]

    def covers(self, state: MarketState) -> bool:
        return all(j.id in self.bids and j.id in self.asks for j in state.jobs)

    def spread(self, job_id: int) -> float:
        return self.bids[job_id] - self.asks[job_id]


@dataclass(frozen=True)
class Allocation:
    """Shipping decision: flag per job id plus selection totals."""

    flags: dict[int, int]
    total_spread: float = 0.0
    used_volume: int = 0
    total_volume: int = 0   # objective value of the volume-maximizing variant

    @property
    def selected(self) -> list[int]:
        return [jid for jid, f in self.flags.items() if f]


def solve_knapsack(
    volumes: np.ndarray, values: np.ndarray, capacity: int
) -> tuple[np.ndarray, float, int]:
    """Exact 0-1 knapsack: maximize total value under a volume budget.

    Volumes are positive integers, values are positive reals. Returns the
    selection mask, the optimal value, and the volume used. Ties between
    equal-value selections are broken deterministically in favor of
    earlier items (reconstruction only takes an item on strict improvement).
    """
    n = len(volumes)
    if n == 0 or capacity <= 0:
        return np.zeros(n, dtype=bool), 0.0, 0
    total = int(volumes.sum())
    if total <= capacity:
        # Everything fits; every positive-value item strictly improves.
        mask = np.ones(n, dtype=bool)
        return mask, float(values.sum()), total
    dp = np.zeros(capacity + 1)
    take = np.zeros((n, capacity + 1), dtype=bool)
    for i in range(n):
        v = int(volumes[i])
        if v > capacity:
            continue
        cand = dp[: capacity + 1 - v] + values[i]
        better = cand > dp[v:]
        dp[v:] = np.where(better, cand, dp[v:])
        take[i, v:] = better
    mask = np.zeros(n, dtype=bool)
    c = capacity
    for i in range(n - 1, -1, -1):
        if take[i, c]:
            mask[i] = True
            c -= int(volumes[i])
    return mask, float(dp[capacity]), capacity - c


def allocate(state: MarketState, quotes: QuoteSheet, capacity: int) -> Allocation:
    """Ship the spread-maximizing feasible subset of the open jobs.

    Only jobs with strictly positive spread enter the knapsack; by
    construction no shipped job ever has bid < ask.
    """
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    if not quotes.covers(state):
        raise ValueError("quote sheet does not cover the market state")
    jobs = state.jobs
    flags = {j.id: 0 for j in jobs}
    spreads = np.array([quotes.spread(j.id) for j in jobs])
    keep = np.flatnonzero(spreads > 0.0)
    if keep.size == 0:
        return Allocation(flags=flags)
    volumes = np.array([jobs[i].volume for i in keep], dtype=np.int64)
    mask, value, used = solve_knapsack(volumes, spreads[keep], capacity)
    for idx in keep[mask]:
        flags[jobs[idx].id] = 1
    return Allocation(flags=flags, total_spread=value, used_volume=used)


def broker_reward(allocation: Allocation, quotes: QuoteSheet) -> float:
    """Total bid-ask spread earned on the shipped jobs."""
    return float(sum(quotes.spread(jid) for jid in allocation.selected))


def max_volume_allocation(state: MarketState, capacity: int) -> Allocation:
    """Price-agnostic selection maximizing shipped volume under capacity.

    This is the theoretical best utilization of the vehicle for the given
    state, used as the denominator of the relative-utilization metric.
    """
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    jobs = state.jobs
    flags = {j.id: 0 for j in jobs}
    if not jobs:
        return Allocation(flags=flags)
    volumes = np.array([j.volume for j in jobs], dtype=np.int64)
    mask, value, used = solve_knapsack(volumes, volumes.astype(float), capacity)
    for i in np.flatnonzero(mask):
        flags[jobs[i].id] = 1
    return Allocation(flags=flags, used_volume=used, total_volume=int(value))
