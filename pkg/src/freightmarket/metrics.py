"""Market-quality metrics.

Three system metrics are tracked per episode — adherence to the bargaining
equilibrium, fairness of the surplus split, and relative utilization of
transport capacity — together with the per-agent reward shares and
normalized net rewards. Adherence and fairness are per-job quantities
averaged over the jobs completed in an episode; utilization compares
shipped volume against the volume-maximizing allocation for the same
states.

Run-level reporting averages the per-episode values over the trailing 90%
of episodes (the first 10% are a warm-up period, flagged but kept in the
row data) and separately over the final 5% ("end of horizon").
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import fmean, pstdev
from typing import Iterable, Sequence

from .broker import Allocation, max_volume_allocation
from .market import MarketState

__all__ = [
    "JobOutcome",
    "MetricsReport",
    "nash_adherence",
    "fairness",
    "relative_utilization",
    "reward_shares",
    "summarize_episode",
    "aggregate_run",
    "pool_reports",
    "METRIC_KEYS",
]


@dataclass(frozen=True)
class JobOutcome:
    """Final accounting for one completed (shipped or failed) job."""

    job_id: int
    trn_cost: float            # the job's floor price c_min
    max_pay: float             # the job's ceiling price c_max
    volume: int
    born_due: int
    shipped: bool
    final_bid: float           # prices quoted at the completion epoch
    final_ask: float
    realized_shipper: float    # realized rewards exclude penalties
    realized_carrier: float
    realized_broker: float

    @property
    def gap(self) -> float:
        return self.max_pay - self.trn_cost


def nash_adherence(outcome: JobOutcome) -> float:
    """Share of the job's surplus captured by shipper plus carrier.

    1.0 means the job shipped with zero spread (the equilibrium point),
    0.0 means the job failed or the spread swallowed the whole surplus.
    """
    if not outcome.shipped:
        return 0.0
    a, b = outcome.final_ask, outcome.final_bid
    num = (a - outcome.trn_cost) + (outcome.max_pay - b)
    return max(0.0, num / outcome.gap)


def fairness(outcome: JobOutcome) -> float | None:
    """How evenly the captured surplus splits between shipper and carrier.

    1.0 when both sides gain equally, 0.0 when one side takes everything.
    Unshipped jobs, and shipped jobs whose two surpluses cancel exactly
    (zero denominator), are excluded and reported as ``None``.
    """
    if not outcome.shipped:
        return None
    carrier_part = outcome.final_ask - outcome.trn_cost
    shipper_part = outcome.max_pay - outcome.final_bid
    denom = carrier_part + shipper_part
    if denom == 0.0:
        return None
    return max(0.0, 1.0 - abs((carrier_part - shipper_part) / denom))


def relative_utilization(state: MarketState, allocation: Allocation, capacity: int) -> float:
    """Shipped volume over the volume of the volume-maximizing selection.

    By convention 1.0 when the state holds no shippable volume.
    """
    best = max_volume_allocation(state, capacity).total_volume
    if best == 0:
        return 1.0
    return allocation.used_volume / best


@dataclass(frozen=True)
class RewardShares:
    share_shipper: float
    share_carrier: float
    share_broker: float
    net_shipper: float
    net_carrier: float
    net_broker: float


def reward_shares(outcomes: Iterable[JobOutcome]) -> RewardShares:
    """Per-agent split of the realized market value.

    Shares divide each agent's realized reward by the total surplus of the
    *shipped* jobs (they sum to one whenever anything shipped). Normalized
    net rewards divide by the total surplus of *all* completed jobs, failed
    ones included, so they reflect both the split and how much of the
    market was actually served. With no eligible jobs the values are NaN.
    """
    shipped_gap = 0.0
    total_gap = 0.0
    r_s = r_c = r_b = 0.0
    for o in outcomes:
        total_gap += o.gap
        if o.shipped:
            shipped_gap += o.gap
        r_s += o.realized_shipper
        r_c += o.realized_carrier
        r_b += o.realized_broker
    share = lambda x: x / shipped_gap if shipped_gap > 0 else math.nan
    net = lambda x: x / total_gap if total_gap > 0 else math.nan
    return RewardShares(
        share_shipper=share(r_s),
        share_carrier=share(r_c),
        share_broker=share(r_b),
        net_shipper=net(r_s),
        net_carrier=net(r_c),
        net_broker=net(r_b),
    )


METRIC_KEYS = (
    "utilization",
    "adherence",
    "fairness",
    "share_shipper",
    "share_carrier",
    "share_broker",
    "net_shipper",
    "net_carrier",
    "net_broker",
)


def summarize_episode(
    outcomes: Sequence[JobOutcome],
    shipped_volume: int,
    max_possible_volume: int,
) -> dict[str, float]:
    """Episode-level metric values from the completed-job outcomes."""
    if max_possible_volume > 0:
        utilization = shipped_volume / max_possible_volume
    else:
        utilization = 1.0
    adh = [nash_adherence(o) for o in outcomes]
    fair = [f for o in outcomes if (f := fairness(o)) is not None]
    shares = reward_shares(outcomes)
    return {
        "utilization": utilization,
        "adherence": fmean(adh) if adh else math.nan,
        "fairness": fmean(fair) if fair else math.nan,
        "share_shipper": shares.share_shipper,
        "share_carrier": shares.share_carrier,
        "share_broker": shares.share_broker,
        "net_shipper": shares.net_shipper,
        "net_carrier": shares.net_carrier,
        "net_broker": shares.net_broker,
    }


@dataclass(frozen=True)
class MetricsReport:
    """Run-level averages (warm-up excluded) and end-of-horizon values."""

    episodes: int
    warmup_episodes: int
    averages: dict[str, float]
    end_of_horizon: dict[str, float]


def _nanmean(values: list[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return fmean(finite) if finite else math.nan


def aggregate_run(rows: Sequence[dict[str, float]]) -> MetricsReport:
    """Average per-episode rows over the measurement windows.

    The averaged window is exactly the trailing ``ceil(0.9 * M)`` episodes;
    end-of-horizon is the final ``ceil(0.05 * M)``. NaN entries (episodes
    with nothing shipped, or aborted episodes) are skipped.
    """
    m = len(rows)
    if m == 0:
        raise ValueError("no episode rows to aggregate")
    n_avg = math.ceil(0.9 * m)
    n_end = math.ceil(0.05 * m)
    avg_rows = rows[m - n_avg:]
    end_rows = rows[m - n_end:]
    averages = {k: _nanmean([r[k] for r in avg_rows]) for k in METRIC_KEYS}
    end = {k: _nanmean([r[k] for r in end_rows]) for k in METRIC_KEYS}
    return MetricsReport(
        episodes=m,
        warmup_episodes=m - n_avg,
        averages=averages,
        end_of_horizon=end,
    )


def pool_reports(reports: Sequence[MetricsReport], stable: Sequence[bool]) -> dict:
    """Mean and stdev of each metric across the stable replications."""
    pooled: dict[str, dict] = {"averages": {}, "end_of_horizon": {}}
    kept = [r for r, ok in zip(reports, stable) if ok]
    for section in ("averages", "end_of_horizon"):
        for key in METRIC_KEYS:
            vals = [getattr(r, section)[key] for r in kept]
            vals = [v for v in vals if not math.isnan(v)]
            if vals:
                pooled[section][key] = {
                    "mean": fmean(vals),
                    "stdev": pstdev(vals) if len(vals) > 1 else 0.0,
                    "n": len(vals),
                }
            else:
                pooled[section][key] = {"mean": math.nan, "stdev": math.nan, "n": 0}
    pooled["replications"] = len(reports)
    pooled["stable_replications"] = sum(bool(s) for s in stable)
    return pooled
