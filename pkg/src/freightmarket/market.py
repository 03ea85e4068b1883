"""Core domain model of the freight spot market.

A market day works on a set of open transport jobs. Each job carries a due
date (epochs remaining), a distance and a volume; willingness-to-pay and
transport cost scale linearly in volume times distance. This module holds
the value types, the job-arrival generators for the deterministic and
stochastic market cases, the per-job reward functions with penalty shaping,
and the day-to-day state transition.

All randomness flows through an explicitly passed ``numpy.random.Generator``
so that a (config, seed) pair fully determines the arrival stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Job",
    "MarketState",
    "CaseConfig",
    "JobEconomics",
    "TransitionResult",
    "generate_arrivals",
    "job_economics",
    "shipper_reward",
    "carrier_reward",
    "transition",
    "case_preset",
    "CASE_PRESET_NAMES",
]


@dataclass(slots=True)
class Job:
    """A single transport job. Treated as an immutable value."""

    id: int
    due: int            # epochs remaining until the job fails
    distance: int       # miles to destination
    volume: int         # capacity units required
    born_due: int       # due date at arrival; the job's individual horizon

    def validate(self, config: "CaseConfig | None" = None) -> None:
        if not (0 <= self.due <= self.born_due):
            raise ValueError(f"job {self.id}: due {self.due} outside 0..{self.born_due}")
        if self.distance < 1 or self.volume < 1:
            raise ValueError(f"job {self.id}: distance/volume must be >= 1")
        if config is not None:
            if self.born_due > config.due_range[1]:
                raise ValueError(f"job {self.id}: born_due exceeds case maximum")
            if self.distance > config.distance_range[1]:
                raise ValueError(f"job {self.id}: distance exceeds case maximum")
            if self.volume > config.volume_range[1]:
                raise ValueError(f"job {self.id}: volume exceeds case maximum")


@dataclass(slots=True)
class MarketState:
    """The multiset of open jobs at a decision epoch."""

    epoch: int = 0
    jobs: list[Job] = field(default_factory=list)

    def job_ids(self) -> list[int]:
        return [j.id for j in self.jobs]

    def validate(self, max_open_jobs: int | None = None) -> None:
        ids = self.job_ids()
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate job ids in state")
        for job in self.jobs:
            if job.due < 0:
                raise ValueError(f"job {job.id} has negative due date")
        if max_open_jobs is not None and len(self.jobs) > max_open_jobs:
            raise ValueError(f"state holds {len(self.jobs)} jobs, cap is {max_open_jobs}")


def _check_range(name: str, rng: tuple[int, int], lo_min: int) -> None:
    lo, hi = rng
    if lo > hi:
        raise ValueError(f"{name}: empty range {rng}")
    if lo < lo_min:
        raise ValueError(f"{name}: lower bound {lo} below minimum {lo_min}")


@dataclass(frozen=True)
class CaseConfig:
    """Settings of one market case (inclusive integer ranges)."""

    name: str
    arrivals_per_day: tuple[int, int]
    due_range: tuple[int, int]
    distance_range: tuple[int, int]
    volume_range: tuple[int, int]
    willingness_rate: float     # money per volume-mile the shipper will pay
    transport_rate: float       # money per volume-mile it costs the carrier
    capacity: int               # vehicle capacity per day
    max_open_jobs: int          # cap on accumulated open jobs
    horizon_days: int = 1000    # default days per episode
    episodes: int = 1000        # default episodes per run

    def __post_init__(self) -> None:
        _check_range("arrivals_per_day", self.arrivals_per_day, 0)
        _check_range("due_range", self.due_range, 0)
        _check_range("distance_range", self.distance_range, 1)
        _check_range("volume_range", self.volume_range, 1)
        if self.transport_rate >= self.willingness_rate:
            raise ValueError(
                "transport_rate must be below willingness_rate "
                "(otherwise no trade can ever profit both sides)"
            )
        if self.transport_rate <= 0:
            raise ValueError("transport_rate must be positive")
        if self.capacity < self.volume_range[1]:
            raise ValueError("capacity must fit the largest single job")
        if self.max_open_jobs < 1:
            raise ValueError("max_open_jobs must be >= 1")
        if self.horizon_days < 1 or self.episodes < 1:
            raise ValueError("horizon_days and episodes must be >= 1")


@dataclass(frozen=True)
class JobEconomics:
    """Willingness-to-pay and transport cost of one job."""

    max_pay: float
    trn_cost: float

    def __post_init__(self) -> None:
        if not (0 < self.trn_cost < self.max_pay):
            raise ValueError(f"degenerate economics: pay={self.max_pay}, cost={self.trn_cost}")

    @property
    def gap(self) -> float:
        return self.max_pay - self.trn_cost


def job_economics(job: Job, config: CaseConfig) -> JobEconomics:
    """Per-job money amounts: rate times volume times distance."""
    vd = job.volume * job.distance
    return JobEconomics(max_pay=config.willingness_rate * vd, trn_cost=config.transport_rate * vd)


def generate_arrivals(
    config: CaseConfig,
    rng: np.random.Generator,
    epoch: int,
    start_id: int = 0,
) -> list[Job]:
    """Draw one day's job arrivals.

    The arrival count and each job attribute are independent uniform draws
    over the configured inclusive ranges; degenerate ranges make the draw
    deterministic (the deterministic case is just a config whose ranges all
    collapse to a point). At most ``max_open_jobs`` jobs are returned.
    """
    lo, hi = config.arrivals_per_day
    count = lo if lo == hi else int(rng.integers(lo, hi + 1))
    count = min(count, config.max_open_jobs)
    if count == 0:
        return []

    def draw(rng_range: tuple[int, int]) -> list[int]:
        a, b = rng_range
        if a == b:
            return [a] * count
        return [int(x) for x in rng.integers(a, b + 1, size=count)]

    dues = draw(config.due_range)
    dists = draw(config.distance_range)
    vols = draw(config.volume_range)
    return [
        Job(id=start_id + i, due=dues[i], distance=dists[i], volume=vols[i], born_due=dues[i])
        for i in range(count)
    ]


def shipper_reward(shipped: bool, bid: float, econ: JobEconomics, penalty_slope: float) -> float:
    """Shipper's per-epoch reward for one quoted job.

    Shipped jobs earn willingness-to-pay minus the bid. Unshipped jobs incur
    a penalty proportional to the reward that was forgone: the lower the
    bid, the stronger the penalty. The penalty enters with negative sign so
    that reward maximization is nudged toward shipping.
    """
    if penalty_slope < 0:
        raise ValueError("penalty_slope must be nonnegative")
    if shipped:
        return econ.max_pay - bid
    return -penalty_slope * max(0.0, econ.max_pay - bid)


def carrier_reward(
    shipped: bool,
    ask: float,
    econ: JobEconomics,
    penalty_slope: float,
    idle_capacity: int,
) -> float:
    """Carrier's per-epoch reward for one quoted job.

    Shipped jobs earn the ask minus the marginal transport cost. A missed
    job is only penalized when it was actually a missed opportunity: the
    ask exceeded cost and the vehicle left with idle capacity.
    """
    if penalty_slope < 0:
        raise ValueError("penalty_slope must be nonnegative")
    if shipped:
        return ask - econ.trn_cost
    if ask > econ.trn_cost and idle_capacity > 0:
        return -penalty_slope * max(0.0, ask - econ.trn_cost)
    return 0.0


@dataclass(frozen=True)
class TransitionResult:
    state: MarketState
    shipped: list[Job]
    failed: list[Job]


def transition(
    state: MarketState,
    arrivals: Iterable[Job],
    allocation: Mapping[int, int],
) -> TransitionResult:
    """Advance the market by one day.

    Shipped jobs leave the state; unshipped jobs at due date 0 fail and
    leave; every surviving job has its due date decremented; arrivals are
    appended and the epoch advances. ``allocation`` must cover every open
    job id. The input state is not modified.
    """
    shipped: list[Job] = []
    failed: list[Job] = []
    carried: list[Job] = []
    for job in state.jobs:
        try:
            flag = allocation[job.id]
        except KeyError:
            raise ValueError(f"allocation is missing job id {job.id}") from None
        if flag:
            shipped.append(job)
        elif job.due == 0:
            failed.append(job)
        else:
            carried.append(replace(job, due=job.due - 1))
    carried.extend(arrivals)
    return TransitionResult(
        state=MarketState(epoch=state.epoch + 1, jobs=carried),
        shipped=shipped,
        failed=failed,
    )


_CASE_PRESETS: dict[str, CaseConfig] = {
    "case1": CaseConfig(
        name="case1",
        arrivals_per_day=(1, 1),
        due_range=(0, 0),
        distance_range=(1, 1),
        volume_range=(1, 1),
        willingness_rate=2.0,
        transport_rate=1.0,
        capacity=1,
        max_open_jobs=1,
    ),
    "case2-cap40": CaseConfig(
        name="case2-cap40",
        arrivals_per_day=(1, 10),
        due_range=(1, 5),
        distance_range=(1, 5),
        volume_range=(1, 5),
        willingness_rate=2.0,
        transport_rate=1.0,
        capacity=40,
        max_open_jobs=50,
    ),
    "case2-cap300": CaseConfig(
        name="case2-cap300",
        arrivals_per_day=(1, 10),
        due_range=(1, 5),
        distance_range=(1, 5),
        volume_range=(1, 5),
        willingness_rate=2.0,
        transport_rate=1.0,
        capacity=300,
        max_open_jobs=50,
    ),
}

CASE_PRESET_NAMES = tuple(sorted(_CASE_PRESETS))


def case_preset(name: str, **overrides) -> CaseConfig:
    """Look up a named market case, optionally overriding any field."""
    try:
        base = _CASE_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown case {name!r}; available: {', '.join(CASE_PRESET_NAMES)}") from None
    return replace(base, **overrides) if overrides else base
