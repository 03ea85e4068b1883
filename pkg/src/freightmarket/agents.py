"""Learning bid/ask agents.

Shipper and carrier each hold a small actor network mapping state features
to the mean and dispersion of a Gaussian price distribution; prices are
drawn per job via inverse-CDF sampling. Strategies update once per episode
by gradient descent (ADAM) on the Gaussian log-likelihood loss weighted by
a reward signal. Five signal variants are supported: the plain cumulative
reward, the cumulative reward minus a per-due-class baseline, a learned
Q-value, cumulative reward minus Q-value, and the advantage of the sampled
price over the mean price. Only completed jobs (shipped or failed)
contribute observations.

Each agent only ever sees its own prices and allocation outcomes; the
episode log keeps per-agent observation views to enforce that.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtri

from .market import CaseConfig, Job, MarketState
from .metrics import JobOutcome
from .nets import Adam, DenseNet, he_init

__all__ = [
    "ACTOR_FEATURES",
    "CRITIC_FEATURES",
    "SIGMA_FLOOR",
    "VARIANTS",
    "DivergenceError",
    "FeatureScale",
    "extract_features",
    "feature_matrix",
    "PolicyModel",
    "CriticModel",
    "init_model",
    "sample_action",
    "sample_actions",
    "gaussian_actor_loss",
    "critic_loss",
    "compute_signal",
    "RiskProfile",
    "BiasPresets",
    "bias_presets",
    "AgentObservations",
    "EpisodeLog",
    "LearningAgent",
    "ScriptedAgent",
    "update_agent",
    "update_policies",
]

ACTOR_FEATURES = 9
CRITIC_FEATURES = 10
SIGMA_FLOOR = 1e-3
VARIANTS = ("pg", "pg-baseline", "q-ac", "td1", "advantage")
_CRITIC_VARIANTS = frozenset({"q-ac", "td1", "advantage"})


class DivergenceError(RuntimeError):
    """Raised when prices, network outputs or gradients go non-finite."""


# ---------------------------------------------------------------------------
# Features


@dataclass(frozen=True)
class FeatureScale:
    """Static per-feature scaling so inputs stay O(1) across episodes.

    Each non-bias feature is divided by its configured maximum; the action
    feature appended for critics is divided by the average willingness to
    pay of the case.
    """

    denominators: np.ndarray
    action_scale: float

    @classmethod
    def from_case(cls, config: CaseConfig) -> "FeatureScale":
        due_max = max(1, config.due_range[1])
        d_max = config.distance_range[1]
        v_max = config.volume_range[1]
        total_v_max = config.max_open_jobs * v_max
        denoms = np.array(
            [1.0, due_max, d_max, v_max, due_max, d_max, v_max, total_v_max, config.max_open_jobs]
        )
        mean_d = (config.distance_range[0] + config.distance_range[1]) / 2.0
        mean_v = (config.volume_range[0] + config.volume_range[1]) / 2.0
        return cls(denominators=denoms, action_scale=config.willingness_rate * mean_d * mean_v)

    def transform(self, raw: np.ndarray) -> np.ndarray:
        return raw / self.denominators


def feature_matrix(jobs: list[Job], scale: FeatureScale | None = None) -> np.ndarray:
    """Raw (or scaled) feature rows for every job of a state.

    Row layout: bias 1, the job's due/distance/volume, the state means of
    due/distance/volume, total volume, and the job count.
    """
    n = len(jobs)
    if n == 0:
        raise ValueError("cannot build features for an empty state")
    raw = np.empty((n, ACTOR_FEATURES))
    dues = [j.due for j in jobs]
    dists = [j.distance for j in jobs]
    vols = [j.volume for j in jobs]
    total_volume = sum(vols)
    raw[:, 0] = 1.0
    raw[:, 1] = dues
    raw[:, 2] = dists
    raw[:, 3] = vols
    raw[:, 4] = sum(dues) / n
    raw[:, 5] = sum(dists) / n
    raw[:, 6] = sum(vols) / n
    raw[:, 7] = total_volume
    raw[:, 8] = n
    return scale.transform(raw) if scale is not None else raw


def extract_features(
    job: Job,
    state: MarketState,
    action: float | None = None,
    scale: FeatureScale | None = None,
) -> np.ndarray:
    """Feature vector for one quoted job (critics append the price)."""
    idx = next((i for i, j in enumerate(state.jobs) if j.id == job.id), None)
    if idx is None:
        raise ValueError(f"job {job.id} is not part of the state")
    row = feature_matrix(state.jobs, scale)[idx]
    if action is not None:
        denom = scale.action_scale if scale is not None else 1.0
        row = np.append(row, action / denom)
    return row


def _with_action(features: np.ndarray, actions: np.ndarray, action_scale: float) -> np.ndarray:
    return np.hstack([features, (actions / action_scale)[:, None]])


# ---------------------------------------------------------------------------
# Models


@dataclass
class PolicyModel:
    """Gaussian pricing strategy: net outputs (mean, raw dispersion)."""

    net: DenseNet
    optimizer: Adam = field(default_factory=Adam)
    sigma_floor: float = SIGMA_FLOOR


@dataclass
class CriticModel:
    """Scalar value estimate Q(price, job, state)."""

    net: DenseNet
    optimizer: Adam = field(default_factory=Adam)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _softplus_inv(s: float) -> float:
    if s <= 0:
        raise ValueError("sigma must be positive")
    return float(np.log(np.expm1(s)))


def actor_forward(model: PolicyModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Batched policy heads. Returns (mu, sigma, backward cache)."""
    out, acts = model.net.forward(x)
    mu = out[:, 0]
    soft = _softplus(out[:, 1])
    sigma = np.maximum(soft, model.sigma_floor)
    return mu, sigma, (acts, out[:, 1], soft)


def actor_backward(
    model: PolicyModel, cache: tuple, d_mu: np.ndarray, d_sigma: np.ndarray
) -> list[np.ndarray]:
    acts, z, soft = cache
    d_out = np.empty((len(d_mu), 2))
    d_out[:, 0] = d_mu
    # Chain through softplus; the floor clamp kills the gradient below it.
    d_out[:, 1] = d_sigma * expit(z) * (soft > model.sigma_floor)
    return model.net.backward(acts, d_out)


def critic_forward(model: CriticModel, x: np.ndarray) -> tuple[np.ndarray, list]:
    out, acts = model.net.forward(x)
    return out[:, 0], acts


def init_model(
    hidden_layers: tuple[int, ...],
    bias_init: float,
    sigma_init: float,
    role: str,
    rng: np.random.Generator,
) -> PolicyModel | CriticModel:
    """Fresh network for one role.

    Actors start as the constant strategy (mu, sigma) = (bias_init,
    sigma_init) for every input; critics start at Q = 0 everywhere so early
    decisions are not biased by an untrained value estimate.
    """
    if role == "actor":
        if sigma_init <= 0:
            raise ValueError("sigma_init must be positive")
        sizes = [ACTOR_FEATURES, *hidden_layers, 2]
        net = he_init(sizes, rng, final_bias=[bias_init, _softplus_inv(sigma_init)])
        return PolicyModel(net=net)
    if role == "critic":
        sizes = [CRITIC_FEATURES, *hidden_layers, 1]
        net = he_init(sizes, rng, final_bias=[0.0])
        return CriticModel(net=net)
    raise ValueError(f"unknown role {role!r}")


_U_FLOOR = np.finfo(float).tiny  # keeps the inverse CDF finite


def sample_actions(
    model: PolicyModel, features: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw one price per feature row from the policy's Gaussian."""
    mu, sigma, _ = actor_forward(model, features)
    if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
        raise DivergenceError("actor network produced non-finite mu/sigma (training diverged)")
    u = np.maximum(rng.random(len(mu)), _U_FLOOR)
    prices = mu + sigma * ndtri(u)
    return prices, mu, sigma


def sample_action(
    model: PolicyModel, features: np.ndarray, rng: np.random.Generator
) -> tuple[float, float, float]:
    """Single-job convenience wrapper around ``sample_actions``."""
    prices, mu, sigma = sample_actions(model, np.asarray(features, dtype=float)[None, :], rng)
    return float(prices[0]), float(mu[0]), float(sigma[0])


# ---------------------------------------------------------------------------
# Losses and reward signals


def gaussian_actor_loss(price, mu, sigma, signal):
    """Negative Gaussian log-likelihood of the price, weighted by the signal."""
    return (0.5 * math.log(2.0 * math.pi) + np.log(sigma) + (price - mu) ** 2 / (2.0 * sigma**2)) * signal


def critic_loss(q, observed):
    """Squared error between the value estimate and the observed reward."""
    return (observed - q) ** 2


def compute_signal(variant: str, vhat=0.0, baseline=0.0, q_sampled=0.0, q_mean=0.0):
    """Variant-specific reward term that weights the actor loss."""
    if variant == "pg":
        return vhat
    if variant == "pg-baseline":
        return vhat - baseline
    if variant == "q-ac":
        return q_sampled
    if variant == "td1":
        return vhat - q_sampled
    if variant == "advantage":
        return q_sampled - q_mean
    raise ValueError(f"unknown algorithm variant {variant!r}; known: {', '.join(VARIANTS)}")


# ---------------------------------------------------------------------------
# Risk profiles and opening-price presets


@dataclass(frozen=True)
class RiskProfile:
    """Named hyperparameter bundle encoding bargaining aggressiveness."""

    name: str
    bias_init: float
    penalty_slope: float
    learning_rate: float
    sigma_init: float = 0.1


@dataclass(frozen=True)
class BiasPresets:
    avg_cost: float
    avg_pay: float
    midpoint: float
    carrier: dict[str, float]
    shipper: dict[str, float]


def bias_presets(config: CaseConfig) -> BiasPresets:
    """Opening bid/ask levels per risk attitude.

    With independent uniform distance and volume, the mean of the
    distance-volume products over all job types equals mean(d) * mean(v),
    so the expected cost and willingness-to-pay follow directly from the
    rates. A bold carrier opens at the average willingness to pay, a bold
    shipper at the average cost; cautious agents do the opposite and the
    neutral opening is the midpoint.
    """
    mean_d = (config.distance_range[0] + config.distance_range[1]) / 2.0
    mean_v = (config.volume_range[0] + config.volume_range[1]) / 2.0
    avg_cost = mean_d * mean_v * config.transport_rate
    avg_pay = mean_d * mean_v * config.willingness_rate
    mid = (avg_cost + avg_pay) / 2.0
    return BiasPresets(
        avg_cost=avg_cost,
        avg_pay=avg_pay,
        midpoint=mid,
        carrier={"risk-seeking": avg_pay, "risk-neutral": mid, "risk-averse": avg_cost},
        shipper={"risk-seeking": avg_cost, "risk-neutral": mid, "risk-averse": avg_pay},
    )


# ---------------------------------------------------------------------------
# Episode log


@dataclass
class AgentObservations:
    """One agent's view of an episode: its own actions on completed jobs."""

    features: np.ndarray   # (n_obs, ACTOR_FEATURES), scaled
    actions: np.ndarray    # (n_obs,)
    vhat: np.ndarray       # cumulative reward through each quoted epoch
    classes: np.ndarray    # due date at the quoted epoch

    @property
    def count(self) -> int:
        return int(self.actions.size)

    @classmethod
    def empty(cls) -> "AgentObservations":
        return cls(
            features=np.empty((0, ACTOR_FEATURES)),
            actions=np.empty(0),
            vhat=np.empty(0),
            classes=np.empty(0, dtype=np.int64),
        )


@dataclass
class EpisodeLog:
    """Everything one episode produced that updates and metrics consume."""

    episode: int
    days: int
    shipper_obs: AgentObservations
    carrier_obs: AgentObservations
    outcomes: list[JobOutcome]
    completed_counts: np.ndarray        # observations per due-date class
    jobs_arrived: int
    jobs_shipped: int
    jobs_failed: int
    broker_total: float
    shipped_volume: int
    max_possible_volume: int
    realized_shipper: float
    realized_carrier: float
    quote_count: int
    mu_bid_sum: float
    mu_ask_sum: float
    sigma_bid_sum: float
    sigma_ask_sum: float
    trace: list | None = None           # optional per-epoch (state, quotes, flags)

    def digest(self) -> str:
        """Content hash used by determinism checks."""
        h = hashlib.sha256()
        for obs in (self.shipper_obs, self.carrier_obs):
            for arr in (obs.features, obs.actions, obs.vhat, obs.classes):
                h.update(np.ascontiguousarray(arr).tobytes())
        for o in self.outcomes:
            h.update(repr(o).encode())
        h.update(self.completed_counts.tobytes())
        h.update(
            repr(
                (
                    self.jobs_arrived,
                    self.jobs_shipped,
                    self.jobs_failed,
                    self.broker_total,
                    self.shipped_volume,
                    self.max_possible_volume,
                    self.realized_shipper,
                    self.realized_carrier,
                )
            ).encode()
        )
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Agents


@dataclass
class LearningAgent:
    """An actively learning bidder (shipper) or asker (carrier)."""

    role: str                       # "shipper" or "carrier"
    profile: RiskProfile
    variant: str
    policy: PolicyModel
    critic: CriticModel | None
    rng: np.random.Generator
    action_scale: float = 1.0
    frozen: bool = False
    grad_mode: str = "sum"          # per-episode gradients summed or averaged

    @property
    def penalty_slope(self) -> float:
        return self.profile.penalty_slope

    def quote(
        self, features: np.ndarray, max_pay: np.ndarray, trn_cost: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return sample_actions(self.policy, features, self.rng)

    def update(self, obs: AgentObservations) -> None:
        if not self.frozen:
            update_agent(self, obs)


@dataclass
class ScriptedAgent:
    """Fixed-rule opponent used for verification runs; never updates.

    Rules: ``fixed:<price>``, ``pay-plus:<delta>`` (willingness-to-pay plus
    delta) and ``cost-plus:<delta>`` (transport cost plus delta).
    """

    role: str
    rule: str
    penalty_slope: float = 0.0
    frozen: bool = True

    def __post_init__(self) -> None:
        kind, _, arg = self.rule.partition(":")
        if kind not in ("fixed", "pay-plus", "cost-plus"):
            raise ValueError(f"unknown script rule {self.rule!r}")
        self._kind = kind
        self._arg = float(arg)

    def quote(
        self, features: np.ndarray, max_pay: np.ndarray, trn_cost: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._kind == "fixed":
            prices = np.full(len(max_pay), self._arg)
        elif self._kind == "pay-plus":
            prices = max_pay + self._arg
        else:
            prices = trn_cost + self._arg
        return prices, prices.copy(), np.zeros(len(prices))

    def update(self, obs: AgentObservations) -> None:
        return


def _class_baselines(obs: AgentObservations) -> np.ndarray:
    """Per-observation baseline: mean vhat of the observation's due class."""
    n_classes = int(obs.classes.max()) + 1
    counts = np.bincount(obs.classes, minlength=n_classes)
    sums = np.bincount(obs.classes, weights=obs.vhat, minlength=n_classes)
    means = sums / np.maximum(counts, 1)
    return means[obs.classes]


def update_agent(agent: LearningAgent, obs: AgentObservations) -> None:
    """One per-episode strategy update from the agent's own observations.

    Accumulates the Gaussian-loss gradients over every (completed job,
    quoted epoch) pair and applies a single ADAM step; when the variant
    uses a critic, the critic takes its own ADAM step toward the observed
    cumulative rewards.
    """
    if obs.count == 0:
        return
    policy = agent.policy
    x = obs.features
    b = obs.actions
    mu, sigma, cache = actor_forward(policy, x)

    q_sampled = None
    critic_cache = None
    if agent.variant in _CRITIC_VARIANTS:
        if agent.critic is None:
            raise ValueError(f"variant {agent.variant!r} requires a critic network")
        xq = _with_action(x, b, agent.action_scale)
        q_sampled, critic_cache = critic_forward(agent.critic, xq)
        if agent.variant == "advantage":
            q_mean, _ = critic_forward(agent.critic, _with_action(x, mu, agent.action_scale))
        else:
            q_mean = None
    else:
        q_mean = None

    baseline = _class_baselines(obs) if agent.variant == "pg-baseline" else 0.0
    signal = compute_signal(
        agent.variant, vhat=obs.vhat, baseline=baseline, q_sampled=q_sampled, q_mean=q_mean
    )

    # d/dmu and d/dsigma of -log N(b; mu, sigma) * signal.
    var = sigma**2
    d_mu = -(b - mu) / var * signal
    d_sigma = (1.0 / sigma - (b - mu) ** 2 / (var * sigma)) * signal
    if agent.grad_mode == "mean":
        d_mu = d_mu / obs.count
        d_sigma = d_sigma / obs.count
    grads = actor_backward(policy, cache, d_mu, d_sigma)
    if not all(np.isfinite(g).all() for g in grads):
        raise DivergenceError(f"{agent.role} actor gradients went non-finite")
    policy.optimizer.step(policy.net.params(), grads, agent.profile.learning_rate)

    if agent.variant in _CRITIC_VARIANTS:
        d_q = 2.0 * (q_sampled - obs.vhat)
        if agent.grad_mode == "mean":
            d_q = d_q / obs.count
        grads_q = agent.critic.net.backward(critic_cache, d_q[:, None])
        if not all(np.isfinite(g).all() for g in grads_q):
            raise DivergenceError(f"{agent.role} critic gradients went non-finite")
        agent.critic.optimizer.step(
            agent.critic.net.params(), grads_q, agent.profile.learning_rate
        )


def update_policies(shipper, carrier, log: EpisodeLog) -> None:
    """End-of-episode updates for both agents from their own log views."""
    shipper.update(log.shipper_obs)
    carrier.update(log.carrier_obs)
