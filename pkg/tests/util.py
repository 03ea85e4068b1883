"""Shared test helpers: brute-force oracles and gradient checking."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from freightmarket.agents import (
    PolicyModel,
    CriticModel,
    actor_backward,
    actor_forward,
    critic_forward,
    gaussian_actor_loss,
)


def brute_force_knapsack(volumes, values, capacity) -> float:
    """Optimal value by enumerating every subset. For small instances only."""
    n = len(volumes)
    best = 0.0
    for k in range(1, n + 1):
        for combo in combinations(range(n), k):
            vol = sum(volumes[i] for i in combo)
            if vol <= capacity:
                val = sum(values[i] for i in combo)
                if val > best:
                    best = val
    return best


_MASK_CACHE: dict[int, np.ndarray] = {}


def masks_for(n: int) -> np.ndarray:
    """All 2^n subset masks as a (2^n, n) float matrix (cached)."""
    if n not in _MASK_CACHE:
        bits = np.arange(2**n, dtype=np.uint32)
        _MASK_CACHE[n] = ((bits[:, None] >> np.arange(n)) & 1).astype(float)
    return _MASK_CACHE[n]


def enumerate_knapsack(volumes: np.ndarray, values: np.ndarray, capacity: int) -> float:
    """Vectorized exhaustive optimum; fast enough for n <= 12, many instances."""
    m = masks_for(len(volumes))
    feasible = m @ volumes.astype(float) <= capacity
    totals = m @ values
    return float(totals[feasible].max())


def activation_pattern(net, x: np.ndarray) -> np.ndarray:
    """Concatenated ReLU on/off pattern of all hidden layers for input x."""
    parts = []
    a = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        if l < last:
            parts.append((z > 0).ravel())
            a = np.maximum(z, 0.0)
        else:
            a = z
    if not parts:
        return np.zeros(0, dtype=bool)
    return np.concatenate(parts)


def actor_loss_total(policy: PolicyModel, x, actions, signals) -> float:
    mu, sigma, _ = actor_forward(policy, x)
    return float(np.sum(gaussian_actor_loss(actions, mu, sigma, signals)))


def critic_loss_total(critic: CriticModel, x, observed) -> float:
    q, _ = critic_forward(critic, x)
    return float(np.sum((observed - q) ** 2))


def analytic_actor_grads(policy: PolicyModel, x, actions, signals) -> list[np.ndarray]:
    mu, sigma, cache = actor_forward(policy, x)
    var = sigma**2
    d_mu = -(actions - mu) / var * signals
    d_sigma = (1.0 / sigma - (actions - mu) ** 2 / (var * sigma)) * signals
    return actor_backward(policy, cache, d_mu, d_sigma)


def analytic_critic_grads(critic: CriticModel, x, observed) -> list[np.ndarray]:
    q, cache = critic_forward(critic, x)
    d_q = 2.0 * (q - observed)
    return critic.net.backward(cache, d_q[:, None])


def max_grad_rel_error(net, params, loss_fn, analytic, x, h=1e-5) -> float:
    """Central finite differences over every parameter vs analytic grads.

    Perturbations that flip a ReLU activation make the central difference
    meaningless across the kink; those entries are skipped.
    """
    worst = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.ravel()
        flat_g = np.asarray(g, dtype=float).ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            pat_hi = activation_pattern(net, x)
            hi = loss_fn()
            flat_p[i] = orig - h
            pat_lo = activation_pattern(net, x)
            lo = loss_fn()
            flat_p[i] = orig
            if not np.array_equal(pat_hi, pat_lo):
                continue
            fd = (hi - lo) / (2.0 * h)
            denom = max(abs(fd), abs(flat_g[i]), 1e-6)
            worst = max(worst, abs(fd - flat_g[i]) / denom)
    return worst
