"""Minimal dense networks with manual backpropagation and ADAM.

The pricing policies only need tiny fully connected nets (one hidden layer
of ~20 ReLU units is the tuned architecture), so the forward and backward
passes are written directly as batched numpy matrix products rather than
pulling in an autodiff framework. Hidden layers use He initialization; the
final layer is initialized to zero weights with a chosen bias so that the
initial outputs are input-independent constants.

Checkpoints serialize layer sizes plus row-major weight arrays (and
optimizer moments) to versioned JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["DenseNet", "Adam", "he_init", "save_checkpoint", "load_checkpoint"]

CHECKPOINT_VERSION = 1


class DenseNet:
    """Fully connected net: ReLU hidden layers, linear output layer.

    Parameters are ``weights[l]`` of shape (fan_in, fan_out) and
    ``biases[l]`` of shape (fan_out,).
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need an equal, nonzero number of weight and bias arrays")
        self.weights = weights
        self.biases = biases

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward pass. Returns outputs and the activation cache."""
        acts = [x]
        a = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if l < last:
                z = np.maximum(z, 0.0)
            a = z
            acts.append(a)
        return a, acts

    def backward(self, acts: list[np.ndarray], d_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of a summed loss w.r.t. every parameter.

        ``d_out`` holds dLoss/dOutput per batch row; gradients are summed
        over the batch, matching ``params()`` order.
        """
        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        delta = d_out
        for l in range(len(self.weights) - 1, -1, -1):
            a_in = acts[l]
            grads[2 * l] = a_in.T @ delta
            grads[2 * l + 1] = delta.sum(axis=0)
            if l > 0:
                delta = delta @ self.weights[l].T
                delta = delta * (acts[l] > 0.0)   # ReLU gate of the hidden activation
        return grads

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def he_init(
    layer_sizes: Sequence[int],
    rng: np.random.Generator,
    final_bias: Sequence[float],
) -> DenseNet:
    """He-initialized hidden layers; zero final weights with a fixed bias.

    The zeroed final layer makes the net's initial outputs equal to
    ``final_bias`` for every input, which is how opening bid/ask levels
    (and the unbiased initial value estimate) are pinned.
    """
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if len(final_bias) != layer_sizes[-1]:
        raise ValueError("final_bias length must match the output width")
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for l in range(len(layer_sizes) - 2):
        fan_in, fan_out = layer_sizes[l], layer_sizes[l + 1]
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    weights.append(np.zeros((layer_sizes[-2], layer_sizes[-1])))
    biases.append(np.asarray(final_bias, dtype=float).copy())
    return DenseNet(weights, biases)


@dataclass
class Adam:
    """ADAM optimizer over a list of parameter arrays."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _net_to_dict(net: DenseNet) -> dict:
    return {
        "layer_sizes": net.layer_sizes,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> DenseNet:
    weights = [np.asarray(w, dtype=float) for w in d["weights"]]
    biases = [np.asarray(b, dtype=float) for b in d["biases"]]
    net = DenseNet(weights, biases)
    if net.layer_sizes != list(d["layer_sizes"]):
        raise ValueError("checkpoint layer_sizes do not match the stored arrays")
    return net


def _adam_to_dict(opt: Adam) -> dict:
    return {
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "eps": opt.eps,
        "step_count": opt.step_count,
        "m": [a.tolist() for a in opt.m],
        "v": [a.tolist() for a in opt.v],
    }


def _adam_from_dict(d: dict) -> Adam:
    return Adam(
        beta1=d["beta1"],
        beta2=d["beta2"],
        eps=d["eps"],
        step_count=d["step_count"],
        m=[np.asarray(a, dtype=float) for a in d["m"]],
        v=[np.asarray(a, dtype=float) for a in d["v"]],
    )


def save_checkpoint(path: str | Path, nets: dict[str, DenseNet], optimizers: dict[str, Adam] | None = None) -> None:
    """Write named networks (and optionally optimizer state) to JSON."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "nets": {name: _net_to_dict(net) for name, net in nets.items()},
    }
    if optimizers:
        payload["optimizers"] = {name: _adam_to_dict(opt) for name, opt in optimizers.items()}
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path: str | Path) -> tuple[dict[str, DenseNet], dict[str, Adam]]:
    payload = json.loads(Path(path).read_text())
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    nets = {name: _net_from_dict(d) for name, d in payload["nets"].items()}
    opts = {name: _adam_from_dict(d) for name, d in payload.get("optimizers", {}).items()}
    return nets, opts
