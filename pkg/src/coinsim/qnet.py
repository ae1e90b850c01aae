"""Minimal feed-forward Q-network: input dropout, ReLU hidden layers, a linear
per-subtask output head, and an action-aggregation dot product that makes the
predicted state-action value linear in the action weights.

Everything is plain numpy with hand-rolled backprop; checkpoints are versioned
JSON and round-trip bit-exactly (Python float repr is shortest-round-trip).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """A gradient step produced a non-finite loss or gradient and was rejected."""


@dataclass
class Network:
    sizes: tuple                 # (input, hidden..., output)
    weights: list                # per layer: (out, in) float64
    biases: list                 # per layer: (out,) float64
    dropout_p: float = 0.0       # input-layer dropout probability (train time only)

    def copy(self) -> "Network":
        return Network(self.sizes, [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases], self.dropout_p)


def init_network(sizes, rng, dropout_p: float = 0.0) -> Network:
    """Uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.gen.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.gen.uniform(-bound, bound, size=fan_out))
    return Network(tuple(int(s) for s in sizes), weights, biases, dropout_p)


def draw_dropout_mask(net: Network, shape, rng) -> np.ndarray:
    return (rng.gen.random(shape) >= net.dropout_p).astype(float)


def _forward_cached(net: Network, x: np.ndarray, mask: np.ndarray | None):
    """Batch forward pass keeping activations for backprop. Hidden layers are
    ReLU; the output head is linear. Dropout uses inverted scaling."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if mask is not None:
        h = h * mask / (1.0 - net.dropout_p)
    acts = [h]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(net: Network, x, dropout_active: bool = False, rng=None,
            dropout_mask: np.ndarray | None = None) -> np.ndarray:
    """Theta vector(s) for the given indicator input.

    With dropout inactive this is a pure function of (weights, input); at train
    time input units are zeroed with probability dropout_p and the survivors
    rescaled, using either the provided mask or a draw from rng.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    if batch.shape[1] != net.sizes[0]:
        raise ValueError(f"input width {batch.shape[1]} != network input {net.sizes[0]}")
    mask = None
    if dropout_active and net.dropout_p > 0.0:
        if dropout_mask is not None:
            mask = np.atleast_2d(dropout_mask)
        elif rng is not None:
            mask = draw_dropout_mask(net, batch.shape, rng)
        else:
            raise ValueError("dropout_active requires rng or an explicit mask")
    theta = _forward_cached(net, batch, mask)[-1]
    return theta[0] if single else theta


def q_value(theta: np.ndarray, action_weights: np.ndarray) -> float:
    """Aggregation layer: plain dot product of the action weights with theta."""
    theta = np.asarray(theta, dtype=float)
    action_weights = np.asarray(action_weights, dtype=float)
    if theta.shape != action_weights.shape:
        raise ValueError(f"shape mismatch {theta.shape} vs {action_weights.shape}")
    return float(np.dot(theta, action_weights))


def huber_loss(prediction: float, target: float, delta: float = 1.0) -> float:
    e = abs(prediction - target)
    if e <= delta:
        return 0.5 * e * e
    return delta * (e - 0.5 * delta)


def _huber_grad(err: np.ndarray, delta: float = 1.0) -> np.ndarray:
    return np.clip(err, -delta, delta)


def loss_and_grads(net: Network, x: np.ndarray, action_weights: np.ndarray,
                   targets: np.ndarray, mask: np.ndarray | None = None,
                   delta: float = 1.0):
    """Mean Huber loss between aggregated predictions and TD targets, plus
    gradients for every layer. Gradient flows through the aggregation dot
    product into theta and back through the stack."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    action_weights = np.atleast_2d(np.asarray(action_weights, dtype=float))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    batch = x.shape[0]

    acts = _forward_cached(net, x, mask)
    theta = acts[-1]
    preds = np.einsum("bo,bo->b", theta, action_weights)
    err = preds - targets
    loss = float(np.mean(np.where(np.abs(err) <= delta,
                                  0.5 * err * err,
                                  delta * (np.abs(err) - 0.5 * delta))))

    d_pred = _huber_grad(err, delta) / batch          # (B,)
    d_h = d_pred[:, None] * action_weights            # gradient at theta
    grads_w, grads_b = [], []
    for i in range(len(net.weights) - 1, -1, -1):
        inp = acts[i]
        grads_w.append(d_h.T @ inp)
        grads_b.append(d_h.sum(axis=0))
        if i > 0:
            d_h = (d_h @ net.weights[i]) * (acts[i] > 0.0)
    grads_w.reverse()
    grads_b.reverse()
    return loss, grads_w, grads_b


def train_step(net: Network, x, action_weights, targets, lr: float,
               dropout_active: bool = False, rng=None,
               dropout_mask: np.ndarray | None = None) -> float:
    """One SGD step on the mean Huber loss; rejects non-finite steps."""
    mask = None
    if dropout_active and net.dropout_p > 0.0:
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        mask = (np.atleast_2d(dropout_mask) if dropout_mask is not None
                else draw_dropout_mask(net, x2.shape, rng))
    loss, grads_w, grads_b = loss_and_grads(net, x, action_weights, targets, mask)
    if not np.isfinite(loss) or any(not np.isfinite(g).all() for g in grads_w + grads_b):
        raise TrainingError(f"non-finite loss/gradient (loss={loss!r}); step rejected")
    for w, b, gw, gb in zip(net.weights, net.biases, grads_w, grads_b):
        w -= lr * gw
        b -= lr * gb
    return loss


def sync_target(net: Network) -> Network:
    """Deep copy; later updates to the main network do not leak into the target."""
    return net.copy()


def save_checkpoint(net: Network, path, extra: dict | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "sizes": list(net.sizes),
        "dropout_p": net.dropout_p,
        "layers": [{"weights": w.tolist(), "bias": b.tolist()}
                   for w, b in zip(net.weights, net.biases)],
        "optimizer": {"kind": "sgd"},
        "extra": extra or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    weights = [np.array(layer["weights"], dtype=float) for layer in payload["layers"]]
    biases = [np.array(layer["bias"], dtype=float) for layer in payload["layers"]]
    net = Network(tuple(payload["sizes"]), weights, biases, payload["dropout_p"])
    return net, copy.deepcopy(payload.get("extra", {}))
