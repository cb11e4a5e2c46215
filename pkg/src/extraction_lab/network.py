"""Dense feed-forward classifier with hand-rolled backprop and Adam.

Everything the rest of the lab needs from a neural net lives here: forward
passes that expose the penultimate-layer latent, cross-entropy gradients,
Adam updates with step-decay scheduling, convergence-based training, and a
text checkpoint format.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SOFTMAX_FLOOR = 1e-308  # smallest positive normal; keeps probabilities strictly positive
LOG_EPS = 1e-12


class CheckpointError(Exception):
    """Raised when a checkpoint file cannot be decoded into a Network."""


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    num_classes: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if len(self.hidden_sizes) < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes needs at least one positive entry")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation: {self.activation}")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, input through output."""
        sizes = [self.input_dim, *self.hidden_sizes, self.num_classes]
        return list(zip(sizes[:-1], sizes[1:]))


@dataclass
class Network:
    spec: NetworkSpec
    weights: list[np.ndarray]  # per layer, (fan_out, fan_in)
    biases: list[np.ndarray]

    def copy(self) -> "Network":
        return Network(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def set_params(self, weights: list[np.ndarray], biases: list[np.ndarray]) -> None:
        for dst, src in zip(self.weights, weights):
            dst[...] = src
        for dst, src in zip(self.biases, biases):
            dst[...] = src


@dataclass
class ForwardResult:
    logits: np.ndarray
    latent: np.ndarray  # post-activation output of the last hidden layer


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_network(cls, net: Network) -> "AdamState":
        params = net.weights + net.biases
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
        )


@dataclass
class TrainConfig:
    learning_rate: float = 9e-4
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    lr_step_size: int = 20
    lr_gamma: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must be in [1, max_epochs]")
        if self.lr_step_size < 1:
            raise ValueError("lr_step_size must be >= 1")
        if not 0 < self.lr_gamma <= 1:
            raise ValueError("lr_gamma must be in (0, 1]")


@dataclass
class EpochStats:
    epoch: int
    learning_rate: float
    train_loss: float
    val_loss: float | None = None


def xavier_init(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Weights ~ N(0, 2/(fan_in+fan_out)) per layer, biases zero."""
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims():
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.standard_normal((fan_out, fan_in)) * std)
        biases.append(np.zeros(fan_out))
    return Network(spec, weights, biases)


def forward(net: Network, sample: np.ndarray) -> ForwardResult:
    """Single-sample pass returning logits and the hidden-layer latent."""
    a = np.asarray(sample, dtype=float)
    if a.shape != (net.spec.input_dim,):
        raise ValueError(f"sample has shape {a.shape}, expected ({net.spec.input_dim},)")
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.maximum(w @ a + b, 0.0)
    logits = net.weights[-1] @ a + net.biases[-1]
    return ForwardResult(logits=logits, latent=a)


def forward_batch(net: Network, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched pass; returns (logits, latents) with one row per sample."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != net.spec.input_dim:
        raise ValueError(f"batch has shape {a.shape}, expected (*, {net.spec.input_dim})")
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
    logits = a @ net.weights[-1].T + net.biases[-1]
    return logits, a


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax; output entries are strictly positive and sum to 1."""
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    e = np.maximum(e, SOFTMAX_FLOOR)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(predicted: np.ndarray, target: np.ndarray) -> float:
    """-sum(target * log(predicted + eps)), clamped at zero."""
    value = -float(np.sum(np.asarray(target) * np.log(np.asarray(predicted) + LOG_EPS)))
    return max(0.0, value)


def mean_cross_entropy(net: Network, x: np.ndarray, targets: np.ndarray) -> float:
    logits, _ = forward_batch(net, x)
    probs = softmax(logits)
    per_sample = -np.sum(targets * np.log(probs + LOG_EPS), axis=1)
    return float(np.mean(np.maximum(per_sample, 0.0)))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def backward(net: Network, x: np.ndarray, targets: np.ndarray) -> tuple[float, Gradients]:
    """Mean-over-batch gradients of cross-entropy after softmax.

    `x` is (batch, input_dim); `targets` holds one normalized distribution per
    row. Returns the batch loss alongside per-parameter gradients.
    """
    x = np.asarray(x, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise ValueError(f"batch has shape {x.shape}, expected (*, {net.spec.input_dim})")
    if targets.shape != (x.shape[0], net.spec.num_classes):
        raise ValueError("targets shape does not match batch and num_classes")
    batch = x.shape[0]

    activations = [x]
    pre_acts = []
    a = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w.T + b
        pre_acts.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    logits = a @ net.weights[-1].T + net.biases[-1]
    probs = softmax(logits)
    per_sample = -np.sum(targets * np.log(probs + LOG_EPS), axis=1)
    loss = float(np.mean(np.maximum(per_sample, 0.0)))

    d_w = [np.empty_like(w) for w in net.weights]
    d_b = [np.empty_like(b) for b in net.biases]
    delta = (probs - targets) / batch
    d_w[-1] = delta.T @ activations[-1]
    d_b[-1] = delta.sum(axis=0)
    upstream = delta @ net.weights[-1]
    for layer in range(len(net.weights) - 2, -1, -1):
        delta = upstream * (pre_acts[layer] > 0)
        d_w[layer] = delta.T @ activations[layer]
        d_b[layer] = delta.sum(axis=0)
        if layer > 0:
            upstream = delta @ net.weights[layer]
    return loss, Gradients(weights=d_w, biases=d_b)


def adam_step(net: Network, grads: Gradients, state: AdamState, lr: float) -> None:
    """In-place bias-corrected Adam update; increments state.step_count."""
    state.step_count += 1
    t = state.step_count
    params = net.weights + net.biases
    gs = grads.weights + grads.biases
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, gs, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


def step_decay_lr(lr0: float, step_size: int, gamma: float, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return lr0 * gamma ** (epoch // step_size)


def train_until_convergence(
    net: Network,
    train_x: np.ndarray,
    train_targets: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    val_x: np.ndarray | None = None,
    val_targets: np.ndarray | None = None,
) -> list[EpochStats]:
    """Mini-batch Adam training with step decay and early stopping.

    Shuffles each epoch with `rng`, stops after `cfg.patience` epochs without
    validation improvement, and leaves the best-validation weights in `net`
    when a validation set is given (the final weights otherwise). Without a
    validation set it runs exactly `cfg.max_epochs` epochs.
    """
    train_x = np.asarray(train_x, dtype=float)
    train_targets = np.asarray(train_targets, dtype=float)
    n = train_x.shape[0]
    if n == 0:
        raise ValueError("training set must be non-empty")
    has_val = val_x is not None and len(val_x) > 0
    batch_size = min(cfg.batch_size, n)

    state = AdamState.for_network(net)
    history: list[EpochStats] = []
    best_val = np.inf
    best_params: tuple[list[np.ndarray], list[np.ndarray]] | None = None
    bad_epochs = 0

    for epoch in range(cfg.max_epochs):
        lr = step_decay_lr(cfg.learning_rate, cfg.lr_step_size, cfg.lr_gamma, epoch)
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            loss, grads = backward(net, train_x[idx], train_targets[idx])
            adam_step(net, grads, state, lr)
            losses.append(loss)
        stats = EpochStats(epoch=epoch, learning_rate=lr, train_loss=float(np.mean(losses)))
        if has_val:
            stats.val_loss = mean_cross_entropy(net, val_x, val_targets)
            if stats.val_loss < best_val:
                best_val = stats.val_loss
                best_params = ([w.copy() for w in net.weights], [b.copy() for b in net.biases])
                bad_epochs = 0
            else:
                bad_epochs += 1
        history.append(stats)
        if has_val and bad_epochs >= cfg.patience:
            break

    if best_params is not None:
        net.set_params(*best_params)
    return history


def save_checkpoint(net: Network, path) -> None:
    """Write the `v1` text checkpoint: spec plus flat per-layer arrays."""
    doc = {
        "version": "v1",
        "spec": {
            "input_dim": net.spec.input_dim,
            "hidden_sizes": list(net.spec.hidden_sizes),
            "num_classes": net.spec.num_classes,
            "activation": net.spec.activation,
        },
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> Network:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a valid checkpoint document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != "v1":
        raise CheckpointError("missing or unsupported checkpoint version")
    try:
        spec = NetworkSpec(
            input_dim=int(doc["spec"]["input_dim"]),
            hidden_sizes=tuple(doc["spec"]["hidden_sizes"]),
            num_classes=int(doc["spec"]["num_classes"]),
            activation=doc["spec"].get("activation", "relu"),
        )
        flat_w = doc["weights"]
        flat_b = doc["biases"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint fields: {exc}") from exc
    dims = spec.layer_dims()
    if len(flat_w) != len(dims) or len(flat_b) != len(dims):
        raise CheckpointError("layer count does not match spec")
    weights, biases = [], []
    for (fan_in, fan_out), w, b in zip(dims, flat_w, flat_b):
        w = np.asarray(w, dtype=float)
        b = np.asarray(b, dtype=float)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise CheckpointError("parameter array length does not match spec shapes")
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(b)
    net = Network(spec, weights, biases)
    if not all(np.isfinite(p).all() for p in net.weights + net.biases):
        raise CheckpointError("checkpoint holds non-finite parameters")
    return net
