"""Small feed-forward classifier trained by momentum mini-batch gradient descent."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, DataError

ACTIVATIONS = ("relu", "tanh")


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(a, kind):
    # derivative expressed through the activation output
    return (a > 0).astype(float) if kind == "relu" else 1.0 - a * a


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class MlpNetwork:
    weights: list
    biases: list
    activation: str = "relu"
    converged: bool = True
    final_loss: float = float("nan")
    epochs: int = 0
    history: list = field(default_factory=list)

    def logits(self, X) -> np.ndarray:
        a = np.asarray(X, dtype=float)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(a @ W + b, self.activation)
        return a @ self.weights[-1] + self.biases[-1]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)

    def loss(self, X, y) -> float:
        lp = _log_softmax(self.logits(X))
        return float(-lp[np.arange(len(y)), y].mean())


def _holdout(y, fraction, rng):
    """Stratified validation indices for early stopping (at least one per class)."""
    val = []
    for c in np.unique(y):
        idx = np.nonzero(y == c)[0]
        k = int(round(fraction * len(idx)))
        k = min(max(k, 1), len(idx) - 1)
        val.extend(rng.permutation(idx)[:k])
    val = np.sort(np.array(val, dtype=int))
    train = np.setdiff1d(np.arange(len(y)), val)
    return train, val


def train_mlp(X, y, layer_sizes=(16, 16), activation="relu", learning_rate=1e-2,
              max_epochs=500, batch_size=16, momentum=0.9, patience=25,
              validation_fraction=0.2, n_classes=2, seed=0) -> MlpNetwork:
    """Cross-entropy training with early stopping on a stratified holdout.

    The weights of the epoch with the lowest validation loss are returned.
    If the validation loss was still improving when ``max_epochs`` ran out
    the network is flagged ``converged=False`` and a warning is issued.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if activation not in ACTIVATIONS:
        raise ConfigurationError(f"activation must be one of {ACTIVATIONS}")
    if learning_rate <= 0 or max_epochs < 1 or batch_size < 1:
        raise ConfigurationError("learning_rate, max_epochs and batch_size must be positive")
    if len(np.unique(y)) < 2:
        raise DataError("MLP training needs at least two classes")
    rng = np.random.default_rng(seed)

    sizes = [X.shape[1], *map(int, layer_sizes), n_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        gain = 2.0 if activation == "relu" else 1.0
        weights.append(rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    net = MlpNetwork(weights, biases, activation)

    use_holdout = patience > 0 and validation_fraction > 0 and min(np.bincount(y)) >= 2
    if use_holdout:
        tr, va = _holdout(y, validation_fraction, rng)
    else:
        tr, va = np.arange(len(y)), np.arange(len(y))
    Xt, yt = X[tr], y[tr]
    vel_w = [np.zeros_like(W) for W in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    best = (np.inf, [W.copy() for W in weights], [b.copy() for b in biases], 0)
    stale = 0
    stopped = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(yt))
        for start in range(0, len(order), batch_size):
            bi = order[start:start + batch_size]
            acts = [Xt[bi]]
            for W, b in zip(weights[:-1], biases[:-1]):
                acts.append(_act(acts[-1] @ W + b, activation))
            z = acts[-1] @ weights[-1] + biases[-1]
            grad = np.exp(_log_softmax(z))
            grad[np.arange(len(bi)), yt[bi]] -= 1.0
            grad /= len(bi)
            for layer in range(len(weights) - 1, -1, -1):
                gW = acts[layer].T @ grad
                gb = grad.sum(axis=0)
                if layer > 0:
                    grad = (grad @ weights[layer].T) * _act_grad(acts[layer], activation)
                vel_w[layer] = momentum * vel_w[layer] - learning_rate * gW
                vel_b[layer] = momentum * vel_b[layer] - learning_rate * gb
                weights[layer] += vel_w[layer]
                biases[layer] += vel_b[layer]
        val_loss = net.loss(X[va], y[va])
        net.history.append(val_loss)
        if val_loss < best[0]:
            best = (val_loss, [W.copy() for W in weights], [b.copy() for b in biases], epoch)
            stale = 0
        else:
            stale += 1
            if patience > 0 and stale >= patience:
                stopped = True
                break

    net.weights, net.biases = best[1], best[2]
    net.epochs = epoch
    net.final_loss = net.loss(X, y)
    net.converged = stopped or patience <= 0
    if not net.converged:
        warnings.warn(f"MLP validation loss still falling after {max_epochs} epochs "
                      f"(final loss {net.final_loss:.4g})", RuntimeWarning, stacklevel=2)
    return net
