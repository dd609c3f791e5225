"""Dense scalar-output network with exact reverse-mode gradients.

The only architecture needed anywhere in the package is a feedforward stack
of linear layers with ELU on the hidden layers and an identity scalar output
(the logit of a binary classifier). Everything is float64; gradients are
computed by hand-rolled backprop and are exact up to floating point, which
is what lets the test suite pin them against central finite differences.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng

__all__ = [
    "DenseClassifier",
    "elu",
    "elu_grad_from_output",
    "sigmoid",
    "softplus",
    "softplus_losses",
]


def elu(x):
    """Exponential linear unit: ``x`` for ``x >= 0``, ``exp(x) - 1`` below."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad_from_output(a):
    """Derivative of ELU recovered from its output: 1 above 0, ``a + 1`` below."""
    return np.where(a >= 0.0, 1.0, a + 1.0)


def sigmoid(z):
    """Overflow-free logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    """``log(1 + exp(z))`` via the overflow-free branch ``max(z,0) + log1p(exp(-|z|))``."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def softplus_losses(logit):
    """Both binary cross-entropy terms of a logit, without forming probabilities.

    Returns ``(loss_pos, loss_neg)`` where ``loss_pos = -log(sigmoid(logit))``
    is the loss of calling the example positive and ``loss_neg =
    -log(1 - sigmoid(logit))`` the loss of calling it negative. Stable for
    arbitrarily large logits and satisfies ``loss_neg - loss_pos == logit``.
    """
    return softplus(-np.asarray(logit, dtype=np.float64)), softplus(logit)


class DenseClassifier:
    """ELU multilayer perceptron emitting a single scalar logit.

    Parameters are kept as float64 lists ``weights[k]`` of shape
    ``(layer_sizes[k+1], layer_sizes[k])`` and ``biases[k]`` of shape
    ``(layer_sizes[k+1],)``. The output layer is linear.
    """

    def __init__(self, layer_sizes: list[int], rng: Rng | None = None, init: str = "glorot"):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 1:
            raise ValueError(f"output dimension must be 1, got {sizes[-1]}")
        self.layer_sizes = sizes
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if init == "glorot":
                if rng is None:
                    raise ValueError("glorot init needs an Rng")
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, (fan_out, fan_in))
            elif init == "zeros":
                w = np.zeros((fan_out, fan_in))
            else:
                raise ValueError(f"unknown init {init!r}")
            self.weights.append(np.asarray(w, dtype=np.float64))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (live views)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "DenseClassifier":
        clone = DenseClassifier(self.layer_sizes, init="zeros")
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def load_parameters(self, params: list[np.ndarray]) -> None:
        exp = self.parameters()
        if len(params) != len(exp):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(exp, params):
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    # -- forward / backward -------------------------------------------------

    def forward(self, inputs: np.ndarray) -> np.ndarray:
        """Logits for a batch ``(n, input_dim)`` or a single ``(input_dim,)`` vector.

        Returns an ``(n,)`` array, or a scalar for a single vector.
        """
        logits, _ = self.forward_cached(np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
        if np.asarray(inputs).ndim == 1:
            return float(logits[0])
        return logits

    def forward_cached(self, inputs: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward pass keeping each layer's input for backprop."""
        a = np.asarray(inputs, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != self.input_dim:
            raise ValueError(f"expected (n, {self.input_dim}) inputs, got {a.shape}")
        cache = [a]
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if k == last else elu(z)
            if k != last:
                cache.append(a)
        return a[:, 0], cache

    def backward(self, inputs: np.ndarray, upstream) -> list[np.ndarray]:
        """Exact gradients of ``sum_i upstream_i * logit_i`` w.r.t. all parameters.

        ``inputs`` is ``(n, input_dim)`` (or a single vector with scalar
        upstream); the result matches :meth:`parameters` order.
        """
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        u = np.atleast_1d(np.asarray(upstream, dtype=np.float64))
        if u.shape != (x.shape[0],):
            raise ValueError(f"upstream shape {u.shape} does not match batch {x.shape[0]}")
        _, cache = self.forward_cached(x)
        return self.backward_from(cache, u)

    def backward_from(self, cache: list[np.ndarray], upstream: np.ndarray) -> list[np.ndarray]:
        """Backprop from a :meth:`forward_cached` cache; returns flat gradient list."""
        grads: list[np.ndarray] = [np.empty(0)] * (2 * self.n_layers)
        g = upstream[:, None]
        for k in range(self.n_layers - 1, -1, -1):
            a_in = cache[k]
            grads[2 * k] = g.T @ a_in
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.weights[k]) * elu_grad_from_output(a_in)
        return grads
