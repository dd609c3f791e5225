"""AdamW with decoupled weight decay, operating on flat parameter lists."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import DenseClassifier

__all__ = ["OptimState", "adamw_step", "NonFiniteGradientError"]


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN or infinity; the step was rejected."""


@dataclass
class OptimState:
    """Moment accumulators and hyperparameters for AdamW.

    ``m`` and ``v`` are parallel to ``net.parameters()``; ``v`` stays
    elementwise nonnegative and ``step`` increases by one per accepted step.
    """

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseClassifier, lr: float, weight_decay: float = 0.0,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "OptimState":
        params = net.parameters()
        return cls(
            lr=lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adamw_step(net: DenseClassifier, grads: list[np.ndarray], state: OptimState) -> None:
    """One AdamW update in place: bias-corrected Adam plus decoupled decay.

    With zero gradients and decay ``lam`` each parameter is scaled by
    ``(1 - lr * lam)``. Non-finite gradients reject the whole step.
    """
    params = net.parameters()
    if len(grads) != len(params):
        raise ValueError(f"got {len(grads)} gradients for {len(params)} parameters")
    for g, p in zip(grads, params):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient; step rejected")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay != 0.0:
            update = update + state.weight_decay * p
        p -= state.lr * update
