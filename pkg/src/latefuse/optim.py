"""Adam optimizer and the finite-difference gradient oracle."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


class OptimizerError(RuntimeError):
    """Raised when a step cannot be taken (e.g. non-finite gradients)."""


class Adam:
    """Standard Adam with bias correction over a fixed parameter list.

    Moment decay rates and epsilon use the usual defaults; the learning
    rate is mutable so a schedule can be applied between epochs.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise OptimizerError("refusing Adam step: non-finite gradient")
            grads.append(g)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def halved_lr(initial_lr: float, epoch: int, halving_epoch: int) -> float:
    """Learning rate schedule: constant, then halved from ``halving_epoch`` on."""
    return initial_lr if epoch < halving_epoch else 0.5 * initial_lr


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                      h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must rebuild its graph on every call and reduce to a scalar;
    ``params`` are perturbed in place one coordinate at a time. The error
    denominator is clamped at 1 so dead parameters compare as 0.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    loss = f()
    for p in params:
        p.zero_grad()
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    worst = 0.0
    with no_grad():
        for p, an in zip(params, analytic):
            flat = p.data.reshape(-1)
            an_flat = an.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = f().item()
                flat[i] = orig - h
                f_minus = f().item()
                flat[i] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                err = abs(an_flat[i] - fd) / max(1.0, abs(fd))
                if err > worst:
                    worst = err
    return worst
