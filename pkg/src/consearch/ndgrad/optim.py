"""Adam optimizer with per-group learning rates and bias correction."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Standard Adam. Groups pair a parameter list with its own learning rate."""

    def __init__(
        self,
        groups: list[tuple[list[Tensor], float]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.groups = [(list(params), float(lr)) for params, lr in groups]
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {id(p): np.zeros_like(p.data) for params, _ in self.groups for p in params}
        self._v = {id(p): np.zeros_like(p.data) for params, _ in self.groups for p in params}

    def zero_grad(self) -> None:
        for params, _ in self.groups:
            for p in params:
                p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for params, lr in self.groups:
            for p in params:
                if p.grad is None:
                    continue
                g = p.grad
                m = self._m[id(p)]
                v = self._v[id(p)]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                update = lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                if not np.isfinite(update).all():
                    raise FloatingPointError("non-finite Adam update")
                p.data = p.data - update
