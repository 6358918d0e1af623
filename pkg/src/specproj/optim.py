"""Adam with decoupled weight decay and a cosine-annealed learning rate.

Parameters live in a flat name -> ndarray dict and are updated in place.
Complex arrays are treated as interleaved (re, im) float pairs; gradients
for complex parameters follow the convention g.real = dL/dRe, g.imag =
dL/dIm, so the float views line up elementwise.
"""

from __future__ import annotations

import math

import numpy as np


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if total_steps <= 0:
        return lr0
    frac = min(max(step / total_steps, 0.0), 1.0)
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * frac))


def _float_view(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a):
        return a.view(np.float64)
    return a


class Adam:
    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(_float_view(v)) for k, v in params.items()}
        self.v = {k: np.zeros_like(_float_view(v)) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        self.t += 1
        lr = self.lr if lr is None else lr
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, p in self.params.items():
            g = _float_view(np.ascontiguousarray(grads[name]))
            pf = _float_view(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * pf
            pf -= lr * update
