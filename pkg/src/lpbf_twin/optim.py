"""Adam over dicts of arrays; complex arrays are updated as (re, im) pairs."""
from __future__ import annotations

import numpy as np


def _real_view(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


class Adam:
    """Adam with bias correction and optional decoupled weight decay.

    Gradients of complex parameters follow the convention
    ``dL/dRe + 1j * dL/dIm`` so that their float view is the real gradient.
    """

    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(_real_view(v)) for k, v in params.items()}
        self.v = {k: np.zeros_like(_real_view(v)) for k, v in params.items()}

    def step(self, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = _real_view(np.ascontiguousarray(grads[k]))
            pv = _real_view(p)
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if self.weight_decay:
                pv -= self.lr * self.weight_decay * pv
            pv -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "lr": self.lr}
