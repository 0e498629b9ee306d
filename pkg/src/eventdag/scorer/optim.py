"""AMSGrad with coupled L2 weight decay."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError


class AMSGrad:
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.001):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.vhat: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place.

        Raises NonFiniteError, leaving params and moments untouched, when any
        gradient entry is NaN or infinite.
        """
        for k, g in grads.items():
            if g.shape != params[k].shape:
                raise ValueError(f"gradient {k} has shape {g.shape}, parameter {params[k].shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient in {k}; optimizer step rejected")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        # bias-corrected step size
        alpha = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for k, w in params.items():
            g = grads[k]
            if self.weight_decay:
                g = g + self.weight_decay * w
            if k not in self.m:
                self.m[k] = np.zeros_like(w)
                self.v[k] = np.zeros_like(w)
                self.vhat[k] = np.zeros_like(w)
            m, v, vhat = self.m[k], self.v[k], self.vhat[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            np.maximum(vhat, v, out=vhat)
            w -= (alpha * m / (np.sqrt(vhat) + self.eps)).astype(w.dtype)


def amsgrad_step(params: dict, grads: dict, opt_state: AMSGrad) -> dict:
    opt_state.step(params, grads)
    return params
