"""Adam with the step-decay learning-rate schedule used for training."""
from __future__ import annotations

import numpy as np


def adam_step(param, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update on a raw array; ``state`` holds (m, v, t) per parameter."""
    m, v, t = state
    t += 1
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_param, (m, v, t)


def decayed_lr(base_lr, epoch, factor=0.7, every=5):
    """Learning rate after step decay: base * factor^(epoch // every)."""
    return base_lr * factor ** (epoch // every)


class Adam:
    """Adam over a ParamStore; skips parameters with no accumulated gradient."""

    def __init__(self, store, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 decay_factor=0.7, decay_every=5):
        self.store = store
        self.base_lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.decay_factor, self.decay_every = decay_factor, decay_every
        self.state = {
            k: (np.zeros_like(p.data), np.zeros_like(p.data), 0)
            for k, p in store.params.items()
        }

    def lr_at(self, epoch: int) -> float:
        return decayed_lr(self.base_lr, epoch, self.decay_factor, self.decay_every)

    def step(self, epoch: int):
        lr = self.lr_at(epoch)
        for k, p in self.store.params.items():
            if p.grad is None:
                continue
            p.data, self.state[k] = adam_step(
                p.data, p.grad, self.state[k], lr, self.beta1, self.beta2, self.eps
            )
        self.store.zero_grad()
