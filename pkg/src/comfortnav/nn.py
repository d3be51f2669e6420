"""Dense-layer building blocks shared by the spectrum autoencoder and the
cost regressor: parameter init, affine forward/backward, tanh, and Adam
with decoupled weight decay.

Parameters live in plain dicts of float64 arrays and gradients are
accumulated into matching dicts, which keeps finite-difference checking
and bit-exact persistence straightforward. Everything is single-threaded
and deterministic under a fixed seed.
"""

from __future__ import annotations

import numpy as np


def init_affine(rng: np.random.Generator, n_in: int, n_out: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    return {"W": rng.uniform(-limit, limit, size=(n_in, n_out)), "b": np.zeros(n_out)}


def affine(x: np.ndarray, layer: dict[str, np.ndarray]) -> np.ndarray:
    return x @ layer["W"] + layer["b"]


def affine_backward(x: np.ndarray, layer: dict[str, np.ndarray],
                    d_out: np.ndarray, grads: dict[str, np.ndarray]) -> np.ndarray:
    """Accumulate dL/dW, dL/db into `grads`; return dL/dx."""
    grads["W"] += x.T @ d_out
    grads["b"] += d_out.sum(axis=0)
    return d_out @ layer["W"].T


def tanh_backward(y: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Gradient through tanh given its output y = tanh(x)."""
    return d_out * (1.0 - y * y)


def zero_grads(params: dict[str, dict[str, np.ndarray]]) -> dict[str, dict[str, np.ndarray]]:
    return {name: {k: np.zeros_like(v) for k, v in layer.items()}
            for name, layer in params.items()}


class Adam:
    """Adam with decoupled weight decay over a dict-of-dicts parameter tree.

    Each tensor keeps its own step counter so a parameter group can stay
    frozen for some epochs (untouched bit-for-bit) and join later with
    correct bias correction.
    """

    def __init__(self, params: dict[str, dict[str, np.ndarray]], lr: float,
                 weight_decay: float = 0.0, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = zero_grads(params)
        self._v = zero_grads(params)
        self._t = {name: {k: 0 for k in layer} for name, layer in params.items()}

    def step(self, grads: dict[str, dict[str, np.ndarray]],
             active: set[str] | None = None) -> None:
        """Apply one update. `active` limits the update to named parameter
        groups; frozen groups are not decayed and keep their moments."""
        for name, layer in self.params.items():
            if active is not None and name not in active:
                continue
            for key, value in layer.items():
                g = grads[name][key]
                self._t[name][key] += 1
                t = self._t[name][key]
                m = self._m[name][key]
                v = self._v[name][key]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                m_hat = m / (1.0 - self.beta1 ** t)
                v_hat = v / (1.0 - self.beta2 ** t)
                value -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                                    + self.weight_decay * value)
