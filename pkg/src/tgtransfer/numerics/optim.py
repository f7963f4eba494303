"""Gradient-descent optimizers over a ParameterSet.

Updates walk parameters in sorted-name order, so two runs with identical
gradients apply identical floating-point operations.
"""

from __future__ import annotations

import numpy as np

from .params import ParameterSet
from .tensor import MissingGradError


class Sgd:
    kind = "sgd"

    def __init__(self, lr: float):
        self.lr = float(lr)

    def step(self, pset: ParameterSet) -> None:
        for name, t in pset.items():
            if t.grad is None:
                raise MissingGradError(f"no gradient for parameter {name}")
            t.data = t.data - self.lr * t.grad

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        if arrays:
            raise ValueError("sgd carries no state")


class Adam:
    kind = "adam"

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, pset: ParameterSet) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in pset.items():
            if p.grad is None:
                raise MissingGradError(f"no gradient for parameter {name}")
            g = p.grad
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * (g * g)
            self._m[name] = m
            self._v[name] = v
            m_hat = m / bias1
            v_hat = v / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"__step__": np.array([float(self.t)])}
        for name in sorted(self._m):
            out[f"m.{name}"] = self._m[name]
            out[f"v.{name}"] = self._v[name]
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self._m.clear()
        self._v.clear()
        self.t = int(arrays["__step__"][0])
        for key, arr in arrays.items():
            if key == "__step__":
                continue
            slot, name = key.split(".", 1)
            target = self._m if slot == "m" else self._v
            target[name] = np.asarray(arr, dtype=np.float64).copy()


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return Sgd(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer kind: {kind}")
