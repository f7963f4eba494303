"""Small neural building blocks over the autodiff tensors.

Modules hold no weights themselves. Each instance owns a name prefix and
registers its parameters into a ParameterSet via `init_params`; the forward
call reads them back by name. That keeps every trainable value in one place
for checkpointing and optimizer state.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParameterSet, xavier_uniform

_ACTIVATIONS = {
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "leaky_relu": T.leaky_relu,
}


class Linear:
    """y = x @ W + b with W of shape (in_dim, out_dim)."""

    def __init__(self, prefix: str, in_dim: int, out_dim: int, bias: bool = True):
        self.prefix = prefix
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.bias = bias

    def init_params(self, pset: ParameterSet, rng: np.random.Generator) -> None:
        pset.add(f"{self.prefix}.w", xavier_uniform(rng, self.in_dim, self.out_dim, (self.in_dim, self.out_dim)))
        if self.bias:
            pset.add(f"{self.prefix}.b", np.zeros(self.out_dim))

    def __call__(self, pset: ParameterSet, x: T.Tensor) -> T.Tensor:
        out = T.matmul(x, pset[f"{self.prefix}.w"])
        if self.bias:
            out = out + pset[f"{self.prefix}.b"]
        return out


class Mlp:
    """Stacked Linear layers; `activation` between layers, none after the last."""

    def __init__(self, prefix: str, widths: list[int], activation: str = "leaky_relu"):
        if len(widths) < 2:
            raise ValueError("widths must list at least input and output size")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation: {activation}")
        self.prefix = prefix
        self.widths = list(widths)
        self.activation = activation
        self.layers = [
            Linear(f"{prefix}.l{i}", widths[i], widths[i + 1])
            for i in range(len(widths) - 1)
        ]

    def init_params(self, pset: ParameterSet, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init_params(pset, rng)

    def __call__(self, pset: ParameterSet, x: T.Tensor) -> T.Tensor:
        act = _ACTIVATIONS[self.activation]
        out = x
        for i, layer in enumerate(self.layers):
            out = layer(pset, out)
            if i < len(self.layers) - 1:
                out = act(out)
        return out


class GruCell:
    """Single-step GRU: h' = (1-z)*candidate + z*h."""

    def __init__(self, prefix: str, input_dim: int, hidden_dim: int):
        self.prefix = prefix
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim

    def init_params(self, pset: ParameterSet, rng: np.random.Generator) -> None:
        both = self.input_dim + self.hidden_dim
        for gate in ("z", "r", "h"):
            pset.add(
                f"{self.prefix}.w{gate}",
                xavier_uniform(rng, both, self.hidden_dim, (both, self.hidden_dim)),
            )
            pset.add(f"{self.prefix}.b{gate}", np.zeros(self.hidden_dim))

    def __call__(self, pset: ParameterSet, x: T.Tensor, h: T.Tensor) -> T.Tensor:
        p = self.prefix
        xh = T.concat([x, h], axis=1)
        z = T.sigmoid(T.matmul(xh, pset[f"{p}.wz"]) + pset[f"{p}.bz"])
        r = T.sigmoid(T.matmul(xh, pset[f"{p}.wr"]) + pset[f"{p}.br"])
        xrh = T.concat([x, r * h], axis=1)
        cand = T.tanh(T.matmul(xrh, pset[f"{p}.wh"]) + pset[f"{p}.bh"])
        one = T.constant(np.ones((1, self.hidden_dim)))
        return (one - z) * cand + z * h


class EmbeddingTable:
    """Learned row per id; row 0 is conventionally the unknown token."""

    def __init__(self, prefix: str, num_rows: int, dim: int):
        self.prefix = prefix
        self.num_rows = num_rows
        self.dim = dim

    def init_params(self, pset: ParameterSet, rng: np.random.Generator) -> None:
        pset.add(
            f"{self.prefix}.table",
            xavier_uniform(rng, self.dim, self.dim, (self.num_rows, self.dim)),
        )

    def __call__(self, pset: ParameterSet, idx: np.ndarray) -> T.Tensor:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_rows):
            raise IndexError(f"embedding index out of range [0, {self.num_rows})")
        return T.gather(pset[f"{self.prefix}.table"], idx)


class TimeEncoder:
    """cos(dt * freq + phase) with learnable freq/phase, one channel per dim.

    Frequencies start geometrically spaced over [1, 1e-4] so channels cover
    several orders of magnitude of time gaps.
    """

    def __init__(self, prefix: str, dim: int):
        self.prefix = prefix
        self.dim = dim

    def init_params(self, pset: ParameterSet, rng: np.random.Generator) -> None:
        freqs = 1.0 / np.power(10.0, np.linspace(0.0, 4.0, self.dim))
        pset.add(f"{self.prefix}.freq", freqs)
        pset.add(f"{self.prefix}.phase", np.zeros(self.dim))

    def __call__(self, pset: ParameterSet, dt: np.ndarray) -> T.Tensor:
        """dt: float array of shape (...,); returns shape (..., dim)."""
        dt_t = T.constant(np.asarray(dt, dtype=np.float64)[..., None])
        return T.cos(dt_t * pset[f"{self.prefix}.freq"] + pset[f"{self.prefix}.phase"])
