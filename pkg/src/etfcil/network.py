"""Two-layer MLP blocks with explicit reverse-mode gradients.

The architecture is fixed (affine, ReLU, affine for both the backbone and
the projection head), so gradients are hand-derived instead of pulling in an
autodiff dependency; they are checked against finite differences in tests.
Also holds the SGD-with-momentum update and the cosine-annealed step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class TwoLayerParams:
    w1: np.ndarray  # (n_in, n_hidden)
    b1: np.ndarray  # (n_hidden,)
    w2: np.ndarray  # (n_hidden, n_out)
    b2: np.ndarray  # (n_out,)

    def copy(self) -> "TwoLayerParams":
        return TwoLayerParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def tobytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(a).tobytes() for a in self.arrays().values())


def init_two_layer(rng: np.random.Generator, n_in: int, n_hidden: int, n_out: int) -> TwoLayerParams:
    """He-scaled Gaussian weights, zero biases."""
    return TwoLayerParams(
        w1=rng.standard_normal((n_in, n_hidden)) * math.sqrt(2.0 / n_in),
        b1=np.zeros(n_hidden),
        w2=rng.standard_normal((n_hidden, n_out)) * math.sqrt(2.0 / n_hidden),
        b2=np.zeros(n_out),
    )


def forward_two_layer(params: TwoLayerParams, x: np.ndarray):
    """Batched forward pass; returns the output and the cache backward needs."""
    z1 = x @ params.w1 + params.b1
    h1 = np.maximum(z1, 0.0)
    out = h1 @ params.w2 + params.b2
    return out, (x, z1, h1)


def backward_two_layer(params: TwoLayerParams, cache, grad_out: np.ndarray):
    """Gradients of a scalar loss given d loss / d out; also returns d loss / d x."""
    x, z1, h1 = cache
    grads = TwoLayerParams(
        w1=np.empty_like(params.w1),
        b1=np.empty_like(params.b1),
        w2=h1.T @ grad_out,
        b2=grad_out.sum(axis=0),
    )
    grad_h1 = grad_out @ params.w2.T
    grad_z1 = grad_h1 * (z1 > 0.0)
    grads.w1 = x.T @ grad_z1
    grads.b1 = grad_z1.sum(axis=0)
    grad_x = grad_z1 @ params.w1.T
    return grads, grad_x


def cosine_lr(lr0: float, step: int, total_steps: int) -> float:
    """Cosine annealing lr0 * 0.5 * (1 + cos(pi * step / total)), no warmup."""
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class SgdMomentum:
    """SGD with momentum over a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], momentum: float):
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.params = params
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p -= lr * v
