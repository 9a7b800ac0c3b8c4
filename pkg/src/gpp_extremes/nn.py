"""Minimal dense-network machinery with exact analytic backpropagation.

Everything is float64 and operates on batches shaped (n, dim); 1-D inputs
are treated as a batch of one. Training state (parameters, Adam moments)
is mutated sequentially by one owner; forward passes on frozen parameters
are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError


def glorot_uniform(in_dim: int, out_dim: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


@dataclass
class DenseLayer:
    """Affine map y = W x + b with W shaped (out_dim, in_dim)."""

    weights: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "DenseLayer":
        return cls(weights=glorot_uniform(in_dim, out_dim, rng), bias=np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"input width {x.shape[-1]} != layer in_dim {layer.in_dim}")
    return x @ layer.weights.T + layer.bias


def dense_backward(layer, x, grad_out):
    """Gradients of a dense layer given upstream grad at its output.

    Returns (grad_x, grad_weights, grad_bias); ``x`` and ``grad_out``
    must be 2-D batches.
    """
    grad_x = grad_out @ layer.weights
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "linear":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, x: np.ndarray) -> np.ndarray:
    """Elementwise derivative evaluated at pre-activation ``x``."""
    if kind == "relu":
        return (x > 0).astype(float)
    if kind == "tanh":
        return 1.0 - np.tanh(x) ** 2
    if kind == "linear":
        return np.ones_like(x)
    raise ValueError(f"unknown activation {kind!r}")


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros w.p. ``rate``, survivors scaled 1/(1-rate)."""
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout(x, rate, mode="train", rng=None):
    if mode == "eval" or rate == 0.0:
        if not (0.0 <= rate < 1.0):
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        return np.asarray(x, dtype=float)
    return np.asarray(x, dtype=float) * dropout_mask(np.shape(x), rate, rng)


# ---------------------------------------------------------------------------
# layer stack with cached forward for exact backprop

@dataclass
class DenseStack:
    """Dense layers with per-layer activation and optional inverted dropout."""

    layers: list
    kinds: list  # activation per layer: "relu" | "tanh" | "linear"
    dropout_layers: list  # bool per layer
    dropout_rate: float = 0.0

    @classmethod
    def init(cls, dims, kinds, dropout_layers, dropout_rate, rng):
        layers = [
            DenseLayer.init(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)
        ]
        return cls(
            layers=layers,
            kinds=list(kinds),
            dropout_layers=list(dropout_layers),
            dropout_rate=dropout_rate,
        )

    def forward(self, x, mode="eval", rng=None):
        """Run the stack; returns (output, cache) with cache usable by backward.

        In train mode fresh dropout masks are drawn from ``rng``; eval mode
        is deterministic. A cache from a previous call may be replayed via
        ``masks=`` for finite-difference checks against fixed masks.
        """
        return self._forward(np.atleast_2d(np.asarray(x, dtype=float)), mode, rng, None)

    def forward_with_masks(self, x, masks):
        return self._forward(np.atleast_2d(np.asarray(x, dtype=float)), "train", None, masks)

    def _forward(self, x, mode, rng, masks):
        inputs, preacts, used_masks = [], [], []
        h = x
        for i, layer in enumerate(self.layers):
            inputs.append(h)
            z = dense_forward(layer, h)
            preacts.append(z)
            h = activation(self.kinds[i], z)
            if self.dropout_layers[i] and self.dropout_rate > 0.0:
                if masks is not None:
                    m = masks[i]
                elif mode == "train":
                    m = dropout_mask(h.shape, self.dropout_rate, rng)
                else:
                    m = None
                if m is not None:
                    h = h * m
                used_masks.append(m)
            else:
                used_masks.append(None)
        cache = {"inputs": inputs, "preacts": preacts, "masks": used_masks}
        return h, cache

    def backward(self, cache, grad_out):
        """Exact gradients through the cached forward pass.

        Returns (grad_input, grads) where grads is a list of
        (grad_weights, grad_bias) in layer order.
        """
        if cache is None:
            raise ValueError("backward requires the cache of a forward pass")
        grads = [None] * len(self.layers)
        g = np.asarray(grad_out, dtype=float)
        for i in range(len(self.layers) - 1, -1, -1):
            if cache["masks"][i] is not None:
                g = g * cache["masks"][i]
            g = g * activation_grad(self.kinds[i], cache["preacts"][i])
            g, gw, gb = dense_backward(self.layers[i], cache["inputs"][i], g)
            grads[i] = (gw, gb)
        return g, grads

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out


def backprop(stack: DenseStack, x, grad_out, mode="eval", rng=None, masks=None):
    """Forward ``x`` through ``stack`` then return gradients for all parameters."""
    if masks is not None:
        _, cache = stack.forward_with_masks(x, masks)
    else:
        _, cache = stack.forward(x, mode=mode, rng=rng)
    grad_in, grads = stack.backward(cache, np.atleast_2d(np.asarray(grad_out, dtype=float)))
    return grad_in, grads


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    """Adam accumulators; learning rate is mutable so a scheduler can act."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1.0e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr):
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params, grads):
    """One in-place Adam update with bias correction; returns ``params``."""
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient in parameter {i} at Adam step {state.step + 1}"
            )
    state.step += 1
    b1t = 1.0 - state.beta1 ** state.step
    b2t = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)
    return params
