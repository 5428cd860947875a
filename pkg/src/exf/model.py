"""Fully-connected embedding network with an explicit backward pass."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

ACTIVATION = "relu"


@dataclass
class MlpModel:
    """Affine layers with rectifiers between them and an identity output.

    ``weights[l]`` has shape ``(layer_dims[l], layer_dims[l + 1])`` so a batch
    maps as ``X @ W + b``.
    """

    layer_dims: tuple
    weights: list
    biases: list
    activation: str = ACTIVATION

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise InvalidInputError(f"invalid layer dims {self.layer_dims}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise InvalidInputError("parameter list length does not match layer dims")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l], self.layer_dims[l + 1])
            if W.shape != shape or b.shape != (shape[1],):
                raise InvalidInputError(f"layer {l}: expected W{shape}, b({shape[1]},)")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> list:
        """Parameters in canonical order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def set_params(self, params):
        self.weights = [np.array(p, dtype=np.float64) for p in params[0::2]]
        self.biases = [np.array(p, dtype=np.float64) for p in params[1::2]]

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_dims,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def embed(self, X) -> np.ndarray:
        return forward(self, X)[0]


def param_count(layer_dims) -> int:
    dims = list(layer_dims)
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def init(layer_dims, seed) -> MlpModel:
    """Kaiming-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or min(dims) < 1:
        raise InvalidInputError(f"need at least two positive layer dims, got {list(layer_dims)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(dims), weights, biases)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    model_id: int = 0

    @property
    def penultimate(self) -> np.ndarray:
        """Input to the last affine layer (the network's feature layer)."""
        return self.post[-2] if len(self.post) > 1 else self.inputs


def forward(m: MlpModel, X):
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != m.in_dim:
        raise InvalidInputError(f"model expects inputs of width {m.in_dim}, got shape {A.shape}")
    trace = ForwardTrace(inputs=A, model_id=id(m))
    h = A
    last = m.n_layers - 1
    for l, (W, b) in enumerate(zip(m.weights, m.biases)):
        z = h @ W + b
        h = z if l == last else np.maximum(z, 0.0)
        trace.pre.append(z)
        trace.post.append(h)
    return h, trace


@dataclass
class Gradients:
    weights: list
    biases: list
    inputs: np.ndarray

    def params(self) -> list:
        out = []
        for gW, gb in zip(self.weights, self.biases):
            out.extend((gW, gb))
        return out


def backward(m: MlpModel, trace: ForwardTrace, grad_out, hidden_grads=None) -> Gradients:
    """Reverse-mode gradients of the forward chain.

    ``hidden_grads`` optionally maps a layer index ``l`` to an extra
    gradient w.r.t. that layer's output activation ``trace.post[l]``; this
    is how losses on intermediate features enter the backward pass.
    The rectifier derivative at exactly zero is taken as 0.
    """
    if trace.model_id != id(m) or len(trace.pre) != m.n_layers:
        raise InvalidInputError("trace does not come from a forward pass of this model")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != trace.post[-1].shape:
        raise InvalidInputError(
            f"grad_out shape {g.shape} does not match output shape {trace.post[-1].shape}"
        )
    for l, (W, z) in enumerate(zip(m.weights, trace.pre)):
        if W.shape[1] != z.shape[1]:
            raise InvalidInputError(f"stale trace: layer {l} width changed since forward")
    hidden_grads = hidden_grads or {}
    gW = [None] * m.n_layers
    gb = [None] * m.n_layers
    last = m.n_layers - 1
    for l in range(last, -1, -1):
        if l in hidden_grads:
            g = g + hidden_grads[l]
        if l != last:
            g = g * (trace.pre[l] > 0)
        h_in = trace.post[l - 1] if l > 0 else trace.inputs
        gW[l] = h_in.T @ g
        gb[l] = g.sum(axis=0)
        g = g @ m.weights[l].T
    return Gradients(gW, gb, g)
