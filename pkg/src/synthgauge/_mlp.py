"""Dense layers with tanh/linear activations and explicit reverse mode."""
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

ACTIVATIONS = ("tanh", "linear")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "tanh"

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValidationError(f"layer shapes inconsistent: weight {w.shape}, bias {b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("layer weights must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def __call__(self, x):
        pre = x @ self.weight.T + self.bias
        return np.tanh(pre) if self.activation == "tanh" else pre

    def to_dict(self):
        return {
            "shape": list(self.weight.shape),
            "weight": self.weight.ravel().tolist(),
            "bias": self.bias.tolist(),
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d):
        shape = tuple(d["shape"])
        return cls(np.asarray(d["weight"], dtype=np.float64).reshape(shape), d["bias"], d.get("activation", "tanh"))


def check_chain(layers, in_dim, what):
    dim = in_dim
    for i, layer in enumerate(layers):
        if layer.in_dim != dim:
            raise ValidationError(f"{what} layer {i} expects input dim {layer.in_dim}, previous output is {dim}")
        dim = layer.out_dim
    return dim


def forward(layers, x):
    """Return the list of activations ``[x, h1, ..., out]`` for a batch ``x``."""
    outs = [x]
    for layer in layers:
        outs.append(layer(outs[-1]))
    return outs


def backward(layers, outs, grad_out, need_params=True):
    """Reverse pass. Returns ``(grad_input, [(dW, db), ...])``."""
    grads = []
    g = grad_out
    for layer, x_in, y in zip(reversed(layers), reversed(outs[:-1]), reversed(outs[1:])):
        if layer.activation == "tanh":
            g = g * (1.0 - y * y)
        if need_params:
            grads.append((g.T @ x_in, g.sum(axis=0)))
        g = g @ layer.weight
    grads.reverse()
    return g, grads


def glorot_layer(rng, in_dim, out_dim, activation="tanh"):
    a = np.sqrt(6.0 / (in_dim + out_dim))
    return Layer(rng.uniform(-a, a, size=(out_dim, in_dim)), np.zeros(out_dim), activation)


def flatten(layers):
    return [p for layer in layers for p in (layer.weight.ravel(), layer.bias)]


def unflatten(layers, vec, offset):
    out = []
    for layer in layers:
        nw = layer.weight.size
        if offset + nw + layer.out_dim > vec.size:
            raise ValidationError(f"parameter vector too short: {vec.size} entries")
        w = vec[offset:offset + nw].reshape(layer.weight.shape)
        offset += nw
        b = vec[offset:offset + layer.out_dim]
        offset += layer.out_dim
        out.append(Layer(w, b, layer.activation))
    return out, offset
