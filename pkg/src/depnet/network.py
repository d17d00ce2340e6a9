"""Fully connected feedforward networks with dependent weights.

Weights into layer ``l`` are ``W[h, j] = sqrt(V[j]) * N[h, j]``: every entry of
column ``j`` shares the per-neuron variance ``V[j]`` of the previous layer.
Inputs are stored column-wise, ``x`` has shape ``(n0, d)`` and layer outputs
``Z`` have shape ``(n_l, d)``.  All layer routines broadcast over leading
batch dimensions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .rand import VARIANCE_MODELS, sample_variance_vector

__all__ = [
    "Activation",
    "Architecture",
    "LayerDraw",
    "NetworkParams",
    "DataSet",
    "get_activation",
    "sample_layer",
    "sample_prior_params",
    "forward",
    "phi_sigma",
    "gaussian_log_likelihood",
]

Activation = Union[str, Callable[[np.ndarray], np.ndarray]]


def relu(z):
    # max(0, z) with relu(0) = 0
    return np.maximum(z, 0.0)


def identity(z):
    return np.asarray(z, dtype=float)


_ACTIVATIONS = {"relu": relu, "identity": identity}


def get_activation(activation: Activation) -> Callable[[np.ndarray], np.ndarray]:
    """Resolve an activation tag (``relu``, ``identity``) or pass a callable through.

    Callables must act entrywise.  The growth bound
    ``|s(z)| <= a1 + a2 |z|**a3`` needed for the wide limit is not checked.
    """
    if callable(activation):
        return activation
    try:
        return _ACTIVATIONS[activation]
    except KeyError:
        raise ValueError(f"unknown activation {activation!r}") from None


@dataclass(frozen=True)
class Architecture:
    """Layer widths ``(n0, n1, ..., n_{L+1})`` plus prior hyperparameters.

    ``variance_models[l-1]`` is the law of the hidden-layer variances
    ``V^(l)``, ``l = 1..L``; the input layer always uses ``1/n0``.
    """

    widths: tuple
    c_b: float = 1.0
    c_w: float = 1.0
    activation: Activation = "relu"
    variance_models: tuple = field(default=None)

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ValueError("need at least one hidden layer: widths = (n0, n1, ..., n_{L+1})")
        if min(widths) < 1:
            raise ValueError("all widths must be >= 1")
        if self.c_b < 0:
            raise ValueError("c_b must be >= 0")
        if self.c_w <= 0:
            raise ValueError("c_w must be > 0")
        models = self.variance_models
        if models is None:
            models = ("fixed",) * self.depth
        elif isinstance(models, str):
            models = (models,) * self.depth
        models = tuple(models)
        if len(models) != self.depth:
            raise ValueError(f"expected {self.depth} variance models, got {len(models)}")
        for m in models:
            if m not in VARIANCE_MODELS:
                raise ValueError(f"unknown variance model {m!r}")
        object.__setattr__(self, "variance_models", models)
        get_activation(self.activation)

    @property
    def depth(self) -> int:
        """Number of hidden layers ``L``."""
        return len(self.widths) - 2

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def sigma(self):
        return get_activation(self.activation)

    def variance_model(self, layer: int) -> str:
        """Variance law of the weights *into* ``layer`` (1-based)."""
        if layer == 1:
            return "fixed"
        return self.variance_models[layer - 2]


class LayerDraw(NamedTuple):
    """Parameters of one layer; arrays may carry leading batch dimensions."""

    bias: np.ndarray  # (..., n_l)
    weight: np.ndarray  # (..., n_l, n_{l-1})
    variance: np.ndarray  # (..., n_{l-1})
    normal: np.ndarray  # (..., n_l, n_{l-1})

    @property
    def w_b(self) -> np.ndarray:
        """``vec((W | b)^T)``: the rows of ``(W | b)`` concatenated."""
        wb = np.concatenate([self.weight, self.bias[..., None]], axis=-1)
        return wb.reshape(wb.shape[:-2] + (-1,))


@dataclass(frozen=True)
class NetworkParams:
    layers: tuple  # LayerDraw for l = 1..L+1

    @property
    def biases(self):
        return [p.bias for p in self.layers]

    @property
    def weights(self):
        return [p.weight for p in self.layers]

    @property
    def variances(self):
        return [p.variance for p in self.layers]


def sample_layer(rng: np.random.Generator, arch: Architecture, layer: int, size=None) -> LayerDraw:
    """Draw ``(b, W, V, N)`` for ``layer`` (1-based) from the prior."""
    if not 1 <= layer <= arch.depth + 1:
        raise ValueError(f"layer must be in 1..{arch.depth + 1}")
    lead = () if size is None else tuple(np.atleast_1d(size))
    n_prev, n_cur = arch.widths[layer - 1], arch.widths[layer]
    v = sample_variance_vector(rng, arch.variance_model(layer), n_prev, size=lead or None)
    v = np.broadcast_to(v, lead + (n_prev,))
    n = np.sqrt(arch.c_w) * rng.standard_normal(lead + (n_cur, n_prev))
    if arch.c_b > 0:
        b = np.sqrt(arch.c_b) * rng.standard_normal(lead + (n_cur,))
    else:
        b = np.zeros(lead + (n_cur,))
    w = n * np.sqrt(v)[..., None, :]
    return LayerDraw(b, w, v, n)


def sample_prior_params(rng: np.random.Generator, arch: Architecture) -> NetworkParams:
    """One prior draw of every bias, weight and per-neuron variance."""
    return NetworkParams(tuple(sample_layer(rng, arch, l) for l in range(1, arch.depth + 2)))


def phi_sigma(bias, weight, m, activation: Activation = "relu") -> np.ndarray:
    """``b 1^T + W s(M)``: apply one layer to the previous layer's pre-activations."""
    s = get_activation(activation)
    weight = np.asarray(weight, dtype=float)
    m = np.asarray(m, dtype=float)
    if weight.shape[-1] != m.shape[-2]:
        raise ValueError(f"dimension mismatch: W has {weight.shape[-1]} columns, input has {m.shape[-2]} rows")
    return np.asarray(bias, dtype=float)[..., :, None] + weight @ s(m)


def first_layer(bias, weight, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if weight.shape[-1] != x.shape[-2]:
        raise ValueError(f"dimension mismatch: W has {weight.shape[-1]} columns, x has {x.shape[-2]} rows")
    return np.asarray(bias, dtype=float)[..., :, None] + weight @ x


def forward(params: NetworkParams, x, activation: Activation = "relu") -> list:
    """Pre-activations ``[Z1, ..., Z_{L+1}]`` of every layer on the input batch."""
    first, *rest = params.layers
    z = first_layer(first.bias, first.weight, x)
    out = [z]
    for p in rest:
        z = phi_sigma(p.bias, p.weight, z, activation)
        out.append(z)
    return out


def gaussian_log_likelihood(xi, y) -> np.ndarray:
    """``-sum_i ||xi(i) - y(i)||**2`` over the last two axes (log of the likelihood)."""
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    if xi.shape[-2:] != y.shape[-2:]:
        raise ValueError(f"dimension mismatch: {xi.shape[-2:]} vs {y.shape[-2:]}")
    r = xi - y
    return -np.sum(r * r, axis=(-2, -1))


@dataclass(frozen=True)
class DataSet:
    """Training inputs ``x`` (n0 x d) and targets ``y`` (n_out x d), one column per point."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if x.shape[1] != y.shape[1]:
            raise ValueError(f"x has {x.shape[1]} points but y has {y.shape[1]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("data must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_csv(cls, path) -> "DataSet":
        """Read rows ``x_1..x_n0, y_1..y_m`` (header required), one row per point."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [[float(v) for v in row] for row in reader if row]
        xcols = [k for k, h in enumerate(header) if h.startswith("x_")]
        ycols = [k for k, h in enumerate(header) if h.startswith("y_")]
        if not xcols or not ycols or len(xcols) + len(ycols) != len(header):
            raise ValueError(f"{path}: header must list x_1..x_n0 then y_1..y_m, got {header}")
        xcols.sort(key=lambda k: int(header[k][2:]))
        ycols.sort(key=lambda k: int(header[k][2:]))
        data = np.array(rows, dtype=float)
        if data.ndim != 2 or data.shape[0] == 0:
            raise ValueError(f"{path}: no data rows")
        return cls(data[:, xcols].T, data[:, ycols].T)

    def to_csv(self, path) -> None:
        n0, m = self.x.shape[0], self.y.shape[0]
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{k + 1}" for k in range(n0)] + [f"y_{k + 1}" for k in range(m)])
            for i in range(self.d):
                w.writerow([repr(float(v)) for v in self.x[:, i]] + [repr(float(v)) for v in self.y[:, i]])
