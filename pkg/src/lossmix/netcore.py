"""Dense feed-forward network substrate with exact reverse-mode gradients.

Everything downstream treats the network as a differentiable black box:
``forward`` produces predictions, ``backward`` pulls an output-space
gradient back to a flat parameter gradient, and ``finite_diff_grad`` is
the independent central-difference oracle used to check both. All
arithmetic is float64; the verification suite asserts 1e-6-level
gradient agreement, which float32 cannot sustain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

HIDDEN_ACTIVATIONS = ("sigmoid", "tanh", "relu")
OUTPUT_KINDS = ("linear", "softmax", "sigmoid")


class ShapeError(ValueError):
    """Dimension mismatch between spec, parameters, or data."""


@dataclass(frozen=True)
class MLPSpec:
    """Architecture of a fully-connected net, input width first."""

    layer_widths: tuple[int, ...]
    hidden_activation: str = "tanh"
    output_kind: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"layer widths must be >= 1, got {self.layer_widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_kind not in OUTPUT_KINDS:
            raise ValueError(f"unknown output kind {self.output_kind!r}")
        if self.output_kind == "softmax" and self.layer_widths[-1] < 2:
            raise ValueError(
                "softmax output needs width >= 2; use output_kind='sigmoid' "
                "for a binary head"
            )

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_params(self) -> int:
        ws = self.layer_widths
        return sum(ws[i] * ws[i + 1] + ws[i + 1] for i in range(len(ws) - 1))


@dataclass(frozen=True)
class Batch:
    """A design matrix plus aligned targets (one-hot rows or regression values)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if inputs.ndim != 2 or targets.ndim != 2:
            raise ShapeError("inputs and targets must be 2-d arrays")
        if inputs.shape[0] != targets.shape[0]:
            raise ShapeError(
                f"row mismatch: {inputs.shape[0]} inputs vs {targets.shape[0]} targets"
            )
        if inputs.shape[0] < 1:
            raise ShapeError("batch must contain at least one sample")
        if not np.all(np.isfinite(inputs)):
            raise ValueError("non-finite inputs")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def init_params(spec: MLPSpec, seed: int, scale: float = 0.5) -> np.ndarray:
    """Flat parameter vector with entries uniform in [-scale, scale]."""
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, spec.n_params)


def check_params(spec: MLPSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != spec.n_params:
        raise ShapeError(
            f"parameter vector has length {params.size}, spec needs {spec.n_params}"
        )
    return params


def unpack_params(spec: MLPSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the flat vector into per-layer (weight, bias) views."""
    params = check_params(spec, params)
    ws = spec.layer_widths
    layers = []
    pos = 0
    for i in range(len(ws) - 1):
        n_in, n_out = ws[i], ws[i + 1]
        w = params[pos:pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = params[pos:pos + n_out]
        pos += n_out
        layers.append((w, b))
    return layers


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _hidden(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return expit(z)
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _hidden_deriv(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(np.float64)


def _forward_cache(spec: MLPSpec, params: np.ndarray, inputs: np.ndarray):
    """Forward pass keeping pre/post activations for a later backward pass."""
    layers = unpack_params(spec, params)
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        raise ShapeError(
            f"layer 0 expects input dim {spec.input_dim}, got shape {inputs.shape}"
        )
    acts = [inputs]
    zs = []
    a = inputs
    n_layers = len(layers)
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        zs.append(z)
        if i < n_layers - 1:
            a = _hidden(z, spec.hidden_activation)
        elif spec.output_kind == "softmax":
            a = _softmax(z)
        elif spec.output_kind == "sigmoid":
            a = expit(z)
        else:
            a = z
        acts.append(a)
    return a, (layers, acts, zs)


def forward(spec: MLPSpec, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Predictions, one row per sample. Pure: same inputs, same bits out."""
    preds, _ = _forward_cache(spec, params, batch.inputs)
    return preds


def _backward_from_cache(spec: MLPSpec, cache, output_grad: np.ndarray) -> np.ndarray:
    layers, acts, zs = cache
    preds = acts[-1]
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != preds.shape:
        raise ShapeError(
            f"output gradient shape {output_grad.shape} does not match "
            f"predictions {preds.shape}"
        )
    n_layers = len(layers)
    if spec.output_kind == "softmax":
        # softmax jacobian-vector product, row by row
        inner = (output_grad * preds).sum(axis=1, keepdims=True)
        delta = preds * (output_grad - inner)
    elif spec.output_kind == "sigmoid":
        delta = output_grad * preds * (1.0 - preds)
    else:
        delta = output_grad

    grad = np.empty(spec.n_params)
    pos = grad.size
    for i in range(n_layers - 1, -1, -1):
        w, _ = layers[i]
        gb = delta.sum(axis=0)
        gw = acts[i].T @ delta
        pos -= gb.size
        grad[pos:pos + gb.size] = gb
        pos -= gw.size
        grad[pos:pos + gw.size] = gw.ravel()
        if i > 0:
            da = delta @ w.T
            delta = da * _hidden_deriv(zs[i - 1], acts[i], spec.hidden_activation)
    return grad


def backward(spec: MLPSpec, params: np.ndarray, batch: Batch,
             output_grad: np.ndarray) -> np.ndarray:
    """Gradient of sum_ij output_grad_ij * predictions_ij w.r.t. the flat params."""
    _, cache = _forward_cache(spec, params, batch.inputs)
    return _backward_from_cache(spec, cache, output_grad)


def finite_diff_grad(loss_fn: Callable[[np.ndarray], float], params: np.ndarray,
                     h: float) -> np.ndarray:
    """Central differences (f(p + h e_i) - f(p - h e_i)) / 2h, the gradient oracle."""
    if h <= 0:
        raise ValueError("h must be positive")
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + h
        hi = loss_fn(bumped)
        bumped[i] = params[i] - h
        lo = loss_fn(bumped)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"non-finite loss evaluation at coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad
