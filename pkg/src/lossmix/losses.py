"""Individual surrogate losses (MSE, CE, JSD, 0-1) with analytic gradients.

All values are means over samples. CE and JSD read rows as probability
vectors (a single column is treated as a Bernoulli parameter); their
inputs are clamped to [CLAMP, 1 - CLAMP] before any log. The 0-1 loss is
evaluation-only and refuses to produce a gradient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

CLAMP = 1e-12

_clamp_events = 0


class LossKind(str, enum.Enum):
    MSE = "mse"
    CE = "ce"
    JSD = "jsd"
    ZERO_ONE = "zero_one"


class NonDifferentiableLoss(ValueError):
    """Raised when a gradient is requested from the 0-1 loss."""


@dataclass(frozen=True)
class LossValue:
    value: float
    kind: LossKind

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite {self.kind.value} loss")

    @property
    def in_practical_range(self) -> bool:
        # the composite analysis assumes 0 < loss < 1; checked, never enforced
        return 0.0 < self.value < 1.0


def clamp_event_count() -> int:
    """How many times probability clamping actually changed a value."""
    return _clamp_events


def _clip_probs(p: np.ndarray) -> np.ndarray:
    global _clamp_events
    clipped = np.clip(p, CLAMP, 1.0 - CLAMP)
    if np.any(clipped != p):
        _clamp_events += 1
    return clipped


def _check_pair(predictions: np.ndarray, targets: np.ndarray):
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.ndim != 2:
        raise ValueError(
            f"shape mismatch: predictions {predictions.shape} vs targets {targets.shape}"
        )
    if not (np.all(np.isfinite(predictions)) and np.all(np.isfinite(targets))):
        raise ValueError("non-finite loss inputs")
    return predictions, targets


def _as_rows(p: np.ndarray) -> np.ndarray:
    """Rows as distributions; a single column becomes (p, 1-p)."""
    if p.shape[1] == 1:
        return np.hstack([p, 1.0 - p])
    return p


def _argmax_classes(rows: np.ndarray) -> np.ndarray:
    if rows.shape[1] == 1:
        return (rows[:, 0] >= 0.5).astype(int)
    return rows.argmax(axis=1)


def loss_value(kind: LossKind, predictions: np.ndarray, targets: np.ndarray) -> LossValue:
    predictions, targets = _check_pair(predictions, targets)
    if kind == LossKind.MSE:
        v = float(((targets - predictions) ** 2).sum(axis=1).mean())
    elif kind == LossKind.CE:
        f = _clip_probs(predictions)
        if predictions.shape[1] == 1:
            per = -(targets * np.log(f) + (1.0 - targets) * np.log(1.0 - f))
        else:
            per = -(targets * np.log(f))
        v = float(per.sum(axis=1).mean())
    elif kind == LossKind.JSD:
        p = _clip_probs(_as_rows(predictions))
        q = _clip_probs(_as_rows(targets))
        m = 0.5 * (p + q)
        per = 0.5 * (p * np.log(p / m) + q * np.log(q / m)).sum(axis=1)
        v = float(per.mean())
    elif kind == LossKind.ZERO_ONE:
        v = float(np.mean(_argmax_classes(predictions) != _argmax_classes(targets)))
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    if -1e-15 < v < 0.0:
        v = 0.0  # JSD rounding may undershoot zero by an ulp or two
    return LossValue(value=v, kind=kind)


def loss_output_grad(kind: LossKind, predictions: np.ndarray,
                     targets: np.ndarray) -> np.ndarray:
    """Exact gradient of loss_value with respect to the predictions."""
    predictions, targets = _check_pair(predictions, targets)
    n = predictions.shape[0]
    if kind == LossKind.ZERO_ONE:
        raise NonDifferentiableLoss("non-differentiable surrogate target")
    if kind == LossKind.MSE:
        return 2.0 * (predictions - targets) / n
    if kind == LossKind.CE:
        f = _clip_probs(predictions)
        if predictions.shape[1] == 1:
            return -(targets / f - (1.0 - targets) / (1.0 - f)) / n
        return -(targets / f) / n
    if kind == LossKind.JSD:
        p = _clip_probs(_as_rows(predictions))
        q = _clip_probs(_as_rows(targets))
        m = 0.5 * (p + q)
        g = 0.5 * np.log(p / m) / n
        if predictions.shape[1] == 1:
            # d/df of JSD((f,1-f), (y,1-y))
            return (g[:, :1] - g[:, 1:2])
        return g
    raise ValueError(f"unknown loss kind {kind!r}")


class ScaleNormalizer:
    """Running rescaler: divides a loss stream by the EMA of its magnitude.

    Confined to one training run; not thread-safe across runs by design.
    """

    def __init__(self, decay: float = 0.99):
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must be in (0, 1)")
        self.decay = decay
        self.ema = 1.0

    def update(self, value: float) -> float:
        self.ema = self.decay * self.ema + (1.0 - self.decay) * abs(value)
        return value / self.ema


def uniform_dimension(value: LossValue, mode: str = "literal", offset: float = 1.0,
                      normalizer: ScaleNormalizer | None = None) -> LossValue:
    """Dimension uniformization of a loss value.

    ``literal`` applies the log-Gibbs affine flip -L + offset. The
    ``scale-normalize`` alternative divides by a running EMA of the
    loss's own magnitude (pass a ScaleNormalizer to hold the state).
    The affine flip is exposed but deliberately not routed into the
    composite by default: the composite needs positive inputs.
    """
    if mode == "literal":
        return LossValue(value=-value.value + offset, kind=value.kind)
    if mode == "scale-normalize":
        if normalizer is None:
            raise ValueError("scale-normalize mode needs a ScaleNormalizer")
        return LossValue(value=normalizer.update(value.value), kind=value.kind)
    raise ValueError(f"unknown uniformization mode {mode!r}")
