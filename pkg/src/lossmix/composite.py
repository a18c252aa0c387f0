"""Power-mean composition of loss terms.

The composite objective is (sum_m beta_m v_m^p)^(1/p) over per-term loss
values v_m, with simplex weights beta and a fixed power p >= 1. Two modes
exist because the weighted form and the bare lp-norm form behave
differently in p: the weighted power mean is non-decreasing in p, the
unweighted norm non-increasing. This module provides the value, its exact
gradient and p-derivative, the adaptive weight rules, and the curvature
constraint whose sign flip marks the critical power.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

VALUE_FLOOR = 1e-12
SIMPLEX_TOL = 1e-12
MODES = ("weighted", "unweighted")

# verification hook: setting LOSSMIX_MUTATE=composite-grad-sign corrupts the
# composite gradient so the invariant suite can prove it would notice
MUTATE_ENV = "LOSSMIX_MUTATE"


def _mutated(tag: str) -> bool:
    return os.environ.get(MUTATE_ENV, "") == tag


@dataclass(frozen=True)
class BetaWeights:
    """Simplex weights over the loss terms."""

    betas: tuple[float, ...]

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        if len(betas) < 1:
            raise ValueError("need at least one weight")
        if any(b < 0 for b in betas):
            raise ValueError(f"weights must be nonnegative, got {betas}")
        if abs(sum(betas) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights must sum to 1, got sum {sum(betas)!r}")
        object.__setattr__(self, "betas", betas)

    @classmethod
    def uniform(cls, n: int) -> "BetaWeights":
        return cls(tuple(1.0 / n for _ in range(n)))

    @classmethod
    def one_hot(cls, n: int, index: int) -> "BetaWeights":
        if not 0 <= index < n:
            raise ValueError(f"index {index} out of range for {n} terms")
        return cls(tuple(1.0 if i == index else 0.0 for i in range(n)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.betas, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class Scheme:
    """Which objective a training run optimizes.

    single: one term alone; multi: the p=1 weighted combination;
    nonlinear: the full power mean at the given p. multi is identical to
    nonlinear(1) in weighted mode, which the tests assert.
    """

    kind: str
    index: int = 0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("single", "multi", "nonlinear"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "nonlinear" and self.p < 1.0:
            raise ValueError("power must be >= 1")

    @classmethod
    def single(cls, index: int) -> "Scheme":
        return cls(kind="single", index=index)

    @classmethod
    def multi(cls) -> "Scheme":
        return cls(kind="multi", p=1.0)

    @classmethod
    def nonlinear(cls, p: float) -> "Scheme":
        return cls(kind="nonlinear", p=float(p))

    @property
    def effective_p(self) -> float:
        return self.p if self.kind == "nonlinear" else 1.0

    def label(self) -> str:
        if self.kind == "single":
            return f"single[{self.index}]"
        if self.kind == "multi":
            return "multi"
        return f"nonlinear(p={self.p:g})"


@dataclass(frozen=True)
class CompositeObjective:
    """Term list, weights, power, and mode bundled for a training run."""

    terms: tuple
    betas: BetaWeights
    p: float = 1.0
    mode: str = "weighted"

    def __post_init__(self):
        if len(self.terms) < 1:
            raise ValueError("need at least one loss term")
        if len(self.betas) != len(self.terms):
            raise ValueError("one weight per term required")
        if self.p < 1.0:
            raise ValueError("power must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def value(self, values: Sequence[float]) -> float:
        return composite_value(values, self.betas, self.p, self.mode)


def _prep(values: Sequence[float], betas: BetaWeights, p: float, mode: str):
    if p < 1.0:
        raise ValueError(f"power p={p} is below 1, outside the analyzed regime")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    v = np.maximum(np.asarray(values, dtype=np.float64), VALUE_FLOOR)
    if mode == "weighted":
        b = betas.as_array()
        if b.size != v.size:
            raise ValueError(f"{b.size} weights for {v.size} values")
    else:
        b = np.ones_like(v)
    return v, b


def composite_value(values: Sequence[float], betas: BetaWeights, p: float,
                    mode: str = "weighted") -> float:
    """(sum_m beta_m v_m^p)^(1/p); unweighted mode drops the betas."""
    v, b = _prep(values, betas, p, mode)
    if p == 1.0:
        return float(np.dot(b, v))
    return float(np.dot(b, v ** p) ** (1.0 / p))


def composite_grad(values: Sequence[float], grads: Sequence[np.ndarray],
                   betas: BetaWeights, p: float, mode: str = "weighted") -> np.ndarray:
    """Chain-rule gradient M^(1/p - 1) * sum_m beta_m v_m^(p-1) g_m.

    M = sum_m beta_m v_m^p; the g_m are the per-term parameter gradients.
    """
    v, b = _prep(values, betas, p, mode)
    gs = [np.asarray(g, dtype=np.float64) for g in grads]
    if len(gs) != v.size:
        raise ValueError(f"{len(gs)} gradients for {v.size} values")
    if len({g.shape for g in gs}) > 1:
        raise ValueError("gradient vectors must share one shape")
    if p == 1.0:
        coeffs = b
    else:
        m = float(np.dot(b, v ** p))
        coeffs = m ** (1.0 / p - 1.0) * b * v ** (p - 1.0)
    total = np.zeros_like(gs[0])
    for c, g in zip(coeffs, gs):
        total += c * g
    if _mutated("composite-grad-sign"):
        total = -total
    return total


def adaptive_betas(grad_norms: Sequence[float], rule: str = "softmax") -> BetaWeights:
    """Weights from per-term gradient norms.

    softmax: beta_m = exp(-norm_m) / Z, which rewards the term whose
    gradient is currently smallest. paper-max (two terms only): the
    larger softmax weight is handed to the first term as printed in the
    adaptive rule, and the second gets the remainder.
    """
    norms = np.asarray(grad_norms, dtype=np.float64)
    if not np.all(np.isfinite(norms)):
        raise ValueError("non-finite gradient norms")
    shifted = norms - norms.min()  # exp() underflow guard, cancels in the ratio
    e = np.exp(-shifted)
    soft = e / e.sum()
    if rule == "softmax":
        return BetaWeights(tuple(soft.tolist()))
    if rule == "paper-max":
        if norms.size != 2:
            raise ValueError("paper-max rule is defined for exactly two terms")
        b1 = float(soft.max())
        return BetaWeights((b1, 1.0 - b1))
    raise ValueError(f"unknown adaptive rule {rule!r}")


def dvalue_dp(values: Sequence[float], betas: BetaWeights, p: float,
              mode: str = "weighted") -> float:
    """Exact derivative of composite_value with respect to p.

    d/dp M^(1/p) = M^(1/p) * [ -ln(M)/p^2 + (sum beta v^p ln v) / (p M) ].
    Both terms are kept; dropping the -ln(M)/p^2 piece flips signs in the
    weighted mode, so every monotonicity claim is checked numerically.
    """
    v, b = _prep(values, betas, p, mode)
    vp = v ** p
    m = float(np.dot(b, vp))
    term = float(np.dot(b, vp * np.log(v)))
    return m ** (1.0 / p) * (-np.log(m) / p ** 2 + term / (p * m))


def constraint9_check(L: float, g: float, h: float, p: float) -> bool:
    """True iff (p - 1) g^2 + L h > 0, the strengthening condition."""
    if L <= 0:
        raise ValueError("loss value must be positive")
    return (p - 1.0) * g * g + L * h > 0.0


def critical_p(L: float, g: float, h: float) -> float:
    """The power where constraint9_check flips: 1 - L h / g^2."""
    if L <= 0:
        raise ValueError("loss value must be positive")
    if g == 0.0:
        raise ValueError("undefined critical power: zero first derivative")
    # formulated as a single quotient so the flip point lands exactly
    return (g * g - L * h) / (g * g)


def directional_curvature(loss_fn: Callable[[np.ndarray], float], params: np.ndarray,
                          direction: np.ndarray, h: float) -> tuple[float, float]:
    """Central-difference first and second derivatives along a unit direction."""
    if h <= 0:
        raise ValueError("h must be positive")
    params = np.asarray(params, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if not np.isclose(norm, 1.0, rtol=0, atol=1e-8):
        raise ValueError(f"direction must be a unit vector, norm {norm}")
    f0 = loss_fn(params)
    f_hi = loss_fn(params + h * direction)
    f_lo = loss_fn(params - h * direction)
    if not (np.isfinite(f0) and np.isfinite(f_hi) and np.isfinite(f_lo)):
        raise ValueError("non-finite loss evaluation along direction")
    g = (f_hi - f_lo) / (2.0 * h)
    h2 = (f_hi - 2.0 * f0 + f_lo) / (h * h)
    return float(g), float(h2)
