"""PAC-Bayes bound evaluators: the linear bound, the differentially-private
data-dependent-prior bound, Bernoulli-KL inversion, and Monte-Carlo risk
of an isotropic Gaussian posterior over network weights.

Natural logarithms throughout. The linear bound is only meaningful for
lambda > 1/2, where its (1 - 1/(2 lambda)) factor is positive; the
evaluators reject anything at or below that threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from . import netcore
from .data import Dataset
from .losses import LossKind, loss_value
from .netcore import MLPSpec


@dataclass(frozen=True)
class GaussianPosterior:
    """Isotropic Gaussian over the flat weight vector."""

    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.sigma * rng.standard_normal(self.dim)


@dataclass(frozen=True)
class GaussianPrior:
    """Isotropic Gaussian prior; zero-mean by default."""

    lambda_p: float
    mean: np.ndarray | None = None

    def __post_init__(self):
        if self.lambda_p <= 0:
            raise ValueError("lambda_p must be positive")
        if self.mean is not None:
            object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))

    def mean_for(self, dim: int) -> np.ndarray:
        return np.zeros(dim) if self.mean is None else self.mean


@dataclass(frozen=True)
class BoundParams:
    lam: float
    l_max: float
    delta: float
    m: int
    eps_dp: float = 0.0

    def __post_init__(self):
        if self.lam <= 0.5:
            raise ValueError(
                "lambda must be greater than 1/2: the linear risk bound's "
                "(1 - 1/(2 lambda)) factor must be positive")
        if self.l_max <= 0:
            raise ValueError("l_max must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if self.eps_dp < 0:
            raise ValueError("privacy budget must be nonnegative")


def kl_gaussians(Q: GaussianPosterior, P: GaussianPrior) -> float:
    """Closed-form KL between isotropic Gaussians of equal dimension."""
    d = Q.dim
    mu_p = P.mean_for(d)
    if mu_p.size != d:
        raise ValueError(f"prior dimension {mu_p.size} vs posterior {d}")
    ratio = P.lambda_p / Q.sigma
    shift = float(np.dot(Q.mean - mu_p, Q.mean - mu_p))
    return (d * (math.log(ratio) + Q.sigma ** 2 / (2.0 * P.lambda_p ** 2) - 0.5)
            + shift / (2.0 * P.lambda_p ** 2))


@dataclass(frozen=True)
class EmpiricalRisk:
    value: float
    std_error: float
    n_samples: int


def empirical_risk(Q: GaussianPosterior, spec: MLPSpec, data: Dataset,
                   n_samples: int, seed: int,
                   loss: LossKind = LossKind.ZERO_ONE) -> EmpiricalRisk:
    """Monte-Carlo dataset risk over weight draws from the posterior."""
    if n_samples < 1:
        raise ValueError("need at least one posterior draw")
    if Q.dim != spec.n_params:
        raise ValueError("posterior dimension does not match the network")
    rng = np.random.default_rng(seed)
    batch = data.as_batch()
    draws = np.empty(n_samples)
    for i in range(n_samples):
        w = Q.sample(rng)
        preds = netcore.forward(spec, w, batch)
        draws[i] = loss_value(loss, preds, batch.targets).value
    se = float(draws.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return EmpiricalRisk(value=float(draws.mean()), std_error=se, n_samples=n_samples)


def linear_pac_bound(emp_risk: float, kl: float, params: BoundParams) -> float:
    """[R_hat + (lambda L_max / m)(KL + ln(1/delta))] / (1 - 1/(2 lambda))."""
    if kl < 0:
        raise ValueError("kl must be nonnegative")
    penalty = params.lam * params.l_max / params.m * (kl + math.log(1.0 / params.delta))
    return (emp_risk + penalty) / (1.0 - 1.0 / (2.0 * params.lam))


def dp_pac_bound(kl: float, params: BoundParams) -> float:
    """(KL + ln 2m + 2 max{ln(3/delta), m eps^2}) / (m - 1)."""
    if kl < 0:
        raise ValueError("kl must be nonnegative")
    branch = max(math.log(3.0 / params.delta), params.m * params.eps_dp ** 2)
    return (kl + math.log(2.0 * params.m) + 2.0 * branch) / (params.m - 1.0)


def bernoulli_kl(q: float, p: float) -> float:
    """kl(q || p) between Bernoulli rates, with 0 ln 0 = 0."""
    if not 0.0 <= q <= 1.0 or not 0.0 < p < 1.0:
        raise ValueError("need q in [0, 1] and p in (0, 1)")
    out = 0.0
    if q > 0.0:
        out += q * math.log(q / p)
    if q < 1.0:
        out += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return out


def kl_inverse(q: float, c: float) -> float:
    """Largest p >= q with bernoulli_kl(q, p) <= c, by bisection."""
    if c < 0:
        raise ValueError("kl budget must be nonnegative")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    if c == 0.0 or q == 1.0:
        return q
    p_max = 1.0 - 1e-15
    if q >= p_max:
        return q
    if bernoulli_kl(q, p_max) <= c:
        return 1.0
    root = bisect(lambda p: bernoulli_kl(q, p) - c, q if q > 0 else 1e-300, p_max,
                  xtol=1e-12)
    return float(root)


@dataclass(frozen=True)
class Certificate:
    """Bundle of the pieces behind one certified risk upper bound."""

    emp_risk: float
    emp_se: float
    kl_q_p: float
    m: int
    delta: float
    eps_dp: float
    dp_bound: float
    risk_upper: float

    def to_json_dict(self) -> dict:
        return {
            "emp_risk": self.emp_risk, "emp_se": self.emp_se,
            "kl_q_p": self.kl_q_p, "m": self.m, "delta": self.delta,
            "eps_dp": self.eps_dp, "dp_bound": self.dp_bound,
            "risk_upper": self.risk_upper,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def risk_certificate(Q: GaussianPosterior, P: GaussianPrior, spec: MLPSpec,
                     data: Dataset, params: BoundParams, n_samples: int,
                     seed: int) -> Certificate:
    """Empirical risk + Gaussian KL + DP bound + Bernoulli inversion.

    The inverted bound turns the KL-between-risks statement into an
    explicit upper bound on the true risk, so certificates from models
    trained under different schemes compare on one scale.
    """
    risk = empirical_risk(Q, spec, data, n_samples, seed, loss=LossKind.ZERO_ONE)
    kl = kl_gaussians(Q, P)
    bound = dp_pac_bound(kl, params)
    upper = kl_inverse(min(max(risk.value, 0.0), 1.0), bound)
    return Certificate(
        emp_risk=risk.value, emp_se=risk.std_error, kl_q_p=kl,
        m=params.m, delta=params.delta, eps_dp=params.eps_dp,
        dp_bound=bound, risk_upper=upper,
    )
