"""Grid-quadrature laboratory: Gibbs densities, KL distances between the
training schemes' objectives, the generalized log-partition entropy, and
box-constrained sharpness.

Two divergence flavours coexist on purpose. ``kl_divergence`` is a proper
KL between normalized densities (nonnegative, zero iff equal). The scheme
report additionally carries the relative divergence against the raw Gibbs
factor exp(-L) of each objective, integral of P (ln P + L); that is the
quantity whose p-direction is forced pointwise by lp-norm monotonicity,
so it is the one the monotonicity suite asserts on. Orderings of the
normalized KLs are measured and reported, never asserted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import netcore
from .composite import BetaWeights
from .losses import LossKind, loss_output_grad, loss_value
from .netcore import Batch, MLPSpec

MAX_GRID_POINTS = int(1e7)
DENSITY_TOL = 1e-9


class SupportError(ValueError):
    """Q vanishes somewhere P does not."""


@dataclass(frozen=True)
class Grid:
    """Uniform 1-d or 2-d lattice with its cell volume."""

    bounds: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        resolution = tuple(int(r) for r in self.resolution)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", resolution)
        if not 1 <= len(bounds) <= 2 or len(bounds) != len(resolution):
            raise ValueError("grid must be 1-d or 2-d with matching resolutions")
        for (lo, hi), r in zip(bounds, resolution):
            if lo >= hi:
                raise ValueError(f"bad bounds ({lo}, {hi})")
            if r < 3:
                raise ValueError("resolution must be at least 3 per dimension")
        if np.prod(resolution) > MAX_GRID_POINTS:
            raise ValueError("grid exceeds the point budget")

    @property
    def dims(self) -> int:
        return len(self.bounds)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for (lo, hi), r in zip(self.bounds, self.resolution):
            vol *= (hi - lo) / (r - 1)
        return vol

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, r) for (lo, hi), r in
                zip(self.bounds, self.resolution)]

    def points(self) -> np.ndarray:
        """(n_points, dims) coordinates in row-major axis order."""
        axes = self.axes()
        if self.dims == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class GridField:
    """Scalar samples over a Grid, stored flat."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if values.size != self.grid.n_points:
            raise ValueError(
                f"{values.size} values for a {self.grid.n_points}-point grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite field values")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "GridField":
        pts = grid.points()
        if grid.dims == 1:
            return cls(grid, np.asarray([fn(float(x)) for x in pts[:, 0]]))
        return cls(grid, np.asarray([fn(float(x), float(y)) for x, y in pts]))

    def is_density(self, tol: float = DENSITY_TOL) -> bool:
        return (self.values.min() >= 0.0 and
                abs(self.values.sum() * self.grid.cell_volume - 1.0) <= tol)


@dataclass(frozen=True)
class BoltzmannResult:
    density: GridField
    log_z: float

    @property
    def z(self) -> float:
        return float(np.exp(self.log_z))


def boltzmann(field: GridField, beta: float) -> BoltzmannResult:
    """Normalized density exp(-beta f)/Z via log-sum-exp shifting."""
    if beta <= 0:
        raise ValueError("inverse temperature must be positive")
    a = -beta * field.values
    shift = a.max()
    weights = np.exp(a - shift)
    total = weights.sum() * field.grid.cell_volume
    log_z = float(shift + np.log(total))
    if not np.isfinite(log_z):
        raise FloatingPointError(
            "partition function under/overflow despite max-shift")
    density = weights / total
    return BoltzmannResult(density=GridField(field.grid, density), log_z=log_z)


def kl_divergence(P: GridField, Q: GridField) -> float:
    """Riemann-sum KL(P || Q) between two normalized grid densities."""
    if P.grid != Q.grid:
        raise ValueError("densities must share a grid")
    p, q = P.values, Q.values
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise SupportError("Q has zero mass where P is positive")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])) * P.grid.cell_volume)


def gibbs_divergence(P: GridField, objective: GridField) -> float:
    """integral P (ln P + L): divergence of P from the raw factor exp(-L).

    Equal to KL(P || boltzmann(L)) minus ln Z, so it may be negative; its
    value drops pointwise whenever the objective field does, which makes
    the p-monotonicity of the unweighted scheme an exact statement.
    """
    if P.grid != objective.grid:
        raise ValueError("fields must share a grid")
    p = P.values
    mask = p > 0
    inner = p[mask] * (np.log(p[mask]) + objective.values[mask])
    return float(inner.sum() * P.grid.cell_volume)


def _objective_field(L1: GridField, L2: GridField, betas: BetaWeights,
                     p: float, mode: str) -> GridField:
    b = betas.as_array() if mode == "weighted" else np.ones(2)
    v1 = np.maximum(L1.values, 1e-300)
    v2 = np.maximum(L2.values, 1e-300)
    vals = (b[0] * v1 ** p + b[1] * v2 ** p) ** (1.0 / p)
    return GridField(L1.grid, vals)


@dataclass
class KLModeReport:
    mode: str
    p_list: list[float]
    d_single_1: float
    d_single_2: float
    d_multi: float
    d_non: dict
    dd_dp: dict
    kl_single_1: float
    kl_single_2: float
    kl_multi: float
    kl_non: dict
    orderings: dict
    practical_range_ok: bool

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "p_list": self.p_list,
            "d_single_1": self.d_single_1,
            "d_single_2": self.d_single_2,
            "d_multi": self.d_multi,
            "d_non": {f"{p:g}": v for p, v in self.d_non.items()},
            "dD_dp": {f"{p:g}": v for p, v in self.dd_dp.items()},
            "kl_single_1": self.kl_single_1,
            "kl_single_2": self.kl_single_2,
            "kl_multi": self.kl_multi,
            "kl_non": {f"{p:g}": v for p, v in self.kl_non.items()},
            "orderings": self.orderings,
            "practical_range_ok": self.practical_range_ok,
        }


@dataclass
class KLReport:
    modes: dict

    def to_json_text(self) -> str:
        return json.dumps({m: r.to_json_dict() for m, r in self.modes.items()},
                          indent=2, sort_keys=True)


def scheme_kl_report(L1: GridField, L2: GridField, P_opt: GridField,
                     betas: BetaWeights, p_list: Sequence[float],
                     fd_step: float = 1e-4) -> KLReport:
    """Divergences of every scheme's objective from the reference density.

    For each mode, each scheme objective F gets both its relative
    divergence d = integral P_opt (ln P_opt + F) and the proper
    KL(P_opt || exp(-F)/Z). dD_dp holds central differences of d_non in p.
    """
    if not p_list:
        raise ValueError("p_list must be nonempty")
    if any(p < 1.0 for p in p_list):
        raise ValueError("powers below 1 are outside the analyzed regime")
    if not P_opt.is_density():
        raise ValueError("P_opt must be a normalized density")
    in_range = bool(np.all((L1.values > 0) & (L1.values < 1)
                           & (L2.values > 0) & (L2.values < 1)))

    modes = {}
    for mode in ("weighted", "unweighted"):
        def d_of(field: GridField) -> float:
            return gibbs_divergence(P_opt, field)

        def kl_of(field: GridField) -> float:
            return kl_divergence(P_opt, boltzmann(field, 1.0).density)

        multi = _objective_field(L1, L2, betas, 1.0, mode)
        d_non, kl_non, dd_dp = {}, {}, {}
        for p in p_list:
            non = _objective_field(L1, L2, betas, float(p), mode)
            d_non[float(p)] = d_of(non)
            kl_non[float(p)] = kl_of(non)
            hi = d_of(_objective_field(L1, L2, betas, float(p) + fd_step, mode))
            lo_p = max(float(p) - fd_step, 1.0)
            lo = d_of(_objective_field(L1, L2, betas, lo_p, mode))
            dd_dp[float(p)] = (hi - lo) / (float(p) + fd_step - lo_p)

        report = KLModeReport(
            mode=mode,
            p_list=[float(p) for p in p_list],
            d_single_1=d_of(L1), d_single_2=d_of(L2), d_multi=d_of(multi),
            d_non=d_non, dd_dp=dd_dp,
            kl_single_1=kl_of(L1), kl_single_2=kl_of(L2), kl_multi=kl_of(multi),
            kl_non=kl_non,
            orderings={},
            practical_range_ok=in_range,
        )
        ps = sorted(d_non)
        report.orderings = {
            "kl_multi_below_both_singles": bool(
                report.kl_multi < report.kl_single_1
                and report.kl_multi < report.kl_single_2),
            "kl_non_below_both_singles_at_max_p": bool(
                kl_non[ps[-1]] < report.kl_single_1
                and kl_non[ps[-1]] < report.kl_single_2),
            "d_non_non_increasing_in_p": bool(
                all(d_non[b] <= d_non[a] + 1e-12 for a, b in zip(ps, ps[1:]))),
            "kl_non_non_increasing_in_p": bool(
                all(kl_non[b] <= kl_non[a] + 1e-12 for a, b in zip(ps, ps[1:]))),
        }
        modes[mode] = report
    return KLReport(modes=modes)


def default_kl_testbed(lo: float = -3.0, hi: float = 3.0, points: int = 601):
    """Mirrored clipped quadratics in (0, 1) plus the reference density.

    The reference is the Boltzmann density (beta 10) of the pointwise
    minimum of the two loss fields, a concrete stand-in for a distribution
    concentrated on the optimal set.
    """
    grid = Grid(bounds=((lo, hi),), resolution=(points,))
    x = grid.axes()[0]
    L1 = GridField(grid, np.clip(0.05 + 0.15 * (x - 1.0) ** 2, 0.01, 0.99))
    L2 = GridField(grid, np.clip(0.05 + 0.15 * (x + 1.0) ** 2, 0.01, 0.99))
    min_field = GridField(grid, np.minimum(L1.values, L2.values))
    p_opt = boltzmann(min_field, 10.0).density
    return L1, L2, p_opt


def generalized_entropy(fields: Sequence[GridField], betas: BetaWeights, p: float,
                        mode: str = "weighted") -> float:
    """log integral exp(-(sum_m beta_m L_m^p)^(1/p)) by log-sum-exp quadrature."""
    if len(fields) < 1:
        raise ValueError("need at least one loss field")
    if p < 1.0:
        raise ValueError("power must be >= 1")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("fields must share a grid")
    b = betas.as_array() if mode == "weighted" else np.ones(len(fields))
    if b.size != len(fields):
        raise ValueError("one weight per field required")
    stack = np.stack([np.maximum(f.values, 1e-300) for f in fields])
    objective = np.einsum("m,mx->x", b, stack ** p) ** (1.0 / p)
    a = -objective
    shift = a.max()
    return float(shift + np.log(np.exp(a - shift).sum() * grid.cell_volume))


@dataclass(frozen=True)
class MCEntropyEstimate:
    value: float
    std_error: float
    n_draws: int
    flagged: bool


def generalized_entropy_mc(loss_fns: Sequence[Callable], betas: BetaWeights, p: float,
                           sampler, n_draws: int, seed: int,
                           mode: str = "weighted",
                           se_tolerance: float | None = None) -> MCEntropyEstimate:
    """Importance-sampling estimate of the generalized entropy.

    ``sampler`` must provide sample(rng, n) -> (n, d) points and
    pdf(points) -> densities. The standard error is propagated through the
    log; estimates above se_tolerance are flagged, not discarded.
    """
    if n_draws < 2:
        raise ValueError("need at least two draws")
    if p < 1.0:
        raise ValueError("power must be >= 1")
    rng = np.random.default_rng(seed)
    pts = sampler.sample(rng, n_draws)
    dens = sampler.pdf(pts)
    if np.any(dens <= 0):
        raise ValueError("proposal density vanished on its own samples")
    b = (betas.as_array() if mode == "weighted"
         else np.ones(len(loss_fns)))
    terms = np.stack([np.maximum(fn(pts), 1e-300) for fn in loss_fns])
    objective = np.einsum("m,mx->x", b, terms ** p) ** (1.0 / p)
    weights = np.exp(-objective) / dens
    z_hat = float(weights.mean())
    z_se = float(weights.std(ddof=1) / np.sqrt(n_draws))
    se = z_se / z_hat  # delta method through the log
    flagged = bool(se_tolerance is not None and se > se_tolerance)
    return MCEntropyEstimate(value=float(np.log(z_hat)), std_error=se,
                             n_draws=n_draws, flagged=flagged)


class UniformBoxSampler:
    """Uniform proposal over an axis-aligned box."""

    def __init__(self, bounds: Sequence[tuple[float, float]]):
        self.bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        if any(lo >= hi for lo, hi in self.bounds):
            raise ValueError("bad box bounds")
        self.volume = float(np.prod([hi - lo for lo, hi in self.bounds]))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lows = np.array([lo for lo, _ in self.bounds])
        highs = np.array([hi for _, hi in self.bounds])
        return rng.uniform(lows, highs, size=(n, len(self.bounds)))

    def pdf(self, points: np.ndarray) -> np.ndarray:
        return np.full(points.shape[0], 1.0 / self.volume)


def box_sharpness(risk_fn: Callable[[np.ndarray], float],
                  grad_fn: Callable[[np.ndarray], np.ndarray],
                  params: np.ndarray, alpha: float,
                  ascent_steps: int = 20, restarts: int = 5, seed: int = 0,
                  warm_start: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """max over |nu_i| <= alpha (|w_i| + 1) of risk(w + nu) - risk(w).

    Signed-gradient ascent with projection; the first restart starts at
    nu = 0 so the result is never negative. Returns (sharpness, best nu).
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    params = np.asarray(params, dtype=np.float64)
    if alpha == 0.0:
        return 0.0, np.zeros_like(params)
    box = alpha * (np.abs(params) + 1.0)
    step = box / 10.0
    base = risk_fn(params)
    rng = np.random.default_rng(seed)
    starts = [np.zeros_like(params)]
    if warm_start is not None:
        starts.append(np.clip(warm_start, -box, box))
    while len(starts) < restarts + (warm_start is not None):
        starts.append(rng.uniform(-box, box))
    best_val, best_nu = base, np.zeros_like(params)
    for nu in starts:
        value = risk_fn(params + nu)
        if value > best_val:
            best_val, best_nu = value, nu.copy()
        for _ in range(ascent_steps):
            g = grad_fn(params + nu)
            nu = np.clip(nu + step * np.sign(g), -box, box)
            value = risk_fn(params + nu)
            if value > best_val:
                best_val, best_nu = value, nu.copy()
    return max(best_val - base, 0.0), best_nu


def _risk_and_grad(spec: MLPSpec, batch: Batch, kind: LossKind):
    def risk(p: np.ndarray) -> float:
        return loss_value(kind, netcore.forward(spec, p, batch), batch.targets).value

    def grad(p: np.ndarray) -> np.ndarray:
        preds, cache = netcore._forward_cache(spec, p, batch.inputs)
        return netcore._backward_from_cache(
            spec, cache, loss_output_grad(kind, preds, batch.targets))

    return risk, grad


def sharpness(spec: MLPSpec, params: np.ndarray, batch: Batch, alpha: float,
              ascent_steps: int = 20, restarts: int = 5, seed: int = 0,
              loss: LossKind = LossKind.CE) -> float:
    """Box sharpness of the empirical risk of an MLP at the given params."""
    risk, grad = _risk_and_grad(spec, batch, loss)
    value, _ = box_sharpness(risk, grad, params, alpha,
                             ascent_steps=ascent_steps, restarts=restarts, seed=seed)
    return value


def sharpness_sweep(spec: MLPSpec, params: np.ndarray, batch: Batch,
                    alphas: Sequence[float], ascent_steps: int = 20,
                    restarts: int = 5, seed: int = 0,
                    loss: LossKind = LossKind.CE) -> list[float]:
    """Sharpness over increasing alphas with nested-box evaluation.

    The maximizer found at each alpha seeds the next (the boxes nest), so
    the reported values are non-decreasing by construction.
    """
    if list(alphas) != sorted(alphas):
        raise ValueError("alphas must be increasing")
    risk, grad = _risk_and_grad(spec, batch, loss)
    out, warm = [], None
    for alpha in alphas:
        value, warm = box_sharpness(risk, grad, params, alpha,
                                    ascent_steps=ascent_steps, restarts=restarts,
                                    seed=seed, warm_start=warm)
        out.append(value)
    return out


def expected_sharpness_bound(kl_term: float, m: int, delta: float) -> float:
    """Slack 4 sqrt((kl + ln(2m/delta)) / m) of the expected-sharpness bound."""
    if kl_term < 0:
        raise ValueError("kl term must be nonnegative")
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must be in (0, 1]")
    return float(4.0 * np.sqrt((kl_term + np.log(2.0 * m / delta)) / m))
