"""Frequency-domain machinery: the closed-form sigmoid Fourier transform,
residual DFT tracking during training, and per-band capture-order
comparison across training schemes.

The scheme comparison trains a one-hidden-layer sigmoid net on a
multi-tone 1-d target whose tones sit on exact DFT bins of the evaluation
grid, then watches how fast each band's residual energy falls.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import optim
from .composite import Scheme
from .data import Dataset, freq_target_1d
from .netcore import MLPSpec


class SpectralDomainError(ValueError):
    """Frequency outside the formula's domain."""


@dataclass(frozen=True)
class SigmoidUnit:
    """One sigmoid activation sigma(a x + b)."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.a == 0.0:
            raise ValueError("slope a must be nonzero")


def _csch(t: float) -> float:
    # 1/sinh with the exponential asymptote for large |t| to dodge overflow
    if abs(t) > 350.0:
        return math.copysign(2.0 * math.exp(-abs(t)), t)
    return 1.0 / math.sinh(t)


def sigmoid_ft(unit: SigmoidUnit, omega: float) -> complex:
    """Fourier transform of sigma(a x + b) at a nonzero frequency.

    -(i pi / |a|) exp(i b omega / a) / sinh(pi omega / a); the
    distributional delta at omega = 0 is excluded.
    """
    if omega == 0.0:
        raise SpectralDomainError("distributional component excluded at omega = 0")
    phase = complex(math.cos(unit.b * omega / unit.a),
                    math.sin(unit.b * omega / unit.a))
    return -1j * math.pi / abs(unit.a) * phase * _csch(math.pi * omega / unit.a)


@dataclass(frozen=True)
class SpectrumSample:
    """Complex spectrum values at strictly increasing frequencies."""

    omegas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.complex128)
        if omegas.shape != values.shape or omegas.ndim != 1:
            raise ValueError("omegas and values must be 1-d arrays of equal length")
        if np.any(np.diff(omegas) <= 0):
            raise ValueError("omegas must be strictly increasing")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "values", values)


def residual_spectrum(outputs: np.ndarray, target: np.ndarray,
                      spacing: float = 1.0) -> SpectrumSample:
    """DFT of (outputs - target) at the standard DFT frequencies.

    Frequencies are angular: 2 pi fftfreq(n, spacing), shifted into
    increasing order. Parseval holds: sum |r|^2 = (1/n) sum |DFT|^2.
    """
    outputs = np.asarray(outputs, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if outputs.size != target.size:
        raise ValueError(
            f"length mismatch: {outputs.size} outputs vs {target.size} targets")
    spectrum = np.fft.fft(outputs - target)
    omegas = 2.0 * np.pi * np.fft.fftfreq(outputs.size, d=spacing)
    order = np.fft.fftshift(np.arange(outputs.size))
    return SpectrumSample(omegas=omegas[order], values=spectrum[order])


def _band_mask(omegas: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # open interval on |omega|; keeps the DC bin out of every band
    mag = np.abs(omegas)
    return (mag > lo) & (mag < hi)


def check_bands(bands: Sequence[tuple[float, float]], nyquist: float) -> None:
    bands = sorted(bands)
    for lo, hi in bands:
        if not 0.0 <= lo < hi:
            raise ValueError(f"bad band ({lo}, {hi})")
        if hi > nyquist:
            raise ValueError(f"band ({lo}, {hi}) exceeds the Nyquist frequency")
    for (lo1, hi1), (lo2, hi2) in zip(bands, bands[1:]):
        if lo2 < hi1 - 1e-12 and not np.isclose(lo2, hi1):
            raise ValueError(f"bands ({lo1},{hi1}) and ({lo2},{hi2}) overlap")


@dataclass
class FrequencyCaptureReport:
    """Per-epoch relative residual energy per band, plus capture epochs."""

    bands: list[tuple[float, float]]
    rel_errors: np.ndarray  # (epochs, bands)
    capture_epochs: list[int | None]
    flagged: list[bool]  # bands with no target energy
    threshold: float

    def to_csv_text(self, scheme: str = "") -> str:
        lines = ["scheme,epoch,band_lo,band_hi,rel_error"]
        for e in range(self.rel_errors.shape[0]):
            for b, (lo, hi) in enumerate(self.bands):
                lines.append(
                    f"{scheme},{e},{lo:g},{hi:g},{self.rel_errors[e, b]:.17g}")
        return "\n".join(lines) + "\n"


def frequency_capture(outputs_by_epoch: Sequence[np.ndarray], target: np.ndarray,
                      bands: Sequence[tuple[float, float]], threshold: float,
                      spacing: float = 1.0) -> FrequencyCaptureReport:
    """First epoch at which each band's relative residual energy
    drops below threshold (strict), scanning the recorded trajectory."""
    if len(outputs_by_epoch) < 1:
        raise ValueError("need at least one epoch of outputs")
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must be in [0, 1)")
    target = np.asarray(target, dtype=np.float64).ravel()
    n = target.size
    nyquist = 2.0 * np.pi * (n // 2) / (n * spacing)
    check_bands(bands, nyquist)
    omegas = 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)
    target_f = np.fft.fft(target)
    masks = [_band_mask(omegas, lo, hi) for lo, hi in bands]
    target_energy = np.array([float((np.abs(target_f[m]) ** 2).sum()) for m in masks])
    # fft roundoff leaves ~1e-30 of relative leakage in truly empty bands
    total = float((np.abs(target_f) ** 2).sum())
    flagged = [bool(te <= 1e-12 * max(total, 1e-300)) for te in target_energy]

    rel = np.full((len(outputs_by_epoch), len(bands)), np.nan)
    for e, out in enumerate(outputs_by_epoch):
        out = np.asarray(out, dtype=np.float64).ravel()
        if out.size != n:
            raise ValueError(f"epoch {e} outputs have length {out.size}, want {n}")
        res_f = np.fft.fft(out - target)
        for b, m in enumerate(masks):
            if flagged[b]:
                continue
            rel[e, b] = float((np.abs(res_f[m]) ** 2).sum()) / target_energy[b]

    captures: list[int | None] = []
    for b in range(len(bands)):
        cap = None
        if not flagged[b]:
            below = np.nonzero(rel[:, b] < threshold)[0]
            cap = int(below[0]) if below.size else None
        captures.append(cap)
    return FrequencyCaptureReport(bands=list(bands), rel_errors=rel,
                                  capture_epochs=captures, flagged=flagged,
                                  threshold=threshold)


def default_bands(frequencies: Sequence[float]) -> list[tuple[float, float]]:
    """One open window (k - 1, k + 1) around each exact-bin tone."""
    return [(float(k) - 1.0, float(k) + 1.0) for k in sorted(frequencies)]


@dataclass(frozen=True)
class SpectralTarget:
    """The multi-tone regression target of the capture experiment."""

    frequencies: tuple[float, ...] = (1.0, 3.0, 5.0)
    amplitudes: tuple[float, ...] = (1.0, 1.0, 1.0)
    n_points: int = 256
    output_range: tuple[float, float] = (0.1, 0.9)

    def build(self) -> tuple[Dataset, np.ndarray, float]:
        """Dataset scaled into the sigmoid head's range, plus grid spacing.

        The affine rescale shifts energy into the DC bin only; every tone
        keeps its exact bin, so band-relative errors are unaffected.
        """
        raw = freq_target_1d(self.frequencies, self.amplitudes, self.n_points)
        y = raw.targets[:, 0]
        lo, hi = self.output_range
        scaled = lo + (hi - lo) * (y - y.min()) / (y.max() - y.min())
        data = Dataset(inputs=raw.inputs, targets=scaled[:, None],
                       name=raw.name + "_scaled", k_classes=0, meta=dict(raw.meta))
        spacing = 2.0 * np.pi / self.n_points
        return data, scaled, spacing


@dataclass
class SpectralComparison:
    schemes: list[Scheme]
    reports: dict  # scheme label -> FrequencyCaptureReport
    bands: list[tuple[float, float]]
    threshold: float

    def capture_summary(self) -> dict:
        return {
            label: {
                f"{lo:g}-{hi:g}": report.capture_epochs[i]
                for i, (lo, hi) in enumerate(report.bands)
            }
            for label, report in self.reports.items()
        }

    def to_csv_text(self) -> str:
        lines = ["scheme,epoch,band_lo,band_hi,rel_error"]
        for label, report in self.reports.items():
            body = report.to_csv_text(scheme=label).splitlines()[1:]
            lines.extend(body)
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        return json.dumps({
            "threshold": self.threshold,
            "bands": [[lo, hi] for lo, hi in self.bands],
            "capture_epochs": self.capture_summary(),
        }, indent=2, sort_keys=True)


def spectral_scheme_compare(base_config: optim.TrainConfig, schemes: Sequence[Scheme],
                            target: SpectralTarget, epochs: int, seed: int,
                            width: int = 200,
                            threshold: float = 0.2) -> SpectralComparison:
    """Train one sigmoid net per scheme on the tone target and compare
    per-band capture epochs side by side."""
    spec = MLPSpec(layer_widths=(1, width, 1), hidden_activation="sigmoid",
                   output_kind="sigmoid")
    data, scaled, spacing = target.build()
    bands = default_bands(target.frequencies)
    reports = {}
    for scheme in schemes:
        cfg = replace(base_config, scheme=scheme, seed=seed, epochs=epochs,
                      batch_size=target.n_points)
        snapshots: list[np.ndarray] = []

        def keep(epoch: int, params: np.ndarray, _spec=spec, _out=snapshots):
            preds = optim.netcore.forward(_spec, params, data.as_batch())
            _out.append(preds[:, 0].copy())

        optim.train(spec, data, data, cfg, epoch_callback=keep)
        reports[scheme.label()] = frequency_capture(
            snapshots, scaled, bands, threshold, spacing=spacing)
    return SpectralComparison(schemes=list(schemes), reports=reports,
                              bands=bands, threshold=threshold)
