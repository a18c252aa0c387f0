"""Synthetic dataset generators, label randomization, and the CIFAR-10
binary-format loader. Everything is deterministic under its seed."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netcore import Batch

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes
CIFAR_PIXELS = 3072
CIFAR_CLASSES = 10


class CifarFormatError(ValueError):
    """Malformed CIFAR-10 binary file, with the offending byte offset."""


@dataclass(frozen=True)
class RandomizationLevel:
    r: float

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"randomization level must be in [0, 1], got {self.r}")


@dataclass
class Dataset:
    """Inputs plus one-hot labels (classification) or real targets (regression)."""

    inputs: np.ndarray
    targets: np.ndarray
    name: str = "dataset"
    k_classes: int = 0  # 0 marks regression
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-d")
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[0] < 1:
            raise ValueError("inputs and targets must align on a nonempty sample axis")
        if self.k_classes:
            if self.targets.shape[1] != self.k_classes:
                raise ValueError(
                    f"{self.k_classes}-class data needs {self.k_classes} target columns"
                )
            rows = self.targets.sum(axis=1)
            if not np.allclose(rows, 1.0, atol=1e-12) or self.targets.min() < 0:
                raise ValueError("classification targets must be one-hot rows")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def is_classification(self) -> bool:
        return self.k_classes > 0

    def as_batch(self) -> Batch:
        return Batch(inputs=self.inputs, targets=self.targets)

    def subset(self, idx: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(inputs=self.inputs[idx], targets=self.targets[idx],
                       name=name or self.name, k_classes=self.k_classes,
                       meta=dict(self.meta))


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def gaussian_blobs(k: int, n_per_class: int, d: int, spread: float, seed: int) -> Dataset:
    """k isotropic Gaussian clusters with seeded random centers."""
    if k < 2 or n_per_class < 1 or d < 1:
        raise ValueError("need k >= 2 classes, positive samples and dimension")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-3.0, 3.0, size=(k, d))
    inputs = np.vstack([
        centers[c] + spread * rng.standard_normal((n_per_class, d)) for c in range(k)
    ])
    labels = np.repeat(np.arange(k), n_per_class)
    return Dataset(inputs=inputs, targets=_one_hot(labels, k),
                   name=f"blobs{k}x{n_per_class}", k_classes=k)


def two_moons(n: int, noise: float, seed: int) -> Dataset:
    """Two interleaved half-circles; not linearly separable even at noise 0."""
    if n < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    n_top = n // 2
    n_bot = n - n_top
    t_top = np.linspace(0.0, np.pi, n_top)
    t_bot = np.linspace(0.0, np.pi, n_bot)
    top = np.column_stack([np.cos(t_top), np.sin(t_top)])
    bot = np.column_stack([1.0 - np.cos(t_bot), 0.5 - np.sin(t_bot)])
    inputs = np.vstack([top, bot])
    if noise > 0:
        inputs = inputs + noise * rng.standard_normal(inputs.shape)
    labels = np.concatenate([np.zeros(n_top, dtype=int), np.ones(n_bot, dtype=int)])
    return Dataset(inputs=inputs, targets=_one_hot(labels, 2),
                   name=f"two_moons{n}", k_classes=2)


def freq_target_1d(frequencies, amplitudes, n_points: int) -> Dataset:
    """y = sum_j a_j sin(w_j x) on the uniform grid [-pi, pi), endpoint open.

    With integer frequencies every tone lands exactly on a DFT bin of the
    grid, which the spectral harness relies on.
    """
    frequencies = list(frequencies)
    amplitudes = list(amplitudes)
    if len(frequencies) != len(amplitudes) or not frequencies:
        raise ValueError("need matching nonempty frequency and amplitude lists")
    if n_points < 4:
        raise ValueError("need at least 4 grid points")
    x = np.linspace(-np.pi, np.pi, n_points, endpoint=False)
    y = np.zeros_like(x)
    for w, a in zip(frequencies, amplitudes):
        y += a * np.sin(w * x)
    return Dataset(inputs=x[:, None], targets=y[:, None],
                   name=f"tones{'-'.join(str(f) for f in frequencies)}", k_classes=0,
                   meta={"frequencies": frequencies, "amplitudes": amplitudes})


def randomize_labels(data: Dataset, r, seed: int) -> Dataset:
    """Replace a seeded fraction r of labels with uniform draws over all classes.

    A replacement may repeat the original class, so the expected changed
    fraction is r (1 - 1/K). The selection mask is kept in meta so either
    statistic can be recovered.
    """
    level = r if isinstance(r, RandomizationLevel) else RandomizationLevel(float(r))
    if not data.is_classification:
        raise ValueError("label randomization needs a classification dataset")
    n, k = data.n, data.k_classes
    rng = np.random.default_rng(seed)
    n_pick = int(round(level.r * n))
    mask = np.zeros(n, dtype=bool)
    targets = data.targets.copy()
    if n_pick > 0:
        picked = rng.choice(n, size=n_pick, replace=False)
        mask[picked] = True
        targets[picked] = _one_hot(rng.integers(0, k, size=n_pick), k)
    meta = dict(data.meta)
    meta.update({"randomized_mask": mask, "randomization_level": level.r})
    return Dataset(inputs=data.inputs.copy(), targets=targets,
                   name=f"{data.name}_r{level.r:g}", k_classes=k, meta=meta)


def load_cifar10_bin(path, max_records: int) -> Dataset:
    """First max_records records of a CIFAR-10 binary file.

    Record layout: 1 label byte (0-9) then 3072 pixel bytes (R, G, B
    planes, row-major 32x32). Pixels are scaled to [0, 1] and flattened;
    labels become one-hot rows.
    """
    if max_records < 1:
        raise ValueError("empty request: max_records must be >= 1")
    raw = Path(path).read_bytes()
    if len(raw) % CIFAR_RECORD_BYTES != 0:
        raise CifarFormatError(
            f"truncated record: file length {len(raw)} leaves a partial record "
            f"at byte offset {len(raw) - len(raw) % CIFAR_RECORD_BYTES}"
        )
    available = len(raw) // CIFAR_RECORD_BYTES
    if available < max_records:
        raise CifarFormatError(
            f"requested {max_records} records but file holds {available}"
        )
    arr = np.frombuffer(raw, dtype=np.uint8, count=max_records * CIFAR_RECORD_BYTES)
    records = arr.reshape(max_records, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(int)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise CifarFormatError(
            f"label {labels[bad[0]]} out of range at byte offset "
            f"{int(bad[0]) * CIFAR_RECORD_BYTES}"
        )
    pixels = records[:, 1:].astype(np.float64) / 255.0
    return Dataset(inputs=pixels, targets=_one_hot(labels, CIFAR_CLASSES),
                   name="cifar10", k_classes=CIFAR_CLASSES)


def write_cifar10_bin(path, labels: np.ndarray, pixels: np.ndarray) -> None:
    """Inverse of the loader, for round-trip checks and synthetic fixtures."""
    labels = np.asarray(labels)
    pixels = np.asarray(pixels)
    if pixels.shape != (labels.size, CIFAR_PIXELS):
        raise ValueError(f"pixels must be (n, {CIFAR_PIXELS}) bytes")
    records = np.empty((labels.size, CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = pixels
    Path(path).write_bytes(records.tobytes())


def train_val_split(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then split; the two sides are disjoint and exhaustive."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    n_train = int(round(fraction * data.n))
    if n_train < 1 or n_train >= data.n:
        raise ValueError(f"split of {data.n} samples at {fraction} leaves a side empty")
    train = data.subset(perm[:n_train], name=f"{data.name}_train")
    val = data.subset(perm[n_train:], name=f"{data.name}_val")
    return train, val


def to_csv(data: Dataset, path) -> None:
    """Flat CSV dump (x_0..x_{d-1}, y_0..y_{K-1}) for offline inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d, k = data.inputs.shape[1], data.targets.shape[1]
        writer.writerow([f"x_{i}" for i in range(d)] + [f"y_{j}" for j in range(k)])
        for xi, yi in zip(data.inputs, data.targets):
            writer.writerow([f"{v:.17g}" for v in xi] + [f"{v:.17g}" for v in yi])
