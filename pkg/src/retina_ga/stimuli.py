"""Noisy step-edge stimuli sampled on the photoreceptor grid."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

__all__ = [
    "RISING",
    "FALLING",
    "Stimulus",
    "StimulusBatch",
    "StimulusSet",
    "StimulusConfig",
    "reference_signal",
    "gaussian_kernel",
    "perturb",
    "make_stimulus_set",
    "write_stimuli",
    "read_stimuli",
]

RISING = 1
FALLING = -1


@dataclass(frozen=True)
class Stimulus:
    values: np.ndarray
    edge_location: float
    polarity: int


@dataclass(frozen=True)
class StimulusBatch:
    """Stimuli stacked row-wise: ``values`` has shape ``(count, n)``."""

    values: np.ndarray
    edges: np.ndarray
    polarities: np.ndarray

    def __post_init__(self):
        for arr in (self.values, self.edges, self.polarities):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.edges)

    def __getitem__(self, k: int) -> Stimulus:
        return Stimulus(self.values[k], float(self.edges[k]), int(self.polarities[k]))


@dataclass(frozen=True)
class StimulusSet:
    train: StimulusBatch
    test: StimulusBatch

    @property
    def n(self) -> int:
        return self.train.values.shape[1]


@dataclass(frozen=True)
class StimulusConfig:
    train_count: int = 500
    test_count: int = 100
    noise_amp: float = 0.1
    sigma: float = 2.0
    margin: float = 0.1
    n: int = 24

    def __post_init__(self):
        if self.train_count < 1 or self.test_count < 1:
            raise ValueError("stimulus counts must be at least 1")
        if self.noise_amp < 0 or self.sigma < 0:
            raise ValueError("noise_amp and sigma must be non-negative")
        if not 0 <= self.margin < 0.5:
            raise ValueError("margin must lie in [0, 0.5)")
        if self.n < 1:
            raise ValueError("n must be positive")


def reference_signal(edge: float, polarity: int, n: int) -> np.ndarray:
    """Noise-free step sampled at ``(k + 0.5) / n``; rising steps go 0 -> 1."""
    pos = (np.arange(n) + 0.5) / n
    step = (pos >= edge).astype(float)
    return step if polarity == RISING else 1.0 - step


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized discrete Gaussian truncated at ``ceil(3 sigma)`` samples."""
    if sigma <= 0:
        return np.ones(1)
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1)
    with np.errstate(over="ignore"):
        k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def perturb(signal, noise_amp: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add uniform noise, smooth with a reflective-boundary Gaussian, clamp to [0, 1].

    Works row-wise on 2-D input.
    """
    x = np.asarray(signal, dtype=float)
    if noise_amp > 0:
        x = x + rng.uniform(-noise_amp, noise_amp, size=x.shape)
    if sigma > 0:
        x = correlate1d(x, gaussian_kernel(sigma), axis=-1, mode="reflect")
    return np.clip(x, 0.0, 1.0)


def _batch(count: int, cfg: StimulusConfig, rng: np.random.Generator) -> StimulusBatch:
    edges = rng.uniform(cfg.margin, 1.0 - cfg.margin, size=count)
    polarities = np.where(rng.random(count) < 0.5, RISING, FALLING)
    ref = np.stack([reference_signal(e, s, cfg.n) for e, s in zip(edges, polarities)])
    return StimulusBatch(perturb(ref, cfg.noise_amp, cfg.sigma, rng), edges, polarities)


def make_stimulus_set(cfg: StimulusConfig, seed) -> StimulusSet:
    """Build frozen train and test batches from independent child streams of ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    train_ss, test_ss = ss.spawn(2)
    return StimulusSet(
        _batch(cfg.train_count, cfg, np.random.default_rng(train_ss)),
        _batch(cfg.test_count, cfg, np.random.default_rng(test_ss)),
    )


def write_stimuli(path: str | Path, stimuli: StimulusSet, header: str = "") -> None:
    """CSV with one row per stimulus; floats written with ``repr`` so reads are exact."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        writer = csv.writer(fh)
        writer.writerow(["split", "edge", "polarity"] + [f"v{k}" for k in range(stimuli.n)])
        for split, batch in (("train", stimuli.train), ("test", stimuli.test)):
            for k in range(len(batch)):
                writer.writerow([split, repr(float(batch.edges[k])), int(batch.polarities[k])]
                                + [repr(float(x)) for x in batch.values[k]])


def read_stimuli(path: str | Path) -> StimulusSet:
    rows = {"train": [], "test": []}
    with open(path, newline="") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        reader = csv.reader(lines)
        head = next(reader)
        if head[:3] != ["split", "edge", "polarity"]:
            raise ValueError(f"{path}: not a stimulus file")
        for row in reader:
            rows[row[0]].append(row)

    def batch(rs):
        if not rs:
            raise ValueError(f"{path}: empty split")
        return StimulusBatch(
            np.array([[float(x) for x in r[3:]] for r in rs]),
            np.array([float(r[1]) for r in rs]),
            np.array([int(r[2]) for r in rs]),
        )

    return StimulusSet(batch(rows["train"]), batch(rows["test"]))
