"""Fitness of a retina: a weak linear readout of RGC firing rates.

A retina is scored by how well a briefly trained perceptron can regress the
edge location from its RGC rates (clipped R^2 on a held-out set), blended with
a structural shape gain that favours interneuron types with exactly one
postsynaptic target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SimParams, run
from .genome import GaParams, Genome
from .phenotype import WEIGHT_SCALE, Phenotype, express
from .stimuli import StimulusSet

__all__ = [
    "PerceptronParams",
    "Perceptron",
    "FitnessReport",
    "shape_gain",
    "collect_rates",
    "train_weak_perceptron",
    "r2_score",
    "evaluate",
]


@dataclass(frozen=True)
class PerceptronParams:
    lr: float = 0.01
    epochs: int = 7

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass(frozen=True)
class Perceptron:
    w: np.ndarray
    b: float

    def predict(self, rates: np.ndarray) -> np.ndarray:
        return rates @ self.w + self.b


@dataclass(frozen=True)
class FitnessReport:
    r2: float
    shape_gain: float
    fitness: float


def shape_gain(genome: Genome) -> float:
    """Mean over interneuron types of ``1 - |len(targets) - 1|``.

    Zero when the photoreceptor projects nowhere or there are no interneurons.
    """
    n_t = genome.n_types
    if not genome.photoreceptor.targets or n_t == 0:
        return 0.0
    return sum(1 - abs(len(g.targets) - 1) for g in genome.interneurons) / n_t


def collect_rates(phenotype: Phenotype, stimuli: StimulusSet,
                  sim: SimParams) -> tuple[np.ndarray, np.ndarray]:
    """RGC rates for the train and test batches, one row per stimulus."""
    n_train = len(stimuli.train)
    rates = run(phenotype, np.concatenate([stimuli.train.values, stimuli.test.values]), sim)
    return rates[:n_train], rates[n_train:]


def train_weak_perceptron(rates: np.ndarray, targets: np.ndarray,
                          hp: PerceptronParams = PerceptronParams()) -> Perceptron:
    """Full-batch gradient descent on mean squared error from a zero start."""
    X = np.asarray(rates, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("rates and targets disagree on the number of samples")
    n = len(y)
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(hp.epochs):
        err = X @ w + b - y
        w = w - hp.lr * (2.0 / n) * (X.T @ err)
        b = b - hp.lr * (2.0 / n) * err.sum()
    return Perceptron(w, float(b))


def r2_score(predictions, targets) -> float:
    """Coefficient of determination clipped to ``[-1, 1]``."""
    yhat = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if yhat.shape != y.shape or y.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R^2 is undefined for constant targets")
    ss_res = float(np.sum((y - yhat) ** 2))
    return float(np.clip(1.0 - ss_res / ss_tot, -1.0, 1.0))


def evaluate(genome: Genome, stimuli: StimulusSet, sim: SimParams, params: GaParams,
             *, weight_scale: float = WEIGHT_SCALE,
             perceptron: PerceptronParams = PerceptronParams()) -> FitnessReport:
    phenotype = express(genome, weight_scale)
    train_rates, test_rates = collect_rates(phenotype, stimuli, sim)
    model = train_weak_perceptron(train_rates, stimuli.train.edges, perceptron)
    r2 = r2_score(model.predict(test_rates), stimuli.test.edges)
    gain = shape_gain(genome)
    return FitnessReport(r2, gain, params.w_r2 * r2 + params.w_shape * gain)
