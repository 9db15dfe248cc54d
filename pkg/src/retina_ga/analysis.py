"""Post-run statistics: tuning curves, survival gain and population summaries.

Quartiles use linear interpolation between order statistics (numpy's default
``"linear"`` method).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .dynamics import SimParams, run
from .phenotype import Phenotype

__all__ = [
    "QUARTILE_METHOD",
    "TuningCurve",
    "TrialSummary",
    "tuning_curves",
    "write_tuning_curves",
    "fitness_summary",
    "population_stats",
    "summarize_trial",
    "survival_gain_test",
]

QUARTILE_METHOD = "linear"


@dataclass(frozen=True)
class TuningCurve:
    rgc_index: int
    responses: np.ndarray
    baseline: float


@dataclass(frozen=True)
class TrialSummary:
    survival_gain: float
    medians: tuple[float, ...]
    iqrs: tuple[float, ...]


def tuning_curves(phenotype: Phenotype, sim: SimParams, amplitude: float = 1.0) -> list[TuningCurve]:
    """Probe each photoreceptor alone at ``amplitude`` and record every RGC's rate.

    The baseline is the rate under zero input.
    """
    n_c = phenotype.sizes[0]
    inputs = np.vstack([np.zeros(n_c), amplitude * np.eye(n_c)])
    rates = run(phenotype, inputs, sim)
    baseline, probed = rates[0], rates[1:]
    return [TuningCurve(k, probed[:, k].copy(), float(baseline[k]))
            for k in range(rates.shape[1])]


def write_tuning_curves(path: str | Path, curves_by_elite: Sequence[Sequence[TuningCurve]],
                        header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        writer = csv.writer(fh)
        writer.writerow(["elite_rank", "rgc", "photoreceptor", "response", "baseline"])
        for rank, curves in enumerate(curves_by_elite, start=1):
            for curve in curves:
                for m, value in enumerate(curve.responses):
                    writer.writerow([rank, curve.rgc_index, m, repr(float(value)),
                                     repr(curve.baseline)])


def fitness_summary(values: Iterable[float]) -> dict[str, float]:
    x = np.asarray(list(values), dtype=float)
    q1, median, q3 = np.percentile(x, [25, 50, 75], method=QUARTILE_METHOD)
    return {
        "min": float(x.min()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "max": float(x.max()),
        "iqr": float(q3 - q1),
    }


def population_stats(records: Sequence) -> list[dict]:
    """Per-generation order statistics plus elite fitness by rank.

    ``records`` are :class:`~retina_ga.evolution.GenerationRecord` objects.
    """
    if not records:
        raise ValueError("no generation records")
    out = []
    for rec in records:
        row = {"generation": rec.generation, **fitness_summary(rec.fitness)}
        row["elites"] = tuple(rec.elite_fitness)
        out.append(row)
    return out


def summarize_trial(records: Sequence) -> TrialSummary:
    rows = population_stats(records)
    gain = records[-1].min_elite - records[0].min_elite
    return TrialSummary(float(gain), tuple(r["median"] for r in rows), tuple(r["iqr"] for r in rows))


def survival_gain_test(trials: Sequence[TrialSummary | float]) -> tuple[float, float]:
    """One-sided one-sample t-test of survival gains against zero.

    Returns ``(mean_gain, p_value)`` for the alternative "mean > 0". A sample
    without spread gets p = 0 if its mean is positive and p = 1 otherwise.
    """
    gains = np.array([t.survival_gain if isinstance(t, TrialSummary) else t for t in trials],
                     dtype=float)
    if gains.size < 2:
        raise ValueError("need at least two trials")
    mean = float(gains.mean())
    if np.all(gains == gains[0]):
        return mean, 0.0 if mean > 0 else 1.0
    result = stats.ttest_1samp(gains, 0.0, alternative="greater")
    return mean, float(result.pvalue)
