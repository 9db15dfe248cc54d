"""Generational loop: evaluation, elitism, ratio tournaments and breeding.

Randomness is keyed by counters instead of being threaded through one stream:
the operator stream used to breed generation ``t`` of trial ``k`` is
``SeedSequence(seed, spawn_key=(1, k, t))``. Evaluation draws no random
numbers at all, so results do not depend on worker count and a checkpoint
needs nothing beyond the population and the generation index.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .analysis import fitness_summary
from .dynamics import SimParams
from .fitness import FitnessReport, PerceptronParams, evaluate
from .genome import (GaParams, Genome, Limits, crossover, duplicate_or_delete,
                     genome_from_dict, genome_to_dict, init_genome, mutate)
from .phenotype import WEIGHT_SCALE
from .stimuli import StimulusSet

__all__ = [
    "SELECTION_EPS",
    "Individual",
    "GenerationRecord",
    "Evaluator",
    "operator_rng",
    "elite_order",
    "selection_probability",
    "select_parent",
    "next_generation",
    "evolve",
    "run_evolution",
    "log_columns",
    "log_row",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

SELECTION_EPS = 1e-3
_STIMULUS_KEY = 0
_TRIAL_KEY = 1


@dataclass(frozen=True)
class Individual:
    genome: Genome
    report: FitnessReport | None = None

    @property
    def fitness(self) -> float:
        if self.report is None:
            raise ValueError("individual has not been evaluated")
        return self.report.fitness


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    fitness: tuple[float, ...]
    r2: tuple[float, ...]
    shape_gain: tuple[float, ...]
    elite_indices: tuple[int, ...]
    elite_genomes: tuple[Genome, ...]
    rng_key: tuple[int, ...]

    @property
    def elite_fitness(self) -> tuple[float, ...]:
        return tuple(self.fitness[i] for i in self.elite_indices)

    @property
    def min_elite(self) -> float:
        return min(self.elite_fitness)


def operator_rng(seed: int, trial: int, counter: int) -> np.random.Generator:
    """Operator stream for one trial and one generation counter."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_TRIAL_KEY, trial, counter)))


def stimulus_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(_STIMULUS_KEY,))


# ---------------------------------------------------------------------------
# Evaluation

_WORKER_CONTEXT: dict[str, Any] = {}


def _init_worker(context: dict[str, Any]) -> None:
    _WORKER_CONTEXT.clear()
    _WORKER_CONTEXT.update(context)


def _evaluate_in_worker(genome: Genome) -> FitnessReport:
    ctx = _WORKER_CONTEXT
    return evaluate(genome, ctx["stimuli"], ctx["sim"], ctx["params"],
                    weight_scale=ctx["weight_scale"], perceptron=ctx["perceptron"])


class Evaluator:
    """Maps genomes to fitness reports, serially or over a process pool.

    Use as a context manager when ``workers > 1`` so the pool is shut down.
    """

    def __init__(self, stimuli: StimulusSet, sim: SimParams, params: GaParams, *,
                 weight_scale: float = WEIGHT_SCALE,
                 perceptron: PerceptronParams = PerceptronParams(), workers: int = 1):
        self.context = dict(stimuli=stimuli, sim=sim, params=params,
                            weight_scale=weight_scale, perceptron=perceptron)
        self.workers = max(1, int(workers))
        self._pool: ProcessPoolExecutor | None = None

    def __call__(self, genomes: Sequence[Genome]) -> list[FitnessReport]:
        if not genomes:
            return []
        if self.workers == 1:
            _init_worker(self.context)
            return [_evaluate_in_worker(g) for g in genomes]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(self.workers, initializer=_init_worker,
                                             initargs=(self.context,))
        chunk = max(1, len(genomes) // (4 * self.workers))
        return list(self._pool.map(_evaluate_in_worker, genomes, chunksize=chunk))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self) -> "Evaluator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Selection and breeding


def elite_order(fitness: Sequence[float]) -> list[int]:
    """Indices sorted by descending fitness, ties by ascending index."""
    return sorted(range(len(fitness)), key=lambda i: (-fitness[i], i))


def _shift(x: float) -> float:
    # shape gain can push fitness below -1; there the map decays toward 0 but stays
    # positive and strictly increasing, and it is continuous at -1
    if x >= -1.0:
        return (x + 1.0) / 2.0 + SELECTION_EPS
    return SELECTION_EPS / (1.0 - (x + 1.0))


def selection_probability(fit_a: float, fit_b: float) -> float:
    """Chance that rival ``a`` wins: ratio of positivity-shifted scores."""
    sa, sb = _shift(fit_a), _shift(fit_b)
    return sa / (sa + sb)


def select_parent(rival_a: Individual, rival_b: Individual, rng: np.random.Generator) -> Individual:
    p = selection_probability(rival_a.fitness, rival_b.fitness)
    return rival_a if rng.random() < p else rival_b


def next_generation(population: Sequence[Individual], params: GaParams,
                    rng: np.random.Generator) -> list[Individual]:
    """Elites first (unchanged, still evaluated), then unevaluated offspring."""
    n = len(population)
    if n < 4:
        raise ValueError("population needs at least 4 individuals for tournaments")
    order = elite_order([ind.fitness for ind in population])
    out = [population[i] for i in order[:params.elite_count]]

    def tournament() -> Individual:
        a, b = rng.choice(n, size=2, replace=False)
        return select_parent(population[a], population[b], rng)

    while len(out) < n:
        p1 = tournament()
        p2 = tournament()
        if rng.random() < params.crossover_rate:
            child = crossover(p1.genome, p2.genome, rng)
        else:
            child = p1.genome
        child = duplicate_or_delete(child, params, rng)
        child = mutate(child, params, rng)
        out.append(Individual(child))
    return out


def _record(generation: int, population: Sequence[Individual], elite_count: int,
            rng_key: tuple[int, ...]) -> GenerationRecord:
    fitness = tuple(ind.fitness for ind in population)
    elites = tuple(elite_order(fitness)[:max(elite_count, 1)])
    return GenerationRecord(
        generation=generation,
        fitness=fitness,
        r2=tuple(ind.report.r2 for ind in population),
        shape_gain=tuple(ind.report.shape_gain for ind in population),
        elite_indices=elites,
        elite_genomes=tuple(population[i].genome for i in elites),
        rng_key=rng_key,
    )


def evolve(params: GaParams, evaluator: Callable[[Sequence[Genome]], list[FitnessReport]], *,
           limits: Limits = Limits(), trial: int = 0,
           start: tuple[int, Sequence[Individual]] | None = None
           ) -> Iterator[tuple[GenerationRecord, int, list[Individual]]]:
    """Yield ``(record, next_generation_index, next_population)`` per generation.

    ``start`` resumes from a checkpointed ``(generation, population)`` pair.
    After the last generation the yielded population is the evaluated final one.
    """
    if start is None:
        rng = operator_rng(params.rng_seed, trial, 0)
        generation = 0
        population = [Individual(init_genome(rng, limits)) for _ in range(params.population_size)]
    else:
        generation, population = start[0], list(start[1])
    while generation < params.generations:
        pending = [k for k, ind in enumerate(population) if ind.report is None]
        reports = evaluator([population[k].genome for k in pending])
        for k, rep in zip(pending, reports):
            population[k] = replace(population[k], report=rep)
        key = (params.rng_seed, _TRIAL_KEY, trial, generation + 1)
        record = _record(generation, population, params.elite_count, key)
        generation += 1
        if generation < params.generations:
            population = next_generation(population, params,
                                         operator_rng(params.rng_seed, trial, generation))
        yield record, generation, population


def run_evolution(params: GaParams, sim: SimParams, stimuli: StimulusSet, *,
                  limits: Limits = Limits(), weight_scale: float = WEIGHT_SCALE,
                  perceptron: PerceptronParams = PerceptronParams(), workers: int = 1,
                  trial: int = 0) -> list[GenerationRecord]:
    """Run one full trial in memory and return its generation records."""
    with Evaluator(stimuli, sim, params, weight_scale=weight_scale,
                   perceptron=perceptron, workers=workers) as evaluator:
        return [rec for rec, _, _ in evolve(params, evaluator, limits=limits, trial=trial)]


# ---------------------------------------------------------------------------
# Generation log and checkpoints


def log_columns(elite_count: int) -> list[str]:
    return (["generation", "min", "q1", "median", "q3", "max", "iqr", "best_r2", "best_shape_gain"]
            + [f"elite_{k}" for k in range(1, elite_count + 1)])


def log_row(record: GenerationRecord) -> list[str]:
    s = fitness_summary(record.fitness)
    best = record.elite_indices[0]
    values = [s["min"], s["q1"], s["median"], s["q3"], s["max"], s["iqr"],
              record.r2[best], record.shape_gain[best], *record.elite_fitness]
    return [str(record.generation)] + [repr(float(v)) for v in values]


def _report_to_dict(rep: FitnessReport | None):
    if rep is None:
        return None
    return {"r2": rep.r2, "shape_gain": rep.shape_gain, "fitness": rep.fitness}


def save_checkpoint(path: str | Path, *, header: dict[str, Any], config: dict[str, Any],
                    trial: int, generation: int, population: Sequence[Individual]) -> None:
    """Write atomically: the file is either the old or the new checkpoint."""
    seed = config["ga"]["rng_seed"]
    data = {
        "header": header,
        "config": config,
        "trial": trial,
        "generation": generation,
        "rng": {"seed": seed, "spawn_key": [_TRIAL_KEY, trial, generation]},
        "population": [{"genome": genome_to_dict(ind.genome), "report": _report_to_dict(ind.report)}
                       for ind in population],
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, indent=1))
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> dict[str, Any]:
    """Parse a checkpoint; ``population`` is returned as :class:`Individual` objects."""
    try:
        data = json.loads(Path(path).read_text())
        population = []
        for item in data["population"]:
            rep = item["report"]
            population.append(Individual(
                genome_from_dict(item["genome"]),
                None if rep is None else FitnessReport(float(rep["r2"]), float(rep["shape_gain"]),
                                                       float(rep["fitness"])),
            ))
        data["population"] = population
        data["generation"] = int(data["generation"])
        data["trial"] = int(data["trial"])
        data["header"]["config_hash"]
        data["config"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"corrupt checkpoint {path}: {exc}") from exc
    return data


def read_log(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Return ``(header_lines, rows)`` of a generation log; rows include the column line."""
    header, rows = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                header.append(line.rstrip("\n"))
            else:
                rows.append(line)
    return header, [r for r in csv.reader(rows)]
