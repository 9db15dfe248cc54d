"""Heritable description of a 1-D retina and the genetic operators acting on it.

A genome holds one gene group per neuronal type. Type indices are canonical:
``0`` is the photoreceptor type, ``1..n_t`` are interneuron types and
``g = n_t + 1`` is the RGC type. Gene groups are "linked": crossover only ever
moves a whole :class:`TypeGene`.

All discrete genes live on a grid and are mutated by a signed random walk in
index space, so every operator here works on grid indices rather than values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "SHAPE_GRID",
    "TAU_GRID",
    "POLARITY",
    "Limits",
    "GaParams",
    "TypeGene",
    "Genome",
    "init_genome",
    "walk_step",
    "walk_grid",
    "mutate",
    "mutate_type",
    "flip_polarity",
    "append_copy",
    "remove_type",
    "duplicate_or_delete",
    "crossover",
    "genome_to_dict",
    "genome_from_dict",
    "dumps",
    "loads",
    "iter_targets",
]

SHAPE_GRID: tuple[float, ...] = tuple(0.5 * k for k in range(1, 9))  # 0.5 .. 4.0
TAU_GRID: tuple[float, ...] = tuple(float(5 * k) for k in range(1, 21))  # 5 .. 100
POLARITY: tuple[int, ...] = (-1, 1)

_SHAPE_FIELDS = ("alpha_a", "beta_a", "alpha_d", "beta_d")


@dataclass(frozen=True)
class Limits:
    """Structural constants shared by every genome of a run."""

    max_types: int = 5  # N_t
    max_cells: int = 24  # N_c, also the photoreceptor count
    n_rgc: int = 5  # N_g

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if int(value) != value or value < 1:
                raise ValueError(f"limits.{f.name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class GaParams:
    """Genetic-algorithm hyperparameters.

    Defaults are the full-size settings: population 150 with 10 elites over
    400 generations, skip probabilities 0.5/0.5, duplication and deletion 0.3
    each, crossover rate 0.2 and a 0.85/0.15 blend of R^2 and shape gain.
    """

    population_size: int = 150
    elite_count: int = 10
    generations: int = 400
    crossover_rate: float = 0.2
    p_skip_type: float = 0.5
    p_skip_gene: float = 0.5
    p_duplicate: float = 0.3
    p_delete: float = 0.3
    p_targets_edit: float = 0.15
    poisson_lambda: float = 1.0
    w_r2: float = 0.85
    w_shape: float = 0.15
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        if not 1 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must be at least 1 and smaller than population_size")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        for name in ("crossover_rate", "p_skip_type", "p_skip_gene",
                     "p_duplicate", "p_delete", "p_targets_edit"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if self.poisson_lambda < 0:
            raise ValueError("poisson_lambda must be non-negative")
        if self.w_r2 < 0 or self.w_shape < 0 or abs(self.w_r2 + self.w_shape - 1.0) > 1e-12:
            raise ValueError("w_r2 and w_shape must be non-negative and sum to 1")


@dataclass(frozen=True)
class TypeGene:
    """Linked genes of one neuronal type."""

    n_c: int
    x_a: int
    x_d: int
    alpha_a: float
    beta_a: float
    alpha_d: float
    beta_d: float
    tau: float
    targets: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(int(t) for t in self.targets))


@dataclass(frozen=True)
class Genome:
    photoreceptor: TypeGene
    interneurons: tuple[TypeGene, ...]
    rgc: TypeGene
    limits: Limits = Limits()

    def __post_init__(self):
        object.__setattr__(self, "interneurons", tuple(self.interneurons))

    @property
    def n_types(self) -> int:
        """Number of interneuron types, ``n_t``."""
        return len(self.interneurons)

    @property
    def rgc_index(self) -> int:
        return len(self.interneurons) + 1

    @property
    def types(self) -> tuple[TypeGene, ...]:
        """All gene groups in canonical index order."""
        return (self.photoreceptor, *self.interneurons, self.rgc)

    def validate(self) -> None:
        """Raise ``ValueError`` if any structural invariant is violated."""
        lim = self.limits
        if not 0 <= self.n_types <= lim.max_types:
            raise ValueError(f"n_t={self.n_types} outside [0, {lim.max_types}]")
        if self.photoreceptor.n_c != lim.max_cells:
            raise ValueError("photoreceptor cell count must equal N_c")
        if self.rgc.n_c != lim.n_rgc:
            raise ValueError("RGC cell count must equal N_g")
        if self.rgc.targets:
            raise ValueError("RGC targets must be empty")
        g = self.rgc_index
        for idx, gene in enumerate(self.types):
            if not 1 <= gene.n_c <= lim.max_cells:
                raise ValueError(f"type {idx}: n_c={gene.n_c} outside [1, {lim.max_cells}]")
            if gene.x_a not in POLARITY or gene.x_d not in POLARITY:
                raise ValueError(f"type {idx}: polarity codes must be -1 or +1")
            for name in _SHAPE_FIELDS:
                if getattr(gene, name) not in SHAPE_GRID:
                    raise ValueError(f"type {idx}: {name}={getattr(gene, name)!r} not on shape grid")
            if gene.tau not in TAU_GRID:
                raise ValueError(f"type {idx}: tau={gene.tau!r} not on tau grid")
            bad = [t for t in gene.targets if not 0 <= t <= g]
            if bad:
                raise ValueError(f"type {idx}: targets {sorted(bad)} outside [0, {g}]")


# ---------------------------------------------------------------------------
# Initialization


def _random_gene(rng: np.random.Generator, n_c: int) -> TypeGene:
    return TypeGene(
        n_c=n_c,
        x_a=POLARITY[rng.integers(2)],
        x_d=POLARITY[rng.integers(2)],
        alpha_a=SHAPE_GRID[rng.integers(len(SHAPE_GRID))],
        beta_a=SHAPE_GRID[rng.integers(len(SHAPE_GRID))],
        alpha_d=SHAPE_GRID[rng.integers(len(SHAPE_GRID))],
        beta_d=SHAPE_GRID[rng.integers(len(SHAPE_GRID))],
        tau=TAU_GRID[rng.integers(len(TAU_GRID))],
    )


def init_genome(rng: np.random.Generator, limits: Limits = Limits()) -> Genome:
    """Draw a random genome with no interneuron types.

    Photoreceptor and RGC genes are uniform over their grids. The photoreceptor
    projects to the RGC type with probability 1/2, which is a uniform draw over
    the subsets of ``{g}``.
    """
    photoreceptor = _random_gene(rng, limits.max_cells)
    rgc = _random_gene(rng, limits.n_rgc)
    if rng.random() < 0.5:
        photoreceptor = replace(photoreceptor, targets=frozenset({1}))
    return Genome(photoreceptor, (), rgc, limits)


# ---------------------------------------------------------------------------
# Mutation


def walk_step(rng: np.random.Generator, lam: float) -> int:
    """Signed random-walk step: Poisson(lam) magnitude with a fair-coin sign."""
    magnitude = int(rng.poisson(lam))
    return magnitude if rng.random() < 0.5 else -magnitude


def flip_polarity(value: int, step: int) -> int:
    """Walk on the two-element domain {-1, +1}: odd steps flip the sign."""
    return -value if step % 2 else value


def walk_grid(grid: Sequence, value, step: int):
    idx = grid.index(value) + step
    return grid[min(max(idx, 0), len(grid) - 1)]


def _edit_targets(targets: frozenset[int], n_legal: int, rng: np.random.Generator) -> frozenset[int]:
    if rng.random() < 0.5:
        absent = [t for t in range(n_legal) if t not in targets]
        if absent:
            return targets | {absent[rng.integers(len(absent))]}
    else:
        present = sorted(targets)
        if present:
            return targets - {present[rng.integers(len(present))]}
    return targets


def mutate_type(gene: TypeGene, params: GaParams, rng: np.random.Generator, *,
                n_c_range: tuple[int, int] | None, n_legal_targets: int) -> TypeGene:
    """Mutate one type's genes.

    ``n_c_range`` is ``None`` for types whose cell count is fixed, and
    ``n_legal_targets == 0`` disables target edits (the RGC type).
    """
    if rng.random() < params.p_skip_type:
        return gene
    changes: dict[str, Any] = {}
    lam = params.poisson_lambda

    def active() -> bool:
        return rng.random() >= params.p_skip_gene

    if n_c_range is not None and active():
        lo, hi = n_c_range
        changes["n_c"] = min(max(gene.n_c + walk_step(rng, lam), lo), hi)
    for name in ("x_a", "x_d"):
        if active():
            changes[name] = flip_polarity(getattr(gene, name), walk_step(rng, lam))
    for name in _SHAPE_FIELDS:
        if active():
            changes[name] = walk_grid(SHAPE_GRID, getattr(gene, name), walk_step(rng, lam))
    if active():
        changes["tau"] = walk_grid(TAU_GRID, gene.tau, walk_step(rng, lam))
    if n_legal_targets > 0 and active() and rng.random() < params.p_targets_edit:
        changes["targets"] = _edit_targets(gene.targets, n_legal_targets, rng)
    return replace(gene, **changes) if changes else gene


def mutate(genome: Genome, params: GaParams, rng: np.random.Generator) -> Genome:
    """Return a mutated copy of ``genome``; the input is left untouched."""
    n_legal = genome.rgc_index + 1
    cells = (1, genome.limits.max_cells)
    photoreceptor = mutate_type(genome.photoreceptor, params, rng,
                                n_c_range=None, n_legal_targets=n_legal)
    interneurons = tuple(
        mutate_type(gene, params, rng, n_c_range=cells, n_legal_targets=n_legal)
        for gene in genome.interneurons
    )
    rgc = mutate_type(genome.rgc, params, rng, n_c_range=None, n_legal_targets=0)
    return Genome(photoreceptor, interneurons, rgc, genome.limits)


def _remap_gene(gene: TypeGene, mapping: dict[int, int | None]) -> TypeGene:
    new = frozenset(mapping[t] for t in gene.targets if mapping.get(t) is not None)
    return gene if new == gene.targets else replace(gene, targets=new)


def _remap(genome: Genome, mapping: dict[int, int | None]) -> Genome:
    return Genome(_remap_gene(genome.photoreceptor, mapping),
                  tuple(_remap_gene(g, mapping) for g in genome.interneurons),
                  genome.rgc, genome.limits)


def append_copy(genome: Genome, source: int, params: GaParams,
                rng: np.random.Generator) -> Genome:
    """Append a mutated copy of type ``source`` as the last interneuron type."""
    old_g = genome.rgc_index
    shift = {t: (t if t < old_g else t + 1) for t in range(old_g + 1)}
    shifted = _remap(genome, shift)
    copy = mutate_type(_remap_gene(genome.types[source], shift), params, rng,
                       n_c_range=(1, genome.limits.max_cells), n_legal_targets=old_g + 2)
    return Genome(shifted.photoreceptor, (*shifted.interneurons, copy), shifted.rgc,
                  genome.limits)


def remove_type(genome: Genome, victim: int) -> Genome:
    """Delete interneuron type ``victim`` (canonical index) and reindex targets."""
    if not 1 <= victim <= genome.n_types:
        raise ValueError(f"type {victim} is not an interneuron type")
    mapping: dict[int, int | None] = {
        t: (t if t < victim else t - 1) for t in range(genome.rgc_index + 1)
    }
    mapping[victim] = None
    kept = tuple(g for k, g in enumerate(genome.interneurons, start=1) if k != victim)
    return _remap(Genome(genome.photoreceptor, kept, genome.rgc, genome.limits), mapping)


def duplicate_or_delete(genome: Genome, params: GaParams, rng: np.random.Generator) -> Genome:
    """Possibly duplicate one type, then possibly delete one interneuron type.

    The two events are drawn independently. Any type, photoreceptor and RGC
    included, may be duplicated; the copy is appended as the last interneuron
    type, inherits the original's targets and is mutated at once. Only
    interneuron types can be deleted. Target sets are reindexed after every
    structural change; no existing type starts projecting to a new copy on its
    own.
    """
    if rng.random() < params.p_duplicate and genome.n_types < genome.limits.max_types:
        genome = append_copy(genome, int(rng.integers(genome.rgc_index + 1)), params, rng)
    if rng.random() < params.p_delete and genome.n_types > 0:
        genome = remove_type(genome, 1 + int(rng.integers(genome.n_types)))
    return genome


# ---------------------------------------------------------------------------
# Crossover


def _clip(gene: TypeGene, g: int) -> TypeGene:
    kept = frozenset(t for t in gene.targets if t <= g)
    return gene if kept == gene.targets else replace(gene, targets=kept)


def crossover(parent_a: Genome, parent_b: Genome, rng: np.random.Generator) -> Genome:
    """Linked-gene crossover.

    The child takes ``n_t`` from one parent, the photoreceptor and RGC genes
    each whole from one parent, and fills every interneuron slot with a whole
    gene drawn from any slot of a coin-chosen parent. Inherited target indices
    beyond the child's RGC index are dropped.
    """
    parents = (parent_a, parent_b)
    n_t = parents[rng.integers(2)].n_types
    photoreceptor = parents[rng.integers(2)].photoreceptor
    rgc = parents[rng.integers(2)].rgc
    slots = []
    for _ in range(n_t):
        donor = parents[rng.integers(2)]
        if donor.n_types == 0:
            donor = parent_b if donor is parent_a else parent_a
        slots.append(donor.interneurons[rng.integers(donor.n_types)])
    g = n_t + 1
    return Genome(_clip(photoreceptor, g), tuple(_clip(s, g) for s in slots), rgc,
                  parent_a.limits)


# ---------------------------------------------------------------------------
# Serialization

_GENE_ORDER = ("n_c", "x_a", "x_d", "alpha_a", "beta_a", "alpha_d", "beta_d", "tau", "targets")


def _gene_to_dict(gene: TypeGene) -> dict[str, Any]:
    out = {name: getattr(gene, name) for name in _GENE_ORDER}
    out["targets"] = sorted(gene.targets)
    return out


def _gene_from_dict(data: dict[str, Any]) -> TypeGene:
    return TypeGene(
        n_c=int(data["n_c"]),
        x_a=int(data["x_a"]),
        x_d=int(data["x_d"]),
        alpha_a=float(data["alpha_a"]),
        beta_a=float(data["beta_a"]),
        alpha_d=float(data["alpha_d"]),
        beta_d=float(data["beta_d"]),
        tau=float(data["tau"]),
        targets=frozenset(int(t) for t in data["targets"]),
    )


def genome_to_dict(genome: Genome) -> dict[str, Any]:
    lim = genome.limits
    return {
        "limits": {"max_types": lim.max_types, "max_cells": lim.max_cells, "n_rgc": lim.n_rgc},
        "n_t": genome.n_types,
        "photoreceptor": _gene_to_dict(genome.photoreceptor),
        "interneurons": [_gene_to_dict(g) for g in genome.interneurons],
        "rgc": _gene_to_dict(genome.rgc),
    }


def genome_from_dict(data: dict[str, Any]) -> Genome:
    interneurons = tuple(_gene_from_dict(g) for g in data["interneurons"])
    if "n_t" in data and int(data["n_t"]) != len(interneurons):
        raise ValueError("n_t does not match the number of interneuron gene groups")
    genome = Genome(
        _gene_from_dict(data["photoreceptor"]),
        interneurons,
        _gene_from_dict(data["rgc"]),
        Limits(**data["limits"]),
    )
    genome.validate()
    return genome


def dumps(genome: Genome) -> str:
    return json.dumps(genome_to_dict(genome), indent=2)


def loads(text: str) -> Genome:
    return genome_from_dict(json.loads(text))


def iter_targets(genome: Genome) -> Iterable[tuple[int, int]]:
    """Yield every declared projection ``(pre, post)`` in canonical order."""
    for i, gene in enumerate(genome.types):
        for j in sorted(gene.targets):
            yield i, j
