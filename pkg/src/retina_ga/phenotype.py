"""Expansion of a genome into a simulatable network."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import special

from .genome import Genome, TypeGene, iter_targets

__all__ = [
    "WEIGHT_SCALE",
    "HEAVISIDE_EPS",
    "Phenotype",
    "place_cells",
    "distance_matrix",
    "build_weights",
    "express",
    "phenotype_to_dict",
]

WEIGHT_SCALE = 0.1
HEAVISIDE_EPS = 1e-6


@dataclass(frozen=True)
class Phenotype:
    """Realized retina.

    Attributes
    ----------
    positions : tuple of ndarray
        Cell coordinates per type, canonical type order.
    weights : dict
        ``(pre, post) -> W`` with ``W`` of shape ``(n_pre, n_post)``.
    taus : ndarray
        Time constant per type.
    """

    positions: tuple[np.ndarray, ...]
    weights: dict[tuple[int, int], np.ndarray]
    taus: np.ndarray

    @property
    def n_types(self) -> int:
        return len(self.positions)

    @property
    def rgc_index(self) -> int:
        return len(self.positions) - 1

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.positions)

    def incoming(self, j: int) -> list[tuple[int, np.ndarray]]:
        """Presynaptic ``(i, W)`` pairs projecting onto type ``j``."""
        return [(i, w) for (i, jj), w in sorted(self.weights.items()) if jj == j]


def place_cells(n: int) -> np.ndarray:
    """Uniform tiling of the unit interval: ``(k + 0.5) / n``."""
    if n < 1:
        raise ValueError("need at least one cell")
    return (np.arange(n) + 0.5) / n


def distance_matrix(pos_i: np.ndarray, pos_j: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(pos_i, float)[:, None] - np.asarray(pos_j, float)[None, :])


def _log_beta_pdf(x: np.ndarray, a: float, b: float) -> np.ndarray:
    # log space keeps tiny distances from overflowing; endpoint limits come out as +/-inf
    with np.errstate(divide="ignore"):
        return special.xlogy(a - 1, x) + special.xlog1py(b - 1, -x) - special.betaln(a, b)


def build_weights(gene_i: TypeGene, gene_j: TypeGene, D: np.ndarray,
                  c: float = WEIGHT_SCALE) -> np.ndarray:
    """Signed, clipped connection matrix from type ``i`` to type ``j``.

    The axon density of ``i`` and the dendrite density of ``j`` (both Beta
    densities over lateral distance) are multiplied and thresholded; an entry
    is ``x_a(i) * x_d(j) * c`` where the joint density exceeds
    ``HEAVISIDE_EPS`` and 0 elsewhere. An infinite density at an endpoint
    always counts as firing.
    """
    D = np.asarray(D, dtype=float)
    la = _log_beta_pdf(D, gene_i.alpha_a, gene_i.beta_a)
    ld = _log_beta_pdf(D, gene_j.alpha_d, gene_j.beta_d)
    with np.errstate(invalid="ignore"):
        joint = la + ld
    fires = np.isposinf(la) | np.isposinf(ld) | (joint > np.log(HEAVISIDE_EPS))
    sign = gene_i.x_a * gene_j.x_d
    return np.where(fires, sign * c, 0.0)


def express(genome: Genome, c: float = WEIGHT_SCALE) -> Phenotype:
    types = genome.types
    positions = tuple(place_cells(gene.n_c) for gene in types)
    weights = {}
    for i, j in iter_targets(genome):
        D = distance_matrix(positions[i], positions[j])
        weights[(i, j)] = build_weights(types[i], types[j], D, c)
    for arr in (*positions, *weights.values()):
        arr.flags.writeable = False
    taus = np.array([gene.tau for gene in types], dtype=float)
    taus.flags.writeable = False
    return Phenotype(positions, weights, taus)


def phenotype_to_dict(ph: Phenotype) -> dict[str, Any]:
    """Plain structure for export; numbers rounded to 6 significant digits."""
    def sig(x):
        return float(f"{x:.6g}")

    return {
        "positions": [[sig(x) for x in p] for p in ph.positions],
        "taus": [sig(t) for t in ph.taus],
        "weights": [
            {"pre": i, "post": j, "shape": list(w.shape),
             "values": [[sig(x) for x in row] for row in w]}
            for (i, j), w in sorted(ph.weights.items())
        ],
    }
