"""Forward-Euler simulation of retina membrane dynamics.

Non-spiking types follow leaky integration toward ``v_rest`` and are clamped
to ``[0, 1]``. RGCs are exponential integrate-and-fire units: lower-clamped at
0, and whenever a potential reaches ``theta_r`` a spike is counted and the
potential is set to ``v_reset``.

Every function accepts a leading batch axis on the external input, so a whole
stimulus set can be simulated in one pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .phenotype import Phenotype

__all__ = ["SimParams", "SimState", "initial_state", "internal_current", "step", "run",
           "simulate", "write_trace"]


@dataclass(frozen=True)
class SimParams:
    dt: float = 1.0
    T: float = 200.0
    v_rest: float = 0.5
    theta: float = 0.8
    delta: float = 0.05
    theta_r: float = 1.0
    v_reset: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= self.dt:
            raise ValueError("T must be at least dt")
        if not 0 <= self.v_reset < self.theta_r:
            raise ValueError("need 0 <= v_reset < theta_r")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class SimState:
    v: list[np.ndarray]
    spike_counts: np.ndarray
    t: float = 0.0
    spiked: np.ndarray | None = field(default=None, repr=False)


def initial_state(phenotype: Phenotype, p: SimParams, batch_shape: tuple[int, ...] = ()) -> SimState:
    v = [np.full(batch_shape + (n,), p.v_rest) for n in phenotype.sizes]
    counts = np.zeros(batch_shape + (phenotype.sizes[-1],), dtype=np.int64)
    return SimState(v, counts, 0.0)


def internal_current(state: SimState, phenotype: Phenotype, j: int) -> np.ndarray:
    """Summed input ``V_i @ W_ij`` over every type ``i`` that projects onto ``j``."""
    ref = state.v[j]
    total = np.zeros(ref.shape)
    for i, w in phenotype.incoming(j):
        total += state.v[i] @ w
    return total


def _check(phenotype: Phenotype, i_ext: np.ndarray, p: SimParams) -> None:
    if i_ext.shape[-1] != phenotype.sizes[0]:
        raise ValueError(f"external input has {i_ext.shape[-1]} entries, "
                         f"expected {phenotype.sizes[0]} photoreceptors")
    if p.dt > phenotype.taus.min() / 2:
        raise ValueError(f"dt={p.dt} exceeds half the smallest time constant "
                         f"({phenotype.taus.min()})")


def _advance(v: list[np.ndarray], counts: np.ndarray, incoming: list, taus: np.ndarray,
             i_ext: np.ndarray, p: SimParams) -> np.ndarray:
    """One Euler step in place; returns the boolean spike array of this step."""
    currents = []
    for j in range(len(v)):
        total = None
        for i, w in incoming[j]:
            term = v[i] @ w
            total = term if total is None else total + term
        currents.append(total)
    g = len(v) - 1
    for j in range(g):
        drive = p.v_rest - v[j]
        if j == 0:
            drive = drive + i_ext
        if currents[j] is not None:
            drive = drive + currents[j]
        vj = v[j] + (p.dt / taus[j]) * drive
        np.clip(vj, 0.0, 1.0, out=vj)
        v[j] = vj
    vg = v[g]
    drive = p.v_rest - vg + p.delta * np.exp((vg - p.theta) / p.delta)
    if currents[g] is not None:
        drive = drive + currents[g]
    vg = vg + (p.dt / taus[g]) * drive
    np.maximum(vg, 0.0, out=vg)
    spiked = vg >= p.theta_r
    counts += spiked
    vg[spiked] = p.v_reset
    v[g] = vg
    return spiked


def _incoming(phenotype: Phenotype) -> list:
    return [phenotype.incoming(j) for j in range(phenotype.n_types)]


def step(state: SimState, phenotype: Phenotype, i_ext, p: SimParams) -> SimState:
    """Return the state one Euler step later; ``state`` is not modified."""
    i_ext = np.asarray(i_ext, dtype=float)
    _check(phenotype, i_ext, p)
    if len(state.v) != phenotype.n_types or any(
            v.shape[-1] != n for v, n in zip(state.v, phenotype.sizes)):
        raise ValueError("state does not match the phenotype's cell counts")
    v = [x.copy() for x in state.v]
    counts = state.spike_counts.copy()
    spiked = _advance(v, counts, _incoming(phenotype), phenotype.taus, i_ext, p)
    return SimState(v, counts, state.t + p.dt, spiked)


def simulate(phenotype: Phenotype, i_ext, p: SimParams, record: bool = False):
    """Run from rest with constant input.

    Returns ``(rates, trace)``; ``trace`` is ``None`` unless ``record`` is set,
    in which case it maps ``"v<type>"`` to arrays of shape
    ``(n_steps + 1, ..., n_cells)`` and ``"spikes"`` to a boolean raster.
    """
    i_ext = np.asarray(i_ext, dtype=float)
    _check(phenotype, i_ext, p)
    state = initial_state(phenotype, p, i_ext.shape[:-1])
    v, counts = state.v, state.spike_counts
    incoming = _incoming(phenotype)
    trace = None
    if record:
        trace = {f"v{j}": [x.copy()] for j, x in enumerate(v)}
        trace["spikes"] = [np.zeros(counts.shape, dtype=bool)]
    for _ in range(p.n_steps):
        spiked = _advance(v, counts, incoming, phenotype.taus, i_ext, p)
        if record:
            for j, x in enumerate(v):
                trace[f"v{j}"].append(x.copy())
            trace["spikes"].append(spiked.copy())
    rates = counts / p.T
    if record:
        trace = {k: np.stack(val) for k, val in trace.items()}
    return rates, trace


def run(phenotype: Phenotype, i_ext, p: SimParams) -> np.ndarray:
    """Average RGC firing rates (spike count over ``T``) under constant input."""
    return simulate(phenotype, i_ext, p)[0]


def write_trace(path: str | Path, trace: dict[str, np.ndarray], p: SimParams,
                header: str = "") -> None:
    """Dump a single-input trace as CSV: one row per step, one column per cell."""
    keys = sorted((k for k in trace if k.startswith("v")), key=lambda k: int(k[1:]))
    n_steps = trace["spikes"].shape[0]
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        writer = csv.writer(fh)
        cols = ["step", "t"]
        for k in keys:
            cols += [f"type{k[1:]}_cell{c}" for c in range(trace[k].shape[-1])]
        cols += [f"spike{c}" for c in range(trace["spikes"].shape[-1])]
        writer.writerow(cols)
        for s in range(n_steps):
            row = [s, f"{s * p.dt:.6g}"]
            for k in keys:
                row += [f"{x:.6g}" for x in np.ravel(trace[k][s])]
            row += [int(x) for x in np.ravel(trace["spikes"][s])]
            writer.writerow(row)
