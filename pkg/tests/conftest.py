import numpy as np
import pytest

from retina_ga.genome import Genome, Limits, TypeGene


def gene(n_c=24, x_a=1, x_d=1, shape=1.0, tau=5.0, targets=()):
    return TypeGene(n_c, x_a, x_d, shape, shape, shape, shape, tau, frozenset(targets))


def pass_through(limits=Limits(), tau=5.0, shape=1.0):
    """Photoreceptors projecting straight onto excitatory RGCs, nothing else."""
    return Genome(gene(limits.max_cells, tau=tau, shape=shape, targets={1}), (),
                  gene(limits.n_rgc, tau=tau, shape=shape), limits)


def random_genome(rng, limits=Limits(), n_t=None):
    """Genome with arbitrary legal genes, including interneurons and targets."""
    from retina_ga.genome import POLARITY, SHAPE_GRID, TAU_GRID

    if n_t is None:
        n_t = int(rng.integers(limits.max_types + 1))
    g = n_t + 1

    def one(n_c, allow_targets=True):
        targets = frozenset(int(t) for t in range(g + 1) if allow_targets and rng.random() < 0.4)
        return TypeGene(n_c, int(rng.choice(POLARITY)), int(rng.choice(POLARITY)),
                        *(float(rng.choice(SHAPE_GRID)) for _ in range(4)),
                        float(rng.choice(TAU_GRID)), targets)

    inter = tuple(one(int(rng.integers(1, limits.max_cells + 1))) for _ in range(n_t))
    return Genome(one(limits.max_cells), inter, one(limits.n_rgc, False), limits)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
