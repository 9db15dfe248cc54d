from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from retina_ga.genome import (POLARITY, SHAPE_GRID, TAU_GRID, GaParams, Genome, Limits,
                              append_copy, crossover, duplicate_or_delete, dumps,
                              flip_polarity, init_genome, loads, mutate, mutate_type,
                              remove_type, walk_grid)

from conftest import gene, random_genome

FROZEN = GaParams(p_skip_type=1.0, p_skip_gene=1.0, p_targets_edit=0.0,
                  p_duplicate=0.0, p_delete=0.0)


def test_grids():
    assert SHAPE_GRID == (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    assert TAU_GRID[0] == 5 and TAU_GRID[-1] == 100 and len(TAU_GRID) == 20


def test_init_genome_shape(rng):
    g = init_genome(rng, Limits(5, 24, 5))
    assert g.interneurons == ()
    assert g.photoreceptor.n_c == 24
    assert g.rgc.n_c == 5
    g.validate()


def test_init_genome_rgc_targets_empty_and_photoreceptor_subset(rng):
    seen = set()
    for _ in range(200):
        g = init_genome(rng)
        assert g.rgc.targets == frozenset()
        assert g.photoreceptor.targets <= {1}
        seen.add(g.photoreceptor.targets)
    assert seen == {frozenset(), frozenset({1})}


def test_init_tau_uniform_chi_square(rng):
    taus = [init_genome(rng).photoreceptor.tau for _ in range(10_000)]
    counts = np.array([taus.count(t) for t in TAU_GRID])
    assert counts.sum() == 10_000
    assert stats.chisquare(counts).pvalue > 0.01


def test_walk_grid_clamps_at_boundary():
    assert walk_grid(TAU_GRID, 5.0, -3) == 5.0
    assert walk_grid(TAU_GRID, 100.0, 7) == 100.0
    assert walk_grid(TAU_GRID, 50.0, -2) == 40.0
    assert walk_grid(SHAPE_GRID, 3.5, 4) == 4.0


def _toggle_walk(value, step):
    # one unit move on a two-element domain always lands on the other element
    for _ in range(abs(step)):
        value = POLARITY[1 - POLARITY.index(value)]
    return value


@pytest.mark.parametrize("step", range(-6, 7))
@pytest.mark.parametrize("value", POLARITY)
def test_polarity_walk_matches_enumeration(value, step):
    assert flip_polarity(value, step) == _toggle_walk(value, step)


def test_polarity_odd_step_flips():
    assert flip_polarity(-1, 3) == 1
    assert flip_polarity(-1, -1) == 1
    assert flip_polarity(1, 2) == 1


def test_skip_type_is_identity(rng):
    params = GaParams(p_skip_type=1.0)
    for _ in range(50):
        g = random_genome(rng)
        assert mutate(g, params, rng) == g


def test_frozen_mutation_is_identity(rng):
    params = GaParams(p_skip_type=0.0, p_skip_gene=1.0, p_targets_edit=0.0)
    for _ in range(50):
        g = random_genome(rng)
        assert mutate(g, params, rng) == g


def test_mutate_leaves_input_untouched(rng):
    g = random_genome(rng, n_t=3)
    before = dumps(g)
    params = GaParams(p_skip_type=0.0, p_skip_gene=0.0, p_targets_edit=1.0)
    out = mutate(g, params, rng)
    assert dumps(g) == before
    assert out != g


def test_poisson_step_distribution(rng):
    lam = 1.0
    params = GaParams(p_skip_type=0.0, p_skip_gene=0.0, poisson_lambda=lam)
    start = gene(n_c=12, tau=TAU_GRID[10])
    steps = np.empty(100_000, dtype=int)
    for k in range(steps.size):
        out = mutate_type(start, params, rng, n_c_range=(1, 24), n_legal_targets=3)
        steps[k] = abs(TAU_GRID.index(out.tau) - 10)
    observed = np.array([np.sum(steps == k) for k in range(4)] + [np.sum(steps >= 4)])
    pmf = stats.poisson.pmf(np.arange(4), lam)
    expected = steps.size * np.append(pmf, 1 - pmf.sum())
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_targets_edit_adds_or_removes_one(rng):
    params = GaParams(p_skip_type=0.0, p_skip_gene=0.0, p_targets_edit=1.0)
    g = random_genome(rng, n_t=2)
    for _ in range(200):
        out = mutate(g, params, rng)
        for a, b in zip(g.types, out.types):
            assert len(a.targets ^ b.targets) <= 1
        assert out.rgc.targets == frozenset()


def test_duplication_at_capacity_is_noop(rng):
    g = random_genome(rng, n_t=5)
    params = GaParams(p_duplicate=1.0, p_delete=0.0)
    assert duplicate_or_delete(g, params, rng) == g


def test_deletion_without_interneurons_is_noop(rng):
    g = random_genome(rng, n_t=0)
    params = GaParams(p_duplicate=0.0, p_delete=1.0)
    assert duplicate_or_delete(g, params, rng) == g


def _index_map_after_deleting(n_types_total, victim):
    mapping, new = {}, 0
    for old in range(n_types_total):
        if old == victim:
            continue
        mapping[old] = new
        new += 1
    return mapping


def test_remove_type_reindexes_targets():
    inter = (gene(3, targets={1, 3}), gene(4), gene(5, targets={4}))
    g = Genome(gene(24, targets={1, 2, 4}), inter, gene(5))
    out = remove_type(g, 2)
    oracle = _index_map_after_deleting(5, 2)
    assert out.n_types == 2
    assert out.interneurons[0].targets == {1, 2}
    assert out.interneurons[0].targets == {oracle[t] for t in {1, 3}}
    assert out.photoreceptor.targets == {oracle[t] for t in {1, 4}}
    assert out.interneurons[1].targets == {3}
    out.validate()


def test_remove_type_rejects_fixed_types():
    g = Genome(gene(24), (gene(3),), gene(5))
    with pytest.raises(ValueError):
        remove_type(g, 0)
    with pytest.raises(ValueError):
        remove_type(g, 2)


def test_append_copy_inherits_targets_and_shifts_rgc():
    g = Genome(gene(24, targets={1, 2}), (gene(3, targets={2}),), gene(5))
    out = append_copy(g, 1, FROZEN, np.random.default_rng(0))
    assert out.n_types == 2
    assert out.photoreceptor.targets == {1, 3}
    assert out.interneurons[0].targets == {3}
    assert out.interneurons[1] == replace(g.interneurons[0], targets=frozenset({3}))
    out.validate()


def test_append_copy_of_photoreceptor_grows_empty_genome():
    g = Genome(gene(24, targets={1}), (), gene(5))
    out = append_copy(g, 0, FROZEN, np.random.default_rng(0))
    assert out.n_types == 1
    assert out.interneurons[0].n_c == 24
    assert out.interneurons[0].targets == {2}
    assert out.photoreceptor.targets == {2}


def test_duplication_mutates_the_copy(rng):
    params = GaParams(p_skip_type=0.0, p_skip_gene=0.0, poisson_lambda=3.0)
    g = Genome(gene(24, targets={1}), (gene(12, shape=2.0, tau=50.0),), gene(5))
    copies = [append_copy(g, 1, params, rng).interneurons[1] for _ in range(20)]
    assert any(replace(c, targets=frozenset()) != replace(g.interneurons[0], targets=frozenset())
               for c in copies)


def test_crossover_identical_single_slot_parents(rng):
    g = Genome(gene(24, targets={1, 2}), (gene(7, targets={0, 2}),), gene(5))
    for _ in range(20):
        assert crossover(g, g, rng) == g


def test_crossover_identical_parents_draw_from_gene_pool(rng):
    g = random_genome(rng, n_t=4)
    for _ in range(50):
        child = crossover(g, g, rng)
        assert child.n_types == 4
        for slot in child.interneurons:
            assert any(replace(slot, targets=frozenset()) == replace(p, targets=frozenset())
                       for p in g.interneurons)


def test_crossover_inherits_n_t_from_a_parent(rng):
    a = random_genome(rng, n_t=0)
    b = random_genome(rng, n_t=3)
    sizes = {crossover(a, b, rng).n_types for _ in range(100)}
    assert sizes == {0, 3}


def test_crossover_clips_out_of_range_targets():
    a = Genome(gene(24), (), gene(5))
    b = Genome(gene(24), (gene(3, targets={4}), gene(3), gene(3, targets={0, 4})), gene(5))
    for seed in range(100):
        child = crossover(a, b, np.random.default_rng(seed))
        g = child.rgc_index
        for t in child.types:
            assert all(idx <= g for idx in t.targets)
        child.validate()


def test_serialization_round_trip(rng):
    for _ in range(100):
        g = random_genome(rng)
        assert loads(dumps(g)) == g
        assert dumps(loads(dumps(g))) == dumps(g)


def test_deserialization_validates():
    g = Genome(gene(24), (), gene(5, targets={0}))
    with pytest.raises(ValueError):
        loads(dumps(g))


def test_operators_preserve_invariants(rng):
    params = GaParams(p_skip_type=0.2, p_skip_gene=0.2, p_duplicate=0.4, p_delete=0.3,
                      p_targets_edit=0.5, poisson_lambda=2.0)
    pool = [init_genome(rng) for _ in range(10)]
    for k in range(10_000):
        a = pool[rng.integers(len(pool))]
        op = k % 3
        if op == 0:
            out = mutate(a, params, rng)
        elif op == 1:
            out = duplicate_or_delete(a, params, rng)
        else:
            out = crossover(a, pool[rng.integers(len(pool))], rng)
        out.validate()
        pool[rng.integers(len(pool))] = out
    assert max(g.n_types for g in pool) > 0


def test_operators_are_replayable():
    params = GaParams(p_skip_type=0.1, p_skip_gene=0.1, p_targets_edit=0.5)
    g = random_genome(np.random.default_rng(5), n_t=3)
    h = random_genome(np.random.default_rng(6), n_t=1)
    for op in (lambda r: mutate(g, params, r), lambda r: duplicate_or_delete(g, params, r),
               lambda r: crossover(g, h, r), lambda r: init_genome(r)):
        assert op(np.random.default_rng(99)) == op(np.random.default_rng(99))


def test_ga_params_validation():
    with pytest.raises(ValueError, match="elite_count"):
        GaParams(population_size=10, elite_count=10)
    with pytest.raises(ValueError, match="p_delete"):
        GaParams(p_delete=1.5)
    with pytest.raises(ValueError):
        GaParams(w_r2=0.5, w_shape=0.6)
