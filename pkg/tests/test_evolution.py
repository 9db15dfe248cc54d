import json

import numpy as np
import pytest

from retina_ga.dynamics import SimParams
from retina_ga.evolution import (SELECTION_EPS, Evaluator, Individual, elite_order, evolve,
                                 load_checkpoint, log_columns, log_row, next_generation,
                                 operator_rng, run_evolution, save_checkpoint, select_parent,
                                 selection_probability)
from retina_ga.fitness import FitnessReport, shape_gain
from retina_ga.genome import GaParams, Limits, dumps, init_genome
from retina_ga.stimuli import StimulusConfig, make_stimulus_set

from conftest import random_genome


def fake_report(fitness):
    return FitnessReport(r2=fitness, shape_gain=0.0, fitness=fitness)


def structural_evaluator(genomes):
    """Cheap deterministic stand-in rewarding interneurons and single targets."""
    out = []
    for g in genomes:
        f = 0.1 * g.n_types + 0.1 * shape_gain(g) - 0.02 * len(g.photoreceptor.targets)
        out.append(FitnessReport(r2=0.0, shape_gain=shape_gain(g), fitness=f))
    return out


def test_selection_probability_examples():
    assert selection_probability(0.3, 0.3) == 0.5
    assert selection_probability(-1.0, -1.0) == 0.5
    eps = SELECTION_EPS
    assert selection_probability(1.0, -1.0) == pytest.approx((1 + eps) / (1 + 2 * eps), abs=1e-15)
    assert selection_probability(1.0, -1.0) == pytest.approx(0.999, abs=1e-3)


def test_selection_monte_carlo():
    rng = np.random.default_rng(0)
    a, b = Individual(None, fake_report(0.6)), Individual(None, fake_report(0.2))
    wins = sum(select_parent(a, b, rng) is a for _ in range(100_000))
    sa, sb = (0.6 + 1) / 2 + SELECTION_EPS, (0.2 + 1) / 2 + SELECTION_EPS
    assert abs(wins / 100_000 - sa / (sa + sb)) <= 0.01


def test_better_rival_is_favoured(rng):
    # fitness reaches -0.85 - 0.15 * 5 = -1.6 when every interneuron projects everywhere
    for _ in range(2000):
        x, y = sorted(rng.uniform(-1.6, 1.0, 2))
        if x < y:
            p = selection_probability(y, x)
            assert 0.5 < p < 1.0


def test_selection_shift_is_continuous_below_minus_one():
    below = selection_probability(-1.0 - 1e-12, 0.0)
    at = selection_probability(-1.0, 0.0)
    assert below == pytest.approx(at, abs=1e-9)
    assert 0 < selection_probability(-1.6, 1.0) < selection_probability(-1.2, 1.0)


def test_elite_order_breaks_ties_by_index():
    assert elite_order([0.1, 0.5, 0.5, -1.0, 0.5]) == [1, 2, 4, 0, 3]


def _population(rng, fits):
    return [Individual(random_genome(rng), fake_report(f)) for f in fits]


def test_next_generation_structure(rng):
    params = GaParams(population_size=12, elite_count=3)
    pop = _population(rng, rng.normal(size=12))
    nxt = next_generation(pop, params, rng)
    assert len(nxt) == 12
    order = elite_order([p.fitness for p in pop])
    assert [ind is pop[i] for ind, i in zip(nxt[:3], order[:3])] == [True] * 3
    assert all(ind.report is None for ind in nxt[3:])
    for ind in nxt:
        ind.genome.validate()


def test_degenerate_operators_clone_tournament_winners(rng):
    params = GaParams(population_size=10, elite_count=2, crossover_rate=0.0, p_skip_type=1.0,
                      p_duplicate=0.0, p_delete=0.0)
    pop = _population(rng, rng.normal(size=10))
    pool = {dumps(p.genome) for p in pop}
    nxt = next_generation(pop, params, rng)
    assert all(dumps(ind.genome) in pool for ind in nxt)


def test_small_population_rejected(rng):
    with pytest.raises(ValueError):
        next_generation(_population(rng, [0.0] * 3), GaParams(population_size=3, elite_count=1), rng)


def test_generations_one_yields_one_record():
    params = GaParams(population_size=6, elite_count=2, generations=1)
    out = list(evolve(params, structural_evaluator, limits=Limits()))
    assert len(out) == 1
    record, nxt_index, population = out[0]
    assert record.generation == 0 and nxt_index == 1
    assert all(ind.report is not None for ind in population)
    assert len(record.fitness) == 6


def _stream(params, evaluator=structural_evaluator, trial=0):
    return [(r.fitness, r.elite_indices, tuple(dumps(g) for g in r.elite_genomes), r.rng_key)
            for r, _, _ in evolve(params, evaluator, trial=trial)]


def test_replay_is_identical():
    params = GaParams(population_size=10, elite_count=2, generations=15, rng_seed=4)
    assert _stream(params) == _stream(params)
    assert _stream(params) != _stream(params, trial=1)


def test_elitism_is_monotone_and_population_constant():
    params = GaParams(population_size=12, elite_count=3, generations=40, rng_seed=1)
    records = [(r, pop) for r, _, pop in evolve(params, structural_evaluator)]
    mins = [r.min_elite for r, _ in records]
    assert all(b >= a for a, b in zip(mins, mins[1:]))
    assert all(len(pop) == 12 for _, pop in records)
    for r, _ in records:
        top = sorted(r.fitness, reverse=True)[:3]
        assert sorted(r.elite_fitness, reverse=True) == top
    assert max(g.n_types for g in records[-1][0].elite_genomes) > 0


def test_elites_are_carried_unchanged():
    params = GaParams(population_size=10, elite_count=3, generations=10, rng_seed=2)
    seen = list(evolve(params, structural_evaluator))
    for (rec, _, pop) in seen[:-1]:
        for k, g in enumerate(rec.elite_genomes):
            assert pop[k].genome == g


def test_operator_streams_are_independent():
    a = operator_rng(0, 0, 1).random(4)
    b = operator_rng(0, 0, 2).random(4)
    c = operator_rng(0, 1, 1).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, operator_rng(0, 0, 1).random(4))


@pytest.fixture(scope="module")
def tiny_stimuli():
    return make_stimulus_set(StimulusConfig(train_count=30, test_count=10), 0)


def test_run_evolution_worker_count_does_not_matter(tiny_stimuli):
    params = GaParams(population_size=8, elite_count=2, generations=3, rng_seed=9)
    serial = run_evolution(params, SimParams(), tiny_stimuli, workers=1)
    parallel = run_evolution(params, SimParams(), tiny_stimuli, workers=3)
    assert [r.fitness for r in serial] == [r.fitness for r in parallel]
    assert [r.elite_genomes for r in serial] == [r.elite_genomes for r in parallel]


def test_evaluator_matches_direct_evaluation(tiny_stimuli, rng):
    from retina_ga.fitness import evaluate

    genomes = [random_genome(rng) for _ in range(4)]
    with Evaluator(tiny_stimuli, SimParams(), GaParams(), workers=2) as ev:
        reports = ev(genomes)
    direct = [evaluate(g, tiny_stimuli, SimParams(), GaParams()) for g in genomes]
    assert reports == direct
    assert Evaluator(tiny_stimuli, SimParams(), GaParams())([]) == []


def test_checkpoint_round_trip(tmp_path, rng):
    pop = [Individual(init_genome(rng)), Individual(random_genome(rng), fake_report(0.25))]
    path = tmp_path / "ck.json"
    cfg = {"ga": {"rng_seed": 7}}
    save_checkpoint(path, header={"config_hash": "abc"}, config=cfg, trial=2, generation=5,
                    population=pop)
    data = load_checkpoint(path)
    assert data["population"] == pop
    assert data["generation"] == 5 and data["trial"] == 2
    assert data["rng"] == {"seed": 7, "spawn_key": [1, 2, 5]}
    assert not (tmp_path / "ck.json.tmp").exists()


def test_resumed_evolution_splices_exactly(tmp_path):
    params = GaParams(population_size=10, elite_count=2, generations=12, rng_seed=3)
    full = _stream(params)
    head = []
    for rec, nxt, pop in evolve(params, structural_evaluator):
        head.append(rec)
        if nxt == 6:
            save_checkpoint(tmp_path / "ck.json", header={"config_hash": "x"},
                            config={"ga": {"rng_seed": 3}}, trial=0, generation=nxt,
                            population=pop)
            break
    data = load_checkpoint(tmp_path / "ck.json")
    tail = [r for r, _, _ in evolve(params, structural_evaluator,
                                    start=(data["generation"], data["population"]))]
    spliced = [(r.fitness, r.elite_indices, tuple(dumps(g) for g in r.elite_genomes), r.rng_key)
               for r in head + tail]
    assert spliced == full


@pytest.mark.parametrize("text", ["", "{", json.dumps({"population": [{}]}),
                                  json.dumps({"header": {}, "population": [], "generation": 1,
                                              "trial": 0, "config": {}})])
def test_corrupt_checkpoint_raises(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(ValueError, match="corrupt checkpoint"):
        load_checkpoint(path)


def test_log_row_layout():
    params = GaParams(population_size=6, elite_count=2, generations=1)
    rec = next(evolve(params, structural_evaluator))[0]
    row = log_row(rec)
    assert len(row) == len(log_columns(2))
    assert row[0] == "0"
    assert float(row[-2]) == max(rec.fitness)
    assert float(row[1]) == min(rec.fitness)
