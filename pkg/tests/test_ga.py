import numpy as np
import pytest

import pulsega.ga as ga_mod
from pulsega.circuits import build_deutsch_jozsa
from pulsega.evolve import NumericalInstabilityError
from pulsega.ga import (
    GAConfig,
    Gene,
    GeneBounds,
    GenerationStats,
    Individual,
    adjust_probabilities,
    apply_elitism,
    baseline_individual,
    control_diversity,
    crossover,
    evaluate_fitness,
    initialize_population,
    mutate,
    population_diversity,
    replace_population,
    run,
    select_elites,
    should_stop_early,
    tournament_select,
)
from pulsega.noise import NoiseParams
from pulsega.pulse import build_spin_chain_processor


def make_pop(fitnesses, n_genes=2, seed=0):
    rng = np.random.default_rng(seed)
    pop = []
    for i, f in enumerate(fitnesses):
        genes = [Gene(float(rng.uniform(0.5, 5.0)), int(rng.integers(2, 31))) for _ in range(n_genes)]
        pop.append(Individual(genes, seed=i, fitness=f))
    return pop


def stats_row(gen, avg):
    return GenerationStats(gen, 10, avg, 0.0, avg, avg, 1.0, 0.2, 0.7)


def test_initialize_population_bounds_and_determinism():
    cfg = GAConfig(population_size=50, master_seed=5)
    pop = initialize_population(cfg, 6)
    assert len(pop) == 50
    for ind in pop:
        assert len(ind.genes) == 6
        for g in ind.genes:
            assert cfg.bounds.evo_min <= g.evo_time <= cfg.bounds.evo_max
            assert cfg.bounds.slot_min <= g.num_tslots <= cfg.bounds.slot_max
        assert ind.fitness is None
    again = initialize_population(cfg, 6)
    assert [i.genes for i in again] == [i.genes for i in pop]
    assert [i.seed for i in again] == [i.seed for i in pop]


def test_initialize_population_collapsed_bounds():
    cfg = GAConfig(population_size=8, bounds=GeneBounds(2.0, 2.0, 7, 7), master_seed=1)
    pop = initialize_population(cfg, 3)
    assert all(g == Gene(2.0, 7) for ind in pop for g in ind.genes)


def test_tournament_full_size_returns_global_best():
    pop = make_pop([0.3, 0.9, 0.1, 0.5])
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert tournament_select(pop, len(pop), rng) is pop[1]


def test_tournament_size_one_is_uniform_member():
    pop = make_pop([0.3, 0.9, 0.1])
    rng = np.random.default_rng(1)
    seen = {id(tournament_select(pop, 1, rng)) for _ in range(100)}
    assert len(seen) == 3


def test_tournament_pairwise_forced():
    pop = make_pop([0.1, 0.9])
    rng = np.random.default_rng(2)
    assert tournament_select(pop, 2, rng).fitness == 0.9


def test_tournament_requires_fitness():
    pop = make_pop([0.1, None])
    with pytest.raises(RuntimeError):
        tournament_select(pop, 2, np.random.default_rng(0))


def test_crossover_zero_probability_keeps_parents():
    p1, p2 = make_pop([0.5, 0.6], n_genes=4)
    c1, c2 = crossover(p1, p2, 0.0, np.random.default_rng(3))
    assert c1.genes == p1.genes and c2.genes == p2.genes
    assert c1.fitness == 0.5 and c2.fitness == 0.6


def test_crossover_identical_parents_yield_identical_children():
    p1, _ = make_pop([0.5, 0.5], n_genes=4, seed=7)
    p2 = Individual(list(p1.genes), seed=99, fitness=0.5)
    c1, c2 = crossover(p1, p2, 1.0, np.random.default_rng(4))
    assert c1.genes == p1.genes and c2.genes == p1.genes
    assert c1.fitness is None and c2.fitness is None


def test_crossover_children_genes_come_from_parents():
    rng = np.random.default_rng(5)
    p1, p2 = make_pop([0.5, 0.6], n_genes=12, seed=8)
    c1, c2 = crossover(p1, p2, 1.0, rng)
    for i in range(12):
        assert {c1.genes[i], c2.genes[i]} == {p1.genes[i], p2.genes[i]}


def test_crossover_length_mismatch():
    p1 = Individual([Gene(1.0, 5)], seed=0, fitness=0.1)
    p2 = Individual([Gene(1.0, 5)] * 2, seed=1, fitness=0.2)
    with pytest.raises(ValueError):
        crossover(p1, p2, 1.0, np.random.default_rng(0))


def test_mutate_zero_probability_is_identity():
    ind = make_pop([0.4], n_genes=5)[0]
    out = mutate(ind, 0.0, 0.1, GeneBounds(), np.random.default_rng(6))
    assert out.genes == ind.genes
    assert out.fitness == 0.4


def test_mutate_zero_variance_steps_tslots_only():
    # genes in the interior so the clamp cannot cancel the step
    bounds = GeneBounds()
    ind = Individual([Gene(1.0 + 0.3 * i, 10 + i) for i in range(6)], seed=0, fitness=0.4)
    out = mutate(ind, 1.0, 0.0, bounds, np.random.default_rng(7))
    for old, new in zip(ind.genes, out.genes):
        assert new.evo_time == old.evo_time
        assert new.num_tslots != old.num_tslots
        assert abs(new.num_tslots - old.num_tslots) in (1, 2)
    assert out.fitness is None


def test_mutate_respects_bounds():
    bounds = GeneBounds(0.5, 5.0, 2, 30)
    rng = np.random.default_rng(8)
    ind = Individual([Gene(0.5, 2), Gene(5.0, 30)], seed=0, fitness=0.2)
    for _ in range(50):
        ind = mutate(ind, 1.0, 0.5, bounds, rng)
        for g in ind.genes:
            assert bounds.evo_min <= g.evo_time <= bounds.evo_max
            assert bounds.slot_min <= g.num_tslots <= bounds.slot_max


def test_replace_population_keeps_best_and_size():
    pop = make_pop([0.9, 0.2, 0.3, 0.4])
    offspring = make_pop([0.1, 0.15, 0.12, 0.18], seed=3)
    merged = replace_population(pop, offspring, elite_count=1)
    assert len(merged) == 4
    assert max(ind.fitness for ind in merged) == 0.9
    # the elite replaced the worst offspring slot (index 0, fitness 0.1)
    assert merged[0].fitness == 0.9
    assert [ind.fitness for ind in merged[1:]] == [0.15, 0.12, 0.18]


def test_replace_population_prefers_better_offspring():
    pop = make_pop([0.5, 0.4, 0.3, 0.2])
    offspring = make_pop([0.8, 0.9, 0.7, 0.6], seed=4)
    merged = replace_population(pop, offspring, elite_count=1)
    fits = sorted(ind.fitness for ind in merged)
    assert fits == [0.5, 0.7, 0.8, 0.9]


def test_apply_elitism_with_near_full_elite():
    pop = make_pop([0.9, 0.8, 0.7, 0.1])
    elites = select_elites(pop, 3)
    offspring = make_pop([0.2, 0.3, 0.25, 0.95], seed=5)
    merged = apply_elitism(offspring, elites)
    assert sorted(ind.fitness for ind in merged) == [0.7, 0.8, 0.9, 0.95]


def test_select_elites_copies():
    pop = make_pop([0.9, 0.8])
    elites = select_elites(pop, 1)
    elites[0].fitness = 0.0
    assert pop[0].fitness == 0.9


def test_diversity_zero_for_identical_population():
    ind = make_pop([0.5])[0]
    pop = [Individual(list(ind.genes), seed=i, fitness=0.5) for i in range(6)]
    assert population_diversity(pop) == pytest.approx(0.0, abs=1e-12)


def test_diversity_requires_two():
    with pytest.raises(ValueError):
        population_diversity(make_pop([0.5]))


def test_diversity_whitened_equals_euclidean():
    # evo_time columns with identity sample covariance (num_tslots constant,
    # so those columns carry no distance): Mahalanobis reduces to Euclidean
    # up to the 1e-6 ridge
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]) * np.sqrt(3.0 / 2.0)
    assert np.allclose(np.cov(x, rowvar=False), np.eye(2))
    pop = [
        Individual([Gene(row[0], 5), Gene(row[1], 5)], seed=i, fitness=0.5)
        for i, row in enumerate(x)
    ]
    n = len(pop)
    expected = sum(
        np.linalg.norm(x[i] - x[j]) for i in range(n) for j in range(i + 1, n)
    ) * 2.0 / (n * (n - 1))
    assert population_diversity(pop) == pytest.approx(expected, rel=1e-5)


def test_diversity_matches_brute_force():
    rng = np.random.default_rng(9)
    for trial in range(5):
        cfg = GAConfig(population_size=5, master_seed=trial)
        pop = initialize_population(cfg, 3)
        for ind in pop:
            ind.fitness = float(rng.random())
        d = population_diversity(pop)
        x = np.array([[v for g in ind.genes for v in (g.evo_time, float(g.num_tslots))] for ind in pop])
        sigma = np.cov(x, rowvar=False) + 1e-6 * np.eye(x.shape[1])
        inv = np.linalg.inv(sigma)
        total = 0.0
        for i in range(5):
            for j in range(i + 1, 5):
                diff = x[i] - x[j]
                total += np.sqrt(diff @ inv @ diff)
        assert abs(d - total * 2.0 / 20.0) < 1e-9


def count_evals(pop):
    return sum(1 for ind in pop if ind.fitness is None)


def fake_evaluator(pop):
    n = 0
    for ind in pop:
        if ind.fitness is None:
            ind.fitness = 0.5
            n += 1
    return n


def test_control_diversity_noop_when_diverse():
    cfg = GAConfig(population_size=6, master_seed=2)
    pop = initialize_population(cfg, 4)
    for i, ind in enumerate(pop):
        ind.fitness = 0.1 * i
    out, nevals, d = control_diversity(pop, 0.001, "mutate", np.random.default_rng(0), cfg, fake_evaluator)
    assert out == pop and nevals == 0 and d > 0.001


def test_control_diversity_replace_counts():
    cfg = GAConfig(population_size=50, master_seed=3, diversity_action="replace")
    base = Individual([Gene(2.0, 10)] * 3, seed=0)
    pop = [Individual(list(base.genes), seed=i, fitness=0.5 + 0.001 * i) for i in range(50)]
    out, nevals, d = control_diversity(pop, 0.5, "replace", np.random.default_rng(1), cfg, fake_evaluator)
    assert d == pytest.approx(0.0, abs=1e-9)
    changed = sum(1 for a, b in zip(pop, out) if a is not b)
    assert changed == 10 and nevals == 10
    # elite (highest fitness, index 49) untouched
    assert out[49] is pop[49]


def test_control_diversity_mutate_spares_elites():
    cfg = GAConfig(population_size=10, master_seed=4, elite_count=2)
    base = Individual([Gene(2.0, 10)] * 3, seed=0)
    pop = [Individual(list(base.genes), seed=i, fitness=0.1 * i) for i in range(10)]
    out, nevals, _ = control_diversity(pop, 0.5, "mutate", np.random.default_rng(2), cfg, fake_evaluator)
    assert out[9] is pop[9] and out[8] is pop[8]
    assert nevals == 8


def test_adjust_probabilities_piecewise_rule():
    cfg = GAConfig(delta=0.001, interval=5, delta_p=0.01)
    # stagnation: average gained only 0.0005 over the interval, below delta
    history = [stats_row(g, 0.5) for g in range(5)] + [stats_row(5, 0.5005)]
    p_mut, p_cross = adjust_probabilities(history, cfg, 0.2, 0.7)
    assert p_mut == pytest.approx(0.21) and p_cross == pytest.approx(0.71)
    # clear improvement (0.05 >= delta): both probabilities drop
    history[-1] = stats_row(5, 0.55)
    p_mut, p_cross = adjust_probabilities(history, cfg, 0.2, 0.7)
    assert p_mut == pytest.approx(0.19) and p_cross == pytest.approx(0.69)


def test_adjust_probabilities_clamps():
    cfg = GAConfig(delta=0.001, interval=2, delta_p=0.01)
    history = [stats_row(g, 0.5) for g in range(3)]
    assert adjust_probabilities(history, cfg, 0.5, 0.95) == (0.5, 0.95)
    improving = [stats_row(0, 0.1), stats_row(1, 0.3), stats_row(2, 0.6)]
    assert adjust_probabilities(improving, cfg, 0.01, 0.3) == (0.01, 0.3)


def test_adjust_probabilities_needs_history():
    cfg = GAConfig(interval=5)
    with pytest.raises(ValueError):
        adjust_probabilities([stats_row(0, 0.5)], cfg, 0.2, 0.7)


def test_early_stop_without_history_is_false():
    assert not should_stop_early([0.5] * 5, 20, 1e-4)
    with pytest.raises(ValueError):
        should_stop_early([], 20, 1e-4)


def test_early_stop_flat_window():
    assert should_stop_early([0.5] * 21, 20, 1e-4)
    assert not should_stop_early([0.5] * 20 + [0.5 + 2e-4], 20, 1e-4)


def test_early_stop_triggers_exactly_at_r():
    best = [0.1, 0.2, 0.3]  # improvements stop after generation 2
    r = 20
    g = len(best) - 1
    while not should_stop_early(best, r, 1e-4):
        best.append(best[-1])
        g += 1
    assert g == 2 + r


def test_evaluate_fitness_noiseless_dj():
    circuit = build_deutsch_jozsa(1)
    proc = build_spin_chain_processor(circuit.n_qubits)
    ind = baseline_individual(circuit)
    f = evaluate_fitness(ind, circuit, proc, None)
    assert f >= 0.99


def test_evaluate_fitness_deterministic_and_bounded():
    circuit = build_deutsch_jozsa(1)
    proc = build_spin_chain_processor(circuit.n_qubits)
    noise = NoiseParams(50.0, 30.0, p_bit_flip=0.02, p_phase_flip=0.02)
    ind = baseline_individual(circuit)
    a = evaluate_fitness(ind, circuit, proc, noise)
    b = evaluate_fitness(ind, circuit, proc, noise)
    assert a == b
    assert 0.0 <= a <= 1.0


def test_evaluate_fitness_instability_scores_zero(monkeypatch):
    circuit = build_deutsch_jozsa(1)
    proc = build_spin_chain_processor(circuit.n_qubits)

    def boom(*args, **kwargs):
        raise NumericalInstabilityError("synthetic blowup")

    monkeypatch.setattr(ga_mod, "propagate", boom)
    ind = baseline_individual(circuit)
    assert evaluate_fitness(ind, circuit, proc, None) == 0.0
    assert "synthetic blowup" in ind.failure


def sphere_fitness(center_evo=2.75, center_slots=16.0):
    def fn(ind):
        err = sum(
            (g.evo_time - center_evo) ** 2 + ((g.num_tslots - center_slots) / 10.0) ** 2
            for g in ind.genes
        )
        return 1.0 / (1.0 + err)

    return fn


def test_run_zero_generations_returns_initial_best():
    cfg = GAConfig(population_size=10, generations=0, master_seed=6)
    circuit = build_deutsch_jozsa(1)
    best, log = run(cfg, circuit, None, None, fitness_fn=sphere_fitness())
    assert len(log) == 1
    assert best.fitness == log[0].max


def test_run_best_monotone_and_population_invariants():
    cfg = GAConfig(population_size=16, generations=20, master_seed=7, early_stop_rounds=50)
    circuit = build_deutsch_jozsa(2)
    best, log = run(cfg, circuit, None, None, fitness_fn=sphere_fitness())
    maxima = [s.max for s in log]
    assert all(b >= a - 1e-12 for a, b in zip(maxima, maxima[1:]))
    assert len(log) == 21
    assert best.fitness == maxima[-1]
    for g in best.genes:
        assert cfg.bounds.evo_min <= g.evo_time <= cfg.bounds.evo_max
        assert cfg.bounds.slot_min <= g.num_tslots <= cfg.bounds.slot_max


def test_run_is_deterministic():
    cfg = GAConfig(population_size=12, generations=8, master_seed=8, early_stop_rounds=50)
    circuit = build_deutsch_jozsa(1)
    out1 = run(cfg, circuit, None, None, fitness_fn=sphere_fitness())
    out2 = run(cfg, circuit, None, None, fitness_fn=sphere_fitness())
    assert out1[1] == out2[1]
    assert out1[0].genes == out2[0].genes


def test_run_sphere_improves_across_seeds():
    circuit = build_deutsch_jozsa(2)
    wins = 0
    for seed in range(10):
        cfg = GAConfig(population_size=20, generations=50, master_seed=seed, early_stop_rounds=60)
        best, log = run(cfg, circuit, None, None, fitness_fn=sphere_fitness())
        wins += best.fitness > log[0].max
    assert wins >= 9


def test_run_early_stop_stops_loop():
    cfg = GAConfig(population_size=8, generations=40, master_seed=9, early_stop_rounds=5, epsilon=1e-4)
    circuit = build_deutsch_jozsa(1)
    best, log = run(cfg, circuit, None, None, fitness_fn=lambda ind: 0.5)
    assert len(log) - 1 == 5  # flat fitness halts right at R generations


def test_config_validation():
    with pytest.raises(ValueError):
        GAConfig(population_size=1)
    with pytest.raises(ValueError):
        GAConfig(tournament_size=100, population_size=10)
    with pytest.raises(ValueError):
        GAConfig(elite_count=10, population_size=10)
    with pytest.raises(ValueError):
        GAConfig(diversity_action="explode")
    with pytest.raises(ValueError):
        GAConfig(p_mut=0.0)


def test_generation_stats_invariants():
    with pytest.raises(ValueError):
        GenerationStats(0, 1, avg=0.9, std=0.1, min=0.1, max=0.5, diversity=1.0, p_mut_current=0.2, p_cross_current=0.7)
    with pytest.raises(ValueError):
        GenerationStats(0, 1, avg=0.3, std=-0.1, min=0.1, max=0.5, diversity=1.0, p_mut_current=0.2, p_cross_current=0.7)
