"""Adaptive genetic optimization of per-gate pulse parameters.

The genome assigns each circuit gate an (evo_time, num_tslots) pair; fitness
is the Uhlmann fidelity between the noisy pulse-level output state and the
circuit's ideal target. The loop layers four adaptations on a generational GA
with tournament selection:

* feedback adjustment of mutation/crossover probabilities from the change in
  average fitness over an interval,
* diversity control triggered by the average pairwise Mahalanobis distance,
* elitism, and
* early stopping on a stagnant best fitness.

All randomness is drawn in the coordinator; fitness evaluations are pure, so
results are identical for any worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuits import Circuit, ideal_output_state
from .evolve import NumericalInstabilityError, PropagatorCache, SolverOptions, propagate
from .noise import NoiseParams, build_collapse_operators
from .pulse import CompilationCache, Processor, schedule_for_circuit
from .qmath import DensityMatrix, state_fidelity

__all__ = [
    "Gene",
    "GeneBounds",
    "Individual",
    "GAConfig",
    "GenerationStats",
    "initialize_population",
    "baseline_individual",
    "tournament_select",
    "crossover",
    "mutate",
    "evaluate_fitness",
    "select_elites",
    "apply_elitism",
    "replace_population",
    "population_diversity",
    "control_diversity",
    "adjust_probabilities",
    "should_stop_early",
    "run",
]

logger = logging.getLogger(__name__)

P_MUT_RANGE = (0.01, 0.5)
P_CROSS_RANGE = (0.3, 0.95)
DIVERSITY_REGULARIZATION = 1e-6
TSLOT_STEPS = (-2, -1, 1, 2)


@dataclass(frozen=True)
class Gene:
    evo_time: float
    num_tslots: int


@dataclass(frozen=True)
class GeneBounds:
    evo_min: float = 0.5
    evo_max: float = 5.0
    slot_min: int = 2
    slot_max: int = 30

    def clamp(self, evo_time: float, num_tslots: int) -> Gene:
        return Gene(
            float(min(max(evo_time, self.evo_min), self.evo_max)),
            int(min(max(num_tslots, self.slot_min), self.slot_max)),
        )


@dataclass
class Individual:
    genes: list[Gene]
    seed: int
    fitness: float | None = None
    failure: str | None = None

    def copy(self) -> "Individual":
        return Individual(list(self.genes), self.seed, self.fitness, self.failure)


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    generations: int = 30
    p_mut: float = 0.2
    p_cross: float = 0.7
    delta: float = 0.001
    interval: int = 5
    delta_p: float = 0.01
    early_stop_rounds: int = 20
    epsilon: float = 1e-4
    diversity_threshold: float = 0.5
    diversity_action: str = "mutate"
    tournament_size: int = 3
    elite_count: int = 1
    bounds: GeneBounds = field(default_factory=GeneBounds)
    master_seed: int = 42
    sigma_scale: float = 0.1
    replace_fraction: float = 0.2

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 < self.p_mut < 1 or not 0 < self.p_cross < 1:
            raise ValueError("initial p_mut and p_cross must lie strictly in (0, 1)")
        if self.tournament_size > self.population_size:
            raise ValueError("tournament_size must not exceed population_size")
        if self.elite_count >= self.population_size:
            raise ValueError("elite_count must be smaller than population_size")
        if self.diversity_action not in ("mutate", "replace"):
            raise ValueError("diversity_action must be 'mutate' or 'replace'")


@dataclass(frozen=True)
class GenerationStats:
    gen: int
    nevals: int
    avg: float
    std: float
    min: float
    max: float
    diversity: float
    p_mut_current: float
    p_cross_current: float

    def __post_init__(self):
        if not self.min - 1e-12 <= self.avg <= self.max + 1e-12:
            raise ValueError("generation stats violate min <= avg <= max")
        if self.std < 0:
            raise ValueError("std must be non-negative")


def _random_gene(bounds: GeneBounds, rng: np.random.Generator) -> Gene:
    return Gene(
        float(rng.uniform(bounds.evo_min, bounds.evo_max)),
        int(rng.integers(bounds.slot_min, bounds.slot_max + 1)),
    )


def _random_individual(n_genes: int, bounds: GeneBounds, rng: np.random.Generator) -> Individual:
    genes = [_random_gene(bounds, rng) for _ in range(n_genes)]
    return Individual(genes, seed=int(rng.integers(0, 2**63)))


def initialize_population(cfg: GAConfig, n_genes: int) -> list[Individual]:
    """N individuals with genes drawn uniformly inside the bounds."""
    rng = np.random.default_rng(cfg.master_seed)
    return [_random_individual(n_genes, cfg.bounds, rng) for _ in range(cfg.population_size)]


def baseline_individual(circuit: Circuit, seed: int = 0) -> Individual:
    """The fixed default genome: (1.0, 10) per 1-qubit gate, (3.0, 12) per
    2-qubit gate. Its fidelity defines the unoptimized reference."""
    genes = [Gene(1.0, 10) if len(g.acting_qubits) == 1 else Gene(3.0, 12) for g in circuit.gates]
    return Individual(genes, seed=seed)


def _require_evaluated(pop: list[Individual]) -> None:
    for ind in pop:
        if ind.fitness is None:
            raise RuntimeError("population contains unevaluated individuals")


def tournament_select(pop: list[Individual], k: int, rng: np.random.Generator) -> Individual:
    """Best of a uniformly drawn k-subset (drawn without replacement)."""
    if k < 1:
        raise ValueError("tournament size must be >= 1")
    _require_evaluated(pop)
    idx = rng.choice(len(pop), size=min(k, len(pop)), replace=False)
    best = max(idx, key=lambda i: (pop[i].fitness, -i))
    return pop[best]


def crossover(
    p1: Individual, p2: Individual, p_cross: float, rng: np.random.Generator
) -> tuple[Individual, Individual]:
    """Uniform crossover: with probability p_cross swap each gene pair with
    probability 1/2; otherwise return the parents unchanged."""
    if len(p1.genes) != len(p2.genes):
        raise ValueError("parents have different genome lengths")
    if rng.random() >= p_cross:
        return p1.copy(), p2.copy()
    g1, g2 = list(p1.genes), list(p2.genes)
    for i in range(len(g1)):
        if rng.random() < 0.5:
            g1[i], g2[i] = g2[i], g1[i]
    c1 = Individual(g1, seed=int(rng.integers(0, 2**63)))
    c2 = Individual(g2, seed=int(rng.integers(0, 2**63)))
    return c1, c2


def mutate(
    ind: Individual,
    p_mut: float,
    sigma_scale: float,
    bounds: GeneBounds,
    rng: np.random.Generator,
) -> Individual:
    """Per-gene mutation: Gaussian jitter on evo_time, a +-1/+-2 step on
    num_tslots, both clamped; fitness survives only if nothing changed."""
    sigma = sigma_scale * (bounds.evo_max - bounds.evo_min)
    genes = []
    changed = False
    for gene in ind.genes:
        if rng.random() < p_mut:
            new = bounds.clamp(gene.evo_time + rng.normal(0.0, sigma), gene.num_tslots + rng.choice(TSLOT_STEPS))
            changed = changed or new != gene
            genes.append(new)
        else:
            genes.append(gene)
    out = Individual(genes, seed=ind.seed)
    if not changed:
        out.fitness = ind.fitness
        out.failure = ind.failure
    return out


def evaluate_fitness(
    ind: Individual,
    circuit: Circuit,
    proc: Processor,
    noise: NoiseParams | None,
    opts: SolverOptions | None = None,
    cache: CompilationCache | None = None,
    prop_cache: PropagatorCache | None = None,
    target: DensityMatrix | None = None,
) -> float:
    """Compile the genome, propagate |0...0> under noise, score the fidelity.

    An unstable propagation scores 0 and flags the individual instead of
    aborting the run; a pathological genome is simply unfit.
    """
    if target is None:
        target = ideal_output_state(circuit).to_density()
    schedule = schedule_for_circuit(circuit, proc, ind, cache)
    collapse = []
    if noise is not None and schedule.total_time > 0:
        collapse = build_collapse_operators(noise, proc.n_qubits, schedule.total_time)
    rho0 = DensityMatrix.ground_state(proc.n_qubits)
    try:
        final = propagate(rho0, schedule, proc, collapse, opts, cache=prop_cache)
    except NumericalInstabilityError as exc:
        ind.failure = str(exc)
        logger.warning("unstable evaluation scored 0: %s", exc)
        return 0.0
    return state_fidelity(final, target)


def select_elites(pop: list[Individual], elite_count: int) -> list[Individual]:
    """Copies of the top performers, ties broken by position."""
    _require_evaluated(pop)
    order = sorted(range(len(pop)), key=lambda i: (-pop[i].fitness, i))
    return [pop[i].copy() for i in order[:elite_count]]


def apply_elitism(offspring: list[Individual], elites: list[Individual]) -> list[Individual]:
    """Substitute the worst offspring with the elite copies, preserving order."""
    _require_evaluated(offspring)
    out = list(offspring)
    worst = sorted(range(len(out)), key=lambda i: (out[i].fitness, i))[: len(elites)]
    for slot, elite in zip(worst, elites):
        out[slot] = elite
    return out


def replace_population(pop: list[Individual], offspring: list[Individual], elite_count: int) -> list[Individual]:
    """Generational replacement with elitist substitution of the worst slots."""
    return apply_elitism(offspring, select_elites(pop, elite_count))


def _genome_matrix(pop: list[Individual]) -> np.ndarray:
    return np.array([[v for g in ind.genes for v in (g.evo_time, float(g.num_tslots))] for ind in pop])


def population_diversity(pop: list[Individual]) -> float:
    """Average pairwise Mahalanobis distance of the flattened genomes, with a
    ridge-regularized population covariance."""
    if len(pop) < 2:
        raise ValueError("diversity needs at least two individuals")
    x = _genome_matrix(pop)
    n = x.shape[0]
    sigma = np.atleast_2d(np.cov(x, rowvar=False)) + DIVERSITY_REGULARIZATION * np.eye(x.shape[1])
    inv = np.linalg.inv(sigma)
    iu, ju = np.triu_indices(n, k=1)
    diffs = x[iu] - x[ju]
    d2 = np.sum((diffs @ inv) * diffs, axis=1)
    dists = np.sqrt(np.clip(d2, 0.0, None))
    return float(2.0 / (n * (n - 1)) * dists.sum())


def control_diversity(
    pop: list[Individual],
    theta: float,
    action: str,
    rng: np.random.Generator,
    cfg: GAConfig,
    evaluator,
) -> tuple[list[Individual], int, float]:
    """If diversity drops below theta, either re-mutate every non-elite with
    doubled variance or replace the worst fraction with fresh randoms.
    Returns (population, evaluations spent, measured diversity)."""
    diversity = population_diversity(pop)
    if diversity >= theta:
        return pop, 0, diversity
    elite_idx = set(
        sorted(range(len(pop)), key=lambda i: (-pop[i].fitness, i))[: cfg.elite_count]
    )
    out = list(pop)
    if action == "mutate":
        for i in range(len(out)):
            if i not in elite_idx:
                out[i] = mutate(out[i], 1.0, 2.0 * cfg.sigma_scale, cfg.bounds, rng)
    elif action == "replace":
        n_replace = max(1, round(cfg.replace_fraction * len(out)))
        non_elite = [i for i in range(len(out)) if i not in elite_idx]
        worst = sorted(non_elite, key=lambda i: (out[i].fitness, i))[:n_replace]
        for i in worst:
            out[i] = _random_individual(len(out[i].genes), cfg.bounds, rng)
    else:
        raise ValueError(f"unknown diversity action {action!r}")
    nevals = evaluator(out)
    return out, nevals, diversity


def adjust_probabilities(
    stats_history: list[GenerationStats], cfg: GAConfig, p_mut: float, p_cross: float
) -> tuple[float, float]:
    """Raise both probabilities by delta_p when average fitness stagnated over
    the interval, lower them otherwise; clamp to the working ranges."""
    if len(stats_history) < cfg.interval + 1:
        raise ValueError(f"need at least {cfg.interval + 1} generations of history")
    delta_f = stats_history[-1].avg - stats_history[-1 - cfg.interval].avg
    step = cfg.delta_p if delta_f < cfg.delta else -cfg.delta_p
    p_mut = min(max(p_mut + step, P_MUT_RANGE[0]), P_MUT_RANGE[1])
    p_cross = min(max(p_cross + step, P_CROSS_RANGE[0]), P_CROSS_RANGE[1])
    return p_mut, p_cross


def should_stop_early(best_history: list[float], rounds: int, epsilon: float) -> bool:
    """True once the best fitness gained less than epsilon over the last
    ``rounds`` generations."""
    if not best_history:
        raise ValueError("best_history must be non-empty")
    if len(best_history) < rounds + 1:
        return False
    return best_history[-1] - best_history[-1 - rounds] < epsilon


# ---------------------------------------------------------------------------
# Fitness evaluation contexts (serial and worker-pool)
# ---------------------------------------------------------------------------


class _EvalContext:
    """Everything a fitness evaluation needs, with per-process caches."""

    def __init__(
        self,
        circuit: Circuit,
        proc: Processor,
        noise: NoiseParams | None,
        opts: SolverOptions | None,
        base_seed: int,
    ):
        self.circuit = circuit
        self.proc = proc
        self.noise = noise
        self.opts = opts or SolverOptions()
        self.target = ideal_output_state(circuit).to_density()
        self.compile_cache = CompilationCache(base_seed)
        self.prop_cache = PropagatorCache()

    def evaluate(self, genes: list[Gene], seed: int) -> tuple[float, str | None]:
        ind = Individual(list(genes), seed)
        fitness = evaluate_fitness(
            ind,
            self.circuit,
            self.proc,
            self.noise,
            self.opts,
            cache=self.compile_cache,
            prop_cache=self.prop_cache,
            target=self.target,
        )
        return fitness, ind.failure


_WORKER_CTX: _EvalContext | None = None


def _init_worker(payload: dict) -> None:
    global _WORKER_CTX
    _WORKER_CTX = _EvalContext(**payload)


def _worker_evaluate(task: tuple) -> tuple[float, str | None]:
    genes, seed = task
    return _WORKER_CTX.evaluate(genes, seed)


class _PopulationEvaluator:
    """Fills in missing fitness values, serially or through a process pool,
    collecting results in population order."""

    def __init__(self, fitness_fn=None, context: _EvalContext | None = None, executor=None):
        self.fitness_fn = fitness_fn
        self.context = context
        self.executor = executor

    def __call__(self, pop: list[Individual]) -> int:
        pending = [ind for ind in pop if ind.fitness is None]
        if not pending:
            return 0
        if self.fitness_fn is not None:
            for ind in pending:
                ind.fitness = float(self.fitness_fn(ind))
        elif self.executor is not None:
            tasks = [(tuple(ind.genes), ind.seed) for ind in pending]
            for ind, (fitness, failure) in zip(pending, self.executor.map(_worker_evaluate, tasks, chunksize=1)):
                ind.fitness = fitness
                ind.failure = failure
        else:
            for ind in pending:
                ind.fitness, ind.failure = self.context.evaluate(ind.genes, ind.seed)
        return len(pending)


def _population_stats(
    pop: list[Individual], gen: int, nevals: int, diversity: float, p_mut: float, p_cross: float
) -> GenerationStats:
    values = np.array([ind.fitness for ind in pop], dtype=float)
    return GenerationStats(
        gen=gen,
        nevals=nevals,
        avg=float(values.mean()),
        std=float(values.std()),
        min=float(values.min()),
        max=float(values.max()),
        diversity=diversity,
        p_mut_current=p_mut,
        p_cross_current=p_cross,
    )


def run(
    cfg: GAConfig,
    circuit: Circuit,
    proc: Processor,
    noise: NoiseParams | None,
    opts: SolverOptions | None = None,
    workers: int = 1,
    fitness_fn=None,
) -> tuple[Individual, list[GenerationStats]]:
    """Full adaptive loop; returns the best-ever individual and the log.

    ``fitness_fn`` substitutes the pulse pipeline with a custom evaluator
    (always serial); otherwise ``workers`` > 1 spreads evaluations over a
    process pool. Either way the log is identical for any worker count.
    """
    n_genes = len(circuit.gates)
    executor = None
    context = None
    if fitness_fn is None:
        payload = {
            "circuit": circuit,
            "proc": proc,
            "noise": noise,
            "opts": opts,
            "base_seed": cfg.master_seed,
        }
        if workers > 1:
            executor = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(payload,))
        else:
            context = _EvalContext(**payload)
    evaluator = _PopulationEvaluator(fitness_fn, context, executor)

    try:
        seq = np.random.SeedSequence(cfg.master_seed)
        gen_seeds = seq.spawn(cfg.generations + 1)

        pop = initialize_population(cfg, n_genes)
        nevals = evaluator(pop)
        p_mut, p_cross = cfg.p_mut, cfg.p_cross
        diversity = population_diversity(pop)
        log = [_population_stats(pop, 0, nevals, diversity, p_mut, p_cross)]
        best = max(pop, key=lambda ind: ind.fitness).copy()
        best_history = [best.fitness]

        for gen in range(1, cfg.generations + 1):
            rng = np.random.default_rng(gen_seeds[gen])
            offspring: list[Individual] = []
            while len(offspring) < cfg.population_size:
                parent1 = tournament_select(pop, cfg.tournament_size, rng)
                parent2 = tournament_select(pop, cfg.tournament_size, rng)
                child1, child2 = crossover(parent1, parent2, p_cross, rng)
                offspring.extend([child1, child2])
            offspring = offspring[: cfg.population_size]
            offspring = [mutate(ind, p_mut, cfg.sigma_scale, cfg.bounds, rng) for ind in offspring]
            nevals = evaluator(offspring)
            pop = replace_population(pop, offspring, cfg.elite_count)
            pop, extra, diversity = control_diversity(
                pop, cfg.diversity_threshold, cfg.diversity_action, rng, cfg, evaluator
            )
            nevals += extra

            gen_best = max(pop, key=lambda ind: ind.fitness)
            if gen_best.fitness > best.fitness:
                best = gen_best.copy()
            best_history.append(best.fitness)
            log.append(_population_stats(pop, gen, nevals, diversity, p_mut, p_cross))

            if gen % cfg.interval == 0 and len(log) > cfg.interval:
                p_mut, p_cross = adjust_probabilities(log, cfg, p_mut, p_cross)
            if should_stop_early(best_history, cfg.early_stop_rounds, cfg.epsilon):
                logger.info("early stop at generation %d", gen)
                break
        return best, log
    finally:
        if executor is not None:
            executor.shutdown()
