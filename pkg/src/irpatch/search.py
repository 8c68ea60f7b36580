"""Self-adaptive differential evolution over the unit box.

DE/rand/1/bin with per-individual scale factor and crossover rate: each
child inherits its target's meta-parameters or, with a small probability,
resamples them, so step sizes adapt without extra tuning. The loop is
synchronous per generation (children proposed from a population snapshot,
then greedy index-wise replacement), which makes parallel evaluation give
bit-identical results to serial.

Mini-batch evaluation resamples the scored subset each generation and
re-evaluates survivors whenever the batch changes, so parent and child
always compare on the same data and transform draws. Every evaluation,
including re-evaluations and post-refresh scoring, counts against the
query budget. A best-ever record is kept outside the population; long
stagnation re-initializes the worst slice of the population, never the
best individual.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SearchError
from .rng import (
    STREAM_BATCH,
    STREAM_EVAL,
    STREAM_INIT,
    STREAM_PROPOSE,
    STREAM_REFRESH,
    stream_rng,
    substream_seed,
)

IMPROVE_TOL = 1e-6


@dataclass(frozen=True)
class DeConfig:
    population: int = 50
    generations: int = 100
    f_range: tuple[float, float] = (0.1, 1.0)
    cr_range: tuple[float, float] = (0.05, 0.95)
    meta_adapt_prob: float = 0.1
    stagnation_window: int = 15
    refresh_fraction: float = 0.3
    batch_size: int | None = None  # None scores the full dataset
    query_budget: int | None = None  # None gives room for every generation

    def __post_init__(self):
        if self.population < 4:
            raise ValueError(f"population must be >= 4 for DE/rand/1, got {self.population}")
        if self.generations < 0:
            raise ValueError(f"generations must be >= 0, got {self.generations}")
        for name, lo_ok, hi_ok in (("f_range", 0.0, 2.0), ("cr_range", 0.0, 1.0)):
            lo, hi = getattr(self, name)
            if not (lo_ok <= lo <= hi <= hi_ok):
                raise ValueError(f"{name} must satisfy {lo_ok} <= lo <= hi <= {hi_ok}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not 0.0 <= self.meta_adapt_prob <= 1.0:
            raise ValueError(f"meta_adapt_prob must be in [0, 1], got {self.meta_adapt_prob}")
        if self.stagnation_window < 1:
            raise ValueError(f"stagnation_window must be >= 1, got {self.stagnation_window}")
        if not 0.0 < self.refresh_fraction < 1.0:
            raise ValueError(f"refresh_fraction must be in (0, 1), got {self.refresh_fraction}")
        if self.batch_size is not None and self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.query_budget is not None and self.query_budget < self.population:
            raise ValueError("query_budget below population cannot even initialize")

    def effective_budget(self) -> int:
        if self.query_budget is not None:
            return self.query_budget
        return self.population * (2 * self.generations + 1)


@dataclass
class Individual:
    genome: np.ndarray
    f_scale: float
    cr: float
    fitness: float = math.inf


@dataclass(frozen=True)
class SearchProblem:
    """Evaluation target: (genome, batch indices, eval seed) -> fitness.

    n_items > 0 enables mini-batch sampling over that many dataset items;
    n_items == 0 means the evaluator ignores the batch (plain functions).
    """

    dim: int
    evaluate: Callable[[np.ndarray, tuple[int, ...], int], float]
    n_items: int = 0


@dataclass(frozen=True)
class GenRecord:
    gen: int
    best: float
    mean: float
    evals: int
    refreshed: int


@dataclass(frozen=True)
class RunResult:
    best_genome: np.ndarray
    best_fitness: float
    history: tuple[GenRecord, ...]
    evals: int


def initialize(cfg: DeConfig, dim: int, seed: int) -> list[Individual]:
    """Population uniform over the unit box, meta uniform over its ranges."""
    if dim < 1:
        raise SearchError(f"genome dim must be >= 1, got {dim}")
    rng = stream_rng(seed, STREAM_INIT)
    genomes = rng.random((cfg.population, dim))
    fs = rng.uniform(*cfg.f_range, size=cfg.population)
    crs = rng.uniform(*cfg.cr_range, size=cfg.population)
    return [Individual(genome=genomes[i], f_scale=float(fs[i]), cr=float(crs[i]))
            for i in range(cfg.population)]


def propose(pop: list[Individual], target_idx: int, cfg: DeConfig, seed: int) -> Individual:
    """DE/rand/1/bin child for one target, unevaluated.

    Three distinct donors excluding the target; one guaranteed mutant
    coordinate; genome clamped to [0, 1]. Meta-parameters come from the
    target unless the adaptation coin flips, in which case the child draws
    fresh ones and uses them for its own construction.
    """
    n = len(pop)
    if n < 4:
        raise SearchError("propose needs a population of at least 4")
    rng = stream_rng(seed, STREAM_PROPOSE)
    others = [i for i in range(n) if i != target_idx]
    r1, r2, r3 = (others[j] for j in rng.choice(n - 1, size=3, replace=False))

    target = pop[target_idx]
    if rng.random() < cfg.meta_adapt_prob:
        f = float(rng.uniform(*cfg.f_range))
        cr = float(rng.uniform(*cfg.cr_range))
    else:
        f, cr = target.f_scale, target.cr

    mutant = np.clip(pop[r1].genome + f * (pop[r2].genome - pop[r3].genome), 0.0, 1.0)
    dim = len(mutant)
    cross = rng.random(dim) < cr
    cross[int(rng.integers(dim))] = True
    child = np.where(cross, mutant, target.genome)
    return Individual(genome=child, f_scale=f, cr=cr)


def _evaluate_many(
    genomes: list[np.ndarray],
    problem: SearchProblem,
    batch: tuple[int, ...],
    eval_seed: int,
    pool: ThreadPoolExecutor | None,
) -> list[float]:
    if pool is None:
        return [float(problem.evaluate(g, batch, eval_seed)) for g in genomes]
    futs = [pool.submit(problem.evaluate, g, batch, eval_seed) for g in genomes]
    return [float(f.result()) for f in futs]


def step(
    pop: list[Individual],
    problem: SearchProblem,
    gen: int,
    cfg: DeConfig,
    seed: int,
    batch: tuple[int, ...] = (),
    eval_seed: int = 0,
    max_children: int | None = None,
    pool: ThreadPoolExecutor | None = None,
) -> tuple[list[Individual], Individual, int]:
    """One synchronous generation: propose, evaluate, greedy select.

    Returns (population, best individual of the new population, evaluation
    count). Children replace their targets only on strict improvement, so a
    constant evaluator leaves the population unchanged.
    """
    n_children = len(pop) if max_children is None else min(len(pop), max_children)
    children = [propose(pop, j, cfg, substream_seed(seed, gen, j)) for j in range(n_children)]
    fits = _evaluate_many([c.genome for c in children], problem, batch, eval_seed, pool)
    for j in range(n_children):
        children[j].fitness = fits[j]
        if children[j].fitness < pop[j].fitness:
            pop[j] = children[j]
    best = min(pop, key=lambda ind: ind.fitness)
    return pop, best, n_children


def run(cfg: DeConfig, problem: SearchProblem, seed: int, workers: int = 1) -> RunResult:
    """Full optimization loop with budget accounting and stagnation refresh."""
    budget = cfg.effective_budget()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def batch_for(gen: int) -> tuple[int, ...]:
        if problem.n_items <= 0:
            return ()
        bs = problem.n_items if cfg.batch_size is None else min(cfg.batch_size, problem.n_items)
        if bs >= problem.n_items:
            return tuple(range(problem.n_items))
        rng = stream_rng(seed, STREAM_BATCH, gen)
        return tuple(sorted(int(i) for i in rng.choice(problem.n_items, size=bs, replace=False)))

    try:
        pop = initialize(cfg, problem.dim, seed)
        batch = batch_for(0)
        eval_seed = substream_seed(seed, STREAM_EVAL, 0)
        fits = _evaluate_many([ind.genome for ind in pop], problem, batch, eval_seed, pool)
        for ind, f in zip(pop, fits):
            ind.fitness = f
        evals = len(pop)

        best_idx = int(np.argmin([ind.fitness for ind in pop]))
        best_genome = pop[best_idx].genome.copy()
        best_fitness = pop[best_idx].fitness

        history: list[GenRecord] = []
        marked_best = best_fitness
        last_improve_gen = 0

        for gen in range(cfg.generations):
            if evals >= budget:
                break
            new_batch = batch_for(gen)
            if new_batch != batch:
                if evals + len(pop) >= budget:
                    break
                batch = new_batch
                eval_seed = substream_seed(seed, STREAM_EVAL, gen)
                fits = _evaluate_many([ind.genome for ind in pop], problem, batch, eval_seed, pool)
                for ind, f in zip(pop, fits):
                    ind.fitness = f
                evals += len(pop)
                best_idx = int(np.argmin([ind.fitness for ind in pop]))
                if pop[best_idx].fitness < best_fitness:
                    best_fitness = pop[best_idx].fitness
                    best_genome = pop[best_idx].genome.copy()

            pop, gen_best, used = step(
                pop, problem, gen, cfg, seed,
                batch=batch, eval_seed=eval_seed,
                max_children=budget - evals, pool=pool,
            )
            evals += used
            if gen_best.fitness < best_fitness:
                best_fitness = gen_best.fitness
                best_genome = gen_best.genome.copy()

            refreshed = 0
            if marked_best - best_fitness > IMPROVE_TOL:
                marked_best = best_fitness
                last_improve_gen = gen
            elif gen - last_improve_gen >= cfg.stagnation_window:
                refreshed = _refresh_worst(
                    pop, cfg, problem, gen, seed, batch, eval_seed,
                    budget - evals, pool,
                )
                evals += refreshed
                last_improve_gen = gen

            mean_fit = float(np.mean([ind.fitness for ind in pop]))
            history.append(
                GenRecord(gen=gen, best=best_fitness, mean=mean_fit, evals=evals, refreshed=refreshed)
            )
    finally:
        if pool is not None:
            pool.shutdown()

    return RunResult(
        best_genome=best_genome,
        best_fitness=best_fitness,
        history=tuple(history),
        evals=evals,
    )


def _refresh_worst(
    pop: list[Individual],
    cfg: DeConfig,
    problem: SearchProblem,
    gen: int,
    seed: int,
    batch: tuple[int, ...],
    eval_seed: int,
    budget_left: int,
    pool: ThreadPoolExecutor | None,
) -> int:
    """Re-initialize the worst slice, sparing the best individual."""
    n = len(pop)
    want = max(1, int(cfg.refresh_fraction * n))
    count = min(want, max(0, budget_left))
    if count == 0:
        return 0
    order = sorted(range(n), key=lambda i: pop[i].fitness, reverse=True)
    best_i = int(np.argmin([ind.fitness for ind in pop]))
    victims = [i for i in order if i != best_i][:count]
    rng = stream_rng(seed, STREAM_REFRESH, gen)
    dim = problem.dim
    genomes = rng.random((len(victims), dim))
    fs = rng.uniform(*cfg.f_range, size=len(victims))
    crs = rng.uniform(*cfg.cr_range, size=len(victims))
    fresh = [Individual(genome=genomes[k], f_scale=float(fs[k]), cr=float(crs[k]))
             for k in range(len(victims))]
    fits = _evaluate_many([ind.genome for ind in fresh], problem, batch, eval_seed, pool)
    for k, i in enumerate(victims):
        fresh[k].fitness = fits[k]
        pop[i] = fresh[k]
    return len(victims)
