"""Differential evolution: operators, budget accounting, determinism.

The propose kernel is pinned by an exact replay of its documented draw
order; run() is exercised on analytic objectives where convergence and
bookkeeping can be asserted tightly.
"""

import numpy as np
import pytest

from irpatch import DeConfig, SearchProblem, run
from irpatch.errors import SearchError
from irpatch.rng import STREAM_PROPOSE, stream_rng
from irpatch.search import Individual, _refresh_worst, initialize, propose, step

DIM = 5
CENTER = np.array([0.35, 0.6, 0.2, 0.8, 0.45])


def sphere(g, batch, seed):
    return float(g @ g)


def shifted_sphere(g, batch, seed):
    d = g - CENTER
    return float(d @ d)


def constant(g, batch, seed):
    return 1.0


class TestDeConfig:
    def test_shipped_defaults(self):
        cfg = DeConfig()
        assert cfg.population == 50
        assert cfg.generations == 100
        assert cfg.f_range == (0.1, 1.0)
        assert cfg.cr_range == (0.05, 0.95)
        assert cfg.meta_adapt_prob == 0.1
        assert cfg.stagnation_window == 15
        assert cfg.refresh_fraction == 0.3
        assert cfg.batch_size is None
        assert cfg.query_budget is None
        assert cfg.effective_budget() == 50 * 201

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"population": 3},
            {"generations": -1},
            {"f_range": (1.0, 0.1)},
            {"f_range": (0.1, 2.5)},
            {"cr_range": (-0.1, 0.9)},
            {"meta_adapt_prob": 1.5},
            {"stagnation_window": 0},
            {"refresh_fraction": 0.0},
            {"refresh_fraction": 1.0},
            {"batch_size": 1},
            {"population": 10, "query_budget": 9},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            DeConfig(**kwargs)

    def test_explicit_budget_wins(self):
        assert DeConfig(population=10, query_budget=123).effective_budget() == 123


class TestInitialize:
    def test_population_layout(self):
        cfg = DeConfig(population=12)
        pop = initialize(cfg, 7, seed=3)
        assert len(pop) == 12
        for ind in pop:
            assert ind.genome.shape == (7,)
            assert np.all((ind.genome >= 0.0) & (ind.genome <= 1.0))
            assert 0.1 <= ind.f_scale <= 1.0
            assert 0.05 <= ind.cr <= 0.95
            assert ind.fitness == np.inf

    def test_deterministic(self):
        cfg = DeConfig(population=6)
        a = initialize(cfg, 4, seed=9)
        b = initialize(cfg, 4, seed=9)
        for x, y in zip(a, b):
            assert np.array_equal(x.genome, y.genome)
            assert (x.f_scale, x.cr) == (y.f_scale, y.cr)
        c = initialize(cfg, 4, seed=10)
        assert not np.array_equal(a[0].genome, c[0].genome)

    def test_rejects_zero_dim(self):
        with pytest.raises(SearchError):
            initialize(DeConfig(population=4), 0, seed=1)


def _propose_replay(pop, target_idx, cfg, seed):
    """Literal replay of the documented draw order; pins RNG consumption."""
    rng = stream_rng(seed, STREAM_PROPOSE)
    n = len(pop)
    others = [i for i in range(n) if i != target_idx]
    r1, r2, r3 = (others[j] for j in rng.choice(n - 1, size=3, replace=False))
    target = pop[target_idx]
    if rng.random() < cfg.meta_adapt_prob:
        f = float(rng.uniform(*cfg.f_range))
        cr = float(rng.uniform(*cfg.cr_range))
    else:
        f, cr = target.f_scale, target.cr
    mutant = np.clip(pop[r1].genome + f * (pop[r2].genome - pop[r3].genome), 0.0, 1.0)
    cross = rng.random(len(mutant)) < cr
    cross[int(rng.integers(len(mutant)))] = True
    return np.where(cross, mutant, target.genome), f, cr


class TestPropose:
    @pytest.fixture
    def pop(self):
        return initialize(DeConfig(population=8), DIM, seed=5)

    def test_matches_replay(self, pop):
        cfg = DeConfig(population=8)
        for tgt in (0, 3, 7):
            for seed in (11, 12):
                child = propose(pop, tgt, cfg, seed)
                genome, f, cr = _propose_replay(pop, tgt, cfg, seed)
                assert np.array_equal(child.genome, genome)
                assert (child.f_scale, child.cr) == (f, cr)

    def test_child_stays_in_box(self, pop):
        cfg = DeConfig(population=8, f_range=(2.0, 2.0))
        for seed in range(20):
            child = propose(pop, 0, cfg, seed)
            assert np.all((child.genome >= 0.0) & (child.genome <= 1.0))

    def test_zero_cr_changes_at_most_one_coordinate(self):
        pop = initialize(DeConfig(population=8, cr_range=(0.0, 0.0)), DIM, seed=2)
        cfg = DeConfig(population=8, cr_range=(0.0, 0.0), meta_adapt_prob=0.0)
        for seed in range(10):
            child = propose(pop, 2, cfg, seed)
            assert (child.genome != pop[2].genome).sum() <= 1
            assert child.f_scale == pop[2].f_scale

    def test_meta_adaptation_redraws(self, pop):
        cfg = DeConfig(population=8, meta_adapt_prob=1.0, f_range=(0.4, 0.6))
        child = propose(pop, 0, cfg, 7)
        assert 0.4 <= child.f_scale <= 0.6

    def test_needs_four_individuals(self, pop):
        with pytest.raises(SearchError):
            propose(pop[:3], 0, DeConfig(), 1)


class TestStep:
    def test_constant_fitness_never_replaces(self):
        cfg = DeConfig(population=6)
        pop = initialize(cfg, DIM, seed=4)
        for ind in pop:
            ind.fitness = 1.0
        before = [ind.genome.copy() for ind in pop]
        pop, best, used = step(pop, SearchProblem(dim=DIM, evaluate=constant), 0, cfg, 4)
        assert used == 6
        assert best.fitness == 1.0
        for ind, old in zip(pop, before):
            assert np.array_equal(ind.genome, old)

    def test_slotwise_monotone_improvement(self):
        cfg = DeConfig(population=8)
        problem = SearchProblem(dim=DIM, evaluate=sphere)
        pop = initialize(cfg, DIM, seed=6)
        for ind in pop:
            ind.fitness = sphere(ind.genome, (), 0)
        before = [ind.fitness for ind in pop]
        for gen in range(5):
            pop, _, _ = step(pop, problem, gen, cfg, 6)
        for ind, old in zip(pop, before):
            assert ind.fitness <= old
            assert abs(ind.fitness - sphere(ind.genome, (), 0)) < 1e-15

    def test_max_children_caps_evaluations(self):
        cfg = DeConfig(population=10)
        pop = initialize(cfg, DIM, seed=8)
        for ind in pop:
            ind.fitness = sphere(ind.genome, (), 0)
        _, _, used = step(pop, SearchProblem(dim=DIM, evaluate=sphere), 0, cfg, 8,
                          max_children=3)
        assert used == 3


class TestRun:
    def test_sphere_reaches_corner_optimum(self):
        cfg = DeConfig(population=20, generations=100)
        r = run(cfg, SearchProblem(dim=DIM, evaluate=sphere), seed=0)
        assert r.best_fitness <= 1e-12
        assert np.all(r.best_genome <= 1e-6)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_interior_optimum_converges(self, seed):
        cfg = DeConfig(population=20, generations=100)
        r = run(cfg, SearchProblem(dim=DIM, evaluate=shifted_sphere), seed=seed)
        assert r.best_fitness < 1e-7
        assert np.abs(r.best_genome - CENTER).max() < 1e-3

    def test_best_ever_is_monotone_and_consistent(self):
        cfg = DeConfig(population=12, generations=30)
        r = run(cfg, SearchProblem(dim=DIM, evaluate=shifted_sphere), seed=3)
        bests = [rec.best for rec in r.history]
        assert all(b1 >= b2 for b1, b2 in zip(bests, bests[1:]))
        assert r.best_fitness == bests[-1]
        assert abs(shifted_sphere(r.best_genome, (), 0) - r.best_fitness) < 1e-15
        assert [rec.gen for rec in r.history] == list(range(30))

    def test_deterministic_across_runs_and_workers(self):
        cfg = DeConfig(population=8, generations=10, batch_size=3)
        problem = SearchProblem(dim=4, evaluate=shifted_sphere_batchy, n_items=6)
        a = run(cfg, problem, seed=5, workers=1)
        b = run(cfg, problem, seed=5, workers=4)
        assert np.array_equal(a.best_genome, b.best_genome)
        assert a.best_fitness == b.best_fitness
        assert a.history == b.history
        assert a.evals == b.evals
        c = run(cfg, problem, seed=6)
        assert not np.array_equal(a.best_genome, c.best_genome)

    def test_budget_is_never_exceeded(self):
        for budget in (20, 27, 55, 113):
            cfg = DeConfig(population=20, generations=50, query_budget=budget)
            r = run(cfg, SearchProblem(dim=DIM, evaluate=sphere), seed=1)
            assert r.evals <= budget
            assert all(rec.evals <= budget for rec in r.history)

    def test_budget_of_one_population_stops_after_init(self):
        cfg = DeConfig(population=20, generations=50, query_budget=20)
        r = run(cfg, SearchProblem(dim=DIM, evaluate=sphere), seed=2)
        assert r.evals == 20
        assert r.history == ()
        assert np.isfinite(r.best_fitness)

    def test_partial_generation_spends_exact_remainder(self):
        cfg = DeConfig(population=20, generations=50, query_budget=27)
        r = run(cfg, SearchProblem(dim=DIM, evaluate=sphere), seed=2)
        assert r.evals == 27
        assert len(r.history) == 1
        assert r.history[0].evals == 27

    def test_zero_generations(self):
        cfg = DeConfig(population=6, generations=0)
        r = run(cfg, SearchProblem(dim=DIM, evaluate=sphere), seed=4)
        assert r.evals == 6
        assert r.history == ()

    def test_full_batch_keeps_one_eval_seed(self):
        seen = []

        def spy(g, batch, eval_seed):
            seen.append((batch, eval_seed))
            return float(g @ g)

        cfg = DeConfig(population=6, generations=4)
        run(cfg, SearchProblem(dim=3, evaluate=spy, n_items=5), seed=7)
        batches = {b for b, _ in seen}
        seeds = {s for _, s in seen}
        assert batches == {(0, 1, 2, 3, 4)}
        assert len(seeds) == 1
        assert len(seen) == 6 * 5  # init + 4 generations, no re-evaluations

    def test_minibatch_resamples_and_reevaluates(self):
        seen = []

        def spy(g, batch, eval_seed):
            seen.append((batch, eval_seed))
            return float(g @ g)

        cfg = DeConfig(population=6, generations=4, batch_size=3)
        r = run(cfg, SearchProblem(dim=3, evaluate=spy, n_items=8), seed=7)
        for batch, _ in seen:
            assert len(batch) == 3
            assert batch == tuple(sorted(batch))
            assert all(0 <= i < 8 for i in batch)
        # every evaluation in a generation shares one (batch, seed) pair
        assert len(set(seen)) <= 5
        assert len({s for _, s in seen}) > 1
        # batch changes charge full population re-evaluations, nothing else
        assert r.evals == len(seen)
        assert len(seen) % 6 == 0
        assert 6 + 4 * 6 <= len(seen) <= 6 + 4 * 6 + 3 * 6

    def test_stagnation_refresh_schedule(self):
        cfg = DeConfig(population=5, generations=5, stagnation_window=2,
                       refresh_fraction=0.3)
        r = run(cfg, SearchProblem(dim=3, evaluate=constant), seed=9)
        assert [rec.refreshed for rec in r.history] == [0, 0, 1, 0, 1]
        assert r.evals == 5 + 5 * 5 + 2
        assert r.best_fitness == 1.0


def shifted_sphere_batchy(g, batch, seed):
    # batch-aware flavor so mini-batch plumbing gets exercised
    d = g - CENTER[: len(g)]
    return float(d @ d) * (1.0 + 0.01 * len(batch)) + 1e-6 * seed % 1.0


class TestRefreshWorst:
    def _pop(self):
        return [
            Individual(genome=np.full(3, 0.1 * i), f_scale=0.5, cr=0.5, fitness=float(i))
            for i in range(5)
        ]

    def test_replaces_worst_spares_best(self):
        pop = self._pop()
        cfg = DeConfig(population=5, refresh_fraction=0.5)
        used = _refresh_worst(
            pop, cfg, SearchProblem(dim=3, evaluate=sphere), gen=3, seed=11,
            batch=(), eval_seed=0, budget_left=10, pool=None,
        )
        assert used == 2
        assert pop[0].fitness == 0.0  # best untouched
        for i in (4, 3):
            assert not np.allclose(pop[i].genome, 0.1 * i)
            assert abs(pop[i].fitness - sphere(pop[i].genome, (), 0)) < 1e-15
        for i in (1, 2):
            assert pop[i].fitness == float(i)

    def test_budget_truncates_refresh(self):
        pop = self._pop()
        cfg = DeConfig(population=5, refresh_fraction=0.5)
        used = _refresh_worst(
            pop, cfg, SearchProblem(dim=3, evaluate=sphere), gen=3, seed=11,
            batch=(), eval_seed=0, budget_left=1, pool=None,
        )
        assert used == 1
        used = _refresh_worst(
            pop, cfg, SearchProblem(dim=3, evaluate=sphere), gen=4, seed=11,
            batch=(), eval_seed=0, budget_left=0, pool=None,
        )
        assert used == 0
