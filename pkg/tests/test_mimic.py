import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracesmith import ValidationError
from tracesmith.emulator import EmulatorConfig
from tracesmith.mimic import (N_GENES, EvalContext, Goal, SearchConfig, brute_force_fronts,
                              canonical, crossover, crowding_distance, decode, diverge_cost, encode,
                              evaluate, fast_nondominated_sort, mutate, mutate_one, random_genome,
                              resemble_cost, run_search, sa_accept_probability, validate, write_best,
                              write_epochs)
from tracesmith.mimic.evaluate import f1_cost
from tracesmith.mimic.genome import DOMAIN_SIZES

genomes = st.tuples(*[st.integers(0, int(n) - 1) for n in DOMAIN_SIZES])


# genome operators

@given(g=genomes, seed=st.integers(0, 2**32 - 1))
def test_mutate_zero_is_identity(g, seed):
    assert mutate(g, 0.0, np.random.default_rng(seed)) == g


@given(g=genomes, seed=st.integers(0, 2**32 - 1))
def test_mutate_one_changes_every_gene(g, seed):
    out = mutate(g, 1.0, np.random.default_rng(seed))
    assert all(a != b for a, b in zip(out, g))
    validate(out)


@given(g=genomes, seed=st.integers(0, 2**32 - 1))
def test_mutate_one_gene(g, seed):
    out = mutate_one(g, np.random.default_rng(seed))
    assert sum(a != b for a, b in zip(out, g)) == 1


def test_mutation_rate_monte_carlo():
    rng = np.random.default_rng(0)
    g = (0,) * N_GENES
    changed = [sum(a != b for a, b in zip(mutate(g, 0.1, rng), g)) for _ in range(10_000)]
    assert abs(np.mean(changed) - 1.2) <= 0.1


def test_mutate_rejects_bad_probability():
    with pytest.raises(ValueError):
        mutate((0,) * N_GENES, 1.5, np.random.default_rng(0))


@given(g=genomes, seed=st.integers(0, 2**32 - 1))
def test_crossover_of_equal_parents(g, seed):
    assert crossover(g, g, np.random.default_rng(seed)) == (g, g)


@given(a=genomes, b=genomes, seed=st.integers(0, 2**32 - 1))
def test_crossover_genes_come_from_parents(a, b, seed):
    c1, c2 = crossover(a, b, np.random.default_rng(seed))
    for x, y, u, v in zip(a, b, c1, c2):
        assert {u, v} == {x, y}


def test_crossover_mixes_evenly():
    rng = np.random.default_rng(1)
    a, b = (0,) * N_GENES, tuple(int(n) - 1 for n in DOMAIN_SIZES)
    from_a = [np.mean([u == x for u, x in zip(crossover(a, b, rng)[0], a)]) for _ in range(4000)]
    assert abs(np.mean(from_a) - 0.5) <= 0.05


@settings(max_examples=200, deadline=None)
@given(g=genomes)
def test_encode_decode_round_trip(g):
    cfg = decode(g, EmulatorConfig(exclude=()))
    assert encode(cfg) == canonical(g)
    assert canonical(canonical(g)) == canonical(g)


def test_random_genome_is_valid():
    rng = np.random.default_rng(3)
    for _ in range(50):
        validate(random_genome(rng))


def test_validate_errors():
    with pytest.raises(ValidationError):
        validate((0,) * (N_GENES - 1))
    with pytest.raises(ValidationError):
        validate((int(DOMAIN_SIZES[0]),) + (0,) * (N_GENES - 1))


# non-dominated sorting and crowding

def test_fronts_examples():
    assert fast_nondominated_sort([3, 1, 2]) == [[1], [2], [0]]
    assert fast_nondominated_sort([(1, 4), (2, 2), (4, 1), (3, 3)]) == [[0, 1, 2], [3]]
    assert fast_nondominated_sort([(1, 1)] * 4) == [[0, 1, 2, 3]]
    with pytest.raises(ValueError):
        fast_nondominated_sort([])


_pts = st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8), st.integers(0, 8)),
                min_size=1, max_size=64)


@settings(max_examples=150, deadline=None)
@given(pts=_pts, k=st.integers(1, 3))
def test_fronts_match_brute_force(pts, k):
    pts = [p[:k] for p in pts]
    fronts = fast_nondominated_sort(pts)
    assert fronts == brute_force_fronts(pts)
    assert sorted(i for f in fronts for i in f) == list(range(len(pts)))


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance([(0, 1), (1, 0)])))
    d = crowding_distance([[0], [5], [10]])
    assert np.isinf(d[0]) and np.isinf(d[2]) and d[1] == pytest.approx(1.0)
    flat = crowding_distance([(2, 2), (2, 2), (2, 2)])
    assert flat[1] == 0.0


@given(pts=st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=30))
def test_crowding_non_negative(pts):
    d = crowding_distance(pts)
    assert d.shape == (len(pts),)
    assert np.all(d >= 0)


# searches

def test_sa_acceptance():
    assert sa_accept_probability(0, 1000) == 1.0
    assert sa_accept_probability(-5, 1) == 1.0
    assert sa_accept_probability(693.1, 1000) == pytest.approx(0.5, abs=1e-4)


def test_search_config_validation():
    with pytest.raises(ValidationError):
        SearchConfig(algorithm="tabu")
    with pytest.raises(ValidationError):
        SearchConfig(population=7)
    with pytest.raises(ValidationError):
        SearchConfig(population=2)
    with pytest.raises(ValidationError):
        SearchConfig(crossover_p=1.5)
    with pytest.raises(ValidationError):
        SearchConfig(algorithm="sa", cooling=0)
    SearchConfig(algorithm="rw", population=7)


def _distance_to(target_gene=10, idx=10):
    def fn(g):
        return (float(abs(g[idx] - target_gene)),)
    return fn


def _sum_cost(g):
    return (float(sum(g)),)


@pytest.mark.parametrize("algo", ["nsga2", "rw", "sa", "gga"])
def test_best_so_far_is_monotone(algo):
    res = run_search(_sum_cost, SearchConfig(algorithm=algo, population=10, generations=15, seed=2))
    curve = res.best_curve()
    assert len(res.epochs) == 15
    assert all(b <= a for a, b in zip(curve, curve[1:]))
    assert res.best_cost == curve[-1] == _sum_cost(res.best_genome)[0]
    assert res.epochs[-1].evaluations == res.evaluations
    for e in res.epochs:
        assert e.min <= e.mean <= e.max and e.best_so_far <= e.min


def test_nsga2_solves_convex_objective():
    res = run_search(_distance_to(), SearchConfig(population=20, generations=30, seed=0))
    assert res.best_cost == 0.0
    assert res.best_genome[10] == 10


def test_early_stop():
    res = run_search(_distance_to(), SearchConfig(population=20, generations=200, seed=0,
                                                  early_stop=0.0))
    assert res.best_cost == 0.0 and len(res.epochs) < 200


def test_nsga2_two_objectives():
    def fn(g):
        return (float(g[0]), float(17 - g[0]) + g[1])
    res = run_search(fn, SearchConfig(population=20, generations=20, seed=1))
    assert len(res.costs[0]) == 2
    front = fast_nondominated_sort(res.costs)[0]
    assert len(front) > 1


def test_higher_elitism_not_worse_early():
    def best_at_10(frac):
        vals = []
        for seed in range(5):
            res = run_search(_sum_cost, SearchConfig(population=20, generations=10, seed=seed,
                                                     elitism_fraction=frac))
            vals.append(res.best_curve()[-1])
        return np.mean(vals)
    assert best_at_10(0.3) <= best_at_10(0.1) + 1.0


def test_search_is_deterministic():
    cfg = SearchConfig(algorithm="gga", population=10, generations=5, seed=9)
    a, b = run_search(_sum_cost, cfg), run_search(_sum_cost, cfg)
    assert a.best_genome == b.best_genome and a.best_curve() == b.best_curve()


def test_search_outputs(tmp_path):
    res = run_search(_sum_cost, SearchConfig(algorithm="rw", population=4, generations=3))
    write_epochs(res, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "epoch,min,mean,max,best_so_far,evaluations" and len(lines) == 4
    write_best(res, tmp_path / "b.json", search=SearchConfig(algorithm="rw", population=4))
    doc = json.loads((tmp_path / "b.json").read_text())
    assert doc["genome"] == list(res.best_genome) and doc["search"]["algorithm"] == "rw"
    assert set(doc["genes"]) >= {"cipher", "workers", "mix_rate"}


# costs and evaluation

def test_cost_formulas():
    assert f1_cost(0.71) == pytest.approx(29.0)
    assert resemble_cost(["a"] * 5, "a") == 0.0
    assert resemble_cost(["b"] * 5, "a") == 100.0
    # recall 1/3, precision 1 -> F1 0.5
    assert resemble_cost(["a", "b", "b"], "a") == pytest.approx(50.0)
    assert diverge_cost(["benign"] * 4, ["r1", "r2"]) == 0.0
    assert diverge_cost(["r1", "r1", "benign", "benign"], ["r1", "r2"]) == pytest.approx(100 * 2 / 3)


def test_goal_validation():
    with pytest.raises(ValidationError):
        Goal("imitate")
    with pytest.raises(ValidationError):
        Goal.resemble("")
    assert Goal.diverge().target_class is None


@pytest.fixture(scope="module")
def ctx(lab_model):
    model, snap, _ = lab_model
    return EvalContext(model, snap, budget_s=60.0)


def test_eval_context_is_cached_and_deterministic(ctx, lab_model):
    model, snap, _ = lab_model
    g = random_genome(np.random.default_rng(4))
    goal = Goal.resemble(model.classes[0])
    before = ctx.misses
    a = ctx.evaluate(g, goal)
    b = ctx.evaluate(g, goal)
    assert a is b and ctx.misses == before + 1
    fresh = EvalContext(model, snap, budget_s=60.0).evaluate(g, goal)
    assert fresh.cost == a.cost and fresh.predictions == a.predictions
    assert 0.0 <= a.cost <= 100.0 and a.windows == len(a.predictions) and not a.error
    assert evaluate(g, ctx, goal) == a.cost


def test_eval_objective_shapes(ctx, lab_model):
    g = random_genome(np.random.default_rng(5))
    goal = Goal.diverge()
    assert len(ctx.objective(goal)(g)) == 1
    cost, dur = ctx.objective(goal, with_duration=True)(g)
    assert math.isfinite(dur) and dur >= 0.0


def test_missing_target_class(ctx):
    with pytest.raises(ValidationError):
        ctx.evaluate((0,) * N_GENES, Goal.resemble("no-such-class"))
