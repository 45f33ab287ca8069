"""Search heuristics over genomes: random walk, simulated annealing, greedy GA, NSGA-II.

All four minimise an objective returning a tuple of costs; the first entry
is the scalar cost the single-objective heuristics use. One epoch is one
generation (or one step of every walker/chain).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import ValidationError
from .genome import crossover, describe, mutate, mutate_one, random_genome
from .pareto import rank_and_crowding, sort_by_rank_crowding

ALGORITHMS = ("rw", "sa", "gga", "nsga2")

Objective = Callable[[tuple], Sequence[float]]


@dataclass(frozen=True)
class SearchConfig:
    algorithm: str = "nsga2"
    population: int = 100
    generations: int = 1000
    crossover_p: float = 0.8
    mutation_p: float = 0.1
    t0: float = 1000.0
    cooling: float = 0.95
    elitism_fraction: float = 0.1
    seed: int = 0
    early_stop: Optional[float] = None   # stop once best cost <= this

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"algorithm must be one of {ALGORITHMS}")
        for name in ("crossover_p", "mutation_p", "elitism_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        if self.population < 1 or self.generations < 1:
            raise ValidationError("population and generations must be >= 1")
        if self.algorithm == "nsga2" and self.population < 4:
            raise ValidationError("nsga2 needs a population of at least 4")
        if self.algorithm in ("nsga2", "gga") and self.population % 2:
            raise ValidationError("population must be even for crossover pairing")
        if self.t0 <= 0 or not 0 < self.cooling <= 1:
            raise ValidationError("SA needs t0 > 0 and cooling in (0, 1]")


@dataclass
class EpochStat:
    epoch: int
    min: float
    mean: float
    max: float
    best_so_far: float
    evaluations: int


@dataclass
class SearchResult:
    algorithm: str
    population: list
    costs: np.ndarray
    best_genome: tuple
    best_cost: float
    epochs: list = field(default_factory=list)
    evaluations: int = 0

    def best_curve(self) -> list[float]:
        return [e.best_so_far for e in self.epochs]


def sa_accept_probability(delta: float, temperature: float) -> float:
    if delta <= 0:
        return 1.0
    return math.exp(-delta / temperature)


class _Tracker:
    def __init__(self, objective: Objective):
        self.objective = objective
        self.evaluations = 0
        self.best_cost = math.inf
        self.best_genome: Optional[tuple] = None
        self.epochs: list[EpochStat] = []

    def __call__(self, g: tuple) -> np.ndarray:
        c = np.asarray(self.objective(g), dtype=np.float64).reshape(-1)
        self.evaluations += 1
        if c[0] < self.best_cost:
            self.best_cost, self.best_genome = float(c[0]), tuple(g)
        return c

    def many(self, genomes) -> np.ndarray:
        return np.array([self(g) for g in genomes])

    def epoch(self, costs: np.ndarray) -> EpochStat:
        primary = costs[:, 0] if costs.ndim == 2 else costs
        st = EpochStat(len(self.epochs), float(primary.min()), float(primary.mean()),
                       float(primary.max()), self.best_cost, self.evaluations)
        self.epochs.append(st)
        return st

    def result(self, algo: str, pop, costs) -> SearchResult:
        return SearchResult(algo, list(pop), np.asarray(costs), self.best_genome, self.best_cost,
                            self.epochs, self.evaluations)


def _done(cfg: SearchConfig, tr: _Tracker) -> bool:
    return cfg.early_stop is not None and tr.best_cost <= cfg.early_stop


def nsga2(objective: Objective, cfg: SearchConfig, init: Optional[list] = None) -> SearchResult:
    """NSGA-II with explicit elitism.

    Each generation: offspring Q by binary tournament on (rank, crowding),
    uniform crossover and mutation; R = P | Q is ranked; the best
    ceil(elitism * N) of R survive unconditionally and the remaining slots
    go to the best offspring by rank and crowding.
    """
    rng = np.random.default_rng([cfg.seed, 0x45A2])
    tr = _Tracker(objective)
    N = cfg.population
    P = list(init) if init else [random_genome(rng) for _ in range(N)]
    F = tr.many(P)
    n_elite = int(math.ceil(cfg.elitism_fraction * N))
    for _ in range(cfg.generations):
        rank, crowd = rank_and_crowding(F)

        def pick() -> tuple:
            i, j = rng.integers(N, size=2)
            if (rank[i], -crowd[i]) <= (rank[j], -crowd[j]):
                return P[i]
            return P[j]

        Q = []
        while len(Q) < N:
            a, b = pick(), pick()
            if rng.random() < cfg.crossover_p:
                a, b = crossover(a, b, rng)
            Q += [mutate(a, cfg.mutation_p, rng), mutate(b, cfg.mutation_p, rng)]
        Q = Q[:N]
        FQ = tr.many(Q)
        R, FR = P + Q, np.vstack([F, FQ])
        order = sort_by_rank_crowding(FR)
        elites = [int(i) for i in order[:n_elite]]
        chosen = set(elites)
        rest = [int(i) for i in order if i >= N and int(i) not in chosen][:N - n_elite]
        if len(rest) < N - n_elite:  # elites already took offspring; top up from parents
            rest += [int(i) for i in order if int(i) not in chosen and int(i) not in rest][
                :N - n_elite - len(rest)]
        keep = elites + rest
        P, F = [R[i] for i in keep], FR[keep]
        tr.epoch(F)
        if _done(cfg, tr):
            break
    return tr.result("nsga2", P, F)


def rw_search(objective: Objective, cfg: SearchConfig, init: Optional[list] = None) -> SearchResult:
    """Independent walkers: mutate one gene per step, keep the move if it is better."""
    rng = np.random.default_rng([cfg.seed, 0x5257])
    tr = _Tracker(objective)
    P = list(init) if init else [random_genome(rng) for _ in range(cfg.population)]
    F = tr.many(P)[:, 0]
    for _ in range(cfg.generations):
        for w in range(len(P)):
            cand = mutate_one(P[w], rng)
            c = tr(cand)[0]
            if c < F[w]:
                P[w], F[w] = cand, c
        tr.epoch(F)
        if _done(cfg, tr):
            break
    return tr.result("rw", P, F[:, None])


def sa_search(objective: Objective, cfg: SearchConfig, init: Optional[list] = None) -> SearchResult:
    """Parallel annealing chains with one-gene neighbours and geometric cooling."""
    rng = np.random.default_rng([cfg.seed, 0x5341])
    tr = _Tracker(objective)
    P = list(init) if init else [random_genome(rng) for _ in range(cfg.population)]
    F = tr.many(P)[:, 0]
    T = cfg.t0
    for _ in range(cfg.generations):
        for w in range(len(P)):
            cand = mutate_one(P[w], rng)
            c = tr(cand)[0]
            if rng.random() < sa_accept_probability(c - F[w], T):
                P[w], F[w] = cand, c
        T *= cfg.cooling
        tr.epoch(F)
        if _done(cfg, tr):
            break
    return tr.result("sa", P, F[:, None])


def gga_search(objective: Objective, cfg: SearchConfig, init: Optional[list] = None) -> SearchResult:
    """Greedy generational GA: keep the better half, refill by crossover and mutation."""
    rng = np.random.default_rng([cfg.seed, 0x4741])
    tr = _Tracker(objective)
    N = cfg.population
    P = list(init) if init else [random_genome(rng) for _ in range(N)]
    F = tr.many(P)[:, 0]
    for _ in range(cfg.generations):
        order = np.argsort(F, kind="stable")
        keep = order[:N // 2]
        P, F = [P[i] for i in keep], F[keep]
        children = []
        while len(children) < N - len(P):
            i, j = rng.integers(len(P), size=2)
            a, b = P[i], P[j]
            if rng.random() < cfg.crossover_p:
                a, b = crossover(a, b, rng)
            children += [mutate(a, cfg.mutation_p, rng), mutate(b, cfg.mutation_p, rng)]
        children = children[:N - len(P)]
        P = P + children
        F = np.concatenate([F, tr.many(children)[:, 0]])
        tr.epoch(F)
        if _done(cfg, tr):
            break
    return tr.result("gga", P, F[:, None])


SEARCHES = {"nsga2": nsga2, "rw": rw_search, "sa": sa_search, "gga": gga_search}


def run_search(objective: Objective, cfg: SearchConfig, init=None) -> SearchResult:
    return SEARCHES[cfg.algorithm](objective, cfg, init)


def write_epochs(result: SearchResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "min", "mean", "max", "best_so_far", "evaluations"])
        for e in result.epochs:
            w.writerow([e.epoch, f"{e.min:.6f}", f"{e.mean:.6f}", f"{e.max:.6f}",
                        f"{e.best_so_far:.6f}", e.evaluations])


def write_best(result: SearchResult, path, config_dict: Optional[dict] = None,
               search: Optional[SearchConfig] = None) -> None:
    doc = {"algorithm": result.algorithm, "genome": list(result.best_genome),
           "genes": describe(result.best_genome), "cost": result.best_cost,
           "evaluations": result.evaluations}
    if config_dict is not None:
        doc["config"] = config_dict
    if search is not None:
        doc["search"] = asdict(search)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
