"""Configuration search that steers generated traces toward (or away from) a class."""
from .evaluate import (EvalContext, Evaluation, Goal, diverge_cost, evaluate, resemble_cost)
from .genome import (GENES, GENE_NAMES, N_GENES, canonical, crossover, decode, describe, encode,
                     mutate, mutate_one, random_genome, validate)
from .pareto import (brute_force_fronts, crowding_distance, dominates, fast_nondominated_sort,
                     rank_and_crowding, sort_by_rank_crowding)
from .search import (ALGORITHMS, EpochStat, SearchConfig, SearchResult, gga_search, nsga2,
                     run_search, rw_search, sa_accept_probability, sa_search, write_best,
                     write_epochs)

__all__ = [n for n in dir() if not n.startswith("_")]
