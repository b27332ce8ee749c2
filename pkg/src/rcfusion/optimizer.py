"""Evolutionary optimizers.

``imia_optimize`` is an immune-inspired multi-objective search that
maximizes (sensitivity, specificity) over binary feature masks or bounded
real vectors. ``csa_optimize`` is a single-objective clonal selection
algorithm used to fit fusion weights by AUC.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

Objectives = tuple[float, float]
OBJECTIVE_DIGITS = 12


@dataclass(frozen=True)
class Individual:
    genome: tuple
    objectives: Objectives
    crowding_distance: float = 0.0

    @property
    def balanced(self) -> float:
        return 0.5 * (self.objectives[0] + self.objectives[1])

    @property
    def n_selected(self) -> int:
        return sum(1 for g in self.genome if g != 0)


def dominates(a: Objectives, b: Objectives) -> bool:
    """Pareto dominance for maximize-maximize objectives."""
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


@dataclass(frozen=True)
class ParetoFront:
    members: tuple[Individual, ...]
    # best (sens + spec) / 2 in the population after each generation
    history: tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i) -> Individual:
        return self.members[i]


@dataclass(frozen=True)
class OptimizerConfig:
    population: int = 100
    generations: int = 200
    mutation_probability: float = 0.9
    seed: int = 0
    clone_budget: int = 5
    # genes altered per mutation; None means max(1, floor(M / 10))
    mutation_genes: int | None = None
    # relative Gaussian scale for real-valued genes
    mutation_sigma: float = 0.1
    # share of the population drawn fresh at random every generation
    immigrant_fraction: float = 0.2

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if not 0.0 <= self.mutation_probability <= 1.0:
            raise ValueError("mutation_probability must lie in [0, 1]")
        if not 0.0 <= self.immigrant_fraction <= 1.0:
            raise ValueError("immigrant_fraction must lie in [0, 1]")
        if self.clone_budget < 1:
            raise ValueError("clone_budget must be at least 1")
        if self.mutation_genes is not None and self.mutation_genes < 1:
            raise ValueError("mutation_genes must be at least 1")

    def genes_to_mutate(self, n_genes: int) -> int:
        k = self.mutation_genes if self.mutation_genes is not None else max(1, n_genes // 10)
        return min(k, n_genes)


def fast_nondominated_sort(objectives: Sequence[Objectives]) -> list[list[int]]:
    """Indices grouped into successive nondominated fronts."""
    n = len(objectives)
    dominated_by = [[] for _ in range(n)]
    counts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(objectives[i], objectives[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif dominates(objectives[j], objectives[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(objectives: Sequence[Objectives]) -> np.ndarray:
    """Per-member crowding distance within one front; boundaries are infinite."""
    obj = np.asarray(objectives, dtype=float).reshape(len(objectives), -1)
    n = len(obj)
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for m in range(obj.shape[1]):
        order = np.argsort(obj[:, m], kind="mergesort")
        span = obj[order[-1], m] - obj[order[0], m]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        gaps = (obj[order[2:], m] - obj[order[:-2], m]) / span
        dist[order[1:-1]] += gaps
    return dist


def _preference_key(ind: Individual):
    return (ind.n_selected, ind.genome)


def select_best_solution(front: Sequence[Individual] | ParetoFront) -> Individual:
    """Highest (sens + spec) / 2, then highest min(sens, spec), then fewest
    selected genes, then the lexicographically lowest genome."""
    members = list(front)
    if not members:
        raise ValueError("cannot select from an empty front")

    def key(ind: Individual):
        s, p = ind.objectives
        return (-round(0.5 * (s + p), OBJECTIVE_DIGITS), -round(min(s, p), OBJECTIVE_DIGITS),
                ind.n_selected, ind.genome)

    return min(members, key=key)


def _rounded(obj: Objectives) -> Objectives:
    return (round(obj[0], OBJECTIVE_DIGITS), round(obj[1], OBJECTIVE_DIGITS))


def deduplicate(individuals: Sequence[Individual]) -> list[Individual]:
    """Keep one individual per objective pair: fewest selected genes, then lowest genome.

    Output preserves first-seen order of the objective pairs.
    """
    kept: dict[Objectives, Individual] = {}
    for ind in individuals:
        key = _rounded(ind.objectives)
        if key not in kept or _preference_key(ind) < _preference_key(kept[key]):
            kept[key] = ind
    return list(kept.values())


class _Evaluator:
    """Caching, optionally threaded wrapper around a genome -> objectives callable."""

    def __init__(self, fn, binary: bool, workers: int):
        self.fn = fn
        self.binary = binary
        self.workers = workers
        self.cache: dict[tuple, Objectives] = {}

    def _one(self, genome: tuple) -> Objectives:
        if self.binary and not any(genome):
            return (0.0, 0.0)
        s, p = self.fn(np.array(genome, dtype=np.int8 if self.binary else float))
        return (float(s), float(p))

    def __call__(self, genomes: list[tuple]) -> list[Objectives]:
        todo = list(dict.fromkeys(g for g in genomes if g not in self.cache))
        if self.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(self._one, todo))
        else:
            results = [self._one(g) for g in todo]
        self.cache.update(zip(todo, results))
        return [self.cache[g] for g in genomes]


def _as_genome(arr: np.ndarray, binary: bool) -> tuple:
    return tuple(int(v) for v in arr) if binary else tuple(float(v) for v in arr)


def _population_update(pool: list[Individual], size: int) -> list[Individual]:
    """Fill by nondominated rank; inside a rank prefer balanced accuracy, then crowding."""
    fronts = fast_nondominated_sort([ind.objectives for ind in pool])
    chosen = []
    for front in fronts:
        cd = crowding_distance([pool[i].objectives for i in front])
        ranked = [Individual(pool[i].genome, pool[i].objectives, float(c)) for i, c in zip(front, cd)]
        ranked.sort(key=lambda ind: (-round(ind.balanced, OBJECTIVE_DIGITS), -ind.crowding_distance))
        chosen.extend(ranked[: size - len(chosen)])
        if len(chosen) >= size:
            break
    return chosen


def imia_optimize(evaluator: Callable[[np.ndarray], Objectives], config: OptimizerConfig,
                  n_genes: int | None = None, bounds=None, workers: int = 1) -> ParetoFront:
    """Multi-objective immune search maximizing (sensitivity, specificity).

    Give ``n_genes`` for binary masks (an all-zero mask scores (0, 0)) or
    ``bounds`` as a sequence of (low, high) for real genomes. Each
    generation clones the rank-0 front in proportion to crowding distance,
    mutates a fixed number of genes per clone, drops duplicate objective
    pairs, tops the pool up with random newcomers and refills the
    population by nondominated rank.
    """
    binary = bounds is None
    if binary:
        if n_genes is None or n_genes < 1:
            raise ValueError("binary search needs n_genes >= 1")
        low = high = None
    else:
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        low, high = b[:, 0], b[:, 1]
        if np.any(high < low):
            raise ValueError("each bound must satisfy low <= high")
        n_genes = len(b)
    rng = np.random.default_rng(config.seed)
    evaluate = _Evaluator(evaluator, binary, workers)
    k_mut = config.genes_to_mutate(n_genes)
    n_immigrants = int(round(config.immigrant_fraction * config.population))

    def random_genomes(count):
        if binary:
            return [_as_genome(rng.integers(0, 2, n_genes), True) for _ in range(count)]
        return [_as_genome(rng.uniform(low, high), False) for _ in range(count)]

    def mutate(genome: tuple) -> tuple:
        if rng.random() >= config.mutation_probability:
            return genome
        genes = rng.choice(n_genes, size=k_mut, replace=False)
        arr = np.array(genome, dtype=float)
        if binary:
            arr[genes] = 1 - arr[genes]
        else:
            arr[genes] += rng.normal(0.0, config.mutation_sigma * (high[genes] - low[genes]))
            arr = np.clip(arr, low, high)
        return _as_genome(arr, binary)

    genomes = random_genomes(config.population)
    population = deduplicate([Individual(g, o) for g, o in zip(genomes, evaluate(genomes))])
    population = _population_update(population, config.population)
    history = []
    for _ in range(config.generations):
        front_idx = fast_nondominated_sort([ind.objectives for ind in population])[0]
        parents = [population[i] for i in front_idx]
        cd = crowding_distance([p.objectives for p in parents])
        order = sorted(range(len(parents)), key=lambda i: -cd[i])
        finite = cd[np.isfinite(cd)]
        cd_max = finite.max() if finite.size and finite.max() > 0 else 0.0
        clones = []
        for i in order:
            norm = 1.0 if not np.isfinite(cd[i]) else (cd[i] / cd_max if cd_max > 0 else 0.0)
            n_clones = max(1, int(math.floor(config.clone_budget * norm + 0.5)))
            clones.extend(mutate(parents[i].genome) for _ in range(n_clones))
        offspring = [Individual(g, o) for g, o in zip(clones, evaluate(clones))]
        pool = deduplicate(population + offspring)
        # random newcomers keep the search from stalling on a small front and
        # restore the size lost to deduplication
        n_fresh = max(n_immigrants, config.population - len(pool))
        fresh = random_genomes(n_fresh)
        pool = deduplicate(pool + [Individual(g, o) for g, o in zip(fresh, evaluate(fresh))])
        population = _population_update(pool, config.population)
        history.append(max(ind.balanced for ind in population))

    front_idx = fast_nondominated_sort([ind.objectives for ind in population])[0]
    members = [population[i] for i in front_idx]
    cd = crowding_distance([m.objectives for m in members])
    members = [Individual(m.genome, m.objectives, float(c)) for m, c in zip(members, cd)]
    members.sort(key=lambda m: (m.objectives, m.genome))
    return ParetoFront(tuple(members), tuple(history))


# ---------------------------------------------------------------------------
# Clonal selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsaConfig:
    population: int = 50
    generations: int = 100
    seed: int = 0
    # fraction of the population that is cloned
    selection_fraction: float = 0.5
    # clones for rank i are round(clone_factor * population / (i + 1))
    clone_factor: float = 0.5
    sigma0: float = 0.2
    # sigma shrinks as exp(-decay * affinity) with affinity in [0, 1] by rank
    decay: float = 3.0
    replace_fraction: float = 0.1

    def __post_init__(self):
        if self.population < 2 or self.generations < 1:
            raise ValueError("population >= 2 and generations >= 1 are required")
        if not 0 < self.selection_fraction <= 1:
            raise ValueError("selection_fraction must lie in (0, 1]")
        if not 0 <= self.replace_fraction < 1:
            raise ValueError("replace_fraction must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class CsaResult:
    genome: np.ndarray
    fitness: float
    history: tuple[float, ...] = field(default=())


def csa_optimize(evaluator: Callable, bounds, config: CsaConfig | None = None,
                 vectorized: bool = False) -> CsaResult:
    """Maximize ``evaluator`` over a box with clonal selection.

    With ``vectorized`` the evaluator receives a 2-D array of genomes and
    returns one fitness per row; otherwise it is called per genome.
    """
    config = config or CsaConfig()
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    low, high = b[:, 0], b[:, 1]
    if np.any(high < low):
        raise ValueError("each bound must satisfy low <= high")
    span = high - low
    rng = np.random.default_rng(config.seed)
    P = config.population

    def evaluate(G: np.ndarray) -> np.ndarray:
        if vectorized:
            return np.asarray(evaluator(G), dtype=float).reshape(len(G))
        return np.array([float(evaluator(g)) for g in G])

    pop = rng.uniform(low, high, size=(P, len(b)))
    fit = evaluate(pop)
    n_sel = max(1, int(round(config.selection_fraction * P)))
    n_replace = int(config.replace_fraction * P)
    counts = [max(1, int(round(config.clone_factor * P / (i + 1)))) for i in range(n_sel)]
    affinity = 1.0 - np.arange(n_sel) / max(1, n_sel - 1)
    sigmas = config.sigma0 * np.exp(-config.decay * affinity)
    history = []
    for _ in range(config.generations):
        order = np.argsort(-fit, kind="mergesort")
        pop, fit = pop[order], fit[order]
        parent_of = np.repeat(np.arange(n_sel), counts)
        clones = pop[parent_of] + rng.normal(size=(len(parent_of), len(b))) * (sigmas[parent_of, None] * span)
        clones = np.clip(clones, low, high)
        clone_fit = evaluate(clones)
        # each selected parent is replaced by its best clone when strictly better
        for i in range(n_sel):
            idx = np.flatnonzero(parent_of == i)
            j = idx[np.argmax(clone_fit[idx])]
            if clone_fit[j] > fit[i]:
                pop[i], fit[i] = clones[j], clone_fit[j]
        if n_replace:
            order = np.argsort(-fit, kind="mergesort")
            pop, fit = pop[order], fit[order]
            fresh = rng.uniform(low, high, size=(n_replace, len(b)))
            pop[-n_replace:] = fresh
            fit[-n_replace:] = evaluate(fresh)
        history.append(float(fit.max()))
    best = int(np.argmax(fit))
    return CsaResult(pop[best].copy(), float(fit[best]), tuple(history))
