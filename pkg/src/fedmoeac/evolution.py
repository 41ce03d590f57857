"""Evolutionary search machinery over (prune threshold, code width, noise).

A solution is three genes: the prune threshold in [0, 1], a code-width
carrier in [0, 1] decoded to 32/16/8 bits by thirds, and the noise scale
in [0.1, 12]. Variation is simulated binary crossover plus bounded
polynomial mutation. Two selection schemes are provided: cosine-similarity
clustering with a scalarized pick per cluster, and the classic
nondominated-sort + crowding baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metrics import NormalizationBounds, dominates
from .operators import CompressionParams

log = logging.getLogger(__name__)

GENE_LOW = np.array([0.0, 0.0, 0.1])
GENE_HIGH = np.array([1.0, 1.0, 12.0])
INIT_XI_MEAN, INIT_XI_STD = 0.3, 0.1
INIT_SIGMA_MEAN, INIT_SIGMA_STD = 6.0, 2.5
LINKAGES = ("centroid", "single", "complete")
DIRECTION_OFFSET = 1e-12


@dataclass
class Solution:
    """One candidate: immutable genes, objectives filled in when evaluated."""

    id: int
    genes: np.ndarray
    objectives: np.ndarray | None = None
    fitness: float | None = None

    def __post_init__(self) -> None:
        self.genes = np.asarray(self.genes, dtype=float)
        if self.genes.shape != (3,):
            raise ValueError(f"genes must have shape (3,), got {self.genes.shape}")

    @property
    def evaluated(self) -> bool:
        return self.objectives is not None


@dataclass
class ClusterSet:
    """Partition of point indices, cluster order deterministic."""

    members: list[list[int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)

    def sizes(self) -> list[int]:
        return [len(c) for c in self.members]


def decode(genes: np.ndarray, clip_z: float = 1.0) -> CompressionParams:
    """Map genes to operator knobs; the carrier's thirds pick 32/16/8 bits."""
    xi, q_gene, sigma = (float(g) for g in genes)
    if q_gene < 1.0 / 3.0:
        bits = 32
    elif q_gene < 2.0 / 3.0:
        bits = 16
    else:
        bits = 8
    return CompressionParams(xi=xi, q_bits=bits, sigma=sigma, clip_z=clip_z)


def init_population(count: int, rng: np.random.Generator, start_id: int = 0) -> list[Solution]:
    """Seed solutions around a mild prune rate and mid-range noise.

    Prune genes are N(0.3, 0.1^2) clipped to [0, 1], width carriers are
    uniform, noise genes N(6, 2.5^2) clipped to [0.1, 12].
    """
    if count < 2:
        raise ValueError(f"population size must be >= 2, got {count}")
    population = []
    for i in range(count):
        xi = float(np.clip(rng.normal(INIT_XI_MEAN, INIT_XI_STD), GENE_LOW[0], GENE_HIGH[0]))
        q = float(rng.random())
        sigma = float(np.clip(rng.normal(INIT_SIGMA_MEAN, INIT_SIGMA_STD), GENE_LOW[2], GENE_HIGH[2]))
        population.append(Solution(id=start_id + i, genes=np.array([xi, q, sigma])))
    return population


def sbx_crossover(
    parent_a: np.ndarray,
    parent_b: np.ndarray,
    rng: np.random.Generator,
    crossover_prob: float = 0.9,
    eta: float = 2.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover, applied per gene with ``crossover_prob``.

    The spread factor beta comes from inverting the SBX distribution at a
    uniform draw; before clamping, children always satisfy
    ``c1 + c2 == p1 + p2``.
    """
    child_a = parent_a.astype(float).copy()
    child_b = parent_b.astype(float).copy()
    for i in range(len(child_a)):
        if rng.random() >= crossover_prob:
            continue
        u = rng.random()
        if u <= 0.5:
            beta = (2.0 * u) ** (1.0 / (eta + 1.0))
        else:
            beta = (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0))
        total = parent_a[i] + parent_b[i]
        spread = beta * (parent_b[i] - parent_a[i])
        child_a[i] = 0.5 * (total - spread)
        child_b[i] = 0.5 * (total + spread)
    return np.clip(child_a, GENE_LOW, GENE_HIGH), np.clip(child_b, GENE_LOW, GENE_HIGH)


def polynomial_mutation(
    genes: np.ndarray,
    rng: np.random.Generator,
    mutation_prob: float = 0.1,
    eta: float = 20.0,
) -> np.ndarray:
    """Bounded polynomial mutation, applied per gene with ``mutation_prob``."""
    out = genes.astype(float).copy()
    for i in range(len(out)):
        if rng.random() >= mutation_prob:
            continue
        lo, hi = GENE_LOW[i], GENE_HIGH[i]
        span = hi - lo
        u = rng.random()
        d_lo = (out[i] - lo) / span
        d_hi = (hi - out[i]) / span
        if u < 0.5:
            delta = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d_lo) ** (eta + 1.0)) ** (
                1.0 / (eta + 1.0)
            ) - 1.0
        else:
            delta = 1.0 - (
                2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d_hi) ** (eta + 1.0)
            ) ** (1.0 / (eta + 1.0))
        out[i] = out[i] + delta * span
    return np.clip(out, GENE_LOW, GENE_HIGH)


def generate_offspring(
    population: list[Solution],
    clusters: ClusterSet,
    rng: np.random.Generator,
    start_id: int,
    count: int | None = None,
    crossover_prob: float = 0.9,
    crossover_eta: float = 2.0,
    mutation_prob: float = 0.1,
    mutation_eta: float = 20.0,
) -> list[Solution]:
    """Mate within clusters until ``count`` children exist.

    Clusters are visited in a round-robin schedule weighted by size; each
    visit mates two distinct parents of that cluster (a singleton cluster
    borrows its second parent from the rest of the population). Both SBX
    children are kept, mutated, and assigned fresh consecutive ids.
    """
    if count is None:
        count = len(population)
    if len(population) < 2:
        raise ValueError("need at least two solutions to mate")
    if not clusters.members or sorted(i for c in clusters.members for i in c) != list(
        range(len(population))
    ):
        raise ValueError("clusters must partition the population")

    schedule = [ci for ci, members in enumerate(clusters.members) for _ in members]
    children: list[Solution] = []
    visit = 0
    while len(children) < count:
        members = clusters.members[schedule[visit % len(schedule)]]
        visit += 1
        if len(members) >= 2:
            pick = rng.choice(len(members), size=2, replace=False)
            first, second = members[pick[0]], members[pick[1]]
        else:
            first = members[0]
            others = [i for i in range(len(population)) if i != first]
            second = others[int(rng.integers(len(others)))]
        genes_a, genes_b = sbx_crossover(
            population[first].genes, population[second].genes, rng, crossover_prob, crossover_eta
        )
        for genes in (genes_a, genes_b):
            if len(children) >= count:
                break
            mutated = polynomial_mutation(genes, rng, mutation_prob, mutation_eta)
            children.append(Solution(id=start_id + len(children), genes=mutated))
    return children


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or len(vectors) == 0:
        raise ValueError("need a non-empty 2-D vector set")
    if not np.isfinite(vectors).all():
        raise ValueError("vectors must be finite")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0):
        log.warning("zero vector handed to cosine clustering; replacing with uniform direction")
        vectors = vectors.copy()
        vectors[norms == 0] = 1.0
        norms = np.linalg.norm(vectors, axis=1)
    return vectors / norms[:, None]


def direction_vectors(
    objectives: np.ndarray, bounds: NormalizationBounds | None = None
) -> np.ndarray:
    """Objective vectors min-max scaled for cosine geometry.

    Scaling puts every component in [0, 1] so all directions live in one
    orthant; an exactly-ideal row (all zeros) is nudged by a uniform 1e-12
    so it has a direction at all.
    """
    objectives = np.asarray(objectives, dtype=float)
    if bounds is None:
        bounds = NormalizationBounds.from_points(objectives)
    scaled = bounds.apply(objectives)
    zero = ~scaled.any(axis=1)
    scaled[zero] = DIRECTION_OFFSET
    return scaled


def kmeans_cosine(vectors: np.ndarray, m: int, rng: np.random.Generator) -> ClusterSet:
    """Spherical k-means (distance 1 - cosine) with k-means++ seeding.

    Ties go to the lowest cluster index, an emptied cluster keeps its
    previous center, and iteration stops once assignments are stable (or
    after 100 rounds), so the outcome is a pure function of inputs + rng.
    """
    units = _unit_rows(vectors)
    n = len(units)
    if not 1 <= m <= n:
        raise ValueError(f"cluster count must lie in [1, {n}], got {m}")

    centers = np.empty((m, units.shape[1]))
    chosen = [int(rng.integers(n))]
    centers[0] = units[chosen[0]]
    for k in range(1, m):
        dist = 1.0 - (units @ centers[:k].T).max(axis=1)
        weights = np.maximum(dist, 0.0) ** 2
        weights[chosen] = 0.0
        total = weights.sum()
        if total <= 0:
            pick = next(i for i in range(n) if i not in chosen)
        else:
            pick = int(rng.choice(n, p=weights / total))
        chosen.append(pick)
        centers[k] = units[pick]

    assignment = np.full(n, -1)
    for _ in range(100):
        distances = 1.0 - units @ centers.T
        new_assignment = distances.argmin(axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for k in range(m):
            members = units[assignment == k]
            if len(members) == 0:
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0:
                centers[k] = mean / norm

    return ClusterSet([list(np.flatnonzero(assignment == k)) for k in range(m)])


def _cluster_similarity(
    linkage: str, units: np.ndarray, a: list[int], b: list[int], cen_a: np.ndarray, cen_b: np.ndarray
) -> float:
    if linkage == "centroid":
        return float(cen_a @ cen_b)
    cross = units[a] @ units[b].T
    return float(cross.max()) if linkage == "single" else float(cross.min())


def hierarchical_cluster(
    vectors: np.ndarray, target: int, linkage: str = "centroid"
) -> ClusterSet:
    """Agglomerate points by cosine similarity down to ``target`` clusters.

    Each step merges the pair with the highest similarity (equal scores:
    the lexicographically smallest index pair), then recomputes the merged
    cluster's center as the renormalized mean of its member vectors.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}, got {linkage!r}")
    units = _unit_rows(vectors)
    n = len(units)
    if not 1 <= target <= n:
        raise ValueError(f"target cluster count must lie in [1, {n}], got {target}")

    clusters: list[list[int]] = [[i] for i in range(n)]
    centers: list[np.ndarray] = [units[i] for i in range(n)]

    while len(clusters) > target:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                sim = _cluster_similarity(linkage, units, clusters[i], clusters[j], centers[i], centers[j])
                if best is None or sim > best[0]:
                    best = (sim, i, j)
        _, i, j = best
        clusters[i] = clusters[i] + clusters[j]
        mean = units[clusters[i]].mean(axis=0)
        norm = np.linalg.norm(mean)
        centers[i] = mean / norm if norm > 0 else mean
        del clusters[j], centers[j]

    return ClusterSet(clusters)


def scalar_fitness(
    objectives: np.ndarray,
    bounds: NormalizationBounds,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> float:
    """Weighted sum of min-max scaled objectives (degenerate axes count 0)."""
    scaled = bounds.apply(np.asarray(objectives, dtype=float)[None, :])[0]
    return float(np.dot(scaled, np.asarray(weights, dtype=float)))


def environmental_selection(
    union: list[Solution],
    target: int,
    linkage: str = "centroid",
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> list[Solution]:
    """Cluster the union in objective space, keep each cluster's best.

    All members get their scalar fitness assigned (scaled over the union);
    the survivor of a cluster is its fitness minimum with ascending id as
    the tie-break. Survivors are returned in ascending id order.
    """
    if any(not s.evaluated for s in union):
        raise ValueError("every solution must be evaluated before selection")
    if not 1 <= target <= len(union):
        raise ValueError(f"target must lie in [1, {len(union)}], got {target}")

    objectives = np.array([s.objectives for s in union])
    bounds = NormalizationBounds.from_points(objectives)
    for sol in union:
        sol.fitness = scalar_fitness(sol.objectives, bounds, weights)

    directions = direction_vectors(objectives, bounds)
    clusters = hierarchical_cluster(directions, target, linkage)
    survivors = []
    for members in clusters.members:
        best = min(members, key=lambda i: (union[i].fitness, union[i].id))
        survivors.append(union[best])
    return sorted(survivors, key=lambda s: s.id)


def fast_nondominated_sort(objectives: np.ndarray) -> list[list[int]]:
    """Indices grouped into fronts; front 0 is nondominated, ids ascend."""
    objectives = np.asarray(objectives, dtype=float)
    n = len(objectives)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(n):
            if i != j and dominates(objectives[i], objectives[j]):
                dominated_by[i].append(j)
                domination_count[j] += 1

    fronts = [sorted(np.flatnonzero(domination_count == 0).tolist())]
    while True:
        next_front = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                domination_count[j] -= 1
                if domination_count[j] == 0:
                    next_front.append(j)
        if not next_front:
            return fronts
        fronts.append(sorted(next_front))


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    """Classic crowding: extremes infinite, interiors sum normalized gaps."""
    objectives = np.asarray(objectives, dtype=float)
    n = len(objectives)
    distance = np.zeros(n)
    if n == 0:
        return distance
    for axis in range(objectives.shape[1]):
        values = objectives[:, axis]
        order = np.argsort(values, kind="stable")
        distance[order[0]] = np.inf
        distance[order[-1]] = np.inf
        span = values[order[-1]] - values[order[0]]
        if span <= 0:
            continue
        for pos in range(1, n - 1):
            distance[order[pos]] += (values[order[pos + 1]] - values[order[pos - 1]]) / span
    return distance


def nsga2_select(union: list[Solution], target: int) -> list[Solution]:
    """Fill by nondominated rank, split the boundary front by crowding.

    Within the boundary front, descending crowding wins and ascending id
    breaks exact ties. Survivors come back in ascending id order.
    """
    if any(not s.evaluated for s in union):
        raise ValueError("every solution must be evaluated before selection")
    if not 1 <= target <= len(union):
        raise ValueError(f"target must lie in [1, {len(union)}], got {target}")

    objectives = np.array([s.objectives for s in union])
    survivors: list[Solution] = []
    for front in fast_nondominated_sort(objectives):
        if len(survivors) + len(front) <= target:
            survivors.extend(union[i] for i in front)
            if len(survivors) == target:
                break
            continue
        crowding = crowding_distance(objectives[front])
        ranked = sorted(zip(front, crowding), key=lambda t: (-t[1], union[t[0]].id))
        survivors.extend(union[i] for i, _ in ranked[: target - len(survivors)])
        break
    return sorted(survivors, key=lambda s: s.id)
