"""
Instance generators.

Deterministic constructors for the structured families used as
integrality-gap and counterexample fixtures, plus a seeded random
generator for Monte Carlo corpora. Every generator is a pure function of
its arguments.
"""

import math
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.exceptions import InstanceError
from src.logger import get_logger
from src.packing.instance import FractionalSolution, PipInstance
from src.packing.streams import make_rng

logger = get_logger(__name__)

SIZE_PROFILES = ("uniform", "mixed")
WEIGHT_PROFILES = ("unit", "uniform", "integer")


def gen_gap_2k_minus_1(k: int, epsilon: Optional[float] = None) -> PipInstance:
    """
    Cyclic family whose strengthened relaxation has gap close to 2k − 1.

    n = m = 2k − 1, unit weights and capacities; item i has size 1 in
    constraint i and ε in constraints i+1, ..., i+k−1 (mod n).

    Args:
        k: Column sparsity (≥ 1)
        epsilon: Small size; defaults to 1/(10nk)

    Returns:
        PipInstance: The gap instance

    Raises:
        InstanceError: If k < 1 or ε is not in (0, 1/(nk))
    """
    if k < 1:
        raise InstanceError(f"k must be at least 1, got {k}")
    n = 2 * k - 1
    if epsilon is None:
        epsilon = 1.0 / (10 * n * k)
    if not 0 < epsilon < 1.0 / (n * k):
        raise InstanceError(f"epsilon must lie in (0, 1/(nk)) = (0, {1.0 / (n * k):.6g}), got {epsilon}")

    entries = []
    for i in range(n):
        entries.append((i, i, 1.0))
        entries.extend((i, (i + d) % n, epsilon) for d in range(1, k))
    return PipInstance.from_entries([1.0] * n, [1.0] * n, entries)


def gen_l1_bad_example(n: int) -> PipInstance:
    """Dense n×n family: s_ii = 1, s_ij = 1/n otherwise; LP value n/2, integral optimum 1."""
    if n < 2:
        raise InstanceError(f"n must be at least 2, got {n}")
    entries = [(i, j, 1.0 if i == j else 1.0 / n) for i in range(n) for j in range(n)]
    return PipInstance.from_entries([1.0] * n, [1.0] * n, entries)


def gen_gap_general_b(n: int, B: float) -> PipInstance:
    """
    One constraint per (t+1)-subset C of the items, t = ⌊B⌋, with unit
    sizes on C and capacity B.

    Subsets are enumerated in lexicographic order, so constraint indices
    are stable. Column sparsity is C(n−1, t).

    Raises:
        InstanceError: If B < 1, t + 1 > n, or C(n, t+1) exceeds the size guard
    """
    if not math.isfinite(B) or B < 1:
        raise InstanceError(f"B must be at least 1, got {B}")
    t = int(math.floor(B))
    if t + 1 > n:
        raise InstanceError(f"need t + 1 <= n, got t={t}, n={n}")
    m = math.comb(n, t + 1)
    if m > settings.gap_b_max_constraints:
        raise InstanceError(f"C({n}, {t + 1}) = {m} constraints exceeds {settings.gap_b_max_constraints}")

    entries = [(i, j, 1.0) for j, subset in enumerate(combinations(range(n), t + 1)) for i in subset]
    logger.debug(f"General-B gap instance: n={n}, t={t}, m={m}")
    return PipInstance.from_entries([1.0] * n, [float(B)] * m, entries)


def gen_strawman_counterexample(M: int) -> Tuple[PipInstance, FractionalSolution]:
    """
    Single constraint M·x_1 + x_2 + ... + x_M ≤ M with unit weights.

    Returns:
        The instance and the feasible point x = 1/2 everywhere
    """
    if M < 2:
        raise InstanceError(f"M must be at least 2, got {M}")
    entries = [(0, 0, float(M))] + [(i, 0, 1.0) for i in range(1, M)]
    inst = PipInstance.from_entries([1.0] * M, [float(M)], entries)
    return inst, FractionalSolution.from_array(np.full(M, 0.5), M / 2.0)


def _draw_sizes(rng: np.random.Generator, count: int, size_profile: str) -> np.ndarray:
    # 1 - U[0, 1) lies in (0, 1]
    if size_profile == "uniform":
        return 1.0 - rng.random(count)
    big = rng.random(count) < 0.5
    return np.where(big, 0.5 + 0.5 * (1.0 - rng.random(count)), 0.5 * (1.0 - rng.random(count)))


def _draw_weights(rng: np.random.Generator, n: int, weight_profile: str) -> List[float]:
    if weight_profile == "unit":
        return [1.0] * n
    if weight_profile == "uniform":
        return [float(w) for w in 1.0 - rng.random(n)]
    return [float(w) for w in rng.integers(1, 11, size=n)]


def gen_random(
    n: int,
    m: int,
    k: int,
    size_profile: str = "uniform",
    density: float = 1.0,
    weight_profile: str = "unit",
    seed: int = 0,
    capacity: float = 1.0,
) -> PipInstance:
    """
    Random k-column-sparse instance.

    Each item draws a support size ~ Binomial(k, density) and a uniformly
    random subset of that many constraints; sizes come from the profile
    ("uniform" on (0, 1], or "mixed": half big in (1/2, 1], half small in
    (0, 1/2]). Every capacity equals `capacity`.

    Args:
        n: Items
        m: Constraints
        k: Maximum support size (≤ m)
        size_profile: "uniform" or "mixed"
        density: Probability that each of the k slots is filled
        weight_profile: "unit", "uniform" on (0, 1], or "integer" in 1..10
        seed: Generator seed
        capacity: Common capacity (≥ 1 gives slack B ≥ capacity)

    Returns:
        PipInstance: The random instance
    """
    if n < 0 or m < 0 or k < 0:
        raise InstanceError(f"n, m and k must be nonnegative, got n={n}, m={m}, k={k}")
    if k > m:
        raise InstanceError(f"column sparsity k={k} exceeds the number of constraints m={m}")
    if size_profile not in SIZE_PROFILES:
        raise InstanceError(f"unknown size profile '{size_profile}', expected one of {SIZE_PROFILES}")
    if weight_profile not in WEIGHT_PROFILES:
        raise InstanceError(f"unknown weight profile '{weight_profile}', expected one of {WEIGHT_PROFILES}")
    if not 0.0 <= density <= 1.0:
        raise InstanceError(f"density must lie in [0, 1], got {density}")
    if capacity <= 0:
        raise InstanceError(f"capacity must be positive, got {capacity}")

    rng = make_rng(seed)
    weights = _draw_weights(rng, n, weight_profile)
    entries = []
    for i in range(n):
        support = int(rng.binomial(k, density)) if k else 0
        if support == 0:
            continue
        rows = rng.choice(m, size=support, replace=False)
        sizes = np.minimum(_draw_sizes(rng, support, size_profile), 1.0)
        entries.extend((i, int(j), float(s)) for j, s in zip(rows, sizes))
    return PipInstance.from_entries(weights, [float(capacity)] * m, entries)


def gen_corpus(
    count: int,
    seed: int,
    max_n: int = 30,
    sparsities: Sequence[int] = (2, 3, 5),
    capacities: Sequence[float] = (1.0,),
) -> List[PipInstance]:
    """
    Seeded corpus of random instances for Monte Carlo campaigns.

    Instance t draws k from `sparsities`, n in [max(k, 4), max_n] and
    m in [k, n], uses mixed sizes with uniform weights, and takes its
    capacity from `capacities` in round-robin order.
    """
    if max_n < max(max(sparsities), 4):
        raise InstanceError(f"max_n={max_n} is too small for sparsities {tuple(sparsities)}")
    corpus = []
    for t in range(count):
        rng = make_rng(seed, t)
        k = int(rng.choice(sparsities))
        n = int(rng.integers(max(k, 4), max_n + 1))
        m = int(rng.integers(k, max(k, n) + 1))
        corpus.append(
            gen_random(
                n,
                m,
                k,
                size_profile="mixed",
                weight_profile="uniform",
                seed=int(rng.integers(2**31)),
                capacity=float(capacities[t % len(capacities)]),
            )
        )
    logger.debug(f"Generated corpus of {count} instances (seed={seed})")
    return corpus
