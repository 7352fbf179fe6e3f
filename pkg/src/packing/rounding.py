"""
Randomized rounding with alteration.

Every algorithm here follows the same two steps: sample each item
independently with probability scale·x_i, then apply a deterministic
alteration rule that deletes sampled items until every constraint fits.
Alterations are evaluated on a (trials, n) boolean matrix so one code
path serves single rounds, Monte Carlo estimation and the exhaustive
monotonicity check.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from src.config import settings
from src.exceptions import InstanceError, PreconditionError
from src.logger import get_logger
from src.packing import bounds
from src.packing.instance import (
    FractionalSolution,
    ItemSet,
    PipInstance,
    check_feasible,
    column_sparsity,
    is_unit_capacity,
    normalize_unit_capacities,
    normalize_unit_max_size,
    slack,
    value,
)
from src.packing.lp import LpModel, build_natural_lp, build_strengthened_lp, solve_lp
from src.packing.streams import make_rng, run_blocks

logger = get_logger(__name__)

Point = Union[FractionalSolution, np.ndarray, List[float], Tuple[float, ...]]


class AlterationRule(str, Enum):
    """Deletion rules applied to a sampled set."""

    SIMPLE = "simple"
    SORTED = "sorted"
    POWERS_OF_TWO = "powers_of_two"
    STRAWMAN = "strawman"
    IDENTITY = "identity"


class DeletionCause(BaseModel):
    """Constraint `constraint` marked `item`; `rule` names the trigger (big, small, sorted, ...)."""

    model_config = ConfigDict(frozen=True)

    item: int
    constraint: int
    rule: str


class RoundingReport(BaseModel):
    """Trace of one rounding run: S, the deletion causes, S′ and its value."""

    model_config = ConfigDict(frozen=True)

    seed: int
    algorithm: str
    rule: AlterationRule
    n: int
    alpha: Optional[float] = None
    scale: float
    sampled: Tuple[int, ...]
    causes: Tuple[DeletionCause, ...]
    final: Tuple[int, ...]
    value: float
    feasible: bool
    retention_bound: Optional[float] = None

    @model_validator(mode="after")
    def check_trace(self) -> "RoundingReport":
        sampled = set(self.sampled)
        if not set(self.final) <= sampled:
            raise ValueError(f"final set contains unsampled items: {sorted(set(self.final) - sampled)}")
        explained = {c.item for c in self.causes}
        for i in sampled - set(self.final):
            if i not in explained:
                raise ValueError(f"item {i} was deleted without a recorded cause")
        return self

    @property
    def sampled_set(self) -> ItemSet:
        return ItemSet.from_items(self.n, self.sampled)

    @property
    def final_set(self) -> ItemSet:
        return ItemSet.from_items(self.n, self.final)

    def to_json(self) -> str:
        return self.model_dump_json()


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def point_array(x: Point, n: int) -> np.ndarray:
    arr = x.array if isinstance(x, FractionalSolution) else np.asarray(x, dtype=float)
    if arr.shape != (n,):
        raise InstanceError(f"x has {arr.shape[0] if arr.ndim else 0} entries, instance has n={n}")
    return arr


def inclusion_probabilities(x: np.ndarray, scale: float) -> np.ndarray:
    """scale·x, validated to lie in [0, 1]."""
    if not 0.0 < scale <= 1.0:
        raise PreconditionError(f"scale must lie in (0, 1], got {scale}")
    if np.any(x < -settings.x_feasibility_tol):
        i = int(np.argmax(x < -settings.x_feasibility_tol))
        raise PreconditionError(f"x[{i}] = {x[i]} is negative")
    p = scale * np.maximum(x, 0.0)
    over = np.flatnonzero(p > 1.0 + settings.x_feasibility_tol)
    if over.size:
        i = int(over[0])
        raise PreconditionError(f"scale·x[{i}] = {p[i]:.6g} exceeds 1")
    return np.minimum(p, 1.0)


def sample_matrix(rng: np.random.Generator, p: np.ndarray, trials: int) -> np.ndarray:
    """(trials, n) boolean matrix; entry (t, i) is true with probability p_i."""
    return rng.random((trials, p.shape[0])) < p


def sample_independent(x: Point, scale: float, seed: int) -> ItemSet:
    """
    Include each item independently with probability scale·x_i.

    Args:
        x: Fractional point
        scale: Factor in (0, 1]
        seed: Stream seed; identical inputs and seed give identical output

    Returns:
        ItemSet: The sampled set S

    Raises:
        PreconditionError: If scale·x_i > 1 for some item
    """
    arr = x.array if isinstance(x, FractionalSolution) else np.asarray(x, dtype=float)
    p = inclusion_probabilities(arr, scale)
    return ItemSet.from_mask(sample_matrix(make_rng(seed), p, 1)[0])


# ---------------------------------------------------------------------------
# Alteration rules
# ---------------------------------------------------------------------------


def power_of_two_sizes(sizes: np.ndarray) -> np.ndarray:
    """Smallest power of two ≥ s for every size in (0, 1]."""
    return np.exp2(np.ceil(np.log2(sizes) - 1e-12))


def _threshold_loads(sampled: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """
    For every item of a row, the sampled load of items at least as large.

    sampled is (T, p) bool, sizes is (p,). Ties count on both sides.
    """
    order = np.argsort(-sizes, kind="stable")
    sorted_sizes = sizes[order]
    cumulative = np.cumsum(sampled[:, order] * sorted_sizes, axis=1)
    last_tied = np.searchsorted(-sorted_sizes, -sizes, side="right") - 1
    return cumulative[:, last_tied]


def _row_events(
    inst: PipInstance, sampled: np.ndarray, rule: AlterationRule
) -> Iterator[Tuple[int, np.ndarray, Dict[str, np.ndarray]]]:
    """
    Yield (j, P(j), {cause: (T, |P(j)|) bool}) for every constraint.

    A cause entry is true where the item is sampled and constraint j
    marks it under that cause.
    """
    idx = inst.index
    tol = settings.feasibility_tol
    threshold = settings.big_item_threshold
    for j, (items, sizes) in enumerate(zip(idx.row_items, idx.row_sizes)):
        if items.size == 0 or rule == AlterationRule.IDENTITY:
            continue
        in_s = sampled[:, items]
        cap = idx.capacities[j]

        if rule == AlterationRule.SIMPLE:
            big = sizes > threshold
            n_big = in_s[:, big].sum(axis=1)
            other_big = (n_big[:, None] - big[None, :].astype(np.int64)) >= 1
            small_load = in_s[:, ~big].astype(float) @ sizes[~big]
            overflow = small_load > cap + tol
            yield j, items, {"big": in_s & other_big, "small": in_s & overflow[:, None]}

        elif rule == AlterationRule.SORTED:
            loads = _threshold_loads(in_s, sizes)
            yield j, items, {rule.value: in_s & (loads > cap + tol)}

        elif rule == AlterationRule.POWERS_OF_TWO:
            loads = _threshold_loads(in_s, power_of_two_sizes(sizes))
            yield j, items, {rule.value: in_s & (loads > cap + tol)}

        elif rule == AlterationRule.STRAWMAN:
            violated = in_s.astype(float) @ sizes > cap + tol
            yield j, items, {rule.value: in_s & violated[:, None]}


def _check_rule_preconditions(inst: PipInstance, rule: AlterationRule) -> None:
    if rule in (AlterationRule.SIMPLE, AlterationRule.SORTED) and not is_unit_capacity(inst):
        raise PreconditionError(f"the {rule.value} alteration needs a unit-capacity instance")
    if rule == AlterationRule.POWERS_OF_TWO:
        tol = settings.feasibility_tol
        for i, column in enumerate(inst.columns):
            for j, s in column:
                if s > 1.0 + tol:
                    raise PreconditionError(
                        f"size s[{i},{j}] = {s} exceeds 1; normalize to unit max size first"
                    )


def alteration_marks(inst: PipInstance, sampled: np.ndarray, rule: AlterationRule) -> np.ndarray:
    """
    Items marked for deletion, for a batch of sampled sets.

    Args:
        inst: The instance
        sampled: (T, n) boolean matrix of sampled sets
        rule: Alteration rule

    Returns:
        np.ndarray: (T, n) boolean matrix, true where the item is deleted
    """
    _check_rule_preconditions(inst, rule)
    marks = np.zeros_like(sampled, dtype=bool)
    for _, items, events in _row_events(inst, sampled, rule):
        for fired in events.values():
            marks[:, items] |= fired
    return marks


def survivors(inst: PipInstance, sampled: np.ndarray, rule: AlterationRule) -> np.ndarray:
    """S′ for every row of the (T, n) sampled matrix."""
    return sampled & ~alteration_marks(inst, sampled, rule)


def _as_mask(inst: PipInstance, S: ItemSet) -> np.ndarray:
    if S.n != inst.n:
        raise InstanceError(f"set has {S.n} items, instance has n={inst.n}")
    counts = S.array
    if np.any(counts > 1):
        raise PreconditionError("alteration operates on 0/1 sets; round general bounds separately")
    return counts[None, :] > 0


def alter(inst: PipInstance, S: ItemSet, rule: AlterationRule) -> Tuple[ItemSet, List[DeletionCause]]:
    """Apply one rule to one set; returns S′ and every (item, constraint, cause) that fired."""
    mask = _as_mask(inst, S)
    _check_rule_preconditions(inst, rule)
    marks = np.zeros_like(mask)
    causes: List[DeletionCause] = []
    for j, items, events in _row_events(inst, mask, rule):
        for label, fired in events.items():
            hit = items[fired[0]]
            marks[0, hit] = True
            causes.extend(DeletionCause(item=int(i), constraint=j, rule=label) for i in hit)
    causes.sort(key=lambda c: (c.item, c.constraint, c.rule))
    return ItemSet.from_mask(mask[0] & ~marks[0]), causes


def alter_simple(inst: PipInstance, S: ItemSet) -> ItemSet:
    """
    Delete i when, for some j ∈ N(i), another sampled item is big for j, or
    the sampled small items of j (i included) exceed the capacity.
    """
    return alter(inst, S, AlterationRule.SIMPLE)[0]


def alter_sorted(inst: PipInstance, S: ItemSet) -> ItemSet:
    """Delete i when, for some j ∈ N(i), sampled items at least as large as i in j overflow it."""
    return alter(inst, S, AlterationRule.SORTED)[0]


def alter_powers_of_two(inst: PipInstance, S: ItemSet) -> ItemSet:
    """As alter_sorted, on sizes rounded up to powers of two, against capacity c_j."""
    return alter(inst, S, AlterationRule.POWERS_OF_TWO)[0]


# ---------------------------------------------------------------------------
# Rounding algorithms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RoundingPlan:
    """The instance an algorithm alters, the point it samples from, its rule and its scale."""

    algorithm: str
    instance: PipInstance
    x: np.ndarray
    rule: AlterationRule
    scale: float
    alpha: Optional[float]
    retention_bound: Optional[float]


def _prepare_point(inst: PipInstance, x: Optional[Point], model: LpModel, name: str) -> np.ndarray:
    if x is None:
        return solve_lp(model).array
    arr = point_array(x, inst.n).copy()
    if inst.dropped_items:
        dropped = list(inst.dropped_items)
        if np.any(arr[dropped] > 0):
            logger.info(f"Zeroing x on {len(dropped)} items fixed to zero by normalization")
        arr[dropped] = 0.0
    violation = model.max_violation(arr)
    if violation > settings.x_feasibility_tol:
        raise PreconditionError(f"x is not feasible for the {name} relaxation (violation {violation:.3g})")
    return arr


def large_b_setup(inst: PipInstance) -> Tuple[PipInstance, float, int, float]:
    """Max-size normalized instance with its slack B, sparsity k and α_B."""
    norm = normalize_unit_max_size(inst)
    B = slack(norm)
    if B < 1.0 - settings.feasibility_tol:
        raise PreconditionError(f"slack B = {B:.6g} is below 1; some item cannot fit alone")
    k = max(column_sparsity(norm), 1)
    return norm, B, k, bounds.large_b_alpha(max(B, 1.0), k)


def plan_rounding(
    inst: PipInstance, algorithm: str, x: Optional[Point] = None, alpha: Optional[float] = None
) -> RoundingPlan:
    """
    Normalize the instance, check x and fix the sampling scale for one algorithm.

    Args:
        inst: Instance as given
        algorithm: "simple", "strong", "large-b" or "strawman"
        x: Point to round; None solves the algorithm's own relaxation
        alpha: Scaling constant (simple: 4, strong: 1; large-b derives α_B from B and k)

    Returns:
        RoundingPlan: Everything needed to sample and alter

    Raises:
        PreconditionError: On an unknown algorithm, x outside the relaxation, B < 1,
            or an alpha given to large-b
    """
    if alpha is not None and alpha <= 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")

    if algorithm in ("simple", "strong"):
        norm = normalize_unit_capacities(inst)
        k = max(column_sparsity(norm), 1)
        if algorithm == "simple":
            alpha = 4.0 if alpha is None else alpha
            arr = _prepare_point(norm, x, build_natural_lp(norm), "natural")
            rule, bound = AlterationRule.SIMPLE, bounds.simple_retention_bound(alpha)
        else:
            alpha = 1.0 if alpha is None else alpha
            arr = _prepare_point(norm, x, build_strengthened_lp(norm), "strengthened")
            rule, bound = AlterationRule.SORTED, bounds.strong_retention_bound(alpha, k)
        return RoundingPlan(algorithm, norm, arr, rule, 1.0 / (alpha * k), alpha, bound)

    if algorithm == "large-b":
        if alpha is not None:
            raise PreconditionError("large-b rounding derives alpha from B and k; do not pass alpha")
        norm, B, k, alpha_b = large_b_setup(inst)
        arr = _prepare_point(norm, x, build_natural_lp(norm), "natural")
        return RoundingPlan(
            algorithm, norm, arr, AlterationRule.POWERS_OF_TWO, 1.0 / alpha_b, alpha_b,
            bounds.large_b_retention_bound(max(B, 1.0), k),
        )

    if algorithm == "strawman":
        arr = _prepare_point(inst, x, build_natural_lp(inst), "natural")
        k = max(column_sparsity(inst), 1)
        return RoundingPlan(algorithm, inst, arr, AlterationRule.STRAWMAN, 1.0 / (2 * k), 2.0, None)

    raise PreconditionError(f"unknown rounding algorithm '{algorithm}'")


def execute_plan(plan: RoundingPlan, original: PipInstance, seed: int) -> RoundingReport:
    """Sample once at scale·x, alter, and report value and feasibility on the original instance."""
    S = sample_independent(plan.x, plan.scale, seed)
    final, causes = alter(plan.instance, S, plan.rule)
    feasible = check_feasible(original, final)
    if not feasible:
        logger.error(f"{plan.algorithm} rounding produced an infeasible set (seed={seed})")
    return RoundingReport(
        seed=seed,
        algorithm=plan.algorithm,
        rule=plan.rule,
        n=original.n,
        alpha=plan.alpha,
        scale=plan.scale,
        sampled=tuple(S.items),
        causes=tuple(causes),
        final=tuple(final.items),
        value=value(original, final),
        feasible=feasible,
        retention_bound=plan.retention_bound,
    )


def round_simple(inst: PipInstance, x: Point, alpha: float = 4.0, seed: int = 0) -> RoundingReport:
    """
    Sample at x/(αk) and apply the big/small alteration.

    Args:
        inst: Instance (normalized to unit capacities internally)
        x: Point feasible for the natural relaxation of the normalized instance
        alpha: Scaling constant; 4 gives the 8k guarantee
        seed: Stream seed

    Returns:
        RoundingReport: Trace of the run
    """
    return execute_plan(plan_rounding(inst, "simple", x, alpha), inst, seed)


def round_strong(inst: PipInstance, x: Point, alpha: float = 1.0, seed: int = 0) -> RoundingReport:
    """
    Sample at x/(αk) and apply the sorted alteration.

    x must be feasible for the strengthened relaxation (natural rows plus
    one big-item row per constraint).
    """
    return execute_plan(plan_rounding(inst, "strong", x, alpha), inst, seed)


def round_large_b(inst: PipInstance, x: Point, seed: int = 0) -> RoundingReport:
    """
    Sample at x/α with α = 4e(⌊B⌋k)^{1/⌊B⌋} and apply the powers-of-two alteration.

    The scale is 1/α, not 1/(αk). The instance is normalized to unit
    max size first; x must be feasible for its natural relaxation.

    Raises:
        PreconditionError: If B < 1
    """
    return execute_plan(plan_rounding(inst, "large-b", x), inst, seed)


def round_strawman(inst: PipInstance, x: Point, seed: int = 0) -> RoundingReport:
    """Sample at x/(2k) and discard every item of every violated constraint."""
    return execute_plan(plan_rounding(inst, "strawman", x), inst, seed)


def strawman_round(inst: PipInstance, x: Point, seed: int = 0) -> ItemSet:
    """Final set of the strawman algorithm; kept as a negative example only."""
    return round_strawman(inst, x, seed).final_set


Rounder = Callable[[PipInstance, FractionalSolution, int], RoundingReport]


def round_general_upper_bounds(
    inst: PipInstance, y: Point, rounder: Optional[Rounder] = None, seed: int = 0
) -> ItemSet:
    """
    Round a natural-LP point with general bounds u.

    Splits y into z = ⌊y⌋ and the fractional part x = y − z, rounds x on
    the unit-bound instance, and returns whichever of z and the rounded
    set is worth more.

    Args:
        inst: Instance with upper bounds u
        y: Natural-LP point with 0 ≤ y ≤ u
        rounder: Unit-bound rounding procedure (round_simple by default)
        seed: Stream seed for the rounder

    Returns:
        ItemSet: The better of the two feasible candidates
    """
    rounder = rounder or rounder_for("simple")
    arr = point_array(y, inst.n)
    z = np.floor(arr + settings.x_feasibility_tol)
    frac = np.clip(arr - z, 0.0, 1.0)
    frac[frac <= settings.x_feasibility_tol] = 0.0

    integral = ItemSet(counts=tuple(int(v) for v in z))
    if not check_feasible(inst, integral):
        raise PreconditionError("⌊y⌋ is infeasible; y is not a point of the natural relaxation")

    unit = inst.with_unit_bounds()
    rounded = rounder(unit, FractionalSolution.from_array(frac, float(unit.index.weights @ frac)), seed).final_set
    if not check_feasible(inst, rounded):
        raise PreconditionError("rounded fractional part is infeasible")

    if value(inst, rounded) > value(inst, integral):
        return rounded
    return integral


def rounder_for(algorithm: str) -> Rounder:
    """Rounding procedure by CLI name: simple, strong, large-b or strawman."""
    table: Dict[str, Rounder] = {
        "simple": lambda inst, x, seed: round_simple(inst, x, seed=seed),
        "strong": lambda inst, x, seed: round_strong(inst, x, seed=seed),
        "large-b": lambda inst, x, seed: round_large_b(inst, x, seed=seed),
        "strawman": lambda inst, x, seed: round_strawman(inst, x, seed=seed),
    }
    if algorithm not in table:
        raise PreconditionError(f"unknown rounding algorithm '{algorithm}'")
    return table[algorithm]


# ---------------------------------------------------------------------------
# Monte Carlo estimation
# ---------------------------------------------------------------------------


def wilson_interval(successes: np.ndarray, totals: np.ndarray, z: float) -> Tuple[np.ndarray, np.ndarray]:
    """Wilson score interval per entry; (nan, nan) where total is 0."""
    successes = np.asarray(successes, dtype=float)
    totals = np.asarray(totals, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = successes / totals
        denom = 1.0 + z * z / totals
        center = (p + z * z / (2 * totals)) / denom
        half = z / denom * np.sqrt(p * (1 - p) / totals + z * z / (4 * totals * totals))
    low = np.where(totals > 0, np.clip(center - half, 0.0, 1.0), np.nan)
    high = np.where(totals > 0, np.clip(center + half, 0.0, 1.0), np.nan)
    return low, high


def binomial_se(p: np.ndarray, totals: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(totals > 0, np.sqrt(np.clip(p * (1 - p), 0.0, None) / totals), np.nan)


class RetentionEstimate(BaseModel):
    """
    Per-item frequencies of Pr[i ∈ S] and Pr[i ∈ S′ | i ∈ S].

    Conditional entries are None for items never sampled.
    """

    model_config = ConfigDict(frozen=True)

    rule: AlterationRule
    scale: float
    trials: int
    seed: int
    sampled_counts: Tuple[int, ...]
    kept_counts: Tuple[int, ...]
    sampled_rate: Tuple[float, ...]
    sampled_se: Tuple[float, ...]
    retention: Tuple[Optional[float], ...]
    retention_se: Tuple[Optional[float], ...]
    wilson_low: Tuple[Optional[float], ...]
    wilson_high: Tuple[Optional[float], ...]
    violations: int
    mean_value: float
    value_se: float

    def failures(self, bound: float, z: Optional[float] = None, min_samples: int = 1) -> List[int]:
        """Items whose retention falls below bound − z·se (items with fewer samples are skipped)."""
        z = settings.confidence_z if z is None else z
        bad = []
        for i, (count, r, se) in enumerate(zip(self.sampled_counts, self.retention, self.retention_se)):
            if count < min_samples or r is None:
                continue
            if r < bound - z * se - 1e-12:
                bad.append(i)
        return bad

    def passes(self, bound: float, z: Optional[float] = None, min_samples: int = 1) -> bool:
        return not self.failures(bound, z, min_samples)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "item": range(len(self.sampled_counts)),
                "sampled": self.sampled_counts,
                "pr_sampled": self.sampled_rate,
                "kept": self.kept_counts,
                "retention": self.retention,
                "retention_se": self.retention_se,
                "wilson_low": self.wilson_low,
                "wilson_high": self.wilson_high,
            }
        )


def _optional(values: np.ndarray) -> Tuple[Optional[float], ...]:
    return tuple(None if not np.isfinite(v) else float(v) for v in values)


def estimate_retention(
    inst: PipInstance,
    x: Point,
    rule: AlterationRule,
    scale: float,
    trials: int,
    seed: int,
    threads: Optional[int] = None,
) -> RetentionEstimate:
    """
    Estimate Pr[i ∈ S] and Pr[i ∈ S′ | i ∈ S] for every item by simulation.

    Trials run in seeded blocks, so the result depends only on the inputs
    and the seed. Every final set is also checked for feasibility.

    Args:
        inst: Instance the rule is applied to (already normalized as the rule needs)
        x: Fractional point
        rule: Alteration rule
        scale: Sampling scale in (0, 1]
        trials: Number of independent trials (≥ 1)
        seed: Master seed
        threads: Worker threads for the block fan-out

    Returns:
        RetentionEstimate: Frequencies, standard errors and Wilson bounds
    """
    if trials < 1:
        raise PreconditionError(f"trials must be at least 1, got {trials}")
    p = inclusion_probabilities(point_array(x, inst.n), scale)
    _check_rule_preconditions(inst, rule)
    idx = inst.index
    dense_t = idx.dense.T
    caps = idx.capacities
    tol = settings.feasibility_tol

    def block(rng: np.random.Generator, count: int):
        S = sample_matrix(rng, p, count)
        final = survivors(inst, S, rule)
        over = (final.astype(float) @ dense_t) > caps + tol if inst.m else np.zeros((count, 0), dtype=bool)
        values = final.astype(float) @ idx.weights
        return S.sum(axis=0), final.sum(axis=0), int(over.any(axis=1).sum()), values.sum(), (values**2).sum()

    results = run_blocks(trials, seed, block, threads)
    sampled = np.sum([r[0] for r in results], axis=0).astype(np.int64)
    kept = np.sum([r[1] for r in results], axis=0).astype(np.int64)
    violations = sum(r[2] for r in results)
    total, total_sq = sum(r[3] for r in results), sum(r[4] for r in results)

    z = settings.confidence_z
    with np.errstate(divide="ignore", invalid="ignore"):
        retention = np.where(sampled > 0, kept / sampled, np.nan)
    low, high = wilson_interval(kept, sampled, z)
    rate = sampled / trials
    mean = total / trials
    variance = max(total_sq / trials - mean * mean, 0.0)

    if violations:
        logger.error(f"{violations} of {trials} trials ended infeasible under rule {rule.value}")
    logger.info(f"Estimated retention: rule={rule.value}, trials={trials}, seed={seed}")
    return RetentionEstimate(
        rule=rule,
        scale=scale,
        trials=trials,
        seed=seed,
        sampled_counts=tuple(int(v) for v in sampled),
        kept_counts=tuple(int(v) for v in kept),
        sampled_rate=tuple(float(v) for v in rate),
        sampled_se=tuple(float(v) for v in binomial_se(rate, np.full(inst.n, trials))),
        retention=_optional(retention),
        retention_se=_optional(binomial_se(retention, sampled)),
        wilson_low=_optional(low),
        wilson_high=_optional(high),
        violations=violations,
        mean_value=float(mean),
        value_se=float(np.sqrt(variance / trials)),
    )


class EventRate(BaseModel):
    """Pr[constraint j marks i | i ∈ S] for one stored entry."""

    item: int
    constraint: int
    size: float
    size_class: str
    sampled: int
    fired: int
    rate: Optional[float]
    se: Optional[float]
    bound: float


class EventRateEstimate(BaseModel):
    rule: AlterationRule
    scale: float
    trials: int
    seed: int
    rates: Tuple[EventRate, ...]

    def failures(self, z: Optional[float] = None, min_samples: int = 1) -> List[EventRate]:
        """Entries whose rate exceeds bound + z·se."""
        z = settings.confidence_z if z is None else z
        return [
            r
            for r in self.rates
            if r.rate is not None and r.sampled >= min_samples and r.rate > r.bound + z * r.se + 1e-12
        ]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.rates])


def estimate_event_rates(
    inst: PipInstance,
    x: Point,
    rule: AlterationRule,
    scale: float,
    trials: int,
    seed: int,
    threads: Optional[int] = None,
) -> EventRateEstimate:
    """
    Estimate, per stored (i, j), the probability that constraint j marks a sampled item i.

    Each rate is paired with its closed-form per-constraint bound and the
    item's size class for j, so the per-event guarantees can be checked
    directly, not only their per-item products.
    """
    if trials < 1:
        raise PreconditionError(f"trials must be at least 1, got {trials}")
    p = inclusion_probabilities(point_array(x, inst.n), scale)
    _check_rule_preconditions(inst, rule)
    idx = inst.index

    def block(rng: np.random.Generator, count: int):
        S = sample_matrix(rng, p, count)
        fired = []
        for _, items, events in _row_events(inst, S, rule):
            any_fired = np.zeros((count, items.size), dtype=bool)
            for f in events.values():
                any_fired |= f
            fired.append(any_fired.sum(axis=0))
        return S.sum(axis=0), fired

    results = run_blocks(trials, seed, block, threads)
    sampled = np.sum([r[0] for r in results], axis=0)

    k = max(column_sparsity(inst), 1)
    alpha = 1.0 / (scale * k)
    B = slack(inst) if rule == AlterationRule.POWERS_OF_TWO else 1.0
    bound = bounds.event_bound(rule.value, alpha, k, max(B, 1.0))
    fired_rows = {}
    if rule != AlterationRule.IDENTITY:
        active = [j for j in range(inst.m) if idx.row_items[j].size]
        for pos, j in enumerate(active):
            fired_rows[j] = np.sum([r[1][pos] for r in results], axis=0)

    rates = []
    for j, (items, sizes) in enumerate(zip(idx.row_items, idx.row_sizes)):
        row_fired = fired_rows.get(j, np.zeros(items.size, dtype=np.int64))
        for pos, (i, s) in enumerate(zip(items, sizes)):
            n_i = int(sampled[i])
            f = int(row_fired[pos])
            rate = f / n_i if n_i else None
            rates.append(
                EventRate(
                    item=int(i),
                    constraint=j,
                    size=float(s),
                    size_class=bounds.size_class(min(float(s), 1.0), alpha, k).value,
                    sampled=n_i,
                    fired=f,
                    rate=rate,
                    se=None if rate is None else float(np.sqrt(rate * (1 - rate) / n_i)),
                    bound=bound,
                )
            )
    rates.sort(key=lambda r: (r.item, r.constraint))
    return EventRateEstimate(rule=rule, scale=scale, trials=trials, seed=seed, rates=tuple(rates))


# ---------------------------------------------------------------------------
# Monotonicity
# ---------------------------------------------------------------------------


class MonotonicityResult(BaseModel):
    """Outcome of the exhaustive survival-monotonicity check."""

    rule: AlterationRule
    n: int
    passed: bool
    # First violation: superset T2, removed element, item that survives T2 but not T2 − {removed}
    superset: Optional[Tuple[int, ...]] = None
    removed: Optional[int] = None
    item: Optional[int] = None


def all_subsets(n: int) -> np.ndarray:
    """(2^n, n) boolean matrix; row s is the subset with bitmask s."""
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def verify_alteration_monotone(inst: PipInstance, rule: AlterationRule) -> MonotonicityResult:
    """
    Check that for all T1 ⊆ T2 and i ∈ T1, surviving alter(T2) implies surviving alter(T1).

    Single-element removals suffice: any T1 ⊆ T2 is reached by removing
    elements of T2 − T1 one at a time, and i stays present throughout.

    Raises:
        PreconditionError: If n exceeds settings.monotone_check_max_n
    """
    if inst.n > settings.monotone_check_max_n:
        raise PreconditionError(
            f"monotonicity check enumerates 2^n sets; n={inst.n} exceeds {settings.monotone_check_max_n}"
        )
    subsets = all_subsets(inst.n)
    alive = survivors(inst, subsets, rule)
    codes = np.arange(1 << inst.n, dtype=np.int64)
    for r in range(inst.n):
        supersets = codes[subsets[:, r]]
        reduced = supersets ^ (1 << r)
        broken = alive[supersets] & ~alive[reduced]
        broken[:, r] = False
        hits = np.argwhere(broken)
        if hits.size:
            row, item = hits[0]
            T2 = tuple(int(i) for i in np.flatnonzero(subsets[supersets[row]]))
            logger.warning(f"Rule {rule.value} is not monotone: item {item} after removing {r} from {T2}")
            return MonotonicityResult(rule=rule, n=inst.n, passed=False, superset=T2, removed=r, item=int(item))
    return MonotonicityResult(rule=rule, n=inst.n, passed=True)
