"""
Monotone submodular objectives over packing constraints.

Provides value oracles (linear, weighted coverage, concave of
cardinality) with a JSON description format, the multilinear extension
F (exact over fractional coordinates, or sampled), continuous greedy
over a packing polytope, the sample-then-alter pipeline reused from the
linear case, and Monte Carlo checks of E[f(S)] ≥ p·F(x) and
E[f(S′)] ≥ β·E[f(S)].
"""

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError

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
    normalize_unit_capacities,
)
from src.packing.lp import (
    LpModel,
    LpSolver,
    build_natural_lp,
    build_strengthened_lp,
    maximize_linear_over_polytope,
)
from src.packing.rounding import (
    AlterationRule,
    Point,
    RoundingReport,
    alter,
    inclusion_probabilities,
    large_b_setup,
    point_array,
    sample_independent,
    survivors,
    verify_alteration_monotone,
)
from src.packing.streams import make_rng, run_blocks

logger = get_logger(__name__)

_CHUNK = 1 << 16
# Stream path reserved for continuous-greedy marginal sampling
_GREEDY_STREAM = 1


# ---------------------------------------------------------------------------
# Oracle descriptions (JSON)
# ---------------------------------------------------------------------------


class LinearSpec(BaseModel):
    family: Literal["linear"] = "linear"
    weights: List[float]


class CoverageSpec(BaseModel):
    family: Literal["coverage"] = "coverage"
    universe_weights: List[float]
    covers: List[List[int]]


class ConcaveCardinalitySpec(BaseModel):
    family: Literal["concave_cardinality"] = "concave_cardinality"
    g: List[float]


OracleSpec = Annotated[Union[LinearSpec, CoverageSpec, ConcaveCardinalitySpec], Field(discriminator="family")]
_SPEC_ADAPTER = TypeAdapter(OracleSpec)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class SubmodularOracle(ABC):
    """
    Value oracle f: 2^[n] → R≥0.

    Implementations evaluate a whole batch of sets at once: `values`
    takes a (T, n) boolean matrix and returns T values. Oracles hold no
    mutable state and may be called from concurrent samplers.
    """

    family: str = ""

    def __init__(self, n: int):
        self.n = n

    @abstractmethod
    def values(self, masks: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def describe(self) -> BaseModel:
        ...

    def value(self, items: Union[ItemSet, Iterable[int]]) -> float:
        """f of one set, given as an ItemSet or an iterable of item indices."""
        mask = np.zeros((1, self.n), dtype=bool)
        chosen = items.items if isinstance(items, ItemSet) else list(items)
        mask[0, chosen] = True
        return float(self.values(mask)[0])

    def _check_masks(self, masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim != 2 or masks.shape[1] != self.n:
            raise InstanceError(f"expected a (T, {self.n}) mask matrix, got shape {masks.shape}")
        return masks


class LinearOracle(SubmodularOracle):
    family = "linear"

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise InstanceError(f"weights[{_first_bad(w)}] must be finite and nonnegative")
        super().__init__(len(w))
        self.weights = w

    def values(self, masks: np.ndarray) -> np.ndarray:
        return self._check_masks(masks).astype(float) @ self.weights

    def describe(self) -> LinearSpec:
        return LinearSpec(weights=[float(v) for v in self.weights])


class WeightedCoverageOracle(SubmodularOracle):
    """f(T) = total weight of universe elements covered by some item of T."""

    family = "coverage"

    def __init__(self, universe_weights: Sequence[float], covers: Sequence[Sequence[int]]):
        u = np.asarray(universe_weights, dtype=float)
        if np.any(~np.isfinite(u)) or np.any(u < 0):
            raise InstanceError(f"universe_weights[{_first_bad(u)}] must be finite and nonnegative")
        super().__init__(len(covers))
        self.universe_weights = u
        self.covers = [sorted(set(int(e) for e in c)) for c in covers]
        self.incidence = np.zeros((self.n, len(u)), dtype=float)
        for i, cover in enumerate(self.covers):
            for e in cover:
                if not 0 <= e < len(u):
                    raise InstanceError(f"covers[{i}]: element {e} out of range [0, {len(u)})")
                self.incidence[i, e] = 1.0

    def values(self, masks: np.ndarray) -> np.ndarray:
        covered = (self._check_masks(masks).astype(float) @ self.incidence) > 0
        return covered.astype(float) @ self.universe_weights

    def describe(self) -> CoverageSpec:
        return CoverageSpec(universe_weights=[float(v) for v in self.universe_weights], covers=self.covers)


class ConcaveCardinalityOracle(SubmodularOracle):
    """f(T) = g(|T|) for a tabulated nondecreasing concave g with g(0) = 0."""

    family = "concave_cardinality"

    def __init__(self, g: Sequence[float], tol: float = 1e-12):
        table = np.asarray(g, dtype=float)
        if table.size == 0 or abs(table[0]) > tol:
            raise InstanceError("g must be tabulated from g(0) = 0")
        if np.any(~np.isfinite(table)):
            raise InstanceError(f"g has a non-finite entry at {_first_bad(table)}")
        first = np.diff(table)
        if np.any(first < -tol):
            raise InstanceError(f"g decreases at |T| = {int(np.argmax(first < -tol)) + 1}")
        second = np.diff(first)
        if np.any(second > tol):
            raise InstanceError(f"g is not concave at |T| = {int(np.argmax(second > tol)) + 1}")
        super().__init__(table.size - 1)
        self.g = table

    def values(self, masks: np.ndarray) -> np.ndarray:
        return self.g[self._check_masks(masks).sum(axis=1)]

    def describe(self) -> ConcaveCardinalitySpec:
        return ConcaveCardinalitySpec(g=[float(v) for v in self.g])


def _first_bad(arr: np.ndarray) -> int:
    return int(np.argmax(~np.isfinite(arr) | (np.nan_to_num(arr, nan=-1.0) < 0)))


def oracle_from_spec(spec: Union[LinearSpec, CoverageSpec, ConcaveCardinalitySpec]) -> SubmodularOracle:
    if isinstance(spec, LinearSpec):
        return LinearOracle(spec.weights)
    if isinstance(spec, CoverageSpec):
        return WeightedCoverageOracle(spec.universe_weights, spec.covers)
    return ConcaveCardinalityOracle(spec.g)


def parse_oracle(text: str) -> SubmodularOracle:
    """
    Build an oracle from its JSON description.

    Raises:
        InstanceError: On malformed JSON, unknown family or invalid data
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"malformed oracle JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    try:
        spec = _SPEC_ADAPTER.validate_python(data)
    except ValidationError as e:
        err = e.errors()[0]
        location = ".".join(str(part) for part in err.get("loc", ())) or "oracle"
        raise InstanceError(f"{location}: {err.get('msg')}") from e
    return oracle_from_spec(spec)


def load_oracle(path: Union[str, Path]) -> SubmodularOracle:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InstanceError(f"cannot read oracle file {path}: {e}") from e
    oracle = parse_oracle(text)
    logger.info(f"Loaded {oracle.family} oracle {path.name}: n={oracle.n}")
    return oracle


def random_coverage_oracle(n: int, universe: int, seed: int, density: float = 0.3) -> WeightedCoverageOracle:
    """Coverage oracle with random covers (each element joins each cover with prob. density) and weights in (0, 1]."""
    rng = make_rng(seed)
    weights = 1.0 - rng.random(universe)
    incidence = rng.random((n, universe)) < density
    return WeightedCoverageOracle(weights, [np.flatnonzero(row).tolist() for row in incidence])


class OracleCheck(BaseModel):
    monotone: bool
    submodular: bool


def verify_oracle(f: SubmodularOracle, tol: float = 1e-9) -> OracleCheck:
    """
    Check monotonicity and diminishing returns on all 2^n sets.

    Comparing marginals of i at T and T ∪ {j} for every j suffices, since
    any pair A ⊆ B is connected by such single additions.
    """
    if f.n > 12:
        raise PreconditionError(f"exhaustive oracle check is limited to n <= 12, got n={f.n}")
    codes = np.arange(1 << f.n, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(f.n)) & 1).astype(bool)
    table = f.values(masks)
    monotone, submodular = True, True
    for i in range(f.n):
        without = codes[~masks[:, i]]
        gain = table[without | (1 << i)] - table[without]
        if np.any(gain < -tol):
            monotone = False
        for j in range(f.n):
            if j == i:
                continue
            base = without[~masks[without, j]]
            grown = base | (1 << j)
            if np.any(table[grown | (1 << i)] - table[grown] > table[base | (1 << i)] - table[base] + tol):
                submodular = False
    return OracleCheck(monotone=monotone, submodular=submodular)


# ---------------------------------------------------------------------------
# Multilinear extension
# ---------------------------------------------------------------------------


def _check_point(f: SubmodularOracle, x: Point) -> np.ndarray:
    arr = point_array(x, f.n)
    if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
        raise PreconditionError("multilinear extension needs x in [0, 1]^n")
    return np.clip(arr, 0.0, 1.0)


def _fractional_enumeration(x: np.ndarray):
    """
    Yield (masks, probabilities) chunks over all subsets of the fractional coordinates.

    Coordinates at 1 are always present and coordinates at 0 never.
    """
    frac = np.flatnonzero((x > 0.0) & (x < 1.0))
    if frac.size > settings.multilinear_exact_max_n:
        raise PreconditionError(
            f"exact multilinear extension enumerates 2^{frac.size} sets; "
            f"limit is {settings.multilinear_exact_max_n} fractional coordinates"
        )
    ones = x >= 1.0
    xf = x[frac]
    bits = np.arange(frac.size)
    total = 1 << frac.size
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        chosen = ((codes[:, None] >> bits) & 1).astype(bool)
        probs = np.prod(np.where(chosen, xf, 1.0 - xf), axis=1)
        masks = np.repeat(ones[None, :], codes.size, axis=0)
        masks[:, frac] = chosen
        yield masks, probs


def multilinear_exact(f: SubmodularOracle, x: Point) -> float:
    """
    F(x) = Σ_T Π_{i∈T} x_i Π_{j∉T} (1 − x_j) f(T), exactly.

    Only coordinates strictly between 0 and 1 are enumerated.

    Raises:
        PreconditionError: If more than settings.multilinear_exact_max_n coordinates are fractional
    """
    arr = _check_point(f, x)
    return float(sum(probs @ f.values(masks) for masks, probs in _fractional_enumeration(arr)))


def multilinear_gradient(f: SubmodularOracle, x: Point) -> Tuple[float, np.ndarray]:
    """F(x) and the exact marginals E[f(S ∪ {i})] − F(x) for S ~ x, from one enumeration."""
    arr = _check_point(f, x)
    F = 0.0
    with_item = np.zeros(f.n)
    for masks, probs in _fractional_enumeration(arr):
        F += float(probs @ f.values(masks))
        for i in range(f.n):
            if arr[i] >= 1.0:
                continue
            grown = masks.copy()
            grown[:, i] = True
            with_item[i] += float(probs @ f.values(grown))
    marginals = np.where(arr >= 1.0, 0.0, with_item - F)
    return F, np.maximum(marginals, 0.0)


def multilinear_estimate(
    f: SubmodularOracle, x: Point, samples: int, seed: int, threads: Optional[int] = None
) -> Tuple[float, float]:
    """
    Unbiased sample estimate of F(x).

    Returns:
        (mean of f over the samples, its standard error)
    """
    if samples < 1:
        raise PreconditionError(f"samples must be at least 1, got {samples}")
    arr = _check_point(f, x)

    def block(rng: np.random.Generator, count: int):
        vals = f.values(rng.random((count, f.n)) < arr)
        return vals.sum(), (vals**2).sum()

    parts = run_blocks(samples, seed, block, threads)
    mean = sum(p[0] for p in parts) / samples
    variance = max(sum(p[1] for p in parts) / samples - mean * mean, 0.0)
    return float(mean), float(math.sqrt(variance / samples))


def _sampled_marginals(f: SubmodularOracle, x: np.ndarray, samples: int, rng: np.random.Generator) -> np.ndarray:
    masks = rng.random((samples, f.n)) < x
    base = f.values(masks)
    marginals = np.zeros(f.n)
    for i in range(f.n):
        grown = masks.copy()
        grown[:, i] = True
        marginals[i] = float(np.mean(f.values(grown) - base))
    return np.maximum(marginals, 0.0)


# ---------------------------------------------------------------------------
# Continuous greedy
# ---------------------------------------------------------------------------


class GreedyResult(BaseModel):
    """Continuous-greedy output with F tracked per step (exact mode only)."""

    model_config = ConfigDict(frozen=True)

    solution: FractionalSolution
    steps: int
    samples: Optional[int]
    exact: bool
    history: Tuple[float, ...] = ()


def continuous_greedy_path(
    f: SubmodularOracle,
    polytope: LpModel,
    steps: Optional[int] = None,
    samples: Optional[int] = None,
    seed: int = 0,
    exact: Optional[bool] = None,
    solver: Optional[LpSolver] = None,
) -> GreedyResult:
    """
    Run continuous greedy and keep the value of F after every step.

    Starting from x = 0, each step estimates the marginals w_i of F at x,
    moves to the polytope vertex v maximizing w·v, and sets x += v/T. The
    result is an average of T vertices of a down-closed polytope, so it
    stays feasible.

    Args:
        f: Monotone submodular oracle on the polytope's variables
        polytope: Packing polytope with zero lower bounds
        steps: T; defaults to max(settings.greedy_min_steps, 10n)
        samples: Marginal samples per step in sampled mode (settings.greedy_samples)
        seed: Seed for sampled marginals
        exact: Force exact marginals on/off; defaults to n <= settings.greedy_exact_max_n
        solver: LP engine for the linear steps

    Returns:
        GreedyResult: The point, its F value and the per-step history
    """
    n = polytope.num_vars
    if f.n != n:
        raise InstanceError(f"oracle has ground set {f.n}, polytope has {n} variables")
    if np.any(polytope.lower != 0):
        raise PreconditionError("continuous greedy needs a down-closed polytope (zero lower bounds)")
    T = steps or max(settings.greedy_min_steps, 10 * n)
    R = samples or settings.greedy_samples
    exact = n <= settings.greedy_exact_max_n if exact is None else exact
    rng = make_rng(seed, _GREEDY_STREAM)

    x = np.zeros(n)
    history: List[float] = []
    for t in range(T):
        if exact:
            F, marginals = multilinear_gradient(f, x)
            if t:
                history.append(F)
        else:
            marginals = _sampled_marginals(f, x, R, rng)
        vertex = maximize_linear_over_polytope(polytope, marginals, solver).array
        x = np.clip(x + vertex / T, 0.0, polytope.upper)
        logger.debug(f"Continuous greedy step {t + 1}/{T}")

    if exact:
        objective = multilinear_exact(f, x)
        history.append(objective)
    else:
        objective, _ = multilinear_estimate(f, x, R, seed)
    logger.info(f"Continuous greedy finished: n={n}, T={T}, exact={exact}, F={objective:.6g}")
    return GreedyResult(
        solution=FractionalSolution.from_array(x, objective),
        steps=T,
        samples=None if exact else R,
        exact=exact,
        history=tuple(history),
    )


def continuous_greedy(
    f: SubmodularOracle,
    polytope: LpModel,
    steps: Optional[int] = None,
    samples: Optional[int] = None,
    seed: int = 0,
    exact: Optional[bool] = None,
    solver: Optional[LpSolver] = None,
) -> FractionalSolution:
    """Approximate max F(x) over the polytope; objective is F at the returned point."""
    return continuous_greedy_path(f, polytope, steps, samples, seed, exact, solver).solution


# ---------------------------------------------------------------------------
# Rounding pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubmodularPlan:
    """Normalized instance, greedy polytope and sampling scale for one alteration rule."""

    instance: PipInstance
    polytope: LpModel
    rule: AlterationRule
    scale: float
    alpha: float
    retention_bound: float


def plan_submodular(
    inst: PipInstance,
    alpha: float = 1.0,
    rule: AlterationRule = AlterationRule.SORTED,
    strengthened: bool = True,
) -> SubmodularPlan:
    """
    Pick the polytope and scale for the sample-then-alter pipeline.

    With the sorted rule the instance is normalized to unit capacities,
    greedy runs over the strengthened polytope (or the natural one when
    `strengthened` is False), and S is sampled at x/(αk). With the
    powers-of-two rule the instance is normalized to unit max size,
    greedy runs over the natural polytope and S is sampled at x/α_B.
    """
    if not inst.has_unit_bounds:
        raise PreconditionError("submodular maximization needs unit upper bounds")
    if rule == AlterationRule.SORTED:
        if alpha <= 0:
            raise PreconditionError(f"alpha must be positive, got {alpha}")
        norm = normalize_unit_capacities(inst)
        polytope = build_strengthened_lp(norm) if strengthened else build_natural_lp(norm)
        k = max(column_sparsity(norm), 1)
        return SubmodularPlan(
            norm, polytope, rule, 1.0 / (alpha * k), alpha, bounds.strong_retention_bound(alpha, k)
        )
    if rule == AlterationRule.POWERS_OF_TWO:
        norm, B, k, alpha_b = large_b_setup(inst)
        return SubmodularPlan(
            norm, build_natural_lp(norm), rule, 1.0 / alpha_b, alpha_b,
            bounds.large_b_retention_bound(max(B, 1.0), k),
        )
    raise PreconditionError(f"submodular rounding supports the sorted and powers_of_two rules, not {rule.value}")


def maximize_submodular(
    f: SubmodularOracle,
    inst: PipInstance,
    alpha: float = 1.0,
    steps: Optional[int] = None,
    samples: Optional[int] = None,
    seed: int = 0,
    rule: AlterationRule = AlterationRule.SORTED,
    strengthened: bool = True,
    x: Optional[Point] = None,
) -> RoundingReport:
    """
    Continuous greedy, then sample and alter.

    Args:
        f: Monotone submodular oracle
        inst: Instance with u ≡ 1
        alpha: Scaling constant for the sorted rule
        steps, samples: Continuous-greedy parameters
        seed: Seed for greedy sampling and rounding
        rule: AlterationRule.SORTED or AlterationRule.POWERS_OF_TWO
        strengthened: Include the big-item rows in the polytope
        x: Precomputed greedy point (skips continuous greedy)

    Returns:
        RoundingReport: Trace whose value is f(S′)

    Raises:
        PreconditionError: If x lies outside the greedy polytope
    """
    if f.n != inst.n:
        raise InstanceError(f"oracle has ground set {f.n}, instance has n={inst.n}")
    plan = plan_submodular(inst, alpha, rule, strengthened)

    if x is None:
        point = continuous_greedy(f, plan.polytope, steps, samples, seed).array
    else:
        point = point_array(x, inst.n)
        violation = plan.polytope.max_violation(point)
        if violation > settings.x_feasibility_tol:
            raise PreconditionError(f"x is not in the submodular polytope (violation {violation:.3g})")
    S = sample_independent(point, plan.scale, seed)
    final, causes = alter(plan.instance, S, rule)
    feasible = check_feasible(inst, final)
    if not feasible:
        logger.error(f"submodular rounding produced an infeasible set (seed={seed})")
    return RoundingReport(
        seed=seed,
        algorithm="submodular",
        rule=rule,
        n=inst.n,
        alpha=plan.alpha,
        scale=plan.scale,
        sampled=tuple(S.items),
        causes=tuple(causes),
        final=tuple(final.items),
        value=f.value(final),
        feasible=feasible,
        retention_bound=plan.retention_bound,
    )


# ---------------------------------------------------------------------------
# Monte Carlo checks
# ---------------------------------------------------------------------------


class GoodSetCheck(BaseModel):
    """E[f(S)] for S sampled at p·x against p·F(x)."""

    p: float
    trials: int
    mean: float
    se: float
    target: float
    passed: bool


def check_good_s(
    f: SubmodularOracle, x: Point, p: float, trials: int, seed: int, threads: Optional[int] = None
) -> GoodSetCheck:
    """
    Check E[f(S)] ≥ p·F(x) for S sampled independently at p·x.

    Passes iff the sample mean is at least p·F(x) − z·SE.

    Raises:
        PreconditionError: If n exceeds settings.greedy_exact_max_n or p is outside [0, 1]
    """
    if f.n > settings.greedy_exact_max_n:
        raise PreconditionError(f"exact F needs n <= {settings.greedy_exact_max_n}, got n={f.n}")
    if not 0.0 <= p <= 1.0:
        raise PreconditionError(f"p must lie in [0, 1], got {p}")
    if trials < 1:
        raise PreconditionError(f"trials must be at least 1, got {trials}")
    arr = _check_point(f, x)
    target = p * multilinear_exact(f, arr)
    probs = p * arr

    def block(rng: np.random.Generator, count: int):
        vals = f.values(rng.random((count, f.n)) < probs)
        return vals.sum(), (vals**2).sum()

    parts = run_blocks(trials, seed, block, threads)
    mean = sum(q[0] for q in parts) / trials
    se = math.sqrt(max(sum(q[1] for q in parts) / trials - mean * mean, 0.0) / trials)
    passed = mean >= target - settings.confidence_z * se - 1e-12
    return GoodSetCheck(p=p, trials=trials, mean=mean, se=se, target=target, passed=passed)


class CorollaryCheck(BaseModel):
    """E[f(S′)] against β̂·E[f(S)] with β̂ the smallest well-sampled empirical retention."""

    rule: AlterationRule
    trials: int
    monotone: Optional[bool]
    beta: float
    beta_items: int = 0
    mean_f_sampled: float
    mean_f_final: float
    se: float
    passed: bool
    reason: str = ""


def check_corollary_retention(
    f: SubmodularOracle,
    inst: PipInstance,
    rule: AlterationRule,
    x: Point,
    scale: float,
    trials: int,
    seed: int,
    threads: Optional[int] = None,
    min_samples: Optional[int] = None,
) -> CorollaryCheck:
    """
    Check E[f(S′)] ≥ β̂·E[f(S)] for a monotone alteration rule.

    The rule's survival monotonicity is verified by enumeration first
    (when n allows); a non-monotone rule is reported as failing its
    precondition and not tested. β̂ is the smallest empirical
    Pr[i ∈ S′ | i ∈ S] over items sampled at least `min_samples` times
    (default settings.retention_min_samples). When no item reaches that
    count, every sampled item is used and a warning is logged.
    """
    min_samples = settings.retention_min_samples if min_samples is None else min_samples
    if min_samples < 1:
        raise PreconditionError(f"min_samples must be at least 1, got {min_samples}")
    if f.n != inst.n:
        raise InstanceError(f"oracle has ground set {f.n}, instance has n={inst.n}")
    monotone: Optional[bool] = None
    if inst.n <= settings.monotone_check_max_n:
        monotone = verify_alteration_monotone(inst, rule).passed
        if not monotone:
            return CorollaryCheck(
                rule=rule, trials=0, monotone=False, beta=0.0, mean_f_sampled=0.0, mean_f_final=0.0,
                se=0.0, passed=False, reason="alteration is not monotone",
            )

    probs = inclusion_probabilities(point_array(x, inst.n), scale)

    def block(rng: np.random.Generator, count: int):
        S = rng.random((count, inst.n)) < probs
        final = survivors(inst, S, rule)
        a, b = f.values(S), f.values(final)
        return S.sum(axis=0), final.sum(axis=0), a.sum(), b.sum(), (a * a).sum(), (b * b).sum(), (a * b).sum()

    parts = run_blocks(trials, seed, block, threads)
    sampled = np.sum([q[0] for q in parts], axis=0)
    kept = np.sum([q[1] for q in parts], axis=0)
    sa, sb, saa, sbb, sab = (sum(q[i] for q in parts) / trials for i in range(2, 7))

    seen = sampled >= min_samples
    if not np.any(seen):
        seen = sampled > 0
        if np.any(seen):
            logger.warning(f"No item sampled {min_samples} times in {trials} trials; beta uses every sampled item")
    beta = float(np.min(kept[seen] / sampled[seen])) if np.any(seen) else 1.0
    diff_mean = sb - beta * sa
    diff_var = max(sbb - 2 * beta * sab + beta * beta * saa - diff_mean * diff_mean, 0.0)
    se = math.sqrt(diff_var / trials)
    passed = diff_mean >= -settings.confidence_z * se - 1e-12
    return CorollaryCheck(
        rule=rule, trials=trials, monotone=monotone, beta=beta, beta_items=int(np.sum(seen)),
        mean_f_sampled=float(sa), mean_f_final=float(sb), se=se, passed=passed,
    )
