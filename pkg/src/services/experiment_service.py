"""
Experiment campaigns behind the command-line interface.

ExperimentService turns library calls into result tables: integrality
gaps of the structured families, Monte Carlo summaries of the rounding
algorithms and of the submodular pipeline, and the `verify` suites that
certify the guarantees on seeded random corpora. Every campaign returns
pydantic result models together with a pandas DataFrame for printing
or persisting.
"""

import math
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.config import settings
from src.exceptions import InstanceError, PackingError, PreconditionError
from src.logger import get_logger
from src.packing.exact import solve_exact, solve_exact_submodular
from src.packing.generators import (
    gen_corpus,
    gen_gap_2k_minus_1,
    gen_gap_general_b,
    gen_l1_bad_example,
    gen_random,
    gen_strawman_counterexample,
)
from src.packing.instance import (
    PipInstance,
    column_sparsity,
    normalize_unit_capacities,
    normalize_unit_max_size,
)
from src.packing.lp import build_natural_lp, build_strengthened_lp, solve_lp
from src.packing.rounding import (
    AlterationRule,
    Point,
    RetentionEstimate,
    RoundingPlan,
    estimate_event_rates,
    estimate_retention,
    plan_rounding,
    verify_alteration_monotone,
)
from src.packing.streams import make_rng
from src.packing.subadditivity import (
    check_fractional_subadditivity,
    check_induction_step,
    check_subadditivity_theorem,
    counterexample_family,
    fractional_cover_family,
    random_monotone_family,
    validate_family,
)
from src.packing.submodular import (
    SubmodularOracle,
    check_corollary_retention,
    check_good_s,
    continuous_greedy_path,
    plan_submodular,
    random_coverage_oracle,
)

logger = get_logger(__name__)

GAP_FAMILIES = ("gap2k", "l1bad", "gapB", "strawman")
_GAP_TOL = 1e-6
# Larger corpus instances are solved by branch-and-bound in the dominance suite
_DOMINANCE_ENUM_MAX = 16
# Greedy must reach this fraction of the optimum in exact-F mode
_GREEDY_QUALITY = 1.0 - 1.0 / math.e - 0.05

# Stream paths, one per suite, so suites never share random numbers
_CORPUS, _LARGE_B_CORPUS, _GOOD_S, _SYSTEMS, _MONOTONE, _GREEDY = range(1, 7)


# ---------------------------------------------------------------------------
# Result models
# ---------------------------------------------------------------------------


class GapRow(BaseModel):
    """LP values, exact optimum and gaps for one parameter point of a gap family."""

    family: str
    params: str
    n: int
    m: int
    k: int
    lp_natural: float
    lp_strengthened: Optional[float] = None
    exact: Optional[float] = None
    gap_natural: Optional[float] = None
    gap_strengthened: Optional[float] = None
    # What the construction is built to reach
    expected_lp: Optional[float] = None
    expected_exact: Optional[float] = None
    passed: bool


class RoundSummary(BaseModel):
    algorithm: str
    rule: str
    alpha: Optional[float]
    scale: float
    trials: int
    seed: int
    lp_value: float
    mean_value: float
    value_se: float
    violations: int
    retention_bound: Optional[float]
    min_retention: Optional[float]
    failing_items: Tuple[int, ...]
    passed: bool


class SubmodSummary(BaseModel):
    rule: str
    alpha: float
    scale: float
    trials: int
    seed: int
    greedy_value: float
    greedy_exact: bool
    greedy_steps: int
    mean_f_sampled: float
    mean_f_final: float
    final_se: float
    beta_hat: float
    retention_bound: float
    opt: Optional[float] = None
    ratio: Optional[float] = None
    passed: bool


class SuiteResult(BaseModel):
    """One PASS/FAIL line of the verify report."""

    suite: str
    passed: bool
    checks: int
    failures: int
    detail: str = ""
    seconds: float = 0.0


class VerifyScale(BaseModel):
    """Sizes of the verify campaigns."""

    corpus: int
    max_n: int
    trials: int
    min_samples: int
    gap_ks: Tuple[int, ...]
    strawman_trials: int
    good_s_oracles: int
    good_s_trials: int
    systems: int
    monotone_instances: int
    greedy_instances: int
    greedy_trials: int
    event_instances: int


QUICK_SCALE = VerifyScale(
    corpus=4,
    max_n=12,
    trials=4000,
    min_samples=200,
    gap_ks=(2, 3, 4),
    strawman_trials=5000,
    good_s_oracles=4,
    good_s_trials=5000,
    systems=120,
    monotone_instances=5,
    greedy_instances=2,
    greedy_trials=2000,
    event_instances=2,
)

FULL_SCALE = VerifyScale(
    corpus=50,
    max_n=30,
    trials=100_000,
    min_samples=500,
    gap_ks=(2, 3, 4, 5, 6),
    strawman_trials=100_000,
    good_s_oracles=20,
    good_s_trials=100_000,
    systems=1000,
    monotone_instances=20,
    greedy_instances=10,
    greedy_trials=10_000,
    event_instances=10,
)


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**31))


def _gap_instance(family: str, point: Dict[str, Any]) -> Tuple[PipInstance, Optional[float], Optional[float]]:
    """Instance plus the LP lower bound and exact value the family is built to reach."""
    try:
        if family == "gap2k":
            k = int(point["k"])
            eps = point.get("epsilon")
            inst = gen_gap_2k_minus_1(k, None if eps is None else float(eps))
            eps = 1.0 / (10 * inst.n * k) if eps is None else float(eps)
            return inst, (1.0 - k * eps) * (2 * k - 1), 1.0
        if family == "l1bad":
            n = int(point["n"])
            return gen_l1_bad_example(n), n / 2.0, 1.0
        if family == "gapB":
            n, B = int(point["n"]), float(point["B"])
            return gen_gap_general_b(n, B), n / 2.0, float(math.floor(B))
        if family == "strawman":
            M = int(point["M"])
            return gen_strawman_counterexample(M)[0], None, float(M - 1)
    except KeyError as e:
        raise InstanceError(f"family '{family}' needs parameter {e}") from e
    raise InstanceError(f"unknown gap family '{family}', expected one of {GAP_FAMILIES}")


class ExperimentService:
    """Runs campaigns; `threads` sizes the worker pool of every Monte Carlo estimate."""

    def __init__(self, threads: Optional[int] = None):
        self.threads = threads

    # -----------------------------------------------------------------------
    # Integrality gaps
    # -----------------------------------------------------------------------

    def gap_table(self, family: str, points: Sequence[Dict[str, Any]]) -> Tuple[List[GapRow], pd.DataFrame]:
        """
        Natural and strengthened LP values against the exact optimum.

        Args:
            family: "gap2k" (k, epsilon), "l1bad" (n), "gapB" (n, B) or "strawman" (M)
            points: One parameter dict per table row

        Returns:
            The rows and their DataFrame
        """
        rows = []
        for point in points:
            inst, expected_lp, expected_exact = _gap_instance(family, point)
            norm = normalize_unit_capacities(inst)
            lp_natural = solve_lp(build_natural_lp(norm)).objective
            lp_strong = solve_lp(build_strengthened_lp(norm)).objective if norm.has_unit_bounds else None
            try:
                exact = solve_exact(inst).value
            except PreconditionError as e:
                logger.warning(f"No exact optimum for {family} {point}: {e}")
                exact = None

            def ratio(lp: Optional[float]) -> Optional[float]:
                if lp is None or exact is None:
                    return None
                if exact <= 0:
                    return math.inf if lp > settings.lp_optimality_tol else math.nan
                return lp / exact

            compared = lp_strong if family == "gap2k" else lp_natural
            passed = True
            if expected_lp is not None:
                passed = bool(compared is not None and compared >= expected_lp - _GAP_TOL)
            if expected_exact is not None and exact is not None:
                passed = bool(passed and abs(exact - expected_exact) <= _GAP_TOL)

            rows.append(
                GapRow(
                    family=family,
                    params=",".join(f"{key}={val}" for key, val in point.items()),
                    n=inst.n,
                    m=inst.m,
                    k=column_sparsity(inst),
                    lp_natural=lp_natural,
                    lp_strengthened=lp_strong,
                    exact=exact,
                    gap_natural=ratio(lp_natural),
                    gap_strengthened=ratio(lp_strong),
                    expected_lp=expected_lp,
                    expected_exact=expected_exact,
                    passed=passed,
                )
            )
        logger.info(f"Gap table for {family}: {len(rows)} rows")
        return rows, pd.DataFrame([r.model_dump() for r in rows])

    # -----------------------------------------------------------------------
    # Rounding
    # -----------------------------------------------------------------------

    def _estimate(self, plan: RoundingPlan, trials: int, seed: int) -> RetentionEstimate:
        return estimate_retention(plan.instance, plan.x, plan.rule, plan.scale, trials, seed, self.threads)

    def round_summary(
        self,
        inst: PipInstance,
        algorithm: str,
        alpha: Optional[float] = None,
        trials: int = 1000,
        seed: int = 0,
        x: Optional[Point] = None,
        min_samples: int = 1,
    ) -> Tuple[RoundSummary, pd.DataFrame]:
        """
        Monte Carlo summary of one rounding algorithm.

        x defaults to the optimum of the algorithm's own relaxation. Items
        with fewer than `min_samples` conditional samples are not tested
        against the retention bound.

        Returns:
            The summary and the per-item retention table
        """
        plan = plan_rounding(inst, algorithm, x, alpha)
        est = self._estimate(plan, trials, seed)
        bound = plan.retention_bound
        failing = est.failures(bound, min_samples=min_samples) if bound is not None else []
        tested = [r for r, c in zip(est.retention, est.sampled_counts) if r is not None and c >= min_samples]

        summary = RoundSummary(
            algorithm=algorithm,
            rule=plan.rule.value,
            alpha=plan.alpha,
            scale=plan.scale,
            trials=trials,
            seed=seed,
            lp_value=float(plan.instance.index.weights @ plan.x),
            mean_value=est.mean_value,
            value_se=est.value_se,
            violations=est.violations,
            retention_bound=bound,
            min_retention=min(tested) if tested else None,
            failing_items=tuple(failing),
            passed=est.violations == 0 and not failing,
        )
        frame = est.to_frame()
        frame["bound"] = bound
        return summary, frame

    # -----------------------------------------------------------------------
    # Submodular
    # -----------------------------------------------------------------------

    def submod_summary(
        self,
        inst: PipInstance,
        f: SubmodularOracle,
        alpha: float = 1.0,
        steps: Optional[int] = None,
        samples: Optional[int] = None,
        trials: int = 1000,
        seed: int = 0,
        rule: AlterationRule = AlterationRule.SORTED,
    ) -> Tuple[SubmodSummary, pd.DataFrame]:
        """
        Continuous greedy followed by a Monte Carlo estimate of E[f(S′)].

        The exact optimum is reported when n fits the exhaustive limit.

        Returns:
            The summary and a (metric, value) table
        """
        if f.n != inst.n:
            raise InstanceError(f"oracle has ground set {f.n}, instance has n={inst.n}")
        plan = plan_submodular(inst, alpha, rule)
        greedy = continuous_greedy_path(f, plan.polytope, steps, samples, seed)
        check = check_corollary_retention(
            f, plan.instance, rule, greedy.solution.array, plan.scale, trials, seed, self.threads
        )

        opt = None
        if inst.n <= min(settings.greedy_exact_max_n, settings.exact_exhaustive_max_items):
            opt = solve_exact_submodular(f, inst).value
        summary = SubmodSummary(
            rule=rule.value,
            alpha=plan.alpha,
            scale=plan.scale,
            trials=trials,
            seed=seed,
            greedy_value=greedy.solution.objective,
            greedy_exact=greedy.exact,
            greedy_steps=greedy.steps,
            mean_f_sampled=check.mean_f_sampled,
            mean_f_final=check.mean_f_final,
            final_se=check.se,
            beta_hat=check.beta,
            retention_bound=plan.retention_bound,
            opt=opt,
            ratio=check.mean_f_final / opt if opt else None,
            passed=check.passed,
        )
        frame = pd.DataFrame(
            {"metric": list(summary.model_dump().keys()), "value": list(summary.model_dump().values())}
        )
        return summary, frame

    # -----------------------------------------------------------------------
    # Verify suites
    # -----------------------------------------------------------------------

    def verify(self, full: bool = False, seed: int = 0) -> Tuple[List[SuiteResult], pd.DataFrame]:
        """
        Run every invariant suite and report one PASS/FAIL line per suite.

        Args:
            full: Acceptance-scale trial counts instead of the quick scale
            seed: Master seed; every suite derives its own streams from it

        Returns:
            The suite results and their DataFrame
        """
        scale = FULL_SCALE if full else QUICK_SCALE
        corpus = gen_corpus(scale.corpus, seed * 100 + _CORPUS, max_n=scale.max_n)
        large_b_corpus = gen_corpus(
            scale.corpus, seed * 100 + _LARGE_B_CORPUS, max_n=scale.max_n, capacities=(1.0, 2.0, 3.0)
        )
        estimates: Dict[str, List[Tuple[RoundingPlan, RetentionEstimate]]] = {}

        def retention(algorithm: str, instances: List[PipInstance]):
            if algorithm not in estimates:
                estimates[algorithm] = []
                for t, inst in enumerate(instances):
                    plan = plan_rounding(inst, algorithm)
                    estimates[algorithm].append((plan, self._estimate(plan, scale.trials, seed + t)))
            return estimates[algorithm]

        suites: List[Tuple[str, Callable[[], Tuple[int, int, str]]]] = [
            ("retention-simple", lambda: self._retention_suite(retention("simple", corpus), scale)),
            ("retention-strong", lambda: self._retention_suite(retention("strong", corpus), scale)),
            ("retention-large-b", lambda: self._retention_suite(retention("large-b", large_b_corpus), scale)),
            ("feasibility", lambda: self._feasibility_suite(estimates)),
            ("event-rates", lambda: self._event_suite(corpus, scale, seed)),
            ("integrality-gaps", lambda: self._gap_suite(scale)),
            ("strawman", lambda: self._strawman_suite(scale, seed)),
            ("good-sample", lambda: self._good_s_suite(scale, seed)),
            ("subadditivity", lambda: self._subadditivity_suite(scale, seed)),
            ("alteration-monotone", lambda: self._monotone_suite(scale, seed)),
            ("continuous-greedy", lambda: self._greedy_suite(scale, seed)),
            ("oracle-dominance", lambda: self._dominance_suite(corpus)),
        ]

        results = []
        for name, suite in suites:
            start = time.perf_counter()
            try:
                checks, failures, detail = suite()
            except PackingError as e:
                logger.error(f"Suite {name} aborted: {e}")
                checks, failures, detail = 0, 1, f"error: {e}"
            seconds = time.perf_counter() - start
            results.append(
                SuiteResult(
                    suite=name,
                    passed=failures == 0,
                    checks=checks,
                    failures=failures,
                    detail=detail,
                    seconds=round(seconds, 3),
                )
            )
            logger.info(f"Suite {name}: {'PASS' if failures == 0 else 'FAIL'} ({checks} checks, {seconds:.1f}s)")

        frame = pd.DataFrame([r.model_dump() for r in results])
        frame.insert(1, "status", np.where(frame["passed"], "PASS", "FAIL"))
        return results, frame

    def _retention_suite(
        self, runs: List[Tuple[RoundingPlan, RetentionEstimate]], scale: VerifyScale
    ) -> Tuple[int, int, str]:
        checks = failures = 0
        worst = math.inf
        for plan, est in runs:
            tested = [i for i, c in enumerate(est.sampled_counts) if c >= scale.min_samples]
            checks += len(tested)
            failures += len(est.failures(plan.retention_bound, min_samples=scale.min_samples))
            for i in tested:
                worst = min(worst, est.retention[i] - plan.retention_bound)
        detail = f"min margin over bound {worst:.4f}" if checks else "no item reached the sample minimum"
        return checks, failures, detail

    def _feasibility_suite(self, estimates: Dict[str, list]) -> Tuple[int, int, str]:
        runs = [est for algorithm in estimates.values() for _, est in algorithm]
        trials = sum(est.trials for est in runs)
        violations = sum(est.violations for est in runs)
        return len(runs), sum(1 for est in runs if est.violations), f"{violations} violations in {trials} trials"

    def _event_suite(self, corpus: List[PipInstance], scale: VerifyScale, seed: int) -> Tuple[int, int, str]:
        checks = failures = 0
        for t, inst in enumerate(corpus[: scale.event_instances]):
            plan = plan_rounding(inst, "strong")
            est = estimate_event_rates(
                plan.instance, plan.x, plan.rule, plan.scale, scale.trials, seed + t, self.threads
            )
            checks += sum(1 for r in est.rates if r.sampled >= scale.min_samples)
            failures += len(est.failures(min_samples=scale.min_samples))
        return checks, failures, "sorted-rule deletion events against their per-constraint bound"

    def _gap_suite(self, scale: VerifyScale) -> Tuple[int, int, str]:
        rows, _ = self.gap_table("gap2k", [{"k": k, "epsilon": 1e-4} for k in scale.gap_ks])
        rows += self.gap_table("l1bad", [{"n": 10}])[0]
        rows += self.gap_table("gapB", [{"n": 8, "B": 2}])[0]
        bad = [f"{r.family}({r.params})" for r in rows if not r.passed]
        return len(rows), len(bad), ", ".join(bad) or "all families reach their gap"

    def _strawman_suite(self, scale: VerifyScale, seed: int) -> Tuple[int, int, str]:
        inst, x = gen_strawman_counterexample(100)
        straw = self._estimate(plan_rounding(inst, "strawman", x), scale.strawman_trials, seed)
        simple = self._estimate(plan_rounding(inst, "simple", x), scale.strawman_trials, seed)
        straw_ok = straw.retention[0] is not None and straw.retention[0] < 0.1
        simple_ok = 0 not in simple.failures(0.5)
        detail = f"item 0 retention: strawman {straw.retention[0]}, simple {simple.retention[0]}"
        return 2, int(not straw_ok) + int(not simple_ok), detail

    def _good_s_suite(self, scale: VerifyScale, seed: int) -> Tuple[int, int, str]:
        checks = failures = 0
        for t in range(scale.good_s_oracles):
            rng = make_rng(seed, _GOOD_S, t)
            n = int(rng.integers(4, 13))
            f = random_coverage_oracle(n, 2 * n, _seed(rng))
            x = rng.random(n)
            for p in (0.25, 0.5, 1.0):
                check = check_good_s(f, x, p, scale.good_s_trials, _seed(rng), self.threads)
                checks += 1
                failures += int(not check.passed)
        return checks, failures, "E[f(S)] >= p F(x) within z SE"

    def _subadditivity_suite(self, scale: VerifyScale, seed: int) -> Tuple[int, int, str]:
        checks = failures = 0
        kinds = ("threshold", "sorted", "mixture")
        worst = math.inf
        for t in range(scale.systems):
            rng = make_rng(seed, _SYSTEMS, t)
            n = int(rng.integers(1, 5))
            fam = random_monotone_family(n, _seed(rng), kinds[t % len(kinds)])
            f = random_coverage_oracle(n, int(rng.integers(2, 7)), _seed(rng))
            x = rng.random(n)
            # Exercise the boundary of the cube too
            x[rng.random(n) < 0.1] = 1.0
            result = check_subadditivity_theorem(f, x, fam)
            checks += 1
            if not (result.valid and result.passed):
                failures += 1
            else:
                worst = min(worst, result.lhs - result.beta * result.rhs)
            if t % 10 == 0:
                checks += 1
                failures += int(not check_induction_step(f, x, fam).passed)

        # Marginal retention alone is not enough: this family must be rejected
        checks += 1
        failures += int(validate_family(counterexample_family(3)).valid)

        n = 4
        f = random_coverage_oracle(n, 6, seed)
        cover = [([i for i in range(n) if i != skip], 1.0 / (n - 1)) for skip in range(n)]
        checks += 2
        failures += int(not check_fractional_subadditivity(f, cover).passed)
        failures += int(not check_subadditivity_theorem(f, np.ones(n), fractional_cover_family(n, cover)).passed)
        return checks, failures, f"min slack {worst:.3g}"

    def _monotone_suite(self, scale: VerifyScale, seed: int) -> Tuple[int, int, str]:
        checks = failures = 0
        for t in range(scale.monotone_instances):
            rng = make_rng(seed, _MONOTONE, t)
            n = int(rng.integers(4, 11))
            k = int(rng.integers(1, 4))
            m = int(rng.integers(k, n + 1))
            inst = gen_random(n, m, k, size_profile="mixed", seed=_seed(rng), capacity=float(rng.integers(1, 4)))
            for target, rule in (
                (normalize_unit_capacities(inst), AlterationRule.SORTED),
                (normalize_unit_max_size(inst), AlterationRule.POWERS_OF_TWO),
            ):
                checks += 1
                failures += int(not verify_alteration_monotone(target, rule).passed)
        return checks, failures, "sorted and powers-of-two survival monotonicity"

    def _greedy_suite(self, scale: VerifyScale, seed: int) -> Tuple[int, int, str]:
        checks = failures = 0
        worst = math.inf
        for t in range(scale.greedy_instances):
            rng = make_rng(seed, _GREEDY, t)
            n = int(rng.integers(5, 11))
            k = int(rng.integers(2, 4))
            m = int(rng.integers(k, n + 1))
            inst = gen_random(n, m, k, size_profile="mixed", seed=_seed(rng))
            f = random_coverage_oracle(n, 2 * n, _seed(rng))
            plan = plan_submodular(inst)
            greedy = continuous_greedy_path(f, plan.polytope, seed=_seed(rng), exact=True)
            opt = solve_exact_submodular(f, inst).value

            checks += 2
            if greedy.solution.objective < _GREEDY_QUALITY * opt - 1e-9:
                failures += 1
            if opt > 0:
                worst = min(worst, greedy.solution.objective / opt)

            kk = max(column_sparsity(plan.instance), 1)
            check = check_corollary_retention(
                f, plan.instance, plan.rule, greedy.solution.array, plan.scale, scale.greedy_trials,
                _seed(rng), self.threads,
            )
            target = opt * plan.retention_bound * _GREEDY_QUALITY / kk
            if check.mean_f_final < target - settings.confidence_z * check.se - 1e-12:
                failures += 1
        return checks, failures, f"min F(x)/OPT {worst:.4f}"

    def _dominance_suite(self, corpus: List[PipInstance]) -> Tuple[int, int, str]:
        checks = failures = 0
        for inst in corpus:
            if inst.n > settings.exact_exhaustive_max_items:
                continue
            norm = normalize_unit_capacities(inst)
            # enumeration is only affordable on the small end of the corpus
            method = "exhaustive" if inst.n <= _DOMINANCE_ENUM_MAX else "branch-and-bound"
            exact = solve_exact(inst, method=method).value
            for model in (build_natural_lp(norm), build_strengthened_lp(norm)):
                checks += 1
                if solve_lp(model).objective < exact - _GAP_TOL:
                    failures += 1
        return checks, failures, "LP optimum >= exact optimum"
