#!/usr/bin/env python3
"""
Unit tests for submodular oracles, the multilinear extension and continuous greedy
"""

import json
import math
import os
import tempfile
from unittest.mock import patch

import numpy as np
import pytest

from src.config import settings
from src.exceptions import InstanceError, PreconditionError
from src.packing.generators import gen_l1_bad_example, gen_random
from src.packing.instance import PipInstance, check_feasible
from src.packing.lp import build_natural_lp, solve_lp
from src.packing.rounding import AlterationRule
from src.packing.submodular import (
    ConcaveCardinalityOracle,
    LinearOracle,
    SubmodularOracle,
    WeightedCoverageOracle,
    check_corollary_retention,
    check_good_s,
    continuous_greedy,
    continuous_greedy_path,
    load_oracle,
    maximize_submodular,
    multilinear_estimate,
    multilinear_exact,
    parse_oracle,
    plan_submodular,
    random_coverage_oracle,
    verify_oracle,
)


def make_point(n, seed):
    return np.random.default_rng(seed).random(n)


class SquaredCardinalityOracle(SubmodularOracle):
    """|T|², monotone but supermodular."""

    family = "squared"

    def values(self, masks):
        return self._check_masks(masks).sum(axis=1).astype(float) ** 2

    def describe(self):
        raise NotImplementedError


class TestOracles:
    """Test oracle families and their JSON descriptions."""

    def setup_method(self):
        """Set up a temporary oracle file."""
        self.temp_file = tempfile.NamedTemporaryFile(suffix=".json", delete=False)
        self.temp_file.close()

    def teardown_method(self):
        """Clean up the temporary file."""
        if os.path.exists(self.temp_file.name):
            os.unlink(self.temp_file.name)

    def test_linear_values(self):
        """Test a linear oracle sums its weights."""
        f = LinearOracle([1.0, 2.0, 4.0])
        assert f.value([0, 2]) == pytest.approx(5.0)
        assert f.value([]) == 0.0

    def test_coverage_values(self):
        """Test coverage counts every covered element once."""
        f = WeightedCoverageOracle([1.0, 2.0, 3.0], [[0, 1], [1, 2], []])
        assert f.value([0]) == pytest.approx(3.0)
        assert f.value([0, 1]) == pytest.approx(6.0)
        assert f.value([2]) == 0.0

    def test_concave_cardinality(self):
        """Test g(|T|) and the shape checks on g."""
        f = ConcaveCardinalityOracle([0.0, 2.0, 3.0, 3.5])
        assert f.n == 3
        assert f.value([0, 2]) == pytest.approx(3.0)
        with pytest.raises(InstanceError):
            ConcaveCardinalityOracle([0.0, 1.0, 3.0])
        with pytest.raises(InstanceError):
            ConcaveCardinalityOracle([1.0, 2.0])
        with pytest.raises(InstanceError):
            ConcaveCardinalityOracle([0.0, 2.0, 1.0])

    def test_invalid_oracles(self):
        """Test negative weights and out-of-range covers are rejected."""
        with pytest.raises(InstanceError):
            LinearOracle([1.0, -1.0])
        with pytest.raises(InstanceError):
            WeightedCoverageOracle([1.0], [[0, 3]])

    def test_parse_and_load(self):
        """Test oracles are read from their JSON description."""
        spec = {"family": "coverage", "universe_weights": [1.0, 1.0], "covers": [[0], [0, 1]]}
        with open(self.temp_file.name, "w") as fh:
            json.dump(spec, fh)
        f = load_oracle(self.temp_file.name)
        assert isinstance(f, WeightedCoverageOracle)
        assert f.describe().model_dump() == spec

        assert parse_oracle('{"family": "linear", "weights": [2.0]}').value([0]) == 2.0

    def test_parse_errors(self):
        """Test malformed and unknown descriptions raise InstanceError."""
        with pytest.raises(InstanceError, match="malformed oracle JSON"):
            parse_oracle("{")
        with pytest.raises(InstanceError):
            parse_oracle('{"family": "matroid_rank", "weights": [1.0]}')
        with pytest.raises(InstanceError):
            parse_oracle('{"family": "linear"}')

    def test_verify_oracle(self):
        """Test the exhaustive check accepts coverage and rejects a supermodular function."""
        check = verify_oracle(random_coverage_oracle(6, 8, seed=1))
        assert check.monotone and check.submodular

        check = verify_oracle(SquaredCardinalityOracle(4))
        assert check.monotone
        assert not check.submodular

        with pytest.raises(PreconditionError):
            verify_oracle(LinearOracle([1.0] * 13))


class TestMultilinearExtension:
    """Test exact and sampled multilinear extensions."""

    def test_integral_points(self):
        """Test F equals f on vertices of the cube."""
        f = random_coverage_oracle(5, 6, seed=2)
        x = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        assert multilinear_exact(f, x) == pytest.approx(f.value([0, 2, 3]))

    def test_linear_is_dot_product(self):
        """Test F(x) = w·x for linear f."""
        w = np.array([1.0, 3.0, 0.5, 2.0])
        x = np.array([0.2, 0.9, 0.5, 0.0])
        assert multilinear_exact(LinearOracle(w), x) == pytest.approx(float(w @ x))

    def test_coverage_of_one_element(self):
        """Test 1 − Π(1 − x_i) for a single shared element."""
        f = WeightedCoverageOracle([1.0], [[0], [0]])
        assert multilinear_exact(f, [0.5, 0.5]) == pytest.approx(0.75)

    def test_point_outside_cube(self):
        """Test x must lie in [0, 1]^n."""
        with pytest.raises(PreconditionError):
            multilinear_exact(LinearOracle([1.0]), [1.5])

    def test_estimate_at_corners(self):
        """Test the estimate is exact with zero error at x = 0 and x = 1."""
        f = random_coverage_oracle(6, 5, seed=3)
        mean, se = multilinear_estimate(f, np.zeros(6), 100, seed=0)
        assert mean == 0.0 and se == 0.0
        mean, se = multilinear_estimate(f, np.ones(6), 100, seed=0)
        assert mean == pytest.approx(f.value(range(6)))
        assert se == pytest.approx(0.0, abs=1e-9)

    def test_estimate_matches_exact(self):
        """Test the sampled estimate lies within a few standard errors of the exact value."""
        f = random_coverage_oracle(10, 12, seed=4)
        x = make_point(10, seed=4)
        mean, se = multilinear_estimate(f, x, 50_000, seed=9)
        assert abs(mean - multilinear_exact(f, x)) <= 4 * se + 1e-9


class TestContinuousGreedy:
    """Test continuous greedy and the sample-then-alter pipeline."""

    def setup_method(self):
        """Set up a small instance and a coverage oracle on its items."""
        self.inst = gen_random(6, 4, 2, size_profile="mixed", seed=5)
        self.f = random_coverage_oracle(6, 10, seed=5)

    def test_linear_objective_reaches_lp_fraction(self):
        """Test greedy on a linear objective gets at least (1 − 1/e) of the LP optimum."""
        inst = gen_l1_bad_example(4)
        polytope = build_natural_lp(inst)
        lp = solve_lp(polytope).objective
        sol = continuous_greedy(LinearOracle([1.0] * 4), polytope, steps=30)
        assert sol.objective >= (1.0 - 1.0 / math.e) * lp - 1e-9
        assert polytope.is_feasible(sol.array, tol=1e-7)

    def test_path_history(self):
        """Test exact mode reports F after every step and ends at the returned objective."""
        polytope = build_natural_lp(self.inst)
        result = continuous_greedy_path(self.f, polytope, steps=10, exact=True)
        assert result.exact
        assert result.steps == 10
        assert len(result.history) == 10
        assert result.history[-1] == pytest.approx(result.solution.objective)
        assert all(b >= a - 1e-9 for a, b in zip(result.history, result.history[1:]))

    def test_sampled_mode_feasible(self):
        """Test sampled marginals still give a point of the polytope."""
        polytope = build_natural_lp(self.inst)
        result = continuous_greedy_path(self.f, polytope, steps=10, samples=50, seed=2, exact=False)
        assert result.samples == 50
        assert polytope.is_feasible(result.solution.array, tol=1e-7)

    def test_ground_set_mismatch(self):
        """Test the oracle must match the polytope's variables."""
        with pytest.raises(InstanceError):
            continuous_greedy(LinearOracle([1.0]), build_natural_lp(self.inst), steps=2)

    def test_plan_submodular(self):
        """Test plan selection for both supported rules."""
        plan = plan_submodular(self.inst)
        assert plan.rule == AlterationRule.SORTED
        assert plan.scale == pytest.approx(0.5)

        plan = plan_submodular(self.inst, rule=AlterationRule.POWERS_OF_TWO)
        assert plan.scale == pytest.approx(1.0 / plan.alpha)

        with pytest.raises(PreconditionError):
            plan_submodular(self.inst, rule=AlterationRule.STRAWMAN)

        bounded = PipInstance.from_entries([1.0], [1.0], [(0, 0, 0.5)], upper_bounds=[2])
        with pytest.raises(PreconditionError):
            plan_submodular(bounded)

    def test_maximize_submodular(self):
        """Test the pipeline returns a feasible set valued by f."""
        for seed in range(5):
            report = maximize_submodular(self.f, self.inst, steps=10, seed=seed)
            assert report.feasible
            assert check_feasible(self.inst, report.final_set)
            assert report.value == pytest.approx(self.f.value(report.final))

    def test_maximize_submodular_given_point(self):
        """Test a precomputed point is used when feasible and rejected outside the polytope."""
        plan = plan_submodular(self.inst)
        x = continuous_greedy(self.f, plan.polytope, steps=10)
        report = maximize_submodular(self.f, self.inst, seed=1, x=x)
        assert report.feasible

        with pytest.raises(PreconditionError, match="polytope"):
            maximize_submodular(self.f, self.inst, seed=1, x=np.ones(self.inst.n))

    def test_good_sample(self):
        """Test E[f(S)] ≥ p·F(x) for sampling at p·x."""
        x = make_point(6, seed=6)
        for p in (0.25, 1.0):
            assert check_good_s(self.f, x, p, 5000, seed=1).passed
        with pytest.raises(PreconditionError):
            check_good_s(self.f, x, 1.5, 10, seed=1)

    def test_corollary_retention(self):
        """Test E[f(S′)] ≥ β̂·E[f(S)] for the monotone sorted rule."""
        plan = plan_submodular(self.inst)
        x = continuous_greedy(self.f, plan.polytope, steps=10)
        check = check_corollary_retention(
            self.f, plan.instance, plan.rule, x, plan.scale, 5000, seed=3
        )
        assert check.monotone
        assert 0.0 < check.beta <= 1.0
        assert check.mean_f_final <= check.mean_f_sampled + 1e-12
        assert check.passed

    def test_corollary_retention_ignores_rare_items(self):
        """Test an item sampled a handful of times does not set β̂."""
        # item 0 is deleted whenever the larger item 1 is sampled with it
        inst = PipInstance.from_entries([1.0, 1.0], [1.0], [(0, 0, 0.6), (1, 0, 0.7)])
        f = LinearOracle([1.0, 1.0])
        x = np.array([0.01, 1.0])

        check = check_corollary_retention(f, inst, AlterationRule.SORTED, x, 1.0, 3000, seed=5, min_samples=100)
        assert check.beta == pytest.approx(1.0)
        assert check.beta_items == 1

        noisy = check_corollary_retention(f, inst, AlterationRule.SORTED, x, 1.0, 3000, seed=5, min_samples=1)
        assert noisy.beta == pytest.approx(0.0)
        assert noisy.beta_items == 2

    def test_corollary_retention_min_samples_default(self):
        """Test the threshold comes from settings and falls back to every sampled item."""
        inst = PipInstance.from_entries([1.0, 1.0], [1.0], [(0, 0, 0.6), (1, 0, 0.7)])
        f = LinearOracle([1.0, 1.0])
        with patch.object(settings, "retention_min_samples", 10_000):
            check = check_corollary_retention(f, inst, AlterationRule.SORTED, np.array([0.5, 0.5]), 1.0, 500, seed=2)
        assert check.beta_items == 2
        with pytest.raises(PreconditionError):
            check_corollary_retention(f, inst, AlterationRule.SORTED, np.array([0.5, 0.5]), 1.0, 500, seed=2, min_samples=0)
