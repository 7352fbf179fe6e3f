#!/usr/bin/env python3
"""
Unit tests for the exact oracles and integrality gaps
"""

import math
from itertools import combinations

import pytest

from src.exceptions import InstanceError, PreconditionError
from src.packing.exact import integrality_gap, solve_exact, solve_exact_submodular
from src.packing.generators import (
    gen_gap_2k_minus_1,
    gen_gap_general_b,
    gen_l1_bad_example,
    gen_random,
    gen_strawman_counterexample,
)
from src.packing.instance import ItemSet, PipInstance, check_feasible
from src.packing.submodular import LinearOracle, random_coverage_oracle


class TestSolveExact:
    """Test exhaustive search and branch-and-bound."""

    def test_gap_families(self):
        """Test the known optima of the structured families."""
        assert solve_exact(gen_gap_2k_minus_1(3)).value == pytest.approx(1.0)
        assert solve_exact(gen_l1_bad_example(5)).value == pytest.approx(1.0)
        assert solve_exact(gen_gap_general_b(8, 2.0)).value == pytest.approx(2.0)
        assert solve_exact(gen_strawman_counterexample(10)[0]).value == pytest.approx(9.0)

    def test_methods_agree(self):
        """Test both methods find the same optimum on random instances."""
        for seed in range(6):
            inst = gen_random(10, 5, 3, size_profile="mixed", weight_profile="integer", seed=seed)
            enumerated = solve_exact(inst, method="exhaustive")
            branched = solve_exact(inst, method="branch-and-bound")
            assert enumerated.value == pytest.approx(branched.value)
            assert check_feasible(inst, enumerated.solution)
            assert check_feasible(inst, branched.solution)
            assert enumerated.proven_optimal and branched.proven_optimal

    def test_matches_brute_force(self):
        """Test the exhaustive optimum against a plain scan of all subsets."""
        inst = gen_random(8, 4, 2, size_profile="uniform", weight_profile="uniform", seed=7)
        best = 0.0
        for r in range(inst.n + 1):
            for items in combinations(range(inst.n), r):
                sol = ItemSet.from_items(inst.n, items)
                if check_feasible(inst, sol):
                    best = max(best, sum(inst.weights[i] for i in items))
        assert solve_exact(inst).value == pytest.approx(best)

    def test_general_upper_bounds(self):
        """Test multiplicities up to u are explored."""
        inst = PipInstance.from_entries(
            [2.0, 1.0], [1.0], [(0, 0, 0.25), (1, 0, 0.5)], upper_bounds=[3, 2]
        )
        result = solve_exact(inst)
        assert result.solution.counts == (3, 0)
        assert result.value == pytest.approx(6.0)
        assert solve_exact(inst, method="branch-and-bound").value == pytest.approx(6.0)

    def test_unconstrained_items_taken(self):
        """Test items without entries are always selected."""
        inst = PipInstance.from_entries([1.0, 4.0], [1.0], [(0, 0, 0.5)])
        result = solve_exact(inst)
        assert result.solution.counts == (1, 1)

    def test_size_limits(self):
        """Test the methods refuse instances beyond their limits."""
        big = gen_random(41, 5, 2, seed=0)
        with pytest.raises(PreconditionError):
            solve_exact(big, method="branch-and-bound")
        with pytest.raises(PreconditionError):
            solve_exact(big, method="exhaustive")
        with pytest.raises(PreconditionError):
            solve_exact(gen_l1_bad_example(3), method="dynamic-programming")


class TestIntegralityGap:
    """Test LP over exact ratios."""

    def test_dense_family_gap(self):
        """Test the dense family's natural gap n²/(2n−1)."""
        n = 6
        assert integrality_gap(gen_l1_bad_example(n)) == pytest.approx(n * n / (2 * n - 1), rel=1e-9)

    def test_cyclic_family_gap(self):
        """Test the strengthened gap of the cyclic family approaches 2k − 1."""
        k, eps = 3, 1e-4
        gap = integrality_gap(gen_gap_2k_minus_1(k, eps), "strengthened")
        assert gap >= (1.0 - k * eps) * (2 * k - 1) - 1e-6

    def test_zero_optimum(self):
        """Test the gap is undefined when nothing has weight."""
        inst = PipInstance.from_entries([0.0, 0.0], [1.0], [(0, 0, 0.5), (1, 0, 0.5)])
        assert math.isnan(integrality_gap(inst))


class TestExactSubmodular:
    """Test exhaustive submodular maximization."""

    def test_linear_matches_exact(self):
        """Test a linear oracle reproduces the linear optimum."""
        inst = gen_random(8, 4, 2, size_profile="mixed", weight_profile="uniform", seed=3)
        f = LinearOracle(inst.weights)
        assert solve_exact_submodular(f, inst).value == pytest.approx(solve_exact(inst).value)

    def test_coverage_solution_feasible(self):
        """Test the maximizer is feasible and at least as good as every single item."""
        inst = gen_random(7, 3, 2, size_profile="mixed", seed=4)
        f = random_coverage_oracle(7, 9, seed=4)
        result = solve_exact_submodular(f, inst)
        assert check_feasible(inst, result.solution)
        assert result.value == pytest.approx(f.value(result.solution))
        for i in range(inst.n):
            if check_feasible(inst, ItemSet.from_items(inst.n, [i])):
                assert result.value >= f.value([i]) - 1e-12

    def test_preconditions(self):
        """Test bounds, dimensions and size are checked."""
        bounded = PipInstance.from_entries([1.0], [1.0], [(0, 0, 0.5)], upper_bounds=[2])
        with pytest.raises(PreconditionError):
            solve_exact_submodular(LinearOracle([1.0]), bounded)
        with pytest.raises(InstanceError):
            solve_exact_submodular(LinearOracle([1.0, 1.0]), gen_l1_bad_example(3))
