#!/usr/bin/env python3
"""
Unit tests for LP relaxations and the simplex engine
"""

import numpy as np
import pytest

from src.exceptions import InstanceError, IterationLimitError, LpInfeasibleError, LpUnboundedError, PreconditionError
from src.packing.generators import gen_gap_2k_minus_1, gen_l1_bad_example
from src.packing.instance import PipInstance
from src.packing.lp import (
    LpModel,
    build_big_item_index,
    build_natural_lp,
    build_relaxation,
    build_strengthened_lp,
    get_solver,
    maximize_linear_over_polytope,
    solve_lp,
    to_lp_format,
)
from src.packing.simplex import SimplexSolver


def _model(objective, matrix, rhs, lower=None, upper=None):
    objective = np.asarray(objective, dtype=float)
    n = objective.shape[0]
    return LpModel(
        objective=objective,
        matrix=np.atleast_2d(np.asarray(matrix, dtype=float)),
        rhs=np.asarray(rhs, dtype=float),
        lower=np.zeros(n) if lower is None else np.asarray(lower, dtype=float),
        upper=np.ones(n) if upper is None else np.asarray(upper, dtype=float),
    )


class TestSimplexSolver:
    """Test the reference simplex on small models."""

    def setup_method(self):
        """Set up the solver."""
        self.solver = SimplexSolver()

    def test_knapsack_relaxation(self):
        """Test the fractional knapsack optimum."""
        model = _model([3.0, 2.0, 1.0], [[2.0, 2.0, 2.0]], [3.0])
        sol = self.solver.solve(model)
        assert sol.objective == pytest.approx(4.0)
        np.testing.assert_allclose(sol.array, [1.0, 0.5, 0.0], atol=1e-9)

    def test_bounded_variables(self):
        """Test variable upper bounds are honored without explicit rows."""
        model = _model([1.0, 1.0], [[1.0, 1.0]], [10.0], upper=[2.0, 3.0])
        sol = self.solver.solve(model)
        assert sol.objective == pytest.approx(5.0)

    def test_lower_bounds(self):
        """Test nonzero lower bounds shift the problem."""
        model = _model([1.0, 1.0], [[1.0, 2.0]], [2.0], lower=[0.0, 0.5])
        sol = self.solver.solve(model)
        assert sol.array[1] >= 0.5 - 1e-9
        assert sol.objective == pytest.approx(1.5)

    def test_empty_model(self):
        """Test a model without variables."""
        model = _model([], np.zeros((1, 0)), [1.0], lower=[], upper=[])
        sol = self.solver.solve(model)
        assert sol.objective == 0.0

    def test_infeasible(self):
        """Test lower bounds that overflow a row."""
        model = _model([1.0], [[2.0]], [1.0], lower=[1.0], upper=[1.0])
        with pytest.raises(LpInfeasibleError):
            self.solver.solve(model)

    def test_unbounded(self):
        """Test a variable without a finite bound or a limiting row."""
        model = _model([1.0], [[0.0]], [1.0], upper=[np.inf])
        with pytest.raises(LpUnboundedError):
            self.solver.solve(model)

    def test_iteration_limit(self):
        """Test the pivot budget is enforced."""
        model = build_natural_lp(gen_gap_2k_minus_1(2))
        with pytest.raises(IterationLimitError):
            SimplexSolver(max_iterations=1).solve(model)


class TestLpModel:
    """Test model validation and helpers."""

    def test_negative_matrix_rejected(self):
        """Test only packing rows are accepted."""
        with pytest.raises(InstanceError):
            _model([1.0], [[-1.0]], [1.0])

    def test_shape_mismatch_rejected(self):
        """Test the rhs must have one entry per row."""
        with pytest.raises(InstanceError):
            _model([1.0, 1.0], [[1.0, 1.0]], [1.0, 2.0])

    def test_feasibility_check(self):
        """Test max_violation reports row and bound excess."""
        model = _model([1.0, 1.0], [[1.0, 1.0]], [1.0])
        assert model.is_feasible(np.array([0.5, 0.5]))
        assert model.max_violation(np.array([1.0, 0.5])) == pytest.approx(0.5)
        assert model.max_violation(np.array([-0.25, 0.0])) == pytest.approx(0.25)

    def test_lp_format(self):
        """Test the CPLEX LP rendering has every section."""
        text = to_lp_format(_model([1.0, 2.0], [[1.0, 0.0]], [1.0]))
        for section in ("Maximize", "Subject To", "Bounds", "End"):
            assert section in text
        assert "r0:" in text

    def test_unknown_solver(self):
        """Test asking for an unregistered engine."""
        with pytest.raises(PreconditionError):
            get_solver("cplex")


class TestRelaxations:
    """Test natural and strengthened relaxations."""

    def test_big_item_index(self):
        """Test items strictly above one half are big; ties are small."""
        inst = PipInstance.from_entries(
            [1.0, 1.0, 1.0], [1.0], [(0, 0, 0.9), (1, 0, 0.5), (2, 0, 0.6)]
        )
        big = build_big_item_index(inst)
        assert big[0] == (0, 2)
        assert big.nonempty == [0]

    def test_big_items_need_unit_capacities(self):
        """Test big items are only defined after normalization."""
        inst = PipInstance.from_entries([1.0], [2.0], [(0, 0, 1.5)])
        with pytest.raises(PreconditionError):
            build_big_item_index(inst)

    def test_strengthened_adds_rows(self):
        """Test one extra row per constraint with big items."""
        inst = PipInstance.from_entries(
            [1.0, 1.0, 1.0], [1.0, 1.0], [(0, 0, 0.9), (1, 0, 0.6), (2, 1, 0.2)]
        )
        natural = build_natural_lp(inst)
        strong = build_strengthened_lp(inst)
        assert strong.num_rows == natural.num_rows + 1
        assert strong.row_names[-1] == "big0"
        assert solve_lp(natural).objective >= solve_lp(strong).objective - 1e-9
        assert solve_lp(strong).objective == pytest.approx(2.0)

    def test_strengthened_needs_unit_bounds(self):
        """Test general upper bounds are rejected."""
        inst = PipInstance.from_entries([1.0], [1.0], [(0, 0, 0.2)], upper_bounds=[3])
        with pytest.raises(PreconditionError):
            build_strengthened_lp(inst)

    def test_unknown_relaxation(self):
        """Test the relaxation name is validated."""
        with pytest.raises(PreconditionError):
            build_relaxation(gen_l1_bad_example(3), "lagrangian")

    def test_dropped_items_fixed_to_zero(self):
        """Test dropped items get a zero upper bound."""
        inst = PipInstance(
            n=2, m=1, weights=(5.0, 1.0), capacities=(1.0,),
            columns=((), ((0, 0.5),)), dropped_items=(0,),
        )
        sol = solve_lp(build_natural_lp(inst))
        assert sol.array[0] == pytest.approx(0.0)
        assert sol.objective == pytest.approx(1.0)

    def test_gap_family_values(self):
        """Test the cyclic family reaches its LP value."""
        k, eps = 3, 1e-3
        inst = gen_gap_2k_minus_1(k, eps)
        expected = inst.n / (1.0 + (k - 1) * eps)
        assert solve_lp(build_strengthened_lp(inst)).objective == pytest.approx(expected, rel=1e-9)
        assert expected >= (1.0 - k * eps) * (2 * k - 1)

    def test_dense_family_value(self):
        """Test the dense family's LP value n²/(2n−1)."""
        n = 6
        sol = solve_lp(build_natural_lp(gen_l1_bad_example(n)))
        assert sol.objective == pytest.approx(n * n / (2 * n - 1), rel=1e-9)

    def test_linear_maximization(self):
        """Test optimizing a new direction over the same polytope."""
        model = build_natural_lp(gen_l1_bad_example(4))
        sol = maximize_linear_over_polytope(model, [1.0, 0.0, 0.0, 0.0])
        assert sol.objective == pytest.approx(1.0)
        assert model.is_feasible(sol.array)
