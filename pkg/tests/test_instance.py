#!/usr/bin/env python3
"""
Unit tests for packing instances, solutions and normalization
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import InstanceError
from src.packing.exact import solve_exact
from src.packing.instance import (
    FractionalSolution,
    ItemSet,
    PipInstance,
    check_feasible,
    column_sparsity,
    constraint_loads,
    is_unit_capacity,
    is_unit_max_size,
    normalize_unit_capacities,
    normalize_unit_max_size,
    slack,
    value,
)
from src.packing.streams import make_rng


class TestPipInstance:
    """Test instance construction and derived views."""

    def setup_method(self):
        """Set up a small two-constraint instance."""
        self.inst = PipInstance.from_entries(
            weights=[3.0, 1.0, 2.0],
            capacities=[2.0, 4.0],
            entries=[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5), (2, 1, 4.0)],
        )

    def test_from_entries(self):
        """Test entries are stored column-major and read back unchanged."""
        assert self.inst.n == 3
        assert self.inst.m == 2
        assert self.inst.support(0) == (0, 1)
        assert self.inst.participants(1) == (0, 2)
        assert self.inst.size(0, 1) == 2.0
        assert self.inst.size(1, 1) == 0.0
        assert sorted(self.inst.entries()) == [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5), (2, 1, 4.0)]

    def test_index_views(self):
        """Test the dense matrix and row index agree with the entries."""
        idx = self.inst.index
        expected = np.array([[1.0, 0.5, 0.0], [2.0, 0.0, 4.0]])
        np.testing.assert_allclose(idx.dense, expected)
        assert list(idx.row_items[0]) == [0, 1]
        assert list(idx.support_sizes) == [2, 1, 1]
        assert list(idx.upper_bounds) == [1, 1, 1]

    def test_sparsity_and_slack(self):
        """Test column sparsity and slack."""
        assert column_sparsity(self.inst) == 2
        assert slack(self.inst) == pytest.approx(1.0)

        wide = PipInstance.from_entries([1.0], [3.0], [(0, 0, 1.0)])
        assert slack(wide) == pytest.approx(3.0)

    def test_empty_instance(self):
        """Test the degenerate instance without items or entries."""
        empty = PipInstance.from_entries([], [1.0], [])
        assert column_sparsity(empty) == 0
        assert check_feasible(empty, ItemSet.empty(0))
        with pytest.raises(InstanceError):
            slack(empty)

    def test_invalid_instances(self):
        """Test invariant violations are rejected."""
        with pytest.raises(ValidationError):
            PipInstance.from_entries([1.0], [1.0], [(0, 0, -0.5)])
        with pytest.raises(ValidationError):
            PipInstance.from_entries([1.0], [0.0], [(0, 0, 0.5)])
        with pytest.raises(ValidationError):
            PipInstance.from_entries([1.0], [1.0], [(0, 3, 0.5)])
        with pytest.raises(ValidationError):
            PipInstance.from_entries([-1.0], [1.0], [(0, 0, 0.5)])
        with pytest.raises(InstanceError):
            PipInstance.from_entries([1.0], [1.0], [(4, 0, 0.5)])

    def test_upper_bounds(self):
        """Test general upper bounds and the unit-bound view."""
        inst = PipInstance.from_entries([1.0, 1.0], [4.0], [(0, 0, 1.0), (1, 0, 1.0)], upper_bounds=[3, 1])
        assert not inst.has_unit_bounds
        assert check_feasible(inst, ItemSet(counts=(3, 1)))
        assert not check_feasible(inst, ItemSet(counts=(1, 2)))
        assert inst.with_unit_bounds().has_unit_bounds


class TestItemSet:
    """Test integral solutions."""

    def test_constructors(self):
        """Test the different ways of building a set."""
        s = ItemSet.from_items(4, [0, 2])
        assert s.items == [0, 2]
        assert s.cardinality == 2
        assert 2 in s and 1 not in s
        assert ItemSet.from_mask(np.array([True, False, True, False])) == s
        assert ItemSet.empty(4).issubset(s)
        assert not s.issubset(ItemSet.from_items(4, [0]))

    def test_negative_counts_rejected(self):
        """Test multiplicities must be nonnegative."""
        with pytest.raises(ValidationError):
            ItemSet(counts=(1, -1))

    def test_fractional_solution_array(self):
        """Test fractional points round-trip through numpy."""
        sol = FractionalSolution.from_array(np.array([0.25, 1.0]), 1.25, iterations=3)
        np.testing.assert_allclose(sol.array, [0.25, 1.0])
        assert sol.iterations == 3


class TestFeasibility:
    """Test loads, feasibility and objective values."""

    def setup_method(self):
        """Set up an instance with one tight constraint."""
        self.inst = PipInstance.from_entries(
            weights=[2.0, 1.0, 1.0],
            capacities=[1.0],
            entries=[(0, 0, 0.6), (1, 0, 0.4), (2, 0, 0.5)],
        )

    def test_loads_and_value(self):
        """Test load and value of a feasible set."""
        sol = ItemSet.from_items(3, [0, 1])
        np.testing.assert_allclose(constraint_loads(self.inst, sol), [1.0])
        assert check_feasible(self.inst, sol)
        assert value(self.inst, sol) == pytest.approx(3.0)

    def test_infeasible(self):
        """Test an overloaded constraint is detected."""
        assert not check_feasible(self.inst, ItemSet.from_items(3, [0, 2]))

    def test_dimension_mismatch(self):
        """Test a solution of the wrong length is rejected."""
        with pytest.raises(InstanceError):
            check_feasible(self.inst, ItemSet.empty(2))


class TestNormalization:
    """Test unit-capacity and unit-max-size normalization."""

    def test_unit_capacity_scaling(self):
        """Test rows are divided by their capacity."""
        inst = PipInstance.from_entries([1.0, 1.0], [2.0], [(0, 0, 1.0), (1, 0, 2.0)])
        norm = normalize_unit_capacities(inst)
        assert is_unit_capacity(norm)
        assert norm.size(0, 0) == pytest.approx(0.5)
        assert norm.size(1, 0) == pytest.approx(1.0)
        assert norm.dropped_items == ()

    def test_oversized_items_dropped(self):
        """Test items larger than a capacity are fixed to zero."""
        inst = PipInstance.from_entries([5.0, 1.0], [1.0, 1.0], [(0, 0, 3.0), (0, 1, 0.2), (1, 0, 0.5)])
        norm = normalize_unit_capacities(inst)
        assert norm.dropped_items == (0,)
        assert norm.support(0) == ()
        assert norm.index.upper_bounds[0] == 0
        assert not check_feasible(norm, ItemSet.from_items(2, [0]))

    def test_already_normalized_is_unchanged(self):
        """Test a unit-capacity instance is returned as is."""
        inst = PipInstance.from_entries([1.0], [1.0], [(0, 0, 0.5)])
        assert normalize_unit_capacities(inst) is inst

    def test_unit_max_size(self):
        """Test every row is scaled so its largest size is one."""
        inst = PipInstance.from_entries(
            [1.0, 1.0], [1.0, 3.0, 1.0], [(0, 0, 0.5), (1, 0, 0.25), (1, 1, 1.5)]
        )
        norm = normalize_unit_max_size(inst)
        assert norm.m == 2
        assert is_unit_max_size(norm)
        assert norm.capacities == pytest.approx((2.0, 2.0))
        assert slack(norm) == pytest.approx(2.0)


def random_instance(rng, n, m, k, max_size=1.0, capacity_range=(1.0, 1.0)):
    """Instance with up to k entries per item, sizes in (0, max_size], capacities in capacity_range."""
    entries = []
    for i in range(n):
        for j in rng.choice(m, size=int(rng.integers(1, k + 1)), replace=False):
            entries.append((i, int(j), float(rng.uniform(0.05, max_size))))
    weights = rng.uniform(0.1, 1.0, size=n).round(3).tolist()
    capacities = rng.uniform(*capacity_range, size=m).tolist()
    return PipInstance.from_entries(weights, capacities, entries)


def permuted(inst, items, rows):
    """The same instance with item i renamed items[i] and constraint j renamed rows[j]."""
    weights = [0.0] * inst.n
    capacities = [0.0] * inst.m
    for i in range(inst.n):
        weights[items[i]] = inst.weights[i]
    for j in range(inst.m):
        capacities[rows[j]] = inst.capacities[j]
    entries = [(int(items[i]), int(rows[j]), s) for i, j, s in inst.entries()]
    return PipInstance.from_entries(weights, capacities, entries)


class TestNormalizationProperties:
    """Test normalization and relabeling invariants on seeded random instances."""

    def test_unit_capacities_keep_feasible_sets(self):
        """Test normalizing capacities neither adds nor removes a feasible 0/1 solution."""
        for case in range(3):
            rng = make_rng(17, case)
            inst = random_instance(rng, 10 + case, 4, 2, max_size=2.5, capacity_range=(1.0, 3.0))
            norm = normalize_unit_capacities(inst)
            assert is_unit_capacity(norm)

            masks = (np.arange(2**inst.n)[:, None] >> np.arange(inst.n)) & 1
            for mask in masks:
                sol = ItemSet.from_mask(mask)
                assert check_feasible(inst, sol) == check_feasible(norm, sol)

    def test_unit_capacities_drop_items(self):
        """Test the random corpus above exercises dropped items."""
        dropped = 0
        for case in range(3):
            inst = random_instance(make_rng(17, case), 10 + case, 4, 2, max_size=2.5, capacity_range=(1.0, 3.0))
            dropped += len(normalize_unit_capacities(inst).dropped_items)
        assert dropped > 0

    def test_unit_max_size_idempotent(self):
        """Test a second unit-max-size normalization returns the first unchanged."""
        inst = random_instance(make_rng(23), 8, 4, 2, max_size=0.8, capacity_range=(1.0, 2.0))
        assert not is_unit_max_size(inst)
        once = normalize_unit_max_size(inst)
        assert once.model_dump() != inst.model_dump()
        twice = normalize_unit_max_size(once)
        assert twice.model_dump() == once.model_dump()
        assert slack(twice) == pytest.approx(slack(once))

    def test_invariant_under_relabeling(self):
        """Test sparsity, slack and the exact optimum ignore item and constraint order."""
        for case in range(4):
            rng = make_rng(31, case)
            inst = random_instance(rng, 9, 5, 3, capacity_range=(1.0, 2.0))
            relabeled = permuted(inst, rng.permutation(inst.n), rng.permutation(inst.m))

            assert column_sparsity(relabeled) == column_sparsity(inst)
            assert slack(relabeled) == pytest.approx(slack(inst))
            assert solve_exact(relabeled).value == pytest.approx(solve_exact(inst).value)
            assert solve_exact(relabeled, method="branch-and-bound").value == pytest.approx(solve_exact(inst).value)
