#!/usr/bin/env python3
"""
Unit tests for alteration families and the enumerated subadditivity checks
"""

import numpy as np
import pytest

from src.exceptions import InstanceError, PreconditionError
from src.packing.submodular import LinearOracle, WeightedCoverageOracle, random_coverage_oracle
from src.packing.subadditivity import (
    AlterationFamily,
    check_fractional_subadditivity,
    check_induction_step,
    check_subadditivity_table,
    check_subadditivity_theorem,
    counterexample_family,
    counterexample_profit,
    family_beta,
    fractional_cover_family,
    oracle_table,
    product_distribution,
    project_family,
    random_monotone_family,
    validate_family,
)


class TestAlterationFamily:
    """Test family construction and validation."""

    def test_identity_is_valid(self):
        """Test keeping every set whole is normalized and monotone."""
        fam = AlterationFamily.identity(3)
        check = validate_family(fam)
        assert check.valid
        assert check.violation == ""
        np.testing.assert_allclose(fam.retention()[7], [1.0, 1.0, 1.0])

    def test_shape_and_support_checks(self):
        """Test malformed matrices are rejected."""
        with pytest.raises(InstanceError):
            AlterationFamily(2, np.eye(3))
        q = np.eye(4)
        q[1, 1], q[1, 2] = 0.0, 1.0
        with pytest.raises(InstanceError, match="not a subset"):
            AlterationFamily(2, q)
        with pytest.raises(InstanceError, match="negative"):
            AlterationFamily(1, np.array([[1.0, 0.0], [-0.5, 1.5]]))
        with pytest.raises(PreconditionError):
            AlterationFamily.identity(7)

    def test_unnormalized_family(self):
        """Test rows must sum to one."""
        check = validate_family(AlterationFamily(2, 0.5 * np.eye(4)))
        assert not check.normalized
        assert not check.valid
        assert "sums to" in check.violation

    def test_counterexample_is_not_monotone(self):
        """Test keeping only the full set violates monotonicity."""
        check = validate_family(counterexample_family(3))
        assert check.normalized
        assert not check.monotone
        assert "retained more often" in check.violation

    def test_mixture(self):
        """Test convex combinations of valid families stay valid."""
        drop_all = AlterationFamily.from_map(2, lambda B: 0)
        fam = AlterationFamily.mixture([AlterationFamily.identity(2), drop_all], [1, 3])
        assert validate_family(fam).valid
        np.testing.assert_allclose(fam.retention()[3], [0.25, 0.25])

    def test_random_families_are_valid(self):
        """Test every generator kind returns a normalized monotone family."""
        for kind in ("threshold", "sorted", "mixture"):
            for seed in range(5):
                assert validate_family(random_monotone_family(4, seed, kind)).valid

    def test_unknown_kind(self):
        """Test the family kind is validated."""
        with pytest.raises(PreconditionError):
            random_monotone_family(3, 0, "greedy")

    def test_projection_of_identity(self):
        """Test projecting the identity family gives the identity on one element fewer."""
        projected = project_family(AlterationFamily.identity(3), [0.3, 0.6, 0.2])
        assert projected.n == 2
        np.testing.assert_allclose(projected.q, np.eye(4))


class TestDistributions:
    """Test the product distribution and β."""

    def test_product_distribution(self):
        """Test p sums to one and puts all mass on the integral point."""
        assert product_distribution([0.3, 0.5, 0.9]).sum() == pytest.approx(1.0)
        np.testing.assert_allclose(product_distribution([1.0, 0.0]), [0.0, 1.0, 0.0, 0.0])

    def test_beta(self):
        """Test β for keeping everything, dropping everything and x = 0."""
        x = [0.4, 0.7]
        assert family_beta(AlterationFamily.identity(2), x) == pytest.approx(1.0)
        assert family_beta(AlterationFamily.from_map(2, lambda B: 0), x) == pytest.approx(0.0)
        assert family_beta(AlterationFamily.from_map(2, lambda B: 0), [0.0, 0.0]) == 1.0

    def test_oracle_table_limit(self):
        """Test oracle tables are limited to tiny ground sets."""
        assert oracle_table(LinearOracle([1.0, 2.0])).tolist() == [0.0, 1.0, 2.0, 3.0]
        with pytest.raises(PreconditionError):
            oracle_table(LinearOracle([1.0] * 7))


class TestSubadditivityChecks:
    """Test the enumerated inequality and its inductive proof steps."""

    def test_identity_is_tight(self):
        """Test both sides coincide when nothing is removed."""
        f = random_coverage_oracle(3, 4, seed=0)
        result = check_subadditivity_theorem(f, [0.2, 0.5, 0.9], AlterationFamily.identity(3))
        assert result.valid and result.passed
        assert result.beta == pytest.approx(1.0)
        assert result.lhs == pytest.approx(result.rhs)

    def test_random_systems_pass(self):
        """Test random monotone families satisfy the inequality on coverage functions."""
        rng = np.random.default_rng(1)
        for seed in range(20):
            fam = random_monotone_family(4, seed, ("threshold", "sorted", "mixture")[seed % 3])
            f = random_coverage_oracle(4, 5, seed=seed)
            result = check_subadditivity_theorem(f, rng.random(4), fam)
            assert result.valid
            assert result.passed
            assert result.lhs >= result.beta * result.rhs - 1e-12

    def test_invalid_family_not_checked(self):
        """Test a non-monotone family is reported, not evaluated."""
        result = check_subadditivity_theorem(LinearOracle([1.0] * 3), [0.5] * 3, counterexample_family(3))
        assert not result.valid
        assert not result.passed
        assert result.lhs is None
        assert result.reason

    def test_dimension_and_range_checks(self):
        """Test x must match the family and lie in the cube."""
        fam = AlterationFamily.identity(2)
        with pytest.raises(InstanceError):
            check_subadditivity_table(np.zeros(4), [0.5], fam)
        with pytest.raises(PreconditionError):
            check_subadditivity_table(np.zeros(4), [0.5, 1.5], fam)

    def test_induction_levels(self):
        """Test every level of the induction holds for a valid family."""
        fam = random_monotone_family(4, 3, "mixture")
        f = random_coverage_oracle(4, 6, seed=3)
        result = check_induction_step(f, [0.3, 0.8, 0.5, 0.6], fam)
        assert result.passed
        assert [level.n for level in result.levels] == [4, 3, 2, 1]
        assert all(level.projection_valid for level in result.levels)

    def test_induction_rejects_invalid_family(self):
        """Test the induction check refuses a non-monotone family."""
        result = check_induction_step(LinearOracle([1.0] * 3), [0.5] * 3, counterexample_family(3))
        assert not result.passed
        assert result.levels == ()

    def test_counterexample_profit(self):
        """Test retention 1/2 per item while the kept value drops far below half."""
        mean_s, mean_final, retention = counterexample_profit(4)
        assert mean_s == pytest.approx(0.5 + 1.0 / 8)
        assert mean_final == pytest.approx(1.0 / 8)
        assert retention == pytest.approx(0.5)
        assert mean_final < retention * mean_s
        with pytest.raises(PreconditionError):
            counterexample_profit(1)


class TestFractionalCovers:
    """Test fractional subadditivity as a special case."""

    def setup_method(self):
        """Set up a leave-one-out cover of four elements."""
        self.n = 4
        self.cover = [([i for i in range(self.n) if i != skip], 1.0 / (self.n - 1)) for skip in range(self.n)]

    def test_cover_inequality(self):
        """Test f(U) ≤ Σ λ_t f(A_t) for a coverage function."""
        f = random_coverage_oracle(self.n, 6, seed=2)
        result = check_fractional_subadditivity(f, self.cover)
        assert result.passed
        assert result.union_value <= result.cover_value + 1e-12

    def test_cover_family_at_unit_point(self):
        """Test the cover family passes the enumerated check at x = 1."""
        f = WeightedCoverageOracle([1.0, 2.0], [[0], [1], [0, 1], []])
        fam = fractional_cover_family(self.n, self.cover)
        assert validate_family(fam).valid
        assert check_subadditivity_theorem(f, np.ones(self.n), fam).passed

    def test_short_cover_rejected(self):
        """Test elements covered with weight below one are rejected."""
        with pytest.raises(PreconditionError):
            check_fractional_subadditivity(LinearOracle([1.0] * 3), [([0, 1], 1.0)])
