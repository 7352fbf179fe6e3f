"""
Data model for column-sparse packing instances.

This module defines the three value types every algorithm exchanges:
- PipInstance: weights, capacities and a column-major sparse size matrix
- FractionalSolution: an LP point x with its objective value
- ItemSet: an integral solution given as per-item multiplicities

It also provides the instance-level operations: column sparsity, slack,
the two normalizations and solution evaluation. Instances are immutable
after construction, so one instance can be shared by concurrent trial
workers.
"""

import math
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import settings
from src.exceptions import InstanceError
from src.logger import get_logger

logger = get_logger(__name__)

Entry = Tuple[int, float]


class InstanceIndex:
    """
    Array views of a PipInstance, built once per instance.

    Holds dense per-item/per-constraint vectors and the row index P(j)
    derived from the column-major storage.
    """

    def __init__(self, inst: "PipInstance"):
        self.weights = np.asarray(inst.weights, dtype=float)
        self.capacities = np.asarray(inst.capacities, dtype=float)
        upper = np.ones(inst.n, dtype=np.int64)
        if inst.upper_bounds is not None:
            upper = np.asarray(inst.upper_bounds, dtype=np.int64)
        upper = upper.copy()
        if inst.dropped_items:
            upper[list(inst.dropped_items)] = 0
        self.upper_bounds = upper

        row_items: List[List[int]] = [[] for _ in range(inst.m)]
        row_sizes: List[List[float]] = [[] for _ in range(inst.m)]
        for i, column in enumerate(inst.columns):
            for j, s in column:
                row_items[j].append(i)
                row_sizes[j].append(s)
        self.row_items = [np.asarray(items, dtype=np.int64) for items in row_items]
        self.row_sizes = [np.asarray(sizes, dtype=float) for sizes in row_sizes]
        self.support_sizes = np.asarray([len(c) for c in inst.columns], dtype=np.int64)
        self._n = inst.n
        self._m = inst.m

    @cached_property
    def dense(self) -> np.ndarray:
        """Dense (m, n) size matrix."""
        matrix = np.zeros((self._m, self._n), dtype=float)
        for j, (items, sizes) in enumerate(zip(self.row_items, self.row_sizes)):
            matrix[j, items] = sizes
        return matrix


class PipInstance(BaseModel):
    """
    A packing integer program max{w·x | Sx ≤ c, 0 ≤ x ≤ u, x integral}.

    Columns are stored sparsely: `columns[i]` lists the (constraint, size)
    pairs of item i, i.e. its support N(i). Items listed in
    `dropped_items` are forced to zero (their sizes exceeded a capacity
    during normalization).
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=0, description="Number of items (columns)")
    m: int = Field(..., ge=0, description="Number of constraints (rows)")
    weights: Tuple[float, ...]
    capacities: Tuple[float, ...]
    columns: Tuple[Tuple[Entry, ...], ...]
    upper_bounds: Optional[Tuple[int, ...]] = None
    dropped_items: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def check_invariants(self) -> "PipInstance":
        """Validate every structural invariant, reporting the first violation with indices."""
        if len(self.weights) != self.n:
            raise ValueError(f"weights has {len(self.weights)} entries, expected n={self.n}")
        if len(self.capacities) != self.m:
            raise ValueError(f"capacities has {len(self.capacities)} entries, expected m={self.m}")
        if len(self.columns) != self.n:
            raise ValueError(f"columns has {len(self.columns)} entries, expected n={self.n}")
        for i, w in enumerate(self.weights):
            if not math.isfinite(w) or w < 0:
                raise ValueError(f"weights[{i}] must be finite and nonnegative, got {w}")
        for j, c in enumerate(self.capacities):
            if not math.isfinite(c) or c <= 0:
                raise ValueError(f"capacities[{j}] must be finite and positive, got {c}")
        for i, column in enumerate(self.columns):
            seen = set()
            for j, s in column:
                if not 0 <= j < self.m:
                    raise ValueError(f"item {i}: constraint index {j} out of range [0, {self.m})")
                if j in seen:
                    raise ValueError(f"item {i}: duplicate entry for constraint {j}")
                if not math.isfinite(s) or s <= 0:
                    raise ValueError(f"item {i}, constraint {j}: size must be finite and > 0, got {s}")
                seen.add(j)
        if self.upper_bounds is not None:
            if len(self.upper_bounds) != self.n:
                raise ValueError(
                    f"upper_bounds has {len(self.upper_bounds)} entries, expected n={self.n}"
                )
            for i, u in enumerate(self.upper_bounds):
                if u < 1:
                    raise ValueError(f"upper_bounds[{i}] must be a positive integer, got {u}")
        for i in self.dropped_items:
            if not 0 <= i < self.n:
                raise ValueError(f"dropped item {i} out of range [0, {self.n})")
        return self

    @classmethod
    def from_entries(
        cls,
        weights: Sequence[float],
        capacities: Sequence[float],
        entries: Iterable[Tuple[int, int, float]],
        upper_bounds: Optional[Sequence[int]] = None,
    ) -> "PipInstance":
        """
        Build an instance from coordinate-format (i, j, s) entries.

        Duplicate (i, j) pairs are rejected, not summed.

        Args:
            weights: Per-item weights w_i
            capacities: Per-constraint capacities c_j
            entries: Iterable of (item, constraint, size) triples
            upper_bounds: Optional per-item integer bounds u_i

        Returns:
            PipInstance: Validated instance
        """
        n = len(weights)
        columns: List[List[Entry]] = [[] for _ in range(n)]
        for pos, (i, j, s) in enumerate(entries):
            if not 0 <= int(i) < n:
                raise InstanceError(f"entries[{pos}]: item index {i} out of range [0, {n})")
            columns[int(i)].append((int(j), float(s)))
        for column in columns:
            column.sort()
        return cls(
            n=n,
            m=len(capacities),
            weights=tuple(float(w) for w in weights),
            capacities=tuple(float(c) for c in capacities),
            columns=tuple(tuple(c) for c in columns),
            upper_bounds=None if upper_bounds is None else tuple(int(u) for u in upper_bounds),
        )

    @cached_property
    def index(self) -> InstanceIndex:
        """Array views and the row index P(j), built on first use."""
        return InstanceIndex(self)

    def entries(self) -> List[Tuple[int, int, float]]:
        """All stored (i, j, s_ij) triples in column-major order."""
        return [(i, j, s) for i, column in enumerate(self.columns) for j, s in column]

    def support(self, i: int) -> Tuple[int, ...]:
        """N(i): constraints item i participates in."""
        return tuple(j for j, _ in self.columns[i])

    def participants(self, j: int) -> Tuple[int, ...]:
        """P(j): items participating in constraint j."""
        return tuple(int(i) for i in self.index.row_items[j])

    def size(self, i: int, j: int) -> float:
        for jj, s in self.columns[i]:
            if jj == j:
                return s
        return 0.0

    @property
    def has_unit_bounds(self) -> bool:
        return self.upper_bounds is None or all(u == 1 for u in self.upper_bounds)

    def with_unit_bounds(self) -> "PipInstance":
        """Copy of this instance with u ≡ 1."""
        if self.upper_bounds is None:
            return self
        return PipInstance(
            n=self.n,
            m=self.m,
            weights=self.weights,
            capacities=self.capacities,
            columns=self.columns,
            dropped_items=self.dropped_items,
        )


class FractionalSolution(BaseModel):
    """An LP point x with its objective value."""

    model_config = ConfigDict(frozen=True)

    x: Tuple[float, ...]
    objective: float
    iterations: int = 0

    @model_validator(mode="after")
    def check_finite(self) -> "FractionalSolution":
        for i, xi in enumerate(self.x):
            if not math.isfinite(xi):
                raise ValueError(f"x[{i}] is not finite")
        return self

    @classmethod
    def from_array(cls, x: np.ndarray, objective: float, iterations: int = 0) -> "FractionalSolution":
        return cls(x=tuple(float(v) for v in x), objective=float(objective), iterations=iterations)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)


class ItemSet(BaseModel):
    """An integral solution: per-item multiplicities (a plain subset when u ≡ 1)."""

    model_config = ConfigDict(frozen=True)

    counts: Tuple[int, ...]

    @model_validator(mode="after")
    def check_counts(self) -> "ItemSet":
        for i, c in enumerate(self.counts):
            if c < 0:
                raise ValueError(f"counts[{i}] must be nonnegative, got {c}")
        return self

    @classmethod
    def empty(cls, n: int) -> "ItemSet":
        return cls(counts=(0,) * n)

    @classmethod
    def from_items(cls, n: int, items: Iterable[int]) -> "ItemSet":
        counts = [0] * n
        for i in items:
            counts[i] += 1
        return cls(counts=tuple(counts))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "ItemSet":
        return cls(counts=tuple(int(v) for v in np.asarray(mask, dtype=np.int64)))

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def items(self) -> List[int]:
        """Items with nonzero multiplicity, ascending."""
        return [i for i, c in enumerate(self.counts) if c > 0]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def __contains__(self, i: int) -> bool:
        return self.counts[i] > 0

    @property
    def cardinality(self) -> int:
        return sum(self.counts)

    def issubset(self, other: "ItemSet") -> bool:
        return all(a <= b for a, b in zip(self.counts, other.counts))


def column_sparsity(inst: PipInstance) -> int:
    """k = max_i |N(i)|; 0 for an instance without items."""
    if inst.n == 0:
        return 0
    return max(len(column) for column in inst.columns)


def slack(inst: PipInstance) -> float:
    """
    Compute the slack B = min over stored entries of c_j / s_ij.

    Args:
        inst: Instance with at least one stored entry

    Returns:
        float: The slack B

    Raises:
        InstanceError: If the instance stores no entries
    """
    ratios = [inst.capacities[j] / s for column in inst.columns for j, s in column]
    if not ratios:
        raise InstanceError("slack is undefined for an instance without entries")
    return min(ratios)


def is_unit_capacity(inst: PipInstance) -> bool:
    """True when c ≡ 1 and every stored size is at most 1."""
    return all(c == 1.0 for c in inst.capacities) and all(
        s <= 1.0 for column in inst.columns for _, s in column
    )


def is_unit_max_size(inst: PipInstance) -> bool:
    """True when every constraint has entries and its largest size is exactly 1."""
    idx = inst.index
    return all(len(sizes) > 0 and sizes.max() == 1.0 for sizes in idx.row_sizes)


def normalize_unit_capacities(inst: PipInstance) -> PipInstance:
    """
    Scale every row by 1/c_j so that all capacities become one.

    Items with a scaled size above one can never be selected; they are
    fixed to zero, their entries removed, and their index recorded in
    `dropped_items`. An already-normalized instance is returned as is.

    Args:
        inst: Instance with positive capacities

    Returns:
        PipInstance: Unit-capacity instance
    """
    if is_unit_capacity(inst):
        return inst

    tol = settings.feasibility_tol
    dropped = set(inst.dropped_items)
    columns: List[Tuple[Entry, ...]] = []
    for i, column in enumerate(inst.columns):
        scaled = [(j, s / inst.capacities[j]) for j, s in column]
        if any(s > 1.0 + tol for _, s in scaled):
            dropped.add(i)
            columns.append(())
            continue
        columns.append(tuple((j, min(s, 1.0)) for j, s in scaled))

    newly_dropped = sorted(dropped - set(inst.dropped_items))
    if newly_dropped:
        logger.info(f"Fixed {len(newly_dropped)} oversized items to zero: {newly_dropped}")

    return PipInstance(
        n=inst.n,
        m=inst.m,
        weights=inst.weights,
        capacities=(1.0,) * inst.m,
        columns=tuple(columns),
        upper_bounds=inst.upper_bounds,
        dropped_items=tuple(sorted(dropped)),
    )


def normalize_unit_max_size(inst: PipInstance) -> PipInstance:
    """
    Scale every row (sizes and capacity) so its largest size is one.

    Constraints without entries are removed first and the remaining ones
    renumbered. Afterwards the slack equals min_j c_j.

    Args:
        inst: Any valid instance

    Returns:
        PipInstance: Instance with max_{i∈P(j)} s_ij = 1 for every row
    """
    idx = inst.index
    keep = [j for j in range(inst.m) if len(idx.row_sizes[j]) > 0]
    if len(keep) == inst.m and is_unit_max_size(inst):
        return inst

    if len(keep) < inst.m:
        logger.info(f"Removed {inst.m - len(keep)} constraints without entries")
    renumber = {j: pos for pos, j in enumerate(keep)}
    row_max = {j: float(idx.row_sizes[j].max()) for j in keep}

    columns = tuple(
        tuple((renumber[j], s / row_max[j]) for j, s in column) for column in inst.columns
    )
    return PipInstance(
        n=inst.n,
        m=len(keep),
        weights=inst.weights,
        capacities=tuple(inst.capacities[j] / row_max[j] for j in keep),
        columns=columns,
        upper_bounds=inst.upper_bounds,
        dropped_items=inst.dropped_items,
    )


def _check_dimension(inst: PipInstance, sol: ItemSet) -> None:
    if sol.n != inst.n:
        raise InstanceError(f"solution has {sol.n} items, instance has n={inst.n}")


def constraint_loads(inst: PipInstance, sol: ItemSet) -> np.ndarray:
    """Per-constraint load Σ_i s_ij · multiplicity_i."""
    _check_dimension(inst, sol)
    idx = inst.index
    counts = sol.array.astype(float)
    return np.asarray(
        [float(sizes @ counts[items]) for items, sizes in zip(idx.row_items, idx.row_sizes)],
        dtype=float,
    )


def check_feasible(inst: PipInstance, sol: ItemSet) -> bool:
    """
    Check whether an integral solution satisfies every constraint.

    Rows are compared after dividing by the capacity, with the absolute
    tolerance `settings.feasibility_tol`; bound constraints are exact.

    Args:
        inst: The instance
        sol: Solution with one multiplicity per item

    Returns:
        bool: True iff the solution is feasible

    Raises:
        InstanceError: On dimension mismatch
    """
    _check_dimension(inst, sol)
    if np.any(sol.array > inst.index.upper_bounds):
        return False
    if inst.m == 0:
        return True
    loads = constraint_loads(inst, sol)
    return bool(np.all(loads / inst.index.capacities <= 1.0 + settings.feasibility_tol))


def value(inst: PipInstance, sol: ItemSet) -> float:
    """Objective Σ w_i · multiplicity_i."""
    _check_dimension(inst, sol)
    return float(inst.index.weights @ sol.array.astype(float))
