"""
LP relaxations of packing instances.

Builds the natural relaxation (integrality dropped) and the strengthened
relaxation that adds one row Σ_{i∈B(j)} x_i ≤ 1 per constraint with big
items, solves them through a pluggable solver, and serves linear
maximization over the packing polytope for continuous greedy.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.config import settings
from src.exceptions import InstanceError, PreconditionError
from src.logger import get_logger
from src.packing.instance import FractionalSolution, PipInstance, is_unit_capacity
from src.packing.simplex import SimplexSolver

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class LpModel:
    """
    max objective·x  s.t.  matrix·x ≤ rhs,  lower ≤ x ≤ upper.

    The matrix must be nonnegative (a packing polytope) and every
    right-hand side nonnegative, so x = lower is feasible whenever the
    lower bounds fit.
    """

    objective: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = self.objective.shape[0]
        if self.matrix.ndim != 2 or self.matrix.shape[1] != n:
            raise InstanceError(f"matrix shape {self.matrix.shape} does not match {n} variables")
        if self.rhs.shape != (self.matrix.shape[0],):
            raise InstanceError(f"rhs has shape {self.rhs.shape}, expected ({self.matrix.shape[0]},)")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise InstanceError("bounds must have one entry per variable")
        for name, arr in (("objective", self.objective), ("matrix", self.matrix), ("rhs", self.rhs)):
            if not np.all(np.isfinite(arr)):
                raise InstanceError(f"{name} contains non-finite entries")
        if np.any(self.matrix < 0):
            r, c = np.argwhere(self.matrix < 0)[0]
            raise InstanceError(f"matrix[{r}, {c}] is negative; only packing rows are supported")
        if np.any(self.rhs < 0):
            raise InstanceError(f"row {int(np.argmax(self.rhs < 0))} has a negative rhs")
        if np.any(self.lower > self.upper):
            raise InstanceError(f"variable {int(np.argmax(self.lower > self.upper))} has lower > upper")
        if not self.row_names:
            object.__setattr__(self, "row_names", tuple(f"r{j}" for j in range(self.matrix.shape[0])))

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    def with_objective(self, direction: Sequence[float]) -> "LpModel":
        direction = np.asarray(direction, dtype=float)
        if direction.shape != self.objective.shape:
            raise InstanceError(f"direction has {direction.shape[0]} entries, expected {self.num_vars}")
        return LpModel(direction, self.matrix, self.rhs, self.lower, self.upper, self.row_names)

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LpModel":
        return LpModel(self.objective, self.matrix, self.rhs, lower, upper, self.row_names)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest row or bound violation of x (0 when feasible)."""
        rows = float(np.max(self.matrix @ x - self.rhs, initial=0.0))
        bounds = float(max(np.max(self.lower - x, initial=0.0), np.max(x - self.upper, initial=0.0)))
        return max(rows, bounds)

    def is_feasible(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = settings.feasibility_tol if tol is None else tol
        return self.max_violation(np.asarray(x, dtype=float)) <= tol


class BigItemIndex(BaseModel):
    """B(j) for every constraint j: items with s_ij strictly above one half."""

    model_config = ConfigDict(frozen=True)

    big_items: Tuple[Tuple[int, ...], ...]

    def __getitem__(self, j: int) -> Tuple[int, ...]:
        return self.big_items[j]

    @property
    def nonempty(self) -> List[int]:
        return [j for j, items in enumerate(self.big_items) if items]


class LpSolver(Protocol):
    """Anything that can solve an LpModel to optimality."""

    name: str

    def solve(self, model: LpModel) -> FractionalSolution: ...


_SOLVERS: Dict[str, Callable[[], LpSolver]] = {"simplex": SimplexSolver}


def register_solver(name: str, factory: Callable[[], LpSolver]) -> None:
    """Make an external LP engine available under `name`."""
    _SOLVERS[name] = factory


def get_solver(name: str = "simplex") -> LpSolver:
    if name not in _SOLVERS:
        raise PreconditionError(f"unknown LP solver '{name}', known: {sorted(_SOLVERS)}")
    return _SOLVERS[name]()


def build_big_item_index(inst: PipInstance) -> BigItemIndex:
    """B(j) per constraint; ties at exactly one half count as small."""
    if not is_unit_capacity(inst):
        raise PreconditionError("big items are defined on unit-capacity instances; normalize first")
    threshold = settings.big_item_threshold
    idx = inst.index
    return BigItemIndex(
        big_items=tuple(
            tuple(int(i) for i in items[sizes > threshold])
            for items, sizes in zip(idx.row_items, idx.row_sizes)
        )
    )


def build_natural_lp(inst: PipInstance) -> LpModel:
    """
    The natural relaxation: x ∈ [0, u], Σ_i s_ij x_i ≤ c_j, objective w.

    Dropped items get the bound [0, 0].
    """
    idx = inst.index
    return LpModel(
        objective=idx.weights.copy(),
        matrix=idx.dense.copy(),
        rhs=idx.capacities.copy(),
        lower=np.zeros(inst.n),
        upper=idx.upper_bounds.astype(float),
        row_names=tuple(f"c{j}" for j in range(inst.m)),
    )


def build_strengthened_lp(inst: PipInstance) -> LpModel:
    """
    Natural relaxation plus Σ_{i∈B(j)} x_i ≤ 1 for every j with B(j) ≠ ∅.

    Raises:
        PreconditionError: Unless the instance is unit-capacity with u ≡ 1
    """
    if not inst.has_unit_bounds:
        raise PreconditionError("the strengthened relaxation needs unit upper bounds")
    big = build_big_item_index(inst)
    natural = build_natural_lp(inst)
    rows = big.nonempty
    if not rows:
        return natural

    extra = np.zeros((len(rows), inst.n))
    for r, j in enumerate(rows):
        extra[r, list(big[j])] = 1.0
    logger.debug(f"Added {len(rows)} big-item rows")
    return LpModel(
        objective=natural.objective,
        matrix=np.vstack([natural.matrix, extra]),
        rhs=np.concatenate([natural.rhs, np.ones(len(rows))]),
        lower=natural.lower,
        upper=natural.upper,
        row_names=natural.row_names + tuple(f"big{j}" for j in rows),
    )


def build_relaxation(inst: PipInstance, relaxation: str) -> LpModel:
    """Dispatch on the relaxation name: 'natural' or 'strengthened'."""
    if relaxation == "natural":
        return build_natural_lp(inst)
    if relaxation == "strengthened":
        return build_strengthened_lp(inst)
    raise PreconditionError(f"unknown relaxation '{relaxation}'")


def solve_lp(model: LpModel, solver: Optional[LpSolver] = None) -> FractionalSolution:
    """
    Solve a packing LP with the given engine (the reference simplex by default).

    Args:
        model: The LP
        solver: Optional engine implementing LpSolver

    Returns:
        FractionalSolution: Optimal point and objective
    """
    solver = solver or get_solver()
    solution = solver.solve(model)
    logger.debug(
        f"LP solved by {solver.name}: vars={model.num_vars}, rows={model.num_rows}, "
        f"obj={solution.objective:.9g}, pivots={solution.iterations}"
    )
    return solution


def maximize_linear_over_polytope(
    model: LpModel, direction: Sequence[float], solver: Optional[LpSolver] = None
) -> FractionalSolution:
    """Optimal vertex of the model's polytope for the given linear direction."""
    return solve_lp(model.with_objective(direction), solver)


def to_lp_format(model: LpModel) -> str:
    """
    Render the model in CPLEX LP text format for cross-checking with other solvers.

    Returns:
        str: LP file contents
    """

    def term_list(coeffs: np.ndarray) -> str:
        terms = [f"{v:+.17g} x{i}" for i, v in enumerate(coeffs) if v != 0]
        return " ".join(terms) if terms else "0 x0"

    lines = ["Maximize", f" obj: {term_list(model.objective)}", "Subject To"]
    for name, row, rhs in zip(model.row_names, model.matrix, model.rhs):
        lines.append(f" {name}: {term_list(row)} <= {rhs:.17g}")
    lines.append("Bounds")
    for i, (lo, hi) in enumerate(zip(model.lower, model.upper)):
        upper = "+inf" if not np.isfinite(hi) else f"{hi:.17g}"
        lines.append(f" {lo:.17g} <= x{i} <= {upper}")
    lines.append("End")
    return "\n".join(lines) + "\n"
