"""
Exact oracles for small instances.

solve_exact finds a provably optimal integral solution, either by
depth-first enumeration of multiplicities with feasibility and
weight-bound pruning, or by LP-based branch-and-bound. The results are
the ground truth for integrality gaps and for checking that every LP
value dominates the integral optimum.
"""

import math
from typing import TYPE_CHECKING, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.config import settings
from src.exceptions import InstanceError, LpInfeasibleError, PreconditionError
from src.logger import get_logger
from src.packing.instance import ItemSet, PipInstance, check_feasible, normalize_unit_capacities, value
from src.packing.lp import LpSolver, build_natural_lp, build_relaxation, solve_lp

if TYPE_CHECKING:
    from src.packing.submodular import SubmodularOracle

logger = get_logger(__name__)

# A relaxed variable closer than this to an integer counts as integral
_INTEGRALITY_TOL = 1e-7
_CHUNK = 1 << 16


class ExactResult(BaseModel):
    """Optimal set, its value, and the search effort spent."""

    model_config = ConfigDict(frozen=True)

    solution: ItemSet
    value: float
    nodes: int
    proven_optimal: bool
    method: str


def _exhaustive(inst: PipInstance) -> ExactResult:
    idx = inst.index
    tol = settings.feasibility_tol
    caps = [c + tol for c in inst.capacities]
    upper = [int(u) for u in idx.upper_bounds]

    # Items without constraints are taken at their bound up front
    fixed = [upper[i] if not inst.columns[i] else 0 for i in range(inst.n)]
    order = sorted(
        (i for i in range(inst.n) if inst.columns[i] and upper[i] > 0 and inst.weights[i] > 0),
        key=lambda i: -inst.weights[i],
    )
    suffix = [0.0] * (len(order) + 1)
    for pos in range(len(order) - 1, -1, -1):
        i = order[pos]
        suffix[pos] = suffix[pos + 1] + inst.weights[i] * upper[i]

    loads = [0.0] * inst.m
    counts = list(fixed)
    base = sum(inst.weights[i] * fixed[i] for i in range(inst.n))
    best_value = -1.0
    best_counts: List[int] = list(counts)
    nodes = 0

    def visit(pos: int, current: float) -> None:
        nonlocal best_value, best_counts, nodes
        nodes += 1
        if current + suffix[pos] <= best_value:
            return
        if pos == len(order):
            best_value = current
            best_counts = list(counts)
            return
        i = order[pos]
        column = inst.columns[i]
        for c in range(upper[i], -1, -1):
            if c and any(loads[j] + c * s > caps[j] for j, s in column):
                continue
            for j, s in column:
                loads[j] += c * s
            counts[i] = c
            visit(pos + 1, current + c * inst.weights[i])
            for j, s in column:
                loads[j] -= c * s
            counts[i] = 0

    visit(0, base)
    solution = ItemSet(counts=tuple(best_counts))
    return ExactResult(
        solution=solution, value=value(inst, solution), nodes=nodes, proven_optimal=True, method="exhaustive"
    )


def _branch_and_bound(inst: PipInstance, solver: Optional[LpSolver]) -> ExactResult:
    model = build_natural_lp(inst)
    best_value = 0.0
    best = ItemSet.empty(inst.n)
    stack = [(model.lower.copy(), model.upper.copy())]
    nodes = 0

    while stack:
        lo, hi = stack.pop()
        nodes += 1
        try:
            relaxed = solve_lp(model.with_bounds(lo, hi), solver)
        except LpInfeasibleError:
            continue
        if relaxed.objective <= best_value + settings.lp_optimality_tol:
            continue

        x = relaxed.array
        deviation = np.abs(x - np.round(x))
        candidate = ItemSet(counts=tuple(int(v) for v in np.round(x)))
        if np.all(deviation <= _INTEGRALITY_TOL) and check_feasible(inst, candidate):
            best_value, best = value(inst, candidate), candidate
            continue
        i = int(np.argmax(deviation))
        if deviation[i] <= 0.0:
            continue

        down_hi = hi.copy()
        down_hi[i] = math.floor(x[i])
        up_lo = lo.copy()
        up_lo[i] = math.ceil(x[i])
        stack.append((lo, down_hi))
        if up_lo[i] <= hi[i]:
            stack.append((up_lo, hi))

    return ExactResult(
        solution=best, value=best_value, nodes=nodes, proven_optimal=True, method="branch-and-bound"
    )


def solve_exact(inst: PipInstance, method: str = "auto", solver: Optional[LpSolver] = None) -> ExactResult:
    """
    Find an optimal integral solution.

    Args:
        inst: Instance (any capacities; multiplicities respect u)
        method: "exhaustive", "branch-and-bound", or "auto" (exhaustive when
            Σu fits the exhaustive limit, branch-and-bound otherwise)
        solver: LP engine for branch-and-bound

    Returns:
        ExactResult: Provably optimal feasible set

    Raises:
        PreconditionError: If the instance is too large for the chosen method
    """
    total_units = int(inst.index.upper_bounds.sum())
    exhaustive_ok = total_units <= settings.exact_exhaustive_max_items
    if method == "auto":
        method = "exhaustive" if exhaustive_ok else "branch-and-bound"

    if method == "exhaustive":
        if not exhaustive_ok:
            raise PreconditionError(
                f"exhaustive search needs Σu <= {settings.exact_exhaustive_max_items}, got {total_units}"
            )
        result = _exhaustive(inst)
    elif method == "branch-and-bound":
        if inst.n > settings.exact_bnb_max_items:
            raise PreconditionError(
                f"branch-and-bound is limited to n <= {settings.exact_bnb_max_items}, got n={inst.n}"
            )
        result = _branch_and_bound(inst, solver)
    else:
        raise PreconditionError(f"unknown exact method '{method}'")

    logger.info(f"Exact optimum {result.value:.9g} by {result.method} ({result.nodes} nodes)")
    return result


def integrality_gap(inst: PipInstance, relaxation: str = "natural", solver: Optional[LpSolver] = None) -> float:
    """
    LP objective over exact integral optimum.

    Both relaxations are taken on the unit-capacity normalization, which
    keeps the integral feasible region unchanged.

    Returns:
        float: The gap; inf when the exact value is 0 but the LP is
        positive, nan when both are 0
    """
    norm = normalize_unit_capacities(inst)
    lp_value = solve_lp(build_relaxation(norm, relaxation), solver).objective
    exact_value = solve_exact(inst, solver=solver).value
    if exact_value <= 0.0:
        logger.warning(f"Integrality gap undefined: exact optimum is 0 (LP {lp_value:.9g})")
        return math.inf if lp_value > settings.lp_optimality_tol else math.nan
    return lp_value / exact_value


def solve_exact_submodular(f: "SubmodularOracle", inst: PipInstance) -> ExactResult:
    """
    Maximize a value oracle over all feasible 0/1 sets by enumeration.

    Raises:
        PreconditionError: If u is not all ones or n exceeds the exhaustive limit
    """
    if not inst.has_unit_bounds:
        raise PreconditionError("submodular maximization is defined for unit upper bounds")
    if f.n != inst.n:
        raise InstanceError(f"oracle has ground set {f.n}, instance has n={inst.n}")
    if inst.n > settings.exact_exhaustive_max_items:
        raise PreconditionError(
            f"exhaustive submodular search is limited to n <= {settings.exact_exhaustive_max_items}"
        )

    idx = inst.index
    dense_t = idx.dense.T
    limit = idx.capacities + settings.feasibility_tol
    allowed = idx.upper_bounds > 0
    n = inst.n
    bits = np.arange(n)
    best_value, best_code, evaluated = -math.inf, 0, 0

    for start in range(0, 1 << n, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, 1 << n), dtype=np.int64)
        masks = ((codes[:, None] >> bits) & 1).astype(bool)
        ok = np.all(masks <= allowed, axis=1)
        if inst.m:
            ok &= np.all(masks.astype(float) @ dense_t <= limit, axis=1)
        if not ok.any():
            continue
        values = f.values(masks[ok])
        evaluated += int(ok.sum())
        pos = int(np.argmax(values))
        if values[pos] > best_value:
            best_value, best_code = float(values[pos]), int(codes[ok][pos])

    solution = ItemSet.from_mask(((best_code >> bits) & 1).astype(bool))
    return ExactResult(
        solution=solution, value=best_value, nodes=evaluated, proven_optimal=True, method="exhaustive"
    )
