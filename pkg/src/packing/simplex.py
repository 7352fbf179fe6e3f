"""
Bounded-variable primal simplex for packing LPs.

Solves max c·x s.t. A x ≤ b, lo ≤ x ≤ hi with A ≥ 0. After shifting
x = lo + y the right-hand side b − A·lo must stay nonnegative (otherwise
the model is infeasible, since A y ≥ 0 for y ≥ 0), so the all-slack basis
is always a feasible start and no phase one is needed.

Pricing is Dantzig's largest reduced cost; after a run of degenerate
pivots the solver switches to Bland's smallest-index rule, which cannot
cycle. The tableau is dense and basic values are recomputed from the
original columns once the loop ends.
"""

from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from src.config import settings
from src.exceptions import IterationLimitError, LpInfeasibleError, LpUnboundedError, SolverError
from src.logger import get_logger
from src.packing.instance import FractionalSolution

if TYPE_CHECKING:
    from src.packing.lp import LpModel

logger = get_logger(__name__)


class SimplexSolver:
    """Reference LP engine: dense tableau, bounded variables, Bland fallback."""

    name = "simplex"

    def __init__(
        self,
        pivot_tol: Optional[float] = None,
        optimality_tol: Optional[float] = None,
        feasibility_tol: Optional[float] = None,
        max_iterations: Optional[int] = None,
        bland_trigger_factor: Optional[int] = None,
    ):
        self.pivot_tol = pivot_tol if pivot_tol is not None else settings.lp_pivot_tol
        self.optimality_tol = optimality_tol if optimality_tol is not None else settings.lp_optimality_tol
        self.feasibility_tol = feasibility_tol if feasibility_tol is not None else settings.feasibility_tol
        self.max_iterations = max_iterations if max_iterations is not None else settings.lp_max_iterations
        self.bland_trigger_factor = (
            bland_trigger_factor if bland_trigger_factor is not None else settings.bland_trigger_factor
        )

    def solve(self, model: "LpModel") -> FractionalSolution:
        """
        Solve the model to optimality.

        Args:
            model: Packing LP (nonnegative matrix)

        Returns:
            FractionalSolution: Optimal basic solution and objective

        Raises:
            LpInfeasibleError: If some bound or shifted row cannot be met
            LpUnboundedError: If the objective is unbounded
            IterationLimitError: If the pivot budget is exhausted
        """
        c, A, b = model.objective, model.matrix, model.rhs
        lo, hi = model.lower, model.upper
        n = c.shape[0]

        bad = np.flatnonzero(lo > hi + self.feasibility_tol)
        if bad.size:
            j = int(bad[0])
            raise LpInfeasibleError(f"variable {j}: lower bound {lo[j]} exceeds upper bound {hi[j]}")

        b_shift = b - A @ lo if A.size else b.copy()
        bad = np.flatnonzero(b_shift < -self.feasibility_tol)
        if bad.size:
            j = int(bad[0])
            raise LpInfeasibleError(f"row {j}: lower bounds already use {b[j] - b_shift[j]} > rhs {b[j]}")
        b_shift = np.maximum(b_shift, 0.0)

        y, iterations = self._solve_shifted(c, A, b_shift, np.maximum(hi - lo, 0.0))
        x = np.clip(lo + y, lo, hi)

        if A.size:
            load = A @ (x - lo)
            over = load > b_shift
            if np.any(over):
                # rounding noise: shrink toward lo until every row fits exactly
                shrink = float(np.min(b_shift[over] / load[over]))
                if shrink < 1.0 - 1e-6:
                    raise SolverError(f"primal residual too large after {iterations} pivots")
                x = lo + (x - lo) * shrink

        objective = float(c @ x) if n else 0.0
        logger.debug(f"Simplex finished: n={n}, rows={b.shape[0]}, pivots={iterations}, obj={objective:.9g}")
        return FractionalSolution.from_array(x, objective, iterations)

    def _solve_shifted(
        self, c: np.ndarray, A: np.ndarray, b: np.ndarray, u: np.ndarray
    ) -> Tuple[np.ndarray, int]:
        """Solve max c·y, A y ≤ b, 0 ≤ y ≤ u with b ≥ 0, starting from the slack basis."""
        r, n = A.shape
        total = n + r
        if n == 0:
            return np.zeros(0), 0

        tableau = np.hstack([A.astype(float), np.eye(r)])
        cost = np.concatenate([c.astype(float), np.zeros(r)])
        upper = np.concatenate([u.astype(float), np.full(r, np.inf)])
        reduced = cost.copy()
        basis = np.arange(n, total)
        is_basic = np.zeros(total, dtype=bool)
        is_basic[basis] = True
        at_upper = np.zeros(total, dtype=bool)
        beta = b.astype(float).copy()

        tol_piv, tol_opt = self.pivot_tol, self.optimality_tol
        bland = False
        degenerate_run = 0
        degenerate_limit = self.bland_trigger_factor * (r + total)
        iterations = 0

        while True:
            movable = upper > tol_piv
            eligible = (~is_basic) & movable & (
                ((reduced > tol_opt) & ~at_upper) | ((reduced < -tol_opt) & at_upper)
            )
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                break

            if iterations >= self.max_iterations:
                raise IterationLimitError(f"simplex exceeded {self.max_iterations} pivots")
            iterations += 1

            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(reduced[candidates]))])
            direction = -1.0 if at_upper[j] else 1.0
            alpha = direction * tableau[:, j]

            ratios = np.full(r, np.inf)
            dec = alpha > tol_piv
            ratios[dec] = np.maximum(beta[dec], 0.0) / alpha[dec]
            inc = alpha < -tol_piv
            ub_basic = upper[basis]
            room = np.where(np.isfinite(ub_basic), ub_basic - beta, np.inf)
            inc_finite = inc & np.isfinite(room)
            ratios[inc_finite] = np.maximum(room[inc_finite], 0.0) / -alpha[inc_finite]

            theta_row = float(ratios.min()) if r else np.inf
            theta_flip = float(upper[j])
            if not np.isfinite(theta_row) and not np.isfinite(theta_flip):
                raise LpUnboundedError(f"variable {j} can increase without limit")

            if theta_flip <= theta_row:
                beta -= alpha * theta_flip
                at_upper[j] = not at_upper[j]
                degenerate_run = 0
                continue

            ties = np.flatnonzero(ratios <= theta_row + tol_piv)
            if bland:
                p = int(ties[np.argmin(basis[ties])])
            else:
                p = int(ties[np.argmax(np.abs(alpha[ties]))])
            theta = theta_row

            leaving = int(basis[p])
            entering_value = (upper[j] if at_upper[j] else 0.0) + direction * theta
            beta -= alpha * theta
            beta[p] = entering_value

            pivot = tableau[p, j]
            tableau[p] /= pivot
            column = tableau[:, j].copy()
            column[p] = 0.0
            tableau -= np.outer(column, tableau[p])
            reduced -= reduced[j] * tableau[p]
            reduced[j] = 0.0

            is_basic[leaving] = False
            at_upper[leaving] = alpha[p] < 0
            basis[p] = j
            is_basic[j] = True
            at_upper[j] = False

            if theta <= tol_piv:
                degenerate_run += 1
                if not bland and degenerate_run >= degenerate_limit:
                    bland = True
                    logger.warning(f"Switching to Bland's rule after {degenerate_run} degenerate pivots")
            else:
                degenerate_run = 0

        values = np.where(at_upper, upper, 0.0)
        values[basis] = self._recompute_basics(A, b, basis, values, beta)
        values = np.clip(values, 0.0, upper)
        return values[:n], iterations

    @staticmethod
    def _recompute_basics(
        A: np.ndarray, b: np.ndarray, basis: np.ndarray, values: np.ndarray, fallback: np.ndarray
    ) -> np.ndarray:
        """Basic values B^{-1}(b − N x_N) from the original columns."""
        r, n = A.shape
        if r == 0:
            return fallback
        full = np.hstack([A, np.eye(r)])
        nonbasic = np.ones(n + r, dtype=bool)
        nonbasic[basis] = False
        rhs = b - full[:, nonbasic] @ values[nonbasic]
        try:
            return np.linalg.solve(full[:, basis], rhs)
        except np.linalg.LinAlgError:
            return fallback
