"""
Closed-form guarantees of the rounding algorithms.

Retention bounds lower-bound Pr[i ∈ S′ | i ∈ S]; event bounds
upper-bound the probability that one constraint marks a sampled item.
Finite-k expressions are used everywhere; the asymptotic headline
ratios are exposed separately for reporting only.
"""

import math
from enum import Enum

from src.exceptions import PreconditionError


class SizeClass(str, Enum):
    BIG = "big"
    MEDIUM = "medium"
    TINY = "tiny"


def _check(alpha: float, k: int) -> None:
    if alpha <= 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")
    if k < 1:
        raise PreconditionError(f"column sparsity must be at least 1, got {k}")


def simple_retention_bound(alpha: float) -> float:
    """1 − 2/α, clamped at zero."""
    if alpha <= 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")
    return max(0.0, 1.0 - 2.0 / alpha)


def event_bound_simple(alpha: float, k: int) -> float:
    """Pr[some big/small cause fires in one constraint | i ∈ S] ≤ 2/(αk)."""
    _check(alpha, k)
    return 2.0 / (alpha * k)


def event_bound_sorted(alpha: float, k: int) -> float:
    """Pr[E_ij | i ∈ S] ≤ (1/(αk))·(1 + (2/(αk))^{1/3}) under the strengthened relaxation."""
    _check(alpha, k)
    ak = alpha * k
    return (1.0 + (2.0 / ak) ** (1.0 / 3.0)) / ak


def strong_retention_bound(alpha: float, k: int) -> float:
    """(1 − event_bound_sorted)^k, clamped at zero."""
    return max(0.0, 1.0 - event_bound_sorted(alpha, k)) ** k


def large_b_alpha(B: float, k: int) -> float:
    """Sampling divisor for the large-slack algorithm: 4e·(⌊B⌋k)^{1/⌊B⌋}."""
    t = _floor_slack(B)
    k = max(k, 1)
    return 4.0 * math.e * (t * k) ** (1.0 / t)


def event_bound_large_b(B: float, k: int) -> float:
    """Pr[E_ij | i ∈ S] ≤ 1/(k⌊B⌋) for the powers-of-two alteration."""
    return 1.0 / (max(k, 1) * _floor_slack(B))


def large_b_retention_bound(B: float, k: int) -> float:
    """(1 − 1/(k⌊B⌋))^k."""
    k = max(k, 1)
    return (1.0 - event_bound_large_b(B, k)) ** k


def retention_bound(rule: str, alpha: float, k: int, B: float = 1.0) -> float:
    """Dispatch to the retention bound of an alteration rule name."""
    if rule == "simple":
        return simple_retention_bound(alpha)
    if rule == "sorted":
        return strong_retention_bound(alpha, max(k, 1))
    if rule == "powers_of_two":
        return large_b_retention_bound(B, k)
    if rule == "identity":
        return 1.0
    return 0.0


def event_bound(rule: str, alpha: float, k: int, B: float = 1.0) -> float:
    """Per-constraint event bound of an alteration rule name (1 when none is known)."""
    if rule == "simple":
        return event_bound_simple(alpha, max(k, 1))
    if rule == "sorted":
        return event_bound_sorted(alpha, max(k, 1))
    if rule == "powers_of_two":
        return event_bound_large_b(B, k)
    if rule == "identity":
        return 0.0
    return 1.0


def size_class(size: float, alpha: float, k: int) -> SizeClass:
    """
    Classify a unit-capacity size relative to ℓ = (4αk)^{1/3}.

    big: s > 1/2; medium: 1/ℓ ≤ s ≤ 1/2; tiny: s < 1/ℓ.
    """
    _check(alpha, k)
    if size > 0.5:
        return SizeClass.BIG
    ell = (4.0 * alpha * k) ** (1.0 / 3.0)
    return SizeClass.MEDIUM if size >= 1.0 / ell else SizeClass.TINY


def simple_ratio(k: int) -> float:
    """Approximation ratio of the simple algorithm with α = 4: 8k."""
    return 8.0 * k


def strong_ratio(k: int, alpha: float = 1.0) -> float:
    """Finite-k ratio αk / retention of the strengthened-LP algorithm (≈ ek for large k)."""
    bound = strong_retention_bound(alpha, k)
    return math.inf if bound <= 0 else alpha * k / bound


def submodular_ratio(k: int, alpha: float = 1.0) -> float:
    """Finite-k ratio of the submodular pipeline: strong_ratio · e/(e−1)."""
    return strong_ratio(k, alpha) * math.e / (math.e - 1.0)


def large_b_ratio(B: float, k: int) -> float:
    """Finite-k ratio α_B / retention of the large-slack algorithm."""
    bound = large_b_retention_bound(B, k)
    return math.inf if bound <= 0 else large_b_alpha(B, k) / bound


def _floor_slack(B: float) -> int:
    if not math.isfinite(B) or B < 1.0:
        raise PreconditionError(f"the large-slack algorithm needs B >= 1, got B={B}")
    return int(math.floor(B + 1e-12))
