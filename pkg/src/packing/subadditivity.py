"""
Generalized fractional subadditivity, checked by enumeration.

An alteration family assigns to every B ⊆ [n] a distribution q_B over
subsets A ⊆ B. With B drawn from the product distribution p given by x,
a family with retention at least β for every item (marginal property)
and with per-item retention that only shrinks as B grows (monotonicity)
keeps at least a β fraction of E[f(B)] for any monotone submodular f.

Sets are bitmasks (bit i ⇔ item i); a family is stored as a dense
(2^n, 2^n) matrix Q with Q[B, A] = q_B(A), and an oracle as its table
of 2^n values. Ground sets are tiny, so everything is exact.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from src.exceptions import InstanceError, PreconditionError
from src.logger import get_logger
from src.packing.generators import gen_random
from src.packing.rounding import AlterationRule, all_subsets, survivors
from src.packing.streams import make_rng
from src.packing.submodular import SubmodularOracle

logger = get_logger(__name__)

MAX_GROUND_SET = 6
_TOL = 1e-12


class AlterationFamily:
    """q_B(A) for all A ⊆ B ⊆ [n], as a (2^n, 2^n) row-stochastic matrix."""

    def __init__(self, n: int, q: np.ndarray):
        if n > MAX_GROUND_SET:
            raise PreconditionError(f"alteration families are enumerated; n={n} exceeds {MAX_GROUND_SET}")
        size = 1 << n
        q = np.asarray(q, dtype=float)
        if q.shape != (size, size):
            raise InstanceError(f"family matrix must be ({size}, {size}), got {q.shape}")
        if np.any(q < -_TOL):
            B, A = np.argwhere(q < -_TOL)[0]
            raise InstanceError(f"q_{_label(B)}({_label(A)}) is negative")
        codes = np.arange(size)
        outside = (codes[None, :] & ~codes[:, None]) != 0
        if np.any(np.abs(q[outside]) > _TOL):
            B, A = np.argwhere(outside & (np.abs(q) > _TOL))[0]
            raise InstanceError(f"q_{_label(B)} puts mass on {_label(A)}, which is not a subset")
        self.n = n
        self.q = np.where(outside, 0.0, np.maximum(q, 0.0))

    @classmethod
    def from_map(cls, n: int, shrink: Callable[[int], int]) -> "AlterationFamily":
        """Deterministic family: B ↦ shrink(B) with probability one."""
        size = 1 << n
        q = np.zeros((size, size))
        for B in range(size):
            q[B, shrink(B)] = 1.0
        return cls(n, q)

    @classmethod
    def identity(cls, n: int) -> "AlterationFamily":
        return cls(n, np.eye(1 << n))

    @classmethod
    def mixture(cls, families: Sequence["AlterationFamily"], weights: Sequence[float]) -> "AlterationFamily":
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        return cls(families[0].n, sum(wi * fam.q for wi, fam in zip(w, families)))

    def retention(self) -> np.ndarray:
        """(2^n, n) matrix: Σ_{A∋i} q_B(A) for every B and item i."""
        members = all_subsets(self.n).astype(float)
        return self.q @ members


def _label(code: int) -> str:
    items = [str(i) for i in range(int(code).bit_length()) if (int(code) >> i) & 1]
    return "{" + ",".join(items) + "}"


def product_distribution(x: Sequence[float]) -> np.ndarray:
    """p(B) = Π_{i∈B} x_i Π_{j∉B} (1 − x_j) for every bitmask B."""
    x = np.asarray(x, dtype=float)
    members = all_subsets(x.size)
    return np.prod(np.where(members, x, 1.0 - x), axis=1)


def oracle_table(f: SubmodularOracle) -> np.ndarray:
    """f evaluated on every bitmask."""
    if f.n > MAX_GROUND_SET:
        raise PreconditionError(f"oracle table is limited to n <= {MAX_GROUND_SET}, got n={f.n}")
    return f.values(all_subsets(f.n))


class FamilyCheck(BaseModel):
    """Validity of a family: normalization and monotonicity, with the first violation."""

    normalized: bool
    monotone: bool
    violation: str = ""

    @property
    def valid(self) -> bool:
        return self.normalized and self.monotone


def validate_family(fam: AlterationFamily, tol: float = 1e-9) -> FamilyCheck:
    """
    Check Σ_A q_B(A) = 1 for all B, and that retention of i ∈ B never grows when B grows.

    Monotonicity is checked on single additions B ⊆ B ∪ {j}, which chain
    to every pair B ⊆ B′.
    """
    sums = fam.q.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        B = int(bad[0])
        return FamilyCheck(
            normalized=False, monotone=False, violation=f"q_{_label(B)} sums to {sums[B]:.12g}, not 1"
        )

    retention = fam.retention()
    members = all_subsets(fam.n)
    codes = np.arange(1 << fam.n)
    for j in range(fam.n):
        base = codes[~members[:, j]]
        grown = base | (1 << j)
        drop = (retention[grown] > retention[base] + tol) & members[base]
        if np.any(drop):
            row, i = np.argwhere(drop)[0]
            B = int(base[row])
            return FamilyCheck(
                normalized=True,
                monotone=False,
                violation=f"item {i} is retained more often in {_label(B | (1 << j))} than in {_label(B)}",
            )
    return FamilyCheck(normalized=True, monotone=True)


def family_beta(fam: AlterationFamily, x: Sequence[float]) -> float:
    """
    Largest β with Σ_B p(B) Σ_{A∋i} q_B(A) ≥ β · Pr[i ∈ B] for every item.

    Items with x_i = 0 impose nothing; with no such constraint β = 1.
    """
    x = np.asarray(x, dtype=float)
    p = product_distribution(x)
    kept = p @ fam.retention()
    present = x > 0
    if not np.any(present):
        return 1.0
    return float(np.min(kept[present] / x[present]))


class SubadditivityCheck(BaseModel):
    """Both sides of E[f(A)] ≥ β·E[f(B)] for one (x, family, f) system."""

    valid: bool
    reason: str = ""
    beta: Optional[float] = None
    lhs: Optional[float] = None
    rhs: Optional[float] = None
    passed: bool = False


def _check_system(n: int, x: Sequence[float], fam: AlterationFamily) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,) or fam.n != n:
        raise InstanceError(f"x, family and oracle must share one ground set, got {x.shape}, {fam.n}, {n}")
    if np.any(x < 0) or np.any(x > 1):
        raise PreconditionError("x must lie in [0, 1]^n")
    return x


def check_subadditivity_table(table: np.ndarray, x: Sequence[float], fam: AlterationFamily) -> SubadditivityCheck:
    """check_subadditivity_theorem on an explicit table of f values."""
    x = _check_system(fam.n, x, fam)
    check = validate_family(fam)
    if not check.valid:
        return SubadditivityCheck(valid=False, reason=check.violation)
    p = product_distribution(x)
    beta = family_beta(fam, x)
    lhs = float(p @ (fam.q @ table))
    rhs = float(p @ table)
    return SubadditivityCheck(valid=True, beta=beta, lhs=lhs, rhs=rhs, passed=lhs >= beta * rhs - _TOL)


def check_subadditivity_theorem(f: SubmodularOracle, x: Sequence[float], fam: AlterationFamily) -> SubadditivityCheck:
    """
    Enumerate Σ_B p(B) Σ_A q_B(A) f(A) and β · Σ_B p(B) f(B).

    β is derived from the family and x, not supplied. A family that is
    not normalized or not monotone is reported invalid and not checked.
    """
    return check_subadditivity_table(oracle_table(f), x, fam)


def project_family(fam: AlterationFamily, x: Sequence[float]) -> AlterationFamily:
    """
    Family on the ground set without the last element.

    q′_C(A) = x_n·q_{C∪{n}}(A) + x_n·q_{C∪{n}}(A∪{n}) + (1 − x_n)·q_C(A).
    """
    if fam.n < 1:
        raise PreconditionError("cannot project a family on an empty ground set")
    x = np.asarray(x, dtype=float)
    half = 1 << (fam.n - 1)
    xn = float(x[fam.n - 1])
    with_last = fam.q[half:, :]
    q = xn * (with_last[:, :half] + with_last[:, half:]) + (1.0 - xn) * fam.q[:half, :half]
    return AlterationFamily(fam.n - 1, q)


class InductionLevel(BaseModel):
    """Inequalities checked when the ground set has `n` elements."""

    n: int
    beta: float
    last_element_lhs: float
    last_element_rhs: float
    projected_lhs: float
    projected_rhs: float
    projection_valid: bool
    projection_beta: Optional[float]
    passed: bool


class InductionCheck(BaseModel):
    passed: bool
    levels: Tuple[InductionLevel, ...]
    reason: str = ""


def check_induction_step(f: SubmodularOracle, x: Sequence[float], fam: AlterationFamily) -> InductionCheck:
    """
    Verify the inductive argument level by level down to one element.

    At each level: the last-element inequality
    Σ_B p(B) Σ_{A∋n} q_B(A)·(f(B) − f(B∖n)) ≥ β·Σ_B p(B)·(f(B) − f(B∖n)),
    the inequality for f(A∖n) against β·f(B∖n), and that the projected
    family stays normalized and monotone with marginal retention ≥ β.
    """
    table = oracle_table(f)
    x = _check_system(fam.n, x, fam)
    check = validate_family(fam)
    if not check.valid:
        return InductionCheck(passed=False, levels=(), reason=check.violation)

    beta = family_beta(fam, x)
    levels: List[InductionLevel] = []
    while fam.n >= 1:
        n = fam.n
        half = 1 << (n - 1)
        p = product_distribution(x[:n])
        codes = np.arange(1 << n)
        drop_last = codes & (half - 1)
        gain = table[codes] - table[drop_last]
        kept_last = fam.q[:, half:].sum(axis=1)

        last_lhs = float(np.sum(p * kept_last * gain))
        last_rhs = float(beta * np.sum(p * gain))
        proj_lhs = float(p @ (fam.q @ table[drop_last]))
        proj_rhs = float(beta * (p @ table[drop_last]))

        projected = project_family(fam, x) if n > 1 else None
        proj_check = validate_family(projected) if projected is not None else None
        proj_beta = family_beta(projected, x[: n - 1]) if projected is not None else None
        ok = last_lhs >= last_rhs - _TOL and proj_lhs >= proj_rhs - _TOL
        if projected is not None:
            ok = ok and proj_check.valid and proj_beta >= beta - 1e-9
        levels.append(
            InductionLevel(
                n=n,
                beta=beta,
                last_element_lhs=last_lhs,
                last_element_rhs=last_rhs,
                projected_lhs=proj_lhs,
                projected_rhs=proj_rhs,
                projection_valid=True if proj_check is None else proj_check.valid,
                projection_beta=proj_beta,
                passed=ok,
            )
        )
        if projected is None:
            break
        fam = projected
        table = table[:half]

    passed = all(level.passed for level in levels)
    if not passed:
        logger.warning(f"Induction check failed at n={next(level.n for level in levels if not level.passed)}")
    return InductionCheck(passed=passed, levels=tuple(levels))


class FractionalCoverCheck(BaseModel):
    """f(U) against Σ_t λ_t f(A_t)."""

    union_value: float
    cover_value: float
    passed: bool


def check_fractional_subadditivity(
    f: SubmodularOracle, cover: Sequence[Tuple[Sequence[int], float]]
) -> FractionalCoverCheck:
    """
    Check f([n]) ≤ Σ_t λ_t f(A_t) for a fractional cover of the ground set.

    Raises:
        PreconditionError: If some element is covered with total weight below 1
    """
    coverage = np.zeros(f.n)
    total = 0.0
    for items, lam in cover:
        if lam < 0:
            raise PreconditionError(f"cover weights must be nonnegative, got {lam}")
        coverage[list(items)] += lam
        total += lam * f.value(items)
    short = np.flatnonzero(coverage < 1.0 - 1e-12)
    if short.size:
        raise PreconditionError(f"element {int(short[0])} is covered with weight {coverage[short[0]]:.6g} < 1")
    union = f.value(range(f.n))
    return FractionalCoverCheck(union_value=union, cover_value=total, passed=union <= total + _TOL)


def fractional_cover_family(n: int, cover: Sequence[Tuple[Sequence[int], float]]) -> AlterationFamily:
    """
    Family whose distribution on [n] picks A_t with probability λ_t/Σλ; every other B is kept whole.

    With x = 1 the subadditivity check on this family reduces to the
    fractional cover inequality.
    """
    q = np.eye(1 << n)
    full = (1 << n) - 1
    q[full, full] = 0.0
    total = sum(lam for _, lam in cover)
    if total <= 0:
        raise PreconditionError("cover weights must have a positive sum")
    for items, lam in cover:
        code = sum(1 << i for i in set(items))
        q[full, code] += lam / total
    return AlterationFamily(n, q)


def counterexample_family(n: int) -> AlterationFamily:
    """
    Keep [n] whole and drop every other set entirely.

    Each item keeps retention 1/2 under the matching non-product
    distribution (S = [n] w.p. 1/2n, S = {i} w.p. 1/2n each), yet the
    family is not monotone, so the subadditivity check rejects it.
    """
    full = (1 << n) - 1
    return AlterationFamily.from_map(n, lambda B: B if B == full else 0)


def counterexample_profit(n: int) -> Tuple[float, float, float]:
    """
    E[f(S)], E[f(S′)] and per-item retention for f(T) = [T ≠ ∅] under the counterexample distribution.
    """
    if n < 2:
        raise PreconditionError(f"counterexample needs n >= 2, got {n}")
    p_full = p_single = 1.0 / (2 * n)
    mean_s = p_full + n * p_single
    mean_final = p_full
    retention = p_full / (p_full + p_single)
    return mean_s, mean_final, retention


def random_monotone_family(n: int, seed: int, kind: str = "mixture", attempts: int = 50) -> AlterationFamily:
    """
    Random family satisfying normalization and monotonicity.

    kinds: "threshold" keeps i ∈ B when a random threshold θ_i ≥ |B|;
    "sorted" applies the sorted alteration of a random one-row-per-item
    instance; "mixture" is a random convex combination of both. Draws
    that fail validation are discarded.

    Raises:
        PreconditionError: If no valid family is found within `attempts` draws
    """
    rng = make_rng(seed)
    for attempt in range(attempts):
        if kind == "threshold":
            fam = _threshold_family(n, rng)
        elif kind == "sorted":
            fam = _sorted_family(n, rng)
        elif kind == "mixture":
            parts = [_threshold_family(n, rng), _sorted_family(n, rng), _threshold_family(n, rng)]
            fam = AlterationFamily.mixture(parts, 1.0 - rng.random(len(parts)))
        else:
            raise PreconditionError(f"unknown family kind '{kind}'")
        if validate_family(fam).valid:
            return fam
        logger.debug(f"Discarded non-monotone {kind} family (attempt {attempt + 1})")
    raise PreconditionError(f"no monotone {kind} family found in {attempts} attempts")


def _threshold_family(n: int, rng: np.random.Generator) -> AlterationFamily:
    theta = rng.integers(0, n + 1, size=n)

    def shrink(B: int) -> int:
        size = bin(B).count("1")
        return sum(1 << i for i in range(n) if (B >> i) & 1 and theta[i] >= size)

    return AlterationFamily.from_map(n, shrink)


def _sorted_family(n: int, rng: np.random.Generator) -> AlterationFamily:
    m = int(rng.integers(1, n + 1))
    inst = gen_random(n, m, min(2, m), size_profile="mixed", seed=int(rng.integers(2**31)))
    alive = survivors(inst, all_subsets(n), AlterationRule.SORTED)
    codes = alive.astype(np.int64) @ (1 << np.arange(n, dtype=np.int64))
    return AlterationFamily.from_map(n, lambda B: int(codes[B]))
