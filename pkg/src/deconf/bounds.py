"""Sample-complexity formulas: upper bounds, worst cases, lower bounds,
and the finite-data feasibility condition with its (m, n) and budget solvers.

All bound evaluators return floats (``math.inf`` when a zero denominator
makes the bound vacuous) so that inequality properties can be checked
exactly; callers ceil when they need counts.

Notation: with accuracy targets (epsilon, delta) and confounder size k,

    C  = 12.5 * k^2 * ln(8k / delta) / epsilon^2

drives every upper bound. The lower bounds are stated up to a
proportionality constant; we expose it as a caller-supplied multiplier in

    C1 = c1 * (k*beta - 1)^2 * ln(1/delta) / epsilon^2

so no invented constant is baked in. The finite-data condition compares

    min over cells (y,t,z) of  (sum_y a[y,t] q[y,t,z])^2
                               -----------------------------------
                               1 / (x[y,t] m)  +  q[y,t,z]^2 / n

against the threshold 50 * k^2 * ln(8k / delta) / epsilon^2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from .errors import ValidationError
from .model import (
    GROUPS,
    ConditionalTable,
    ConfoundedDistribution,
    HardInstancePair,
    JointDistribution,
    ate_exact,
    binary_conditional,
    group_index,
    joint_from_parts,
)
from .policies import Policy, PolicyWeights, as_policy, policy_weights


@dataclass(frozen=True)
class AccuracySpec:
    """Accuracy targets feeding every bound formula."""

    epsilon: float
    delta: float
    k: int
    beta: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.k < 2:
            raise ValidationError(f"k must be >= 2, got {self.k}")
        if not 0.0 < self.beta < 0.5:
            raise ValidationError(f"beta must lie in (0, 0.5), got {self.beta}")

    @property
    def C(self) -> float:
        return 12.5 * self.k**2 * math.log(8 * self.k / self.delta) / self.epsilon**2

    def C1(self, c1_constant: float = 1.0) -> float:
        if c1_constant <= 0.0:
            raise ValidationError(f"c1 constant must be > 0, got {c1_constant}")
        if self.k * self.beta >= 1.0:
            warnings.warn(
                f"lower-bound constructions assume k*beta < 1; got "
                f"k*beta = {self.k * self.beta:.4g}",
                stacklevel=3,
            )
        return (
            c1_constant
            * (self.k * self.beta - 1.0) ** 2
            * math.log(1.0 / self.delta)
            / self.epsilon**2
        )


class CellMax(NamedTuple):
    value: float
    witness: Optional[Tuple[int, int]]  # (t, z) achieving the max, None if vacuous


def _max_over_cells(numerators: np.ndarray, denominators: np.ndarray) -> CellMax:
    """max over (t, z) of num/denom^2 with 0/0 -> skip and x/0 -> inf."""
    best = CellMax(0.0, None)
    inf_witness = None
    for t in range(2):
        for z in range(numerators.shape[1]):
            num = numerators[t, z]
            den = denominators[t, z]
            if den <= 0.0:
                if num > 0.0:
                    inf_witness = (t, z)
                continue
            val = num / den**2
            if val > best.value:
                best = CellMax(val, (t, z))
    if inf_witness is not None:
        return CellMax(math.inf, inf_witness)
    return best


def _tz_denominators(a: ConfoundedDistribution, q: ConditionalTable) -> np.ndarray:
    """P(T=t, Z=z) = sum_y a[y,t] q[y,t,z], arranged (2, k)."""
    tbl = a.a[:, None] * q.q
    return np.vstack([tbl[0] + tbl[2], tbl[1] + tbl[3]])


def m_base(p: JointDistribution, spec: AccuracySpec) -> float:
    """Deconfounded-data-alone bound: C * max over (t,z) of P(T,Z)^-2."""
    return m_base_detail(p, spec).value


def m_base_detail(p: JointDistribution, spec: AccuracySpec) -> CellMax:
    tbl = p.p
    denom = np.vstack([tbl[0] + tbl[2], tbl[1] + tbl[3]])
    mx = _max_over_cells(np.ones_like(denom), denom)
    return CellMax(spec.C * mx.value, mx.witness)


def _policy_numerators(
    a: ConfoundedDistribution, k: int, policy: Policy
) -> np.ndarray:
    """The per-arm numerator of the general bound, constant across z.

    General form: sum_y a[y,t]^2 / x[y,t]. The three named policies reduce
    to closed forms (sum_y a, 4 sum_y a^2, 2 (sum_y a)^2), used directly so
    the algebraic dominance relations hold exactly in floating point.
    """
    arm = np.array([a.arm_mass(0), a.arm_mass(1)])
    sq = np.array(
        [
            a.a[group_index(0, 0)] ** 2 + a.a[group_index(1, 0)] ** 2,
            a.a[group_index(0, 1)] ** 2 + a.a[group_index(1, 1)] ** 2,
        ]
    )
    if policy.kind == "nsp":
        per_arm = arm
    elif policy.kind == "usp":
        per_arm = 4.0 * sq
    elif policy.kind == "owsp":
        per_arm = 2.0 * arm**2
    else:
        x = policy.weights.x
        per_arm = np.zeros(2)
        for g, (y, t) in enumerate(GROUPS):
            if a.a[g] == 0.0:
                continue
            if x[g] == 0.0:
                per_arm[t] = math.inf
            else:
                per_arm[t] += a.a[g] ** 2 / x[g]
    return np.repeat(per_arm[:, None], k, axis=1)


def m_policy(
    a: ConfoundedDistribution,
    q: ConditionalTable,
    spec: AccuracySpec,
    policy: Union[Policy, str],
) -> float:
    """Policy-specific upper bound with infinite confounded data."""
    return m_policy_detail(a, q, spec, policy).value


def m_policy_detail(
    a: ConfoundedDistribution,
    q: ConditionalTable,
    spec: AccuracySpec,
    policy: Union[Policy, str],
) -> CellMax:
    policy = as_policy(policy)
    numerators = _policy_numerators(a, q.k, policy)
    mx = _max_over_cells(numerators, _tz_denominators(a, q))
    return CellMax(spec.C * mx.value, mx.witness)


def worst_case_M(
    a: ConfoundedDistribution, spec: AccuracySpec, policy: Union[Policy, str]
) -> float:
    """Worst case of the upper bound over all conditionals in [beta, 1-beta].

    The outcome-weighted policy is the one whose worst case, 2C/beta^2,
    does not depend on the marginal at all.
    """
    policy = as_policy(policy)
    C_over_b2 = spec.C / spec.beta**2
    if policy.kind == "owsp":
        return 2.0 * C_over_b2
    arm = np.array([a.arm_mass(0), a.arm_mass(1)])
    if policy.kind == "nsp":
        if np.any(arm <= 0.0):
            return math.inf
        return float(C_over_b2 * np.max(1.0 / arm))
    if policy.kind == "usp":
        if np.any(arm <= 0.0):
            return math.inf
        sq = np.array(
            [
                a.a[group_index(0, 0)] ** 2 + a.a[group_index(1, 0)] ** 2,
                a.a[group_index(0, 1)] ** 2 + a.a[group_index(1, 1)] ** 2,
            ]
        )
        return float(4.0 * C_over_b2 * np.max(sq / arm**2))
    raise ValidationError("worst-case bound is defined for nsp, usp, and owsp only")


def lower_bound_w(
    a: ConfoundedDistribution,
    spec: AccuracySpec,
    policy: Union[Policy, str],
    c1_constant: float = 1.0,
) -> float:
    """Instance-specific lower-bound witness value for a named policy.

    Stated up to the proportionality constant ``c1_constant`` (default 1).
    """
    policy = as_policy(policy)
    C1_over_b2 = spec.C1(c1_constant) / spec.beta**2
    best = 0.0
    for t in (0, 1):
        arm = a.arm_mass(t)
        other = a.arm_mass(1 - t)
        if arm <= 0.0:
            return math.inf
        a_max = max(a.a[group_index(0, t)], a.a[group_index(1, t)])
        if policy.kind == "nsp":
            term = a_max * other**2 / arm**2
        elif policy.kind == "usp":
            term = 4.0 * a_max**2 * other**2 / arm**2
        elif policy.kind == "owsp":
            term = 2.0 * a_max * other**2 / arm
        else:
            raise ValidationError("lower bounds are defined for nsp, usp, and owsp only")
        best = max(best, term)
    return C1_over_b2 * best


class RatioWitness(NamedTuple):
    pair: HardInstancePair
    ratio: float  # analytic mu_owsp / mu_nsp = 4 * eta


def owsp_vs_nsp_ratio_witness(eta: float, spec: AccuracySpec) -> RatioWitness:
    """Family on which outcome-weighting beats natural sampling by 4*eta.

    Marginal a = (1-3*eta, eta, eta, eta) with conditionals
    (beta, beta, beta, c*beta) against the flat (beta, beta, beta, beta),
    where c = (1-beta)/beta maximizes the ATE separation.
    """
    if not 0.0 < eta < 0.25:
        raise ValidationError(f"eta must lie in (0, 1/4), got {eta}")
    beta = spec.beta
    c = (1.0 - beta) / beta
    a = ConfoundedDistribution(np.array([1.0 - 3 * eta, eta, eta, eta]))
    base = binary_conditional((beta, beta, beta, c * beta))
    alt = binary_conditional((beta, beta, beta, beta))
    gap = abs(ate_exact(joint_from_parts(a, base)) - ate_exact(joint_from_parts(a, alt)))
    pair = HardInstancePair(a, base, alt, gap, {"eta": eta, "beta": beta, "c": c})
    return RatioWitness(pair, 4.0 * eta)


class FeasibilityResult(NamedTuple):
    feasible: bool
    margin: float  # achieved min / threshold; >= 1 means feasible
    witness: Optional[Tuple[int, int, int]]  # minimizing (y, t, z)


def finite_threshold(spec: AccuracySpec) -> float:
    return 50.0 * spec.k**2 * math.log(8 * spec.k / spec.delta) / spec.epsilon**2


def finite_feasible(
    a_hat: ConfoundedDistribution,
    q: ConditionalTable,
    weights: PolicyWeights,
    m: int,
    n: int,
    spec: AccuracySpec,
) -> FeasibilityResult:
    """Check the finite-confounded-data sufficient condition at (m, n).

    Cells of zero-mass groups are vacuous and skipped; a zero weight on a
    positive-mass group makes the condition fail outright (margin 0).
    """
    if m < 1 or n < 1:
        raise ValidationError(f"m and n must be >= 1, got m={m}, n={n}")
    denom_tz = _tz_denominators(a_hat, q)
    threshold = finite_threshold(spec)
    worst = math.inf
    witness = None
    for g, (y, t) in enumerate(GROUPS):
        if a_hat.a[g] == 0.0:
            continue
        for z in range(q.k):
            if weights.x[g] == 0.0:
                return FeasibilityResult(False, 0.0, (y, t, z))
            sampling_var = 1.0 / (weights.x[g] * m) + q.q[g, z] ** 2 / n
            val = denom_tz[t, z] ** 2 / sampling_var
            if val < worst:
                worst = val
                witness = (y, t, z)
    if witness is None:
        raise ValidationError("all groups have zero mass")
    return FeasibilityResult(worst >= threshold, worst / threshold, witness)


def solve_min_m(
    a_hat: ConfoundedDistribution,
    q: ConditionalTable,
    weights: PolicyWeights,
    n: int,
    spec: AccuracySpec,
) -> Optional[int]:
    """Smallest m <= n satisfying the finite condition, or None if infeasible.

    The condition is monotone in m, so a plain bisection applies once the
    deconfound-everything point m = n is known to work.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not finite_feasible(a_hat, q, weights, n, n, spec).feasible:
        return None
    lo, hi = 1, n  # hi always feasible
    if finite_feasible(a_hat, q, weights, lo, n, spec).feasible:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if finite_feasible(a_hat, q, weights, mid, n, spec).feasible:
            hi = mid
        else:
            lo = mid
    return hi


class BudgetPlan(NamedTuple):
    n: int
    m: int
    weights: PolicyWeights
    policy: str
    margin: float  # best achieved min-term / threshold (may be < 1)


def allocate_budget(
    a_hat: ConfoundedDistribution,
    q: ConditionalTable,
    budget: float,
    c_confounded: float,
    c_deconfound: float,
    spec: AccuracySpec,
    grid: int = 200,
) -> BudgetPlan:
    """Split a budget between confounded draws and deconfounding reveals.

    Walks an integer grid of m along the budget line n = (B - c_z m) / c_c
    with m <= n, scoring each point by the finite-condition margin under
    each named policy (group weights capped at the expected supply
    a_hat * n / m, mirroring the feasibility adjustment of the finite
    analysis), and returns the best (n, m, weights). This numeric solver
    deliberately replaces the closed-form case analysis, which is not
    complete enough to implement.
    """
    if budget <= 0.0 or c_confounded <= 0.0 or c_deconfound <= 0.0:
        raise ValidationError("budget and costs must be positive")
    if grid < 10:
        raise ValidationError(f"grid must be >= 10, got {grid}")
    m_max = int(budget / (c_confounded + c_deconfound))
    if m_max < 1:
        raise ValidationError(
            "budget too small for one deconfounded sample plus its confounded draw"
        )

    m_values = sorted(set(np.linspace(1, m_max, num=min(grid, m_max), dtype=int).tolist()))
    best: Optional[BudgetPlan] = None
    for m in m_values:
        n = int((budget - c_deconfound * m) / c_confounded)
        if n < m:
            continue
        for kind in ("nsp", "usp", "owsp"):
            base = policy_weights(kind, a_hat).x
            capped = np.minimum(base, a_hat.a * n / m)
            total = capped.sum()
            if total <= 0.0:
                continue
            w = PolicyWeights(capped / total)
            res = finite_feasible(a_hat, q, w, m, n, spec)
            if best is None or res.margin > best.margin:
                best = BudgetPlan(n, m, w, kind, res.margin)
    if best is None:
        raise ValidationError("no feasible (m, n) point on the budget line")
    return best


@dataclass(frozen=True)
class BoundReport:
    """Every bound for one instance, with argmax witnesses where defined."""

    spec: AccuracySpec
    m_base: float
    m_base_witness: Optional[Tuple[int, int]]
    m_nsp: float
    m_nsp_witness: Optional[Tuple[int, int]]
    m_usp: float
    m_usp_witness: Optional[Tuple[int, int]]
    m_owsp: float
    m_owsp_witness: Optional[Tuple[int, int]]
    M_nsp: float
    M_usp: float
    M_owsp: float
    w_nsp: float
    w_usp: float
    w_owsp: float
    c1_constant: float


def bound_report(
    a: ConfoundedDistribution,
    q: ConditionalTable,
    spec: AccuracySpec,
    c1_constant: float = 1.0,
) -> BoundReport:
    base = m_base_detail(joint_from_parts(a, q), spec)
    nsp = m_policy_detail(a, q, spec, "nsp")
    usp = m_policy_detail(a, q, spec, "usp")
    owsp = m_policy_detail(a, q, spec, "owsp")
    return BoundReport(
        spec=spec,
        m_base=base.value,
        m_base_witness=base.witness,
        m_nsp=nsp.value,
        m_nsp_witness=nsp.witness,
        m_usp=usp.value,
        m_usp_witness=usp.witness,
        m_owsp=owsp.value,
        m_owsp_witness=owsp.witness,
        M_nsp=worst_case_M(a, spec, "nsp"),
        M_usp=worst_case_M(a, spec, "usp"),
        M_owsp=worst_case_M(a, spec, "owsp"),
        w_nsp=lower_bound_w(a, spec, "nsp", c1_constant),
        w_usp=lower_bound_w(a, spec, "usp", c1_constant),
        w_owsp=lower_bound_w(a, spec, "owsp", c1_constant),
        c1_constant=c1_constant,
    )
