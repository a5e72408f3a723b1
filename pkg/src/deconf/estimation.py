"""Plug-in (maximum-likelihood) ATE estimators for the three data regimes.

Everything here is frequency counting: no smoothing, no priors. The three
regimes differ only in which pieces of the factorization p = a * q come
from data:

* deconfounded only:    p_hat[g, z] = m[g, z] / m
* known marginal:       a known exactly, q_hat[g, z] = m[g, z] / m[g]
* finite:               a_hat[g] = n[g] / n and q_hat as above

A group with no deconfounded samples has no q_hat row; the ``fallback``
flag decides between raising (strict runs) and substituting the uniform
row (long Monte Carlo sweeps), and either way the group is reported in
``degenerate_groups``. Zero-mass strata flagged by the ATE evaluation
surface in ``degenerate_strata``.

Record arrays use columns (y, t) for confounded data and (y, t, z) for
deconfounded data; the ``*_counts`` variants accept pre-aggregated count
tables and are what the simulation engine calls in its inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, NamedTuple

import numpy as np

from .errors import DegenerateGroupError, ValidationError
from .model import (
    GROUPS,
    ConditionalTable,
    ConfoundedDistribution,
    JointDistribution,
    ate_details,
    joint_from_parts,
    parts_from_joint,
)

FALLBACKS = ("error", "uniform")


def _check_fallback(fallback: str) -> None:
    if fallback not in FALLBACKS:
        raise ValidationError(f"fallback must be one of {FALLBACKS}, got {fallback!r}")


def _records_array(records, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(records, dtype=int)
    if arr.size == 0:
        return arr.reshape(0, cols)
    if arr.ndim != 2 or arr.shape[1] != cols:
        raise ValidationError(f"{name}: expected rows of {cols} integers")
    return arr


def confounded_counts(records) -> np.ndarray:
    """Group counts n[g] from (y, t) records."""
    arr = _records_array(records, 2, "confounded records")
    _validate_bits(arr[:, 0], "y")
    _validate_bits(arr[:, 1], "t")
    g = 2 * arr[:, 0] + arr[:, 1]
    return np.bincount(g, minlength=4)


def deconfounded_counts(records, k: int) -> np.ndarray:
    """Cell counts m[g, z] from (y, t, z) records."""
    arr = _records_array(records, 3, "deconfounded records")
    _validate_bits(arr[:, 0], "y")
    _validate_bits(arr[:, 1], "t")
    if arr.size and (arr[:, 2].min() < 0 or arr[:, 2].max() >= k):
        raise ValidationError(f"z values must lie in [0, {k})")
    flat = (2 * arr[:, 0] + arr[:, 1]) * k + arr[:, 2]
    return np.bincount(flat, minlength=4 * k).reshape(4, k)


def _validate_bits(col, name):
    if col.size and not np.isin(col, (0, 1)).all():
        raise ValidationError(f"{name} values must be 0 or 1")


@dataclass(frozen=True)
class Dataset:
    """Confounded (y, t) records plus deconfounded (y, t, z) records.

    Rows that were deconfounded are still confounded observations, so the
    deconfounded records should also appear in (or be counted with) the
    confounded side when the dataset represents one sampling process.
    """

    confounded: np.ndarray
    deconfounded: np.ndarray
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(f"k must be >= 2, got {self.k}")
        conf = _records_array(self.confounded, 2, "confounded records")
        dec = _records_array(self.deconfounded, 3, "deconfounded records")
        conf.setflags(write=False)
        dec.setflags(write=False)
        object.__setattr__(self, "confounded", conf)
        object.__setattr__(self, "deconfounded", dec)
        # validate value ranges eagerly so counts never fail later
        confounded_counts(conf)
        deconfounded_counts(dec, self.k)

    @property
    def n(self) -> int:
        return self.confounded.shape[0]

    @property
    def m(self) -> int:
        return self.deconfounded.shape[0]

    def n_counts(self) -> np.ndarray:
        return confounded_counts(self.confounded)

    def m_counts(self) -> np.ndarray:
        return deconfounded_counts(self.deconfounded, self.k)


@dataclass(frozen=True)
class EstimationResult:
    ate_hat: float
    a_hat: ConfoundedDistribution
    q_hat: ConditionalTable
    degenerate_groups: frozenset
    degenerate_strata: frozenset

    @property
    def joint_hat(self) -> JointDistribution:
        return joint_from_parts(self.a_hat, self.q_hat)


def _q_hat_from_counts(m_counts: np.ndarray, a_vec: np.ndarray, fallback: str):
    """Per-group MLE rows with uniform fallback for empty groups."""
    k = m_counts.shape[1]
    totals = m_counts.sum(axis=1)
    empty = totals == 0
    if fallback == "error" and np.any(empty & (a_vec > 0.0)):
        bad = [GROUPS[g] for g in np.nonzero(empty & (a_vec > 0.0))[0]]
        raise DegenerateGroupError(bad)
    q = np.empty((4, k))
    for g in range(4):
        q[g] = 1.0 / k if empty[g] else m_counts[g] / totals[g]
    degenerate = frozenset(GROUPS[g] for g in np.nonzero(empty)[0])
    return ConditionalTable(q), degenerate


def estimate_deconfounded_only_counts(m_counts: np.ndarray) -> EstimationResult:
    """MLE joint table from deconfounded cell counts alone."""
    m_counts = np.asarray(m_counts, dtype=float)
    total = m_counts.sum()
    if total <= 0:
        raise ValidationError("need at least one deconfounded record")
    joint = JointDistribution(m_counts / total)
    ate = ate_details(joint)
    parts = parts_from_joint(joint)
    return EstimationResult(
        ate.value, parts.a, parts.q, parts.degenerate_groups, ate.degenerate_strata
    )


def estimate_deconfounded_only(deconfounded, k: int) -> EstimationResult:
    """Baseline estimator that ignores confounded data entirely."""
    return estimate_deconfounded_only_counts(deconfounded_counts(deconfounded, k))


def estimate_with_known_confounded_counts(
    a: ConfoundedDistribution, m_counts: np.ndarray, fallback: str = "uniform"
) -> EstimationResult:
    """Plug-in estimator with the marginal known exactly (infinite regime)."""
    _check_fallback(fallback)
    m_counts = np.asarray(m_counts, dtype=float)
    q_hat, degenerate = _q_hat_from_counts(m_counts, a.a, fallback)
    ate = ate_details(joint_from_parts(a, q_hat))
    return EstimationResult(ate.value, a, q_hat, degenerate, ate.degenerate_strata)


def estimate_with_known_confounded(
    a: ConfoundedDistribution, deconfounded, k: int, fallback: str = "uniform"
) -> EstimationResult:
    return estimate_with_known_confounded_counts(
        a, deconfounded_counts(deconfounded, k), fallback
    )


def estimate_finite_counts(
    n_counts: np.ndarray, m_counts: np.ndarray, fallback: str = "uniform"
) -> EstimationResult:
    """Plug-in estimator with both a and q estimated from counts."""
    _check_fallback(fallback)
    n_counts = np.asarray(n_counts, dtype=float)
    if n_counts.sum() <= 0:
        raise ValidationError("need at least one confounded record")
    a_hat = ConfoundedDistribution(n_counts / n_counts.sum())
    m_counts = np.asarray(m_counts, dtype=float)
    q_hat, degenerate = _q_hat_from_counts(m_counts, a_hat.a, fallback)
    ate = ate_details(joint_from_parts(a_hat, q_hat))
    return EstimationResult(ate.value, a_hat, q_hat, degenerate, ate.degenerate_strata)


def estimate_finite(dataset: Dataset, fallback: str = "uniform") -> EstimationResult:
    return estimate_finite_counts(dataset.n_counts(), dataset.m_counts(), fallback)


@dataclass(frozen=True)
class StratifiedDataset:
    """Records (x, y, t, z) with z = -1 meaning the confounder is hidden.

    Every record is a confounded observation of its stratum; records with
    z >= 0 additionally contribute to the conditional estimates.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    z: np.ndarray
    k: int

    def __post_init__(self):
        cols = {}
        n = None
        for name in ("x", "y", "t", "z"):
            arr = np.asarray(getattr(self, name), dtype=int)
            arr.setflags(write=False)
            if n is None:
                n = arr.shape[0]
            if arr.shape != (n,):
                raise ValidationError("stratified columns must share one length")
            cols[name] = arr
            object.__setattr__(self, name, arr)
        if self.k < 2:
            raise ValidationError(f"k must be >= 2, got {self.k}")
        if n == 0:
            raise ValidationError("stratified dataset is empty")
        _validate_bits(cols["y"], "y")
        _validate_bits(cols["t"], "t")
        if cols["x"].min() < 0:
            raise ValidationError("x values must be >= 0")
        revealed = cols["z"] >= 0
        if np.any(cols["z"][revealed] >= self.k) or np.any(cols["z"] < -1):
            raise ValidationError(f"z values must be -1 (hidden) or in [0, {self.k})")


class StratifiedResult(NamedTuple):
    per_stratum: Dict[int, EstimationResult]
    weights: Dict[int, float]
    aggregate: float


def estimate_stratified_ite(
    data: StratifiedDataset, fallback: str = "uniform"
) -> StratifiedResult:
    """Covariate-stratified effect: per-x finite estimates, weighted by x share."""
    values = np.unique(data.x)
    per: Dict[int, EstimationResult] = {}
    weights: Dict[int, float] = {}
    total = data.x.shape[0]
    aggregate = 0.0
    for xv in values:
        mask = data.x == xv
        conf = np.column_stack([data.y[mask], data.t[mask]])
        rev = mask & (data.z >= 0)
        dec = np.column_stack([data.y[rev], data.t[rev], data.z[rev]])
        result = estimate_finite(Dataset(conf, dec, data.k), fallback)
        weight = float(mask.sum()) / total
        per[int(xv)] = result
        weights[int(xv)] = weight
        aggregate += weight * result.ate_hat
    return StratifiedResult(per, weights, aggregate)
