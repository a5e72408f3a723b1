"""Replication engine: generate data, apply a policy, estimate, aggregate.

Three protocols, mirroring the synthetic and real-data experiments:

* infinite  -- the marginal is known exactly; policies spend m reveals on
  the conditional rows; the optional baseline draws m full joint samples.
* finite    -- n confounded samples are drawn first; natural sampling
  deconfounds the first m arrivals, the other policies allocate against
  the realized group counts.
* empirical -- a complete (y, t, z) table is the ground truth; reveals are
  uniform without-replacement draws within each group.

Reproducibility contract: every result is a pure function of the config
and master seed. Each (instance, policy, replication) gets its own RNG
stream keyed by those indices, and aggregation always merges per-work-item
partial sums in a fixed order, so results are identical for any worker
count and any execution order. Error statistics are the mean and
population standard deviation of |estimate - truth| pooled over all
replications of all instances.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ExhaustedError, ValidationError
from .estimation import (
    deconfounded_counts,
    estimate_deconfounded_only_counts,
    estimate_finite_counts,
    estimate_with_known_confounded_counts,
)
from .model import (
    ConditionalTable,
    ConfoundedDistribution,
    JointDistribution,
    ate_exact,
    group_index,
    joint_from_parts,
    parts_from_joint,
    random_instance,
)
from .policies import allocate_finite, allocate_infinite

BASELINE = "deconf-only"
POLICY_IDS = {BASELINE: 0, "nsp": 1, "usp": 2, "owsp": 3}

# stream domains keep the per-purpose RNG streams disjoint
_DOM_INSTANCE = 0
_DOM_INFINITE = 1
_DOM_ARRIVAL = 2
_DOM_CONDITIONAL = 3
_DOM_EMPIRICAL = 4


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(list(key))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a replication sweep needs besides the ground truth."""

    k: int = 2
    instances: int = 1
    policies: Tuple[str, ...] = ("nsp", "usp", "owsp")
    include_baseline: bool = False
    m_grid: Tuple[int, ...] = (100,)
    n_grid: Optional[Tuple[int, ...]] = None
    replications: int = 100
    seed: int = 0
    fallback: str = "uniform"
    shared_randomness: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(f"k must be >= 2, got {self.k}")
        if self.instances < 1:
            raise ValidationError("instances must be >= 1")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        for name in ("policies",):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for pol in self.policies:
            if pol not in ("nsp", "usp", "owsp"):
                raise ValidationError(f"unknown policy {pol!r} in config")
        if not self.policies and not self.include_baseline:
            raise ValidationError("config selects no methods to run")
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        if not self.m_grid or any(m <= 0 for m in self.m_grid):
            raise ValidationError("m_grid must be non-empty with positive entries")
        if self.n_grid is not None:
            object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
            if not self.n_grid or any(n <= 0 for n in self.n_grid):
                raise ValidationError("n_grid must be non-empty with positive entries")
        if self.fallback not in ("error", "uniform"):
            raise ValidationError(f"unknown fallback {self.fallback!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")

    def method_labels(self) -> Tuple[str, ...]:
        labels = ((BASELINE,) if self.include_baseline else ()) + self.policies
        return labels


class CurveRow(NamedTuple):
    policy: str
    grid_kind: str  # 'm' or 'n'
    grid_value: int
    mean_abs_error: float
    std_abs_error: float
    reps: int
    instances: int


@dataclass(frozen=True)
class ErrorCurve:
    rows: Tuple[CurveRow, ...]

    def mean(self, policy: str, grid_value: int) -> float:
        for row in self.rows:
            if row.policy == policy and row.grid_value == grid_value:
                return row.mean_abs_error
        raise KeyError((policy, grid_value))


class SyntheticInstance(NamedTuple):
    a: np.ndarray  # (4,)
    q: np.ndarray  # (4, k)
    ate: float
    p_flat: np.ndarray  # (4k,), the joint table row-major


def make_instance(a: ConfoundedDistribution, q: ConditionalTable) -> SyntheticInstance:
    joint = joint_from_parts(a, q)
    return SyntheticInstance(a.a, q.q, ate_exact(joint), joint.p.ravel())


def resolve_instances(
    config: ExperimentConfig,
    explicit: Optional[Sequence[Tuple[ConfoundedDistribution, ConditionalTable]]] = None,
) -> List[SyntheticInstance]:
    """Explicit (a, q) pairs, or uniform-simplex draws keyed by the seed."""
    if explicit is not None:
        out = [make_instance(a, q) for a, q in explicit]
        if not out:
            raise ValidationError("explicit instance list is empty")
        return out
    out = []
    for i in range(config.instances):
        joint = random_instance(config.k, _stream(config.seed, _DOM_INSTANCE, i))
        parts = parts_from_joint(joint)
        out.append(
            SyntheticInstance(parts.a.a, parts.q.q, ate_exact(joint), joint.p.ravel())
        )
    return out


# ---------------------------------------------------------------------------
# oracles


class ConditionalOracle:
    """Unlimited conditional draws from a known table (synthetic ground truth)."""

    def __init__(self, q: ConditionalTable, seed):
        self._q = q.q
        self._rng = np.random.default_rng(seed)

    def draw(self, group, count: int) -> np.ndarray:
        """Return ``count`` i.i.d. z values for one (y, t) group."""
        g = group if isinstance(group, int) else group_index(*group)
        if count < 0:
            raise ValidationError("count must be >= 0")
        if count == 0:
            return np.empty(0, dtype=int)
        return self._rng.choice(self._q.shape[1], size=count, p=self._q[g])

    def draw_counts(self, group, count: int) -> np.ndarray:
        """Aggregate form of :meth:`draw`: a k-vector of category counts."""
        g = group if isinstance(group, int) else group_index(*group)
        return self._rng.multinomial(count, self._q[g])


class EmpiricalOracle:
    """Hidden-confounder table revealed uniformly without replacement.

    The z values of each group are shuffled once at construction; draws
    consume the shuffled order, so a full reveal returns exactly the
    hidden multiset.
    """

    def __init__(self, records, k: int, seed):
        counts = deconfounded_counts(records, k)  # validates ranges
        del counts
        arr = np.asarray(records, dtype=int)
        rng = np.random.default_rng(seed)
        self._hidden = []
        self._cursor = [0, 0, 0, 0]
        groups = 2 * arr[:, 0] + arr[:, 1]
        for g in range(4):
            zs = arr[groups == g, 2]
            self._hidden.append(rng.permutation(zs))

    def remaining(self, group) -> int:
        g = group if isinstance(group, int) else group_index(*group)
        return len(self._hidden[g]) - self._cursor[g]

    def draw(self, group, count: int) -> np.ndarray:
        g = group if isinstance(group, int) else group_index(*group)
        if count < 0:
            raise ValidationError("count must be >= 0")
        left = self.remaining(g)
        if count > left:
            raise ExhaustedError(
                f"group {g} has {left} un-revealed records, requested {count}",
                shortfall=count - left,
            )
        start = self._cursor[g]
        self._cursor[g] = start + count
        return self._hidden[g][start : start + count].copy()


def draw_conditional(oracle, group, count: int) -> np.ndarray:
    """Reveal ``count`` confounder values for one group via an oracle."""
    return oracle.draw(group, count)


# ---------------------------------------------------------------------------
# aggregation helpers

Key = Tuple[str, str, int]
Partial = Dict[Key, Tuple[int, float, float]]  # count, sum, sum of squares


def _accumulate(partial: Partial, key: Key, err: float) -> None:
    count, s, s2 = partial.get(key, (0, 0.0, 0.0))
    partial[key] = (count + 1, s + err, s2 + err * err)


def _merge(partials: Iterable[Partial]) -> Partial:
    merged: Partial = {}
    for partial in partials:
        for key, (c, s, s2) in partial.items():
            c0, s0, s20 = merged.get(key, (0, 0.0, 0.0))
            merged[key] = (c0 + c, s0 + s, s20 + s2)
    return merged


def _curve_from(merged: Partial, instances: int) -> ErrorCurve:
    rows = []
    for (policy, kind, value), (count, s, s2) in merged.items():
        mean = s / count
        var = max(s2 / count - mean * mean, 0.0)
        rows.append(
            CurveRow(policy, kind, value, mean, float(np.sqrt(var)), count, instances)
        )
    rows.sort(key=lambda r: (r.policy, r.grid_kind, r.grid_value))
    return ErrorCurve(tuple(rows))


def _run_work_items(func, items, workers: int):
    """Map work items to partials, merging in item order regardless of pool size."""
    if workers <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (workers * 4))))


# ---------------------------------------------------------------------------
# infinite confounded data


def _infinite_instance_partial(args) -> Partial:
    (idx, inst, seed, labels, m_grid, reps, fallback) = args
    a = ConfoundedDistribution(inst.a)
    k = inst.q.shape[1]
    partial: Partial = {}
    grid = sorted(m_grid)
    allocations = {
        (pol, m): allocate_infinite(pol, a, m).counts
        for pol in labels
        if pol != BASELINE
        for m in grid
    }
    for pol in labels:
        pol_id = POLICY_IDS[pol]
        for rep in range(reps):
            rng = _stream(seed, _DOM_INFINITE, idx, pol_id, rep)
            for m in grid:
                if pol == BASELINE:
                    counts = rng.multinomial(m, inst.p_flat).reshape(4, k)
                    est = estimate_deconfounded_only_counts(counts)
                else:
                    alloc = allocations[(pol, m)]
                    mcounts = np.stack(
                        [rng.multinomial(int(alloc[g]), inst.q[g]) for g in range(4)]
                    )
                    est = estimate_with_known_confounded_counts(a, mcounts, fallback)
                _accumulate(partial, (pol, "m", m), abs(est.ate_hat - inst.ate))
    return partial


def run_infinite_experiment(
    config: ExperimentConfig,
    instances: Optional[Sequence[Tuple[ConfoundedDistribution, ConditionalTable]]] = None,
    workers: int = 1,
) -> ErrorCurve:
    """Policy comparison with the marginal known exactly."""
    if config.shared_randomness:
        raise ValidationError("shared_randomness applies to the finite protocol only")
    resolved = resolve_instances(config, instances)
    labels = config.method_labels()
    items = [
        (idx, inst, config.seed, labels, config.m_grid, config.replications, config.fallback)
        for idx, inst in enumerate(resolved)
    ]
    partials = _run_work_items(_infinite_instance_partial, items, workers)
    return _curve_from(_merge(partials), len(resolved))


# ---------------------------------------------------------------------------
# finite confounded data


def _finite_instance_partial(args) -> Partial:
    (idx, inst, seed, policies, m, n_grid, reps, fallback, shared) = args
    k = inst.q.shape[1]
    partial: Partial = {}
    grid = sorted(n_grid)
    n_max = grid[-1]
    for rep in range(reps):
        rng_arrival = _stream(seed, _DOM_ARRIVAL, idx, rep)
        seq = rng_arrival.choice(4, size=n_max, p=inst.a)
        avail = {n: np.bincount(seq[:n], minlength=4) for n in grid}
        nsp_counts = np.bincount(seq[:m], minlength=4)
        if shared:
            rng_shared = _stream(seed, _DOM_CONDITIONAL, idx, rep)
            streams = [rng_shared.choice(k, size=m, p=inst.q[g]) for g in range(4)]
        for pol in policies:
            rng_pol = None
            if not shared:
                rng_pol = _stream(seed, _DOM_CONDITIONAL, idx, POLICY_IDS[pol], rep)
            for n in grid:
                a_hat = ConfoundedDistribution(avail[n] / n)
                if pol == "nsp":
                    counts = nsp_counts
                else:
                    counts = allocate_finite(pol, avail[n], m, a_hat).counts
                if shared:
                    mcounts = np.stack(
                        [
                            np.bincount(streams[g][: counts[g]], minlength=k)
                            for g in range(4)
                        ]
                    )
                else:
                    mcounts = np.stack(
                        [rng_pol.multinomial(int(counts[g]), inst.q[g]) for g in range(4)]
                    )
                est = estimate_finite_counts(avail[n], mcounts, fallback)
                _accumulate(partial, (pol, "n", n), abs(est.ate_hat - inst.ate))
    return partial


def run_finite_experiment(
    config: ExperimentConfig,
    instances: Optional[Sequence[Tuple[ConfoundedDistribution, ConditionalTable]]] = None,
    workers: int = 1,
) -> ErrorCurve:
    """Error as a function of the confounded sample count n, m held fixed.

    Natural sampling deconfounds the first m arrivals; the other policies
    allocate m reveals against the realized group counts at each n. With
    ``shared_randomness`` every policy reuses the same per-group reveal
    streams, making all policies coincide exactly at n = m.
    """
    if config.n_grid is None:
        raise ValidationError("finite protocol requires n_grid")
    if len(config.m_grid) != 1:
        raise ValidationError("finite protocol uses a single fixed m")
    if config.include_baseline:
        raise ValidationError("the deconfounded-only baseline has no finite variant")
    m = config.m_grid[0]
    if any(n < m for n in config.n_grid):
        raise ValidationError("every n in n_grid must be >= m")
    resolved = resolve_instances(config, instances)
    items = [
        (
            idx,
            inst,
            config.seed,
            config.policies,
            m,
            config.n_grid,
            config.replications,
            config.fallback,
            config.shared_randomness,
        )
        for idx, inst in enumerate(resolved)
    ]
    partials = _run_work_items(_finite_instance_partial, items, workers)
    return _curve_from(_merge(partials), len(resolved))


# ---------------------------------------------------------------------------
# empirical ground truth


def _empirical_rep_partial(args) -> Partial:
    (rep, seed, labels, m_grid, allocations, zvals, a_vec, k, ate_true, fallback) = args
    partial: Partial = {}
    a = ConfoundedDistribution(a_vec)
    grid = sorted(m_grid)
    total = sum(len(v) for v in zvals)
    for pol in labels:
        rng = _stream(seed, _DOM_EMPIRICAL, POLICY_IDS[pol], rep)
        if pol == BASELINE:
            order = rng.permutation(total)
            flat_groups = np.concatenate(
                [np.full(len(v), g) for g, v in enumerate(zvals)]
            )
            flat_z = np.concatenate(zvals)
            for m in grid:
                take = order[:m]
                cells = np.zeros((4, k))
                np.add.at(cells, (flat_groups[take], flat_z[take]), 1.0)
                est = estimate_deconfounded_only_counts(cells)
                _accumulate(partial, (pol, "m", m), abs(est.ate_hat - ate_true))
        else:
            perms = [rng.permutation(v) for v in zvals]
            for m in grid:
                counts = allocations[(pol, m)]
                mcounts = np.stack(
                    [np.bincount(perms[g][: counts[g]], minlength=k) for g in range(4)]
                )
                est = estimate_with_known_confounded_counts(a, mcounts, fallback)
                _accumulate(partial, (pol, "m", m), abs(est.ate_hat - ate_true))
    return partial


def run_empirical_experiment(
    records, config: ExperimentConfig, workers: int = 1
) -> ErrorCurve:
    """Replications against a complete (y, t, z) table as ground truth.

    The empirical joint of the full table defines the true ATE and the
    (exact) marginal used for policy weights; reveals within a replication
    are uniform without-replacement prefixes per group.
    """
    if config.shared_randomness:
        raise ValidationError("shared_randomness applies to the finite protocol only")
    records = np.asarray(records, dtype=int)
    cells = deconfounded_counts(records, config.k)
    total = int(cells.sum())
    if total == 0:
        raise ValidationError("empirical dataset is empty")
    joint = JointDistribution(cells / total)
    ate_true = ate_exact(joint)
    a = ConfoundedDistribution(cells.sum(axis=1) / total)
    groups = 2 * records[:, 0] + records[:, 1]
    zvals = [records[groups == g, 2] for g in range(4)]

    labels = config.method_labels()
    allocations = {}
    for pol in labels:
        if pol == BASELINE:
            if max(config.m_grid) > total:
                raise ExhaustedError(
                    f"baseline needs {max(config.m_grid)} records, table has {total}"
                )
            continue
        for m in config.m_grid:
            counts = allocate_infinite(pol, a, m).counts
            for g in range(4):
                if counts[g] > len(zvals[g]):
                    raise ExhaustedError(
                        f"policy {pol} at m={m} needs {int(counts[g])} reveals in "
                        f"group {GROUP_NAMES[g]}, only {len(zvals[g])} records exist",
                        shortfall=int(counts[g]) - len(zvals[g]),
                    )
            allocations[(pol, m)] = counts

    items = [
        (
            rep,
            config.seed,
            labels,
            config.m_grid,
            allocations,
            zvals,
            a.a,
            config.k,
            ate_true,
            config.fallback,
        )
        for rep in range(config.replications)
    ]
    partials = _run_work_items(_empirical_rep_partial, items, workers)
    return _curve_from(_merge(partials), 1)


GROUP_NAMES = {0: "(y=0,t=0)", 1: "(y=0,t=1)", 2: "(y=1,t=0)", 3: "(y=1,t=1)"}
