"""Policy weights and integer allocations (infinite and finite regimes)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deconf import (
    ConfoundedDistribution,
    ValidationError,
    allocate_finite,
    allocate_infinite,
    custom_policy,
    parts_from_joint,
    policy_weights,
    random_instance,
)

EXACT = 1e-12

marginals = st.builds(
    lambda seed: parts_from_joint(random_instance(2, seed)).a,
    st.integers(min_value=0, max_value=2**32 - 1),
)


class TestPolicyWeights:
    def test_usp_is_uniform(self):
        a = ConfoundedDistribution(np.array([0.7, 0.1, 0.1, 0.1]))
        assert np.array_equal(policy_weights("usp", a).x, np.full(4, 0.25))

    def test_nsp_is_identity(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        assert np.allclose(policy_weights("nsp", a).x, a.a, atol=EXACT)

    def test_owsp_skewed_example(self):
        eta = 0.1
        a = ConfoundedDistribution(np.array([1 - 3 * eta, eta, eta, eta]))
        x = policy_weights("owsp", a).x
        assert np.allclose(x, [0.4375, 0.25, 0.0625, 0.25], atol=EXACT)

    def test_owsp_rejects_empty_arm(self):
        a = ConfoundedDistribution(np.array([0.6, 0.0, 0.4, 0.0]))
        with pytest.raises(ValidationError, match="arm"):
            policy_weights("owsp", a)

    @given(marginals)
    def test_weights_sum_to_one(self, a):
        for kind in ("nsp", "usp", "owsp"):
            assert policy_weights(kind, a).x.sum() == pytest.approx(1.0, abs=EXACT)

    @given(marginals)
    def test_owsp_halves_per_arm(self, a):
        x = policy_weights("owsp", a).x
        assert x[0] + x[2] == pytest.approx(0.5, abs=EXACT)
        assert x[1] + x[3] == pytest.approx(0.5, abs=EXACT)

    def test_scale_invariance_via_counts(self):
        counts = np.array([40.0, 10.0, 20.0, 30.0])
        small = ConfoundedDistribution.from_counts(counts)
        large = ConfoundedDistribution.from_counts(counts * 37.0)
        for kind in ("nsp", "usp", "owsp"):
            assert np.array_equal(
                policy_weights(kind, small).x, policy_weights(kind, large).x
            )

    def test_custom_weights_passed_through(self):
        w = (0.1, 0.2, 0.3, 0.4)
        a = ConfoundedDistribution(np.full(4, 0.25))
        assert np.allclose(policy_weights(custom_policy(w), a).x, w, atol=EXACT)


class TestAllocateInfinite:
    def test_owsp_largest_remainder_example(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        assert allocate_infinite("owsp", a, 8).counts.tolist() == [3, 1, 1, 3]

    def test_usp_tie_break_in_group_order(self):
        a = ConfoundedDistribution(np.full(4, 0.25))
        assert allocate_infinite("usp", a, 7).counts.tolist() == [2, 2, 2, 1]

    def test_zero_budget(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        for kind in ("nsp", "usp", "owsp"):
            assert allocate_infinite(kind, a, 0).counts.tolist() == [0, 0, 0, 0]

    @given(marginals, st.integers(min_value=0, max_value=5000))
    @settings(max_examples=100)
    def test_counts_within_one_of_targets(self, a, m):
        for kind in ("nsp", "usp", "owsp"):
            x = policy_weights(kind, a).x
            counts = allocate_infinite(kind, a, m).counts
            assert counts.sum() == m
            assert np.all(np.abs(counts - m * x) < 1.0)


class TestAllocateFinite:
    def test_usp_bottleneck_example(self):
        alloc = allocate_finite("usp", (5, 50, 50, 50), 40)
        assert alloc.counts.tolist() == [5, 12, 12, 11]

    def test_usp_even_split_tie_break(self):
        assert allocate_finite("usp", (50, 50, 50, 50), 6).counts.tolist() == [2, 2, 1, 1]

    def test_owsp_symmetric_example(self):
        a = ConfoundedDistribution(np.full(4, 0.25))
        alloc = allocate_finite("owsp", (30, 30, 30, 30), 20, a)
        assert alloc.counts.tolist() == [5, 5, 5, 5]

    def test_all_policies_coincide_at_saturation(self):
        available = (7, 3, 11, 9)
        a = ConfoundedDistribution(np.array([0.2, 0.3, 0.1, 0.4]))
        results = [
            allocate_finite(kind, available, 30, a).counts.tolist()
            for kind in ("nsp", "usp", "owsp")
        ]
        assert results[0] == results[1] == results[2] == list(available)

    def test_overallocation_rejected(self):
        with pytest.raises(ValidationError, match="available"):
            allocate_finite("usp", (1, 1, 1, 1), 5)

    def test_owsp_arm_overflow_spills(self):
        # arm t=1 has only 3 records; its shortfall moves to arm t=0
        a = ConfoundedDistribution(np.array([0.25, 0.25, 0.25, 0.25]))
        alloc = allocate_finite("owsp", (20, 2, 20, 1), 20, a)
        assert alloc.counts.sum() == 20
        assert alloc.counts[1] + alloc.counts[3] == 3

    def test_owsp_matches_infinite_when_unconstrained_even_m(self):
        # availability proportional to a_hat, generous caps, even m
        rng = np.random.default_rng(5)
        for _ in range(50):
            counts = rng.integers(1, 60, size=4)
            a_hat = ConfoundedDistribution.from_counts(counts)
            m = int(rng.integers(1, 30)) * 2
            available = counts * m  # proportional and never binding
            fin = allocate_finite("owsp", available, m, a_hat).counts
            inf = allocate_infinite("owsp", a_hat, m).counts
            assert fin.tolist() == inf.tolist()

    @given(
        st.lists(st.integers(min_value=0, max_value=80), min_size=4, max_size=4),
        st.integers(min_value=0, max_value=320),
        marginals,
    )
    @settings(max_examples=100)
    def test_caps_and_totals(self, available, m, a_hat):
        total = sum(available)
        if m > total:
            m = total
        for kind in ("nsp", "usp", "owsp"):
            counts = allocate_finite(kind, available, m, a_hat).counts
            assert counts.sum() == m
            assert np.all(counts <= np.asarray(available))
            assert np.all(counts >= 0)
