"""Core distribution types, exact ATE, and instance constructions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deconf import (
    ConditionalTable,
    ConfoundedDistribution,
    JointDistribution,
    ValidationError,
    adversarial_instance,
    ate_details,
    ate_exact,
    binary_conditional,
    general_lower_pair,
    group_index,
    hardness_pair,
    joint_from_parts,
    parts_from_joint,
    policy_lower_pair,
    random_instance,
)

ATOL = 1e-9
EXACT = 1e-12


def brute_force_ate(table):
    """Independent scalar-loop evaluation of the stratified ATE formula."""
    k = len(table[0])
    total = 0.0
    for z in range(k):
        pz = sum(table[g][z] for g in range(4))
        mass_t1 = table[1][z] + table[3][z]
        mass_t0 = table[0][z] + table[2][z]
        cond_t1 = table[3][z] / mass_t1 if mass_t1 > 0 else 0.0
        cond_t0 = table[2][z] / mass_t0 if mass_t0 > 0 else 0.0
        total += (cond_t1 - cond_t0) * pz
    return total


def example_instance():
    a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
    q = binary_conditional((0.5, 0.2, 0.7, 0.6))
    return a, q


joint_instances = st.builds(
    lambda seed, k: random_instance(k, seed),
    st.integers(min_value=0, max_value=2**32 - 1),
    st.sampled_from([2, 3, 5]),
)


class TestAteExact:
    def test_no_confounding_collapses_to_naive_difference(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        q = binary_conditional((0.5, 0.5, 0.5, 0.5))
        got = ate_exact(joint_from_parts(a, q))
        naive = 0.3 / 0.4 - 0.2 / 0.6
        assert got == pytest.approx(naive, abs=EXACT)

    def test_worked_binary_example(self):
        a, q = example_instance()
        joint = joint_from_parts(a, q)
        # frozen from the brute-force oracle below
        expected = 0.43349321266968324
        assert brute_force_ate(joint.p.tolist()) == pytest.approx(expected, abs=EXACT)
        assert ate_exact(joint) == pytest.approx(expected, abs=EXACT)

    @given(joint_instances)
    def test_matches_brute_force(self, joint):
        assert ate_exact(joint) == pytest.approx(
            brute_force_ate(joint.p.tolist()), abs=ATOL
        )

    @given(joint_instances)
    def test_in_unit_range(self, joint):
        assert -1.0 <= ate_exact(joint) <= 1.0

    @given(joint_instances)
    def test_treatment_swap_negates(self, joint):
        swapped = JointDistribution(joint.p[[1, 0, 3, 2]])
        assert ate_exact(swapped) == pytest.approx(-ate_exact(joint), abs=EXACT)

    @given(joint_instances, st.integers(min_value=0, max_value=10**6))
    def test_z_permutation_invariant(self, joint, seed):
        perm = np.random.default_rng(seed).permutation(joint.k)
        permuted = JointDistribution(joint.p[:, perm])
        assert ate_exact(permuted) == pytest.approx(ate_exact(joint), abs=EXACT)

    def test_degenerate_strata_flagged_and_zeroed(self):
        # all T=1 mass on z=0; stratum (t=1, z=1) is empty
        p = np.array([[0.2, 0.2], [0.2, 0.0], [0.1, 0.1], [0.2, 0.0]])
        result = ate_details(JointDistribution(p))
        assert (1, 1) in result.degenerate_strata
        assert result.value == pytest.approx(brute_force_ate(p.tolist()), abs=EXACT)


class TestFactorization:
    def test_joint_from_parts_degenerate_marginal(self):
        a = ConfoundedDistribution(np.array([1.0, 0.0, 0.0, 0.0]))
        q = ConditionalTable(np.array([[0.3, 0.7]] * 4))
        joint = joint_from_parts(a, q)
        assert joint.p[0] == pytest.approx([0.3, 0.7], abs=EXACT)
        assert np.all(joint.p[1:] == 0.0)

    def test_joint_from_parts_uniform(self):
        a = ConfoundedDistribution(np.full(4, 0.25))
        q = ConditionalTable(np.full((4, 4), 0.25))
        assert np.allclose(joint_from_parts(a, q).p, 0.0625, atol=EXACT)

    def test_joint_from_parts_elementwise(self):
        a, q = example_instance()
        joint = joint_from_parts(a, q)
        assert joint.p[group_index(1, 1), 1] == pytest.approx(0.18, abs=EXACT)
        assert joint.p[group_index(0, 1), 1] == pytest.approx(0.02, abs=EXACT)

    def test_parts_from_joint_uniform(self):
        parts = parts_from_joint(JointDistribution(np.full((4, 2), 0.125)))
        assert np.allclose(parts.a.a, 0.25, atol=EXACT)
        assert np.allclose(parts.q.q, 0.5, atol=EXACT)
        assert not parts.degenerate_groups

    @given(joint_instances)
    def test_roundtrip_identity(self, joint):
        parts = parts_from_joint(joint)
        back = joint_from_parts(parts.a, parts.q)
        assert np.allclose(back.p, joint.p, atol=EXACT)

    def test_exact_recovery_from_parts(self):
        a, q = example_instance()
        parts = parts_from_joint(joint_from_parts(a, q))
        assert np.allclose(parts.a.a, a.a, atol=EXACT)
        assert np.allclose(parts.q.q, q.q, atol=EXACT)

    def test_zero_group_flagged_uniform(self):
        p = np.array([[0.3, 0.3], [0.0, 0.0], [0.2, 0.1], [0.05, 0.05]])
        parts = parts_from_joint(JointDistribution(p))
        assert parts.a.a[group_index(0, 1)] == 0.0
        assert np.allclose(parts.q.q[group_index(0, 1)], 0.5, atol=EXACT)
        assert parts.degenerate_groups == {(0, 1)}


class TestValidation:
    def test_marginal_must_sum_to_one(self):
        with pytest.raises(ValidationError, match="sum to 1"):
            ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.2]))

    def test_negative_entries_rejected(self):
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            ConfoundedDistribution(np.array([1.2, -0.2, 0.0, 0.0]))

    def test_conditional_rows_must_normalize(self):
        bad = np.array([[0.5, 0.4], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ValidationError, match=r"q row \(y=0,t=0\)"):
            ConditionalTable(bad)

    def test_k_must_be_at_least_two(self):
        with pytest.raises(ValidationError):
            JointDistribution(np.array([[0.25], [0.25], [0.25], [0.25]]))

    def test_types_are_immutable(self):
        a, _ = example_instance()
        with pytest.raises(ValueError):
            a.a[0] = 0.9


class TestRandomInstance:
    def test_deterministic_given_seed(self):
        assert np.array_equal(random_instance(2, 123).p, random_instance(2, 123).p)
        assert not np.array_equal(random_instance(2, 123).p, random_instance(2, 124).p)

    def test_shape_and_normalization(self):
        joint = random_instance(3, 0)
        assert joint.p.shape == (4, 3)
        assert joint.p.sum() == pytest.approx(1.0, abs=EXACT)

    def test_cell_means_match_flat_dirichlet(self):
        # Dirichlet(1,...,1) on 8 cells: each mean 1/8, var = 7/(64*9)
        draws = np.stack([random_instance(2, s).p.ravel() for s in range(10_000)])
        se = np.sqrt(7.0 / (64.0 * 9.0) / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - 0.125) < 3 * se)


class TestAdversarialInstances:
    @pytest.mark.parametrize(
        "which,a_expected,q1_expected",
        [
            ("nsp_worst", (0.9, 0.02, 0.01, 0.07), (0.9, 0.7, 0.01, 0.3)),
            ("usp_worst", (0.79, 0.01, 0.02, 0.18), (0.5, 0.01, 0.05, 0.5)),
            ("owsp_worst", (0.5, 0.01, 0.19, 0.3), (0.05, 0.5, 0.055, 0.4)),
        ],
    )
    def test_fixed_instances(self, which, a_expected, q1_expected):
        a, q = adversarial_instance(which)
        assert np.allclose(a.a, a_expected, atol=EXACT)
        assert np.allclose(q.q[:, 1], q1_expected, atol=EXACT)
        assert q.k == 2

    def test_unknown_name_rejected(self):
        with pytest.raises(ValidationError):
            adversarial_instance("median_worst")


class TestHardnessPair:
    def test_gap_near_limit(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        pair = hardness_pair(a, gamma=1e-4, q_floor=1 - 1e-6)
        assert abs(pair.gap - 0.6 * (1 - 1e-6)) <= 1e-3

    def test_gap_approaches_a00_plus_a10(self):
        # as gamma -> 0 with q_floor -> 1, the gap tends to a00 + a10
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        limit = 0.6
        diffs = [
            abs(hardness_pair(a, g, 1 - 1e-9).gap - limit)
            for g in (1e-2, 1e-3, 1e-4)
        ]
        assert diffs[0] > diffs[1] > diffs[2]
        assert diffs[2] < 1e-3

    def test_pair_shares_marginal(self):
        a = ConfoundedDistribution(np.full(4, 0.25))
        pair = hardness_pair(a, gamma=0.05)
        assert pair.a is a
        assert pair.base_q.k == pair.alternate_q.k == 2
        assert pair.gap == pytest.approx(
            abs(ate_exact(pair.base_joint) - ate_exact(pair.alternate_joint)),
            abs=1e-10,
        )

    def test_parameter_validation(self):
        a = ConfoundedDistribution(np.full(4, 0.25))
        with pytest.raises(ValidationError):
            hardness_pair(a, gamma=0.0)
        with pytest.raises(ValidationError):
            hardness_pair(a, gamma=0.1, q_floor=1.0)
        zero_control = ConfoundedDistribution(np.array([0.0, 0.5, 0.0, 0.5]))
        with pytest.raises(ValidationError):
            hardness_pair(zero_control, gamma=0.1)


class TestGeneralLowerPair:
    def test_zero_gamma_means_zero_gap(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        pair = general_lower_pair(a, q00=0.5, q01=0.5, beta=0.3, gamma=0.0)
        assert pair.gap == 0.0

    def test_gap_linear_in_gamma(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        big = general_lower_pair(a, 0.5, 0.5, 0.3, 0.01).gap
        small = general_lower_pair(a, 0.5, 0.5, 0.3, 0.001).gap
        assert 5.0 <= big / small <= 20.0

    def test_only_y1_rows_differ(self):
        a = ConfoundedDistribution(np.full(4, 0.25))
        pair = general_lower_pair(a, 0.4, 0.6, 0.2, 0.05)
        assert np.array_equal(pair.base_q.q[0], pair.alternate_q.q[0])
        assert np.array_equal(pair.base_q.q[1], pair.alternate_q.q[1])
        assert not np.array_equal(pair.base_q.q[2], pair.alternate_q.q[2])
        assert not np.array_equal(pair.base_q.q[3], pair.alternate_q.q[3])


class TestPolicyLowerPair:
    def test_binary_case_rows_normalized(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        pair = policy_lower_pair(a, k=2, beta=0.2, gamma=0.05)
        assert np.allclose(pair.base_q.q.sum(axis=1), 1.0, atol=EXACT)
        assert np.allclose(pair.alternate_q.q.sum(axis=1), 1.0, atol=EXACT)

    def test_zero_gamma_means_zero_gap(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        assert policy_lower_pair(a, k=3, beta=0.1, gamma=0.0).gap == 0.0

    def test_gap_roughly_linear_in_gamma(self):
        a = ConfoundedDistribution(np.array([0.4, 0.1, 0.2, 0.3]))
        gap = policy_lower_pair(a, k=4, beta=0.05, gamma=0.01).gap
        half = policy_lower_pair(a, k=4, beta=0.05, gamma=0.005).gap
        assert gap > 0.0
        assert abs(gap - 2.0 * half) <= 0.3 * gap

    def test_infeasible_parameters_rejected(self):
        a = ConfoundedDistribution(np.full(4, 0.25))
        with pytest.raises(ValidationError):
            policy_lower_pair(a, k=4, beta=0.3, gamma=0.01)  # k*beta >= 1
        with pytest.raises(ValidationError):
            policy_lower_pair(a, k=2, beta=0.1, gamma=0.95)  # row leaves [0,1]


@given(joint_instances)
@settings(max_examples=50)
def test_simplex_closure_of_constructors(joint):
    assert joint.p.sum() == pytest.approx(1.0, abs=EXACT)
    parts = parts_from_joint(joint)
    assert parts.a.a.sum() == pytest.approx(1.0, abs=EXACT)
    assert np.allclose(parts.q.q.sum(axis=1), 1.0, atol=EXACT)
