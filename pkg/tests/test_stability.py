"""
Unit Tests for the Stability Module
Tests random recursions, the L_p^q probe, the moment condition and product contraction.
"""

import numpy as np
import pytest

from src.backend.errors import StabilityError
from src.backend.graph import baseline_graph
from src.backend.learner import GainSchedule
from src.backend.stability import (RandomRecursionSpec, check_zero_mean,
                                   exponential_stability_counterexample, lp_boundedness,
                                   lpq_stability_probe, moment_condition_probe, product_contraction,
                                   restricted_network_operator_sampler, simulate_recursion,
                                   unit_test_vectors)
from src.backend.streams import StreamSpec


def constant(matrix):
    return lambda k, rng: matrix


def random_spd(rng, n, lo=0.5, hi=3.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (q * rng.uniform(lo, hi, n)) @ q.T


def decaying_gain(k):
    return (k + 1.0) ** -0.6


class TestRecursion:
    """Test suite for simulate_recursion and its readouts."""

    def test_identity_gain_kills_state(self):
        """Test that F = I sends every state to zero in one step."""
        spec = RandomRecursionSpec(3, constant(np.eye(3)))
        frame = simulate_recursion(spec, 5, replicates=2)
        assert list(frame.columns) == ['k', 'mean_sq_norm']
        assert frame['mean_sq_norm'].iloc[0] == 3.0
        assert np.all(frame['mean_sq_norm'].iloc[1:] == 0.0)
        print("✅ Identity gain test passed")

    def test_zero_gain_keeps_norm(self):
        """Test that F = 0 keeps the state and reads as bounded but not decaying."""
        v = np.array([1.0, -2.0])
        spec = RandomRecursionSpec(2, constant(np.zeros((2, 2))), x0=v)
        frame = simulate_recursion(spec, 10, replicates=3)
        np.testing.assert_array_equal(frame['mean_sq_norm'], np.full(11, 5.0))
        result = lp_boundedness(frame)
        assert result['bounded'] and not result['decaying']
        print("✅ Zero gain test passed")

    def test_scalar_noisy_recursion_decays(self):
        """Test a scalar stochastic approximation driven by zero-mean noise."""
        schedule = GainSchedule()

        def gain(k, rng):
            return np.array([[schedule.a(k)]])

        spec = RandomRecursionSpec(1, gain, G_sampler=gain,
                                   u_sampler=lambda k, rng: rng.standard_normal(1), x0=[1.0])
        frame = simulate_recursion(spec, 2000, replicates=100)
        assert frame['mean_sq_norm'].iloc[-1] < 0.05
        assert lp_boundedness(frame)['decaying']
        print("✅ Noisy recursion test passed")

    def test_biased_input_rejected(self):
        """Test that an input sampler with a nonzero mean stops the simulation."""
        schedule = GainSchedule()

        def gain(k, rng):
            return np.array([[schedule.a(k)]])

        spec = RandomRecursionSpec(1, gain, G_sampler=gain,
                                   u_sampler=lambda k, rng: 1.0 + rng.standard_normal(1), x0=[1.0])
        with pytest.raises(StabilityError, match="not zero-mean"):
            simulate_recursion(spec, 10, replicates=2)
        print("✅ Biased input test passed")

    def test_matches_product_contraction(self, rng):
        """Test that a deterministic recursion reproduces the product norms."""
        H = random_spd(rng, 4)
        x = rng.normal(size=4)
        frame = simulate_recursion(RandomRecursionSpec(4, lambda k, r: decaying_gain(k) * H, x0=x), 50,
                                   replicates=1)
        result = product_contraction(H, decaying_gain, x, 50)
        np.testing.assert_allclose(frame['mean_sq_norm'].to_numpy()[1:], result.norms ** 2, rtol=1e-12)
        print("✅ Recursion/product agreement test passed")

    def test_dimension_checks(self):
        """Test sampler shape checks and the dimension cap."""
        with pytest.raises(StabilityError):
            simulate_recursion(RandomRecursionSpec(2, constant(np.eye(3))), 3, replicates=1)
        with pytest.raises(StabilityError):
            RandomRecursionSpec(2, constant(np.eye(2)), G_sampler=constant(np.eye(2)))
        with pytest.raises(StabilityError, match="exceeds the cap"):
            RandomRecursionSpec(65, constant(np.eye(65)))
        print("✅ Dimension checks test passed")

    def test_zero_mean_check(self, rng):
        """Test the zero-mean verdict on centred and shifted Gaussians."""
        assert check_zero_mean(lambda k, r: r.standard_normal(3), 5000, rng)['passed']
        assert not check_zero_mean(lambda k, r: 1.0 + r.standard_normal(3), 5000, rng)['passed']
        print("✅ Zero-mean check test passed")


class TestProbes:
    """Test suite for lpq_stability_probe and moment_condition_probe."""

    def test_half_identity_decays_geometrically(self):
        """Test moments 4^-(m-n) for F = I/2."""
        result = lpq_stability_probe(constant(0.5 * np.eye(3)), unit_test_vectors(3), p=2, horizon=20,
                                     replicates=4, starts=(0, 5))
        assert result.passed
        for n, rows in result.table.groupby('n'):
            np.testing.assert_allclose(rows['moment'], 4.0 ** -(rows['m'] - n), rtol=1e-12)
        assert result.start_q_moments[0] == pytest.approx(1.0)
        print("✅ Geometric decay test passed")

    def test_identity_never_decays(self):
        """Test that A = I fails the decay readout."""
        result = lpq_stability_probe(constant(np.eye(3)), unit_test_vectors(3), horizon=20, replicates=4)
        assert not result.passed
        np.testing.assert_allclose(result.table['moment'], 1.0)
        print("✅ No decay test passed")

    def test_rejects_bad_orders(self):
        """Test invalid moment orders and start steps."""
        with pytest.raises(StabilityError):
            lpq_stability_probe(constant(np.eye(2)), unit_test_vectors(2), p=0.0)
        with pytest.raises(StabilityError):
            lpq_stability_probe(constant(np.eye(2)), unit_test_vectors(2), horizon=5, starts=(10,))
        print("✅ Bad orders test passed")

    def test_contractive_operators_have_no_excess_moment(self):
        """Test gamma_hat = 0 and the max_norm4 column for A = I/2."""
        frame = moment_condition_probe(constant(0.5 * np.eye(3)), horizon=30, replicates=10)
        assert list(frame.columns) == ['k', 'gamma_hat', 'partial_sum', 'max_norm4']
        assert np.all(frame['gamma_hat'] == 0.0)
        np.testing.assert_allclose(frame['max_norm4'], 0.0625, rtol=1e-12)
        print("✅ Contractive moment test passed")

    def test_expansive_operators(self):
        """Test gamma_hat and its partial sums for A = (1 + a(k)) I."""
        schedule = GainSchedule()
        frame = moment_condition_probe(lambda k, rng: (1.0 + schedule.a(k)) * np.eye(2), horizon=30,
                                       replicates=10)
        expected = (1.0 + schedule.a(np.arange(31))) ** 4 - 1.0
        np.testing.assert_allclose(frame['gamma_hat'], expected, rtol=1e-12)
        np.testing.assert_allclose(frame['partial_sum'], np.cumsum(expected), rtol=1e-12)
        print("✅ Expansive moment test passed")

    def test_moment_probe_needs_replicates(self):
        """Test the replicate floor of the moment check."""
        with pytest.raises(StabilityError):
            moment_condition_probe(constant(np.eye(2)), replicates=5)
        print("✅ Replicate floor test passed")

    def test_restricted_network_operator(self, gaussian_kernel, rng):
        """Test the restricted operator is symmetric with the expected spectrum."""
        dictionary = np.linspace(-2, 4, 6)
        sample = restricted_network_operator_sampler(baseline_graph(), gaussian_kernel, StreamSpec(),
                                                     GainSchedule(), dictionary)
        A = sample(0, rng)
        assert A.shape == (60, 60)
        np.testing.assert_allclose(A, A.T, atol=1e-12)
        # without consensus, each node's restricted H*H is a projection of norm at most K(x, x) = 1
        innovation_only = restricted_network_operator_sampler(baseline_graph(), gaussian_kernel, StreamSpec(),
                                                              GainSchedule(b_scale=0.0), dictionary)
        eigs = np.linalg.eigvalsh(np.eye(60) - innovation_only(0, rng))
        assert eigs.min() >= -1e-9 and eigs.max() <= 1.0 + 1e-9
        print("✅ Restricted operator test passed")

    def test_restricted_operator_dimension_cap(self, gaussian_kernel):
        """Test that 10 nodes times 7 points exceeds the cap."""
        with pytest.raises(StabilityError):
            restricted_network_operator_sampler(baseline_graph(), gaussian_kernel, StreamSpec(),
                                                GainSchedule(), np.linspace(-2, 4, 7))
        print("✅ Operator cap test passed")


class TestProductContraction:
    """Test suite for product_contraction and the counterexample."""

    def test_first_factor_vanishes(self):
        """Test H = 1 with mu(0) = 1."""
        result = product_contraction(np.array([[1.0]]), lambda j: 1.0 / (j + 1), [1.0], 5)
        np.testing.assert_array_equal(result.norms, np.zeros(5))
        print("✅ Vanishing factor test passed")

    def test_scalar_product(self):
        """Test a scalar product by hand."""
        result = product_contraction(np.array([[0.5]]), lambda j: 1.0 / (j + 1), [1.0], 4)
        assert result.norms[3] == pytest.approx(0.2734375)
        assert result.d == 0 and result.M == 1.0
        assert result.within_bound
        print("✅ Scalar product test passed")

    @pytest.mark.parametrize("seed", range(20))
    def test_random_spd(self, seed):
        """Test the M^d bound and decay for random SPD matrices of size up to 16."""
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 17))
        H = random_spd(rng, n)
        x = rng.normal(size=n)
        x_norm = np.linalg.norm(x)
        result = product_contraction(H, decaying_gain, x, 10000)
        assert result.within_bound
        assert np.all(result.norms <= result.M ** result.d * x_norm * (1.0 + 1e-12))
        assert np.all(np.diff(result.norms[result.d:]) <= 1e-15)
        assert result.norms[-1] < 1e-3 * x_norm
        print(f"✅ Random SPD instance {seed} test passed")

    def test_large_gains_need_the_bound(self):
        """Test d and M when early factors expand."""
        H = np.diag([4.0, 1.0])
        result = product_contraction(H, lambda j: 1.0 / (j + 1), [1.0, 1.0], 20)
        assert result.d == 3
        assert result.M == pytest.approx(3.0)
        assert result.within_bound
        print("✅ Expanding factors test passed")

    def test_rejects_non_spd(self):
        """Test singular and asymmetric matrices."""
        with pytest.raises(StabilityError):
            product_contraction(np.diag([1.0, 0.0]), lambda j: 0.1, [1.0, 1.0], 3)
        with pytest.raises(StabilityError):
            product_contraction(np.array([[1.0, 0.5], [0.0, 1.0]]), lambda j: 0.1, [1.0, 1.0], 3)
        print("✅ Non-SPD test passed")

    def test_counterexample(self):
        """Test a singular F that is stable in no L_p sense."""
        F = np.diag([1.0, 0.0])
        assert exponential_stability_counterexample(F) == [1.0, 1.0, 1.0, 1.0]
        result = lpq_stability_probe(constant(np.eye(2) - F), unit_test_vectors(2), horizon=20, replicates=8)
        assert not result.passed
        print("✅ Counterexample test passed")
