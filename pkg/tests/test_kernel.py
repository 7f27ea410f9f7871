"""
Unit Tests for the Kernel Module
Tests kernel evaluation, Gram matrices and domain handling.
"""

import numpy as np
import pytest

from src.backend.errors import KernelDomainError, KernelError
from src.backend.kernel import Kernel, KernelFamily


class TestKernelEvaluation:
    """Test suite for Kernel.eval and Kernel.cross."""

    def test_gaussian_peak(self, gaussian_kernel):
        """Test K(x, x) = 1."""
        assert gaussian_kernel.eval(1.0, 1.0) == 1.0
        print("✅ Gaussian peak test passed")

    def test_gaussian_closed_form(self, gaussian_kernel):
        """Test exp(-(x - y)^2) near and far apart."""
        assert gaussian_kernel.eval(0.0, 1.0) == pytest.approx(np.exp(-1.0), abs=1e-15)
        assert gaussian_kernel.eval(-2.0, 4.0) == pytest.approx(np.exp(-36.0), rel=1e-12)
        print("✅ Gaussian closed form test passed")

    def test_laplace_and_polynomial(self):
        """Test the other two families."""
        assert Kernel.laplace(2.0).eval(0.0, 1.0) == pytest.approx(np.exp(-0.5))
        assert Kernel.polynomial(2, 1.0).eval(2.0, 3.0) == pytest.approx(49.0)
        print("✅ Laplace and polynomial test passed")

    @pytest.mark.parametrize("kernel", [Kernel.gaussian(0.7), Kernel.laplace(1.3), Kernel.polynomial(3, 0.5)])
    def test_symmetry(self, kernel, rng):
        """Test K(x, y) = K(y, x) on random pairs."""
        xs = rng.uniform(-2, 4, 1000)
        ys = rng.uniform(-2, 4, 1000)
        forward = np.array([kernel.eval(x, y) for x, y in zip(xs, ys)])
        backward = np.array([kernel.eval(y, x) for x, y in zip(xs, ys)])
        np.testing.assert_allclose(forward, backward, rtol=0, atol=1e-14 * max(1.0, np.abs(forward).max()))
        print(f"✅ Symmetry of {kernel.family.value} test passed")

    def test_cross_matches_eval(self, gaussian_kernel, rng):
        """Test one entry of the cross matrix."""
        xs, ys = rng.uniform(-2, 4, 5), rng.uniform(-2, 4, 7)
        matrix = gaussian_kernel.cross(xs, ys)
        assert matrix.shape == (5, 7)
        assert matrix[2, 3] == pytest.approx(gaussian_kernel.eval(xs[2], ys[3]))
        print("✅ Cross matrix test passed")

    def test_box_domain(self):
        """Test a two-dimensional box."""
        k = Kernel.gaussian(1.0, lo=(0.0, 0.0), hi=(1.0, 1.0))
        assert k.dim == 2
        assert k.eval([0.0, 0.0], [1.0, 1.0]) == pytest.approx(np.exp(-2.0))
        print("✅ Box domain test passed")


class TestKernelDomain:
    """Test suite for strict and lenient domain handling."""

    def test_strict_rejects(self, gaussian_kernel):
        """Test a point right of the domain in strict mode."""
        with pytest.raises(KernelDomainError, match="out of domain"):
            gaussian_kernel.eval(4.5, 0.0)
        print("✅ Strict domain test passed")

    def test_lenient_clamps(self):
        """Test that lenient mode clamps to the boundary."""
        k = Kernel.gaussian(1.0, strict=False)
        assert k.eval(4.5, 4.0) == 1.0
        print("✅ Lenient domain test passed")

    def test_contains(self, gaussian_kernel):
        """Test membership including both endpoints."""
        assert gaussian_kernel.contains([-2.0, 0.0, 4.0])
        assert not gaussian_kernel.contains([-2.1])
        print("✅ Contains test passed")

    def test_invalid_parameters(self):
        """Test nonpositive widths, degree 0 and an inverted domain."""
        with pytest.raises(KernelError):
            Kernel.gaussian(0.0)
        with pytest.raises(KernelError):
            Kernel.laplace(-1.0)
        with pytest.raises(KernelError):
            Kernel.polynomial(0)
        with pytest.raises(KernelError):
            Kernel.gaussian(1.0, lo=4.0, hi=-2.0)
        print("✅ Invalid parameters test passed")


class TestGram:
    """Test suite for Gram matrices and the diagonal bound."""

    def test_single_point(self, gaussian_kernel):
        """Test the 1 x 1 Gram matrix."""
        np.testing.assert_array_equal(gaussian_kernel.gram([1.0]), [[1.0]])
        print("✅ Single point Gram test passed")

    def test_two_points(self, gaussian_kernel):
        """Test the 2 x 2 Gram matrix."""
        np.testing.assert_allclose(gaussian_kernel.gram([0.0, 1.0]),
                                   [[1.0, np.exp(-1.0)], [np.exp(-1.0), 1.0]])
        print("✅ Two point Gram test passed")

    def test_empty(self, gaussian_kernel):
        """Test the Gram matrix of no points."""
        assert gaussian_kernel.gram([]).shape == (0, 0)
        print("✅ Empty Gram test passed")

    def test_random_sets_psd(self, gaussian_kernel, rng):
        """Test symmetry and semidefiniteness on random point sets."""
        for _ in range(100):
            points = rng.uniform(-2, 4, int(rng.integers(1, 51)))
            g = gaussian_kernel.gram(points)
            np.testing.assert_array_equal(g, g.T)
            assert np.linalg.eigvalsh(g)[0] >= -1e-8
        print("✅ Random Gram test passed")

    def test_sup_diag_bound(self):
        """Test sup K(x, x) for each family."""
        assert Kernel.gaussian(1.0).sup_diag_bound() == 1.0
        assert Kernel.laplace(1.0).sup_diag_bound() == 1.0
        assert Kernel.polynomial(2, 1.0).sup_diag_bound() == pytest.approx(289.0)
        print("✅ Diagonal bound test passed")

    @pytest.mark.parametrize("kernel", [Kernel.gaussian(2.0), Kernel.laplace(0.5), Kernel.polynomial(2, 1.0)])
    def test_diagonal_below_bound(self, kernel, rng):
        """Test sampled diagonals against the bound."""
        xs = rng.uniform(-2, 4, 1000)
        assert np.all(kernel.diag(xs) <= kernel.sup_diag_bound() + 1e-12)
        print(f"✅ Diagonal of {kernel.family.value} test passed")

    def test_description_rebuilds_kernel(self):
        """Test from_description(describe())."""
        k = Kernel.polynomial(3, 0.5)
        rebuilt = Kernel.from_description(k.describe())
        assert rebuilt == k
        assert rebuilt.family is KernelFamily.POLYNOMIAL
        print("✅ Description test passed")
