"""Kernel axioms: unit mass, symmetry, scaling, and second-order smoothing."""

import math

import numpy as np
import pytest

from langirl.core import ConfigError
from langirl.kernels import (
    FAMILIES,
    GAUSSIAN,
    TRUNCATED_GAUSSIAN,
    TRUNCATION_RADIUS,
    Kernel,
    raw_eval,
    scaled_eval,
    verify_kernel_axioms,
)


def smoothing_error(kernel: Kernel, bandwidth: float, nodes: int = 4001) -> float:
    """Quadrature oracle for the kernel-smoothing bias of a known test function.

    Convolves f(x) = cos(x) with the bandwidth-scaled kernel at x = 0 and
    returns the difference from f(0). For a symmetric unit-mass kernel the
    bias is (bandwidth**2 / 2) * f''(0) * m2 + higher order, so halving the
    bandwidth should shrink it by a factor close to 4.
    """
    u = np.linspace(-8.0, 8.0, nodes)
    k = raw_eval(Kernel(kernel.family, 1.0, 1), u[:, None])
    smeared = np.trapezoid(k * np.cos(bandwidth * u), u)
    return float(abs(smeared - 1.0))


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("dim", [1, 2])
def test_unit_mass(family, dim):
    report = verify_kernel_axioms(Kernel(family, 1.0, dim))
    assert abs(report.mass - 1.0) <= 1e-6


def test_unit_mass_three_dim():
    # The cutoff shell of the compact-support family limits tensor-grid
    # resolution in 3-D, hence the looser bound for that family.
    gauss = verify_kernel_axioms(Kernel(GAUSSIAN, 1.0, 3))
    assert abs(gauss.mass - 1.0) <= 1e-6
    trunc = verify_kernel_axioms(Kernel(TRUNCATED_GAUSSIAN, 1.0, 3))
    assert abs(trunc.mass - 1.0) <= 1e-5


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("dim", [1, 2, 3])
def test_symmetry(family, dim):
    report = verify_kernel_axioms(Kernel(family, 1.0, dim))
    assert report.symmetry_error < 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_second_moment_is_finite_and_positive(family):
    report = verify_kernel_axioms(Kernel(family, 1.0, 1))
    assert 0.5 < report.second_moment < 1.5


@pytest.mark.parametrize("family", FAMILIES)
def test_smoothing_error_shrinks_at_second_order(family):
    kernel = Kernel(family, 1.0, 1)
    coarse = smoothing_error(kernel, 0.2)
    fine = smoothing_error(kernel, 0.1)
    assert 3.5 <= coarse / fine <= 4.5


class TestEvaluation:
    def test_gaussian_matches_closed_form(self):
        kernel = Kernel(GAUSSIAN, 1.0, 2)
        pts = np.array([[0.0, 0.0], [1.0, -1.0], [2.5, 0.5]])
        expected = (2 * math.pi) ** -1 * np.exp(-0.5 * np.sum(pts**2, axis=1))
        np.testing.assert_allclose(raw_eval(kernel, pts), expected, rtol=1e-14)

    def test_scaled_eval_applies_bandwidth_power(self):
        kernel = Kernel(GAUSSIAN, 0.25, 3)
        diff = np.array([0.1, -0.2, 0.05])
        direct = 0.25**-3 * raw_eval(Kernel(GAUSSIAN, 1.0, 3), diff / 0.25)
        np.testing.assert_allclose(scaled_eval(kernel, diff), direct, rtol=1e-14)

    def test_truncation_zeroes_the_tail(self):
        kernel = Kernel(TRUNCATED_GAUSSIAN, 1.0, 1)
        inside = raw_eval(kernel, np.array([TRUNCATION_RADIUS - 1e-9]))
        outside = raw_eval(kernel, np.array([TRUNCATION_RADIUS + 1e-9]))
        assert inside > 0.0
        assert outside == 0.0

    def test_truncated_exceeds_gaussian_inside_support(self):
        # Renormalization pushes the truncated density up where it survives.
        g = raw_eval(Kernel(GAUSSIAN, 1.0, 2), np.zeros(2))
        t = raw_eval(Kernel(TRUNCATED_GAUSSIAN, 1.0, 2), np.zeros(2))
        assert t > g

    def test_batched_shapes(self):
        kernel = Kernel(GAUSSIAN, 0.5, 2)
        out = scaled_eval(kernel, np.zeros((4, 7, 2)))
        assert out.shape == (4, 7)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            raw_eval(Kernel(GAUSSIAN, 1.0, 2), np.zeros(3))


def test_kernel_validation():
    with pytest.raises(ConfigError):
        Kernel("triweight", 1.0, 1)
    with pytest.raises(ConfigError):
        Kernel(GAUSSIAN, 0.0, 1)
    with pytest.raises(ConfigError):
        Kernel(GAUSSIAN, math.inf, 1)
    with pytest.raises(ConfigError):
        Kernel(GAUSSIAN, 1.0, 0)


def test_axiom_quadrature_dim_limit():
    with pytest.raises(ConfigError):
        verify_kernel_axioms(Kernel(GAUSSIAN, 1.0, 4))
