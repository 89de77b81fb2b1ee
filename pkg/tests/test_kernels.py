import math

import numpy as np
import pytest

from oscvkde.errors import DegenerateKernel, InvalidParam, UnknownKernelLabel
from oscvkde.functionals import first_moment, second_moment, total_mass
from oscvkde.kernels import (
    LI_CANDIDATES,
    ROBUST_LI,
    LIParams,
    gaussian,
    kernel_from_label,
    make_base_kernel,
    make_LI,
    make_one_sided,
    make_polynomial_onesided,
    one_sided_gaussian,
    rescale_kernel,
)

import oracles


def test_gaussian_at_origin():
    assert gaussian()(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-15)


def test_epanechnikov_vanishes_at_support_edges():
    K = make_base_kernel("epanechnikov")
    assert K(1.0) == 0.0
    assert K(-1.0) == 0.0


def test_quartic_second_moment():
    assert second_moment(make_base_kernel("quartic")) == pytest.approx(1.0 / 7.0, abs=1e-12)


def test_support_discipline():
    u = np.array([-5.0, -1.0000001, 1.0000001, 3.0])
    for name in ("epanechnikov", "quartic"):
        assert np.all(make_base_kernel(name)(u) == 0.0)
    for L in (one_sided_gaussian(), make_LI(ROBUST_LI), make_polynomial_onesided("L2")):
        assert np.all(L(np.array([-1e-12, -0.5, -7.0])) == 0.0)
    assert np.all(make_polynomial_onesided("L1")(np.array([1.5, 10.0])) == 0.0)


def test_unknown_base_kernel():
    with pytest.raises(UnknownKernelLabel):
        make_base_kernel("cosine")


def test_one_sided_gaussian_origin_value():
    expected = 0.5 * (1.0 / math.sqrt(2.0 * math.pi)) / (0.25 - 1.0 / (2.0 * math.pi))
    assert one_sided_gaussian()(0.0) == pytest.approx(expected, rel=1e-10)


def test_one_sided_gaussian_matches_closed_form():
    L = one_sided_gaussian()
    for u in (0.0, 0.3, 1.0, 2.5, 6.0):
        assert L(u) == pytest.approx(oracles.one_sided_gaussian(u), rel=1e-10, abs=1e-15)


def test_one_sided_epanechnikov_matches_closed_form():
    L = make_one_sided(make_base_kernel("epanechnikov"))
    assert L.support == (0.0, 1.0)
    for u in (0.0, 0.25, 0.5, 0.9, 1.0):
        assert L(u) == pytest.approx(oracles.one_sided_epanechnikov(u), rel=1e-10, abs=1e-14)
    assert total_mass(L) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("name", ["gaussian", "epanechnikov", "quartic"])
def test_one_sided_is_second_order(name):
    L = make_one_sided(make_base_kernel(name))
    assert total_mass(L) == pytest.approx(1.0, abs=1e-8)
    assert abs(first_moment(L)) < 1e-8
    assert L.one_sided and not L.symmetric


def test_degenerate_one_sided():
    # an identically zero H has a vanishing half-moment determinant
    from oscvkde.kernels import Kernel

    zero = Kernel(lambda u: np.zeros_like(u), (-1.0, 1.0), True, "zero")
    with pytest.raises(DegenerateKernel):
        make_one_sided(zero)


def test_li_coefficients():
    p = LIParams(4.0, 0.8)
    assert p.a == pytest.approx(2 * math.pi * (1 + 4 - 4 * 0.64))
    assert p.b_coef == pytest.approx(-2 * math.sqrt(2 * math.pi) * (1 + 4 - 3.2))
    assert p.c == pytest.approx(math.pi * (1 + 4 - 2.56) - 2 * (1.8) ** 2)


@pytest.mark.parametrize("params", [LIParams(0.0, 2.0), LIParams(7.5, 1.0), LIParams(0.0, 0.3)])
def test_li_collapses_to_one_sided_gaussian(params):
    L = make_LI(params)
    ref = one_sided_gaussian()
    u = np.linspace(0.0, 6.0, 100)
    assert np.max(np.abs(L(u) - ref(u))) < 1e-10
    for v in (0.0, 0.5, 1.0, 2.0):
        assert L(v) == pytest.approx(ref(v), abs=1e-10)


def test_li_zero_at_origin():
    assert make_LI(LIParams(4.0, 0.8))(0.0) == 0.0


@pytest.mark.parametrize("params", list(LI_CANDIDATES))
def test_li_candidates_second_order(params):
    L = make_LI(params)
    assert total_mass(L) == pytest.approx(1.0, abs=1e-8)
    assert abs(first_moment(L)) < 1e-8


def test_li_rejects_bad_sigma():
    with pytest.raises(InvalidParam):
        LIParams(1.0, 0.0)
    with pytest.raises(InvalidParam):
        LIParams(1.0, -2.0)
    with pytest.raises(InvalidParam):
        LIParams(math.nan, 1.0)


def test_li_rejects_zero_c():
    # at sigma = 2, c = pi (1 - 3 alpha) - 2 (1 - alpha)^2 changes sign on (0.01, 0.5)
    from scipy.optimize import brentq

    alpha = brentq(lambda a: LIParams(a, 2.0).c, 0.01, 0.5, xtol=1e-15)
    with pytest.raises(DegenerateKernel):
        make_LI(LIParams(alpha, 2.0))


def test_polynomial_kernels():
    L1, L3 = make_polynomial_onesided("L1"), make_polynomial_onesided("L3")
    assert L1(0.0) == 0.0 and L1(1.0) == 0.0
    assert L3(10.0 / 18.0) == pytest.approx(0.0, abs=1e-13)
    for which in ("L1", "L2", "L3"):
        L = make_polynomial_onesided(which)
        assert total_mass(L) == pytest.approx(1.0, abs=1e-12)
        assert abs(first_moment(L)) < 1e-12


def test_polynomial_integrals_exactly():
    # exact polynomial integration as an independent check
    from numpy.polynomial import Polynomial as P

    u = P([0, 1])
    L1 = 6 * u * (1 - u) * (6 - 10 * u)
    assert L1.integ()(1) - L1.integ()(0) == pytest.approx(1.0, abs=1e-14)
    assert (u * L1).integ()(1) == pytest.approx(0.0, abs=1e-14)


def test_unknown_polynomial():
    with pytest.raises(UnknownKernelLabel):
        make_polynomial_onesided("L4")


def test_rescale_kernel_keeps_mass():
    K = rescale_kernel(make_LI(LIParams(0.4275, 10.0)), 2.0)
    assert total_mass(K) == pytest.approx(1.0, abs=1e-8)
    assert K(1.0) == pytest.approx(2.0 * make_LI(LIParams(0.4275, 10.0))(2.0))
    with pytest.raises(InvalidParam):
        rescale_kernel(gaussian(), 0.0)


def test_tie_value():
    assert gaussian().tie_value == gaussian()(0.0)
    assert one_sided_gaussian().tie_value == 0.5 * one_sided_gaussian()(0.0)
    assert make_LI(LIParams(4.0, 0.8)).tie_value == 0.0


@pytest.mark.parametrize(
    "label", ["gaussian", "epanechnikov", "quartic", "one_sided:gaussian", "one_sided:quartic", "LI:4:0.8", "L1", "L3"]
)
def test_labels_round_trip(label):
    assert kernel_from_label(label).label == label


def test_label_resolution_caches():
    assert kernel_from_label("one_sided:gaussian") is one_sided_gaussian()
    assert kernel_from_label("LI:16.8954588:1.01") is make_LI(ROBUST_LI)


@pytest.mark.parametrize("label", ["", "one_sided:foo", "LI:1", "LI:a:b", "L9", "cauchy"])
def test_bad_labels(label):
    with pytest.raises(UnknownKernelLabel):
        kernel_from_label(label)
