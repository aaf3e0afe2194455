"""Frozen reference values for the analytic disc solution.

The decimal literals below were computed independently with 50-digit
interval Newton iterations on the Bessel series; they are the anchor
the discrete pipeline is measured against, so they must never drift.
"""

import math

import numpy as np
import pytest

from platebuckle import disc_oracle as oracle

J01 = 2.404825557695772768621632
J11 = 3.831705970207512315614436
LAM = 14.68197064212389325721978
LAM1 = 5.783185962946784521175996
C0 = 2.161808595608827831731528
J0_AT_J11 = -0.4027593957025529720960022
AMP = 0.3655840228073866029482963


def test_frozen_constants():
    tbl = oracle.reference_table()
    assert tbl["j01"] == pytest.approx(J01, rel=1e-15)
    assert tbl["j11"] == pytest.approx(J11, rel=1e-15)
    assert tbl["buckling_eigenvalue"] == pytest.approx(LAM, rel=1e-15)
    assert tbl["dirichlet_1"] == pytest.approx(LAM1, rel=1e-15)
    assert tbl["dirichlet_2"] == pytest.approx(LAM, rel=1e-15)
    assert tbl["c0"] == pytest.approx(C0, rel=1e-15)
    assert tbl["amplitude"] == pytest.approx(AMP, rel=1e-15)


def test_bessel_against_series_identities():
    # Wronskian-flavored cross check at the two roots
    assert oracle.bessel_j(0, J01) == pytest.approx(0.0, abs=1e-15)
    assert oracle.bessel_j(1, J11) == pytest.approx(0.0, abs=1e-15)
    assert oracle.bessel_j(0, J11) == pytest.approx(J0_AT_J11, rel=1e-15)
    # J0' = -J1 by finite differences away from the roots
    x = np.linspace(0.3, 6.0, 23)
    dh = 1e-6
    fd = (oracle.bessel_j(0, x + dh) - oracle.bessel_j(0, x - dh)) / (2 * dh)
    assert np.allclose(fd, -oracle.bessel_j(1, x), atol=1e-9)


def test_buckling_profile_is_clamped():
    sol = oracle.disc_buckling()
    assert sol.value_r(1.0) == pytest.approx(0.0, abs=1e-15)
    assert sol.dvalue_r(1.0) == pytest.approx(0.0, abs=1e-15)
    assert sol.value_r(0.0) > 0.0
    # rim Laplacian equals the overdetermined constant
    assert sol.laplacian_r(1.0) == pytest.approx(C0, rel=1e-12)


def test_w_identity_holds_at_interior_radii():
    for r in (0.0, 0.17, 0.5, 0.93):
        value, c0 = oracle.disc_w_identity(r=r)
        assert value == pytest.approx(c0, rel=1e-12)


def test_gradient_normalization():
    """int |grad u|^2 over the disc must be 1 for any radius."""
    for radius in (1.0, 2.0, 0.5):
        sol = oracle.disc_buckling(radius)
        r = np.linspace(0.0, radius, 4001)
        integrand = sol.dvalue_r(r) ** 2 * r
        total = 2.0 * math.pi * np.trapezoid(integrand, r)
        assert total == pytest.approx(1.0, rel=1e-6)


def test_partial_xy_matches_finite_differences():
    sol = oracle.disc_buckling()
    rng = np.random.default_rng(3)
    pts = 0.8 * rng.uniform(-0.7, 0.7, size=(40, 2))
    dh = 1e-6
    for axis in (0, 1):
        step = np.zeros(2)
        step[axis] = dh
        fd = (sol.value_xy(pts + step) - sol.value_xy(pts - step)) / (2 * dh)
        assert np.allclose(sol.partial_xy(pts, axis), fd, atol=1e-8)


def test_dirichlet_pair_normalization_and_mean():
    d1 = oracle.disc_dirichlet(index=1)
    d2 = oracle.disc_dirichlet(index=2)
    assert d1.eigenvalue == pytest.approx(LAM1, rel=1e-15)
    assert d2.eigenvalue == pytest.approx(LAM, rel=1e-15)
    assert d1.mean == pytest.approx(2.0 * math.sqrt(math.pi) / J01, rel=1e-15)
    assert d2.mean == 0.0
    # mass normalization, radial quadrature
    r = np.linspace(0.0, 1.0, 4001)
    for d in (d1, d2):
        radial = d.amplitude * oracle.bessel_j(d.angular_order, d.wavenumber * r)
        mass = np.trapezoid(radial**2 * r, r)
        ang = math.pi if d.angular_order else 2.0 * math.pi
        assert ang * mass == pytest.approx(1.0, rel=1e-6)


def test_scaling_by_radius():
    big = oracle.disc_buckling(2.0)
    assert big.eigenvalue == pytest.approx(LAM / 4.0, rel=1e-15)
    assert oracle.disc_c0(2.0) == pytest.approx(C0 / 4.0, rel=1e-15)
    assert oracle.disc_dirichlet(2.0, 2).eigenvalue == pytest.approx(LAM / 4.0, rel=1e-15)


def test_bad_inputs_raise():
    with pytest.raises(ValueError):
        oracle.disc_buckling(0.0)
    with pytest.raises(ValueError):
        oracle.disc_dirichlet(1.0, 3)
