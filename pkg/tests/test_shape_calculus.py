"""Variation formulas, the shape-derivative solve, energies, and the trial
function, checked on cached disc and ellipse solves."""

import math

import numpy as np
import pytest

import platebuckle.discretization as dz
import platebuckle.shape_calculus as sc
from platebuckle.disc_oracle import disc_buckling
from platebuckle.geometry import (
    make_disc,
    make_normal_field,
    make_translation_field,
    project_volume_preserving,
)

C0 = 2.161808595608827831731528
STEP = 0.02


def oracle_partial(ds, axis):
    sol = disc_buckling()
    return dz.interpolate(ds.space, lambda p: sol.partial_xy(p, axis))


def mode_field(curve, mode):
    raw = make_normal_field(curve, lambda th: np.cos(mode * th))
    return project_volume_preserving(curve, raw)


# ---------------------------------------------------------------------------
# criticality


def test_disc_is_critical(disc2):
    rep = sc.criticality_report(disc2)
    assert rep.critical
    assert rep.trace_dev <= 0.05
    assert rep.mean_error <= 0.03, f"trace mean {rep.trace_mean} vs c0 {rep.c0}"
    assert abs(rep.trace_mean - C0) / C0 <= 0.03
    assert rep.rel_error <= 0.02
    assert rep.rel_value > 0.0
    assert rep.w_residual_rel <= 0.05


def test_ellipse_trips_criticality_gate(ellipse1):
    # contrapositive: a non-ball cannot have constant boundary trace
    rep = sc.criticality_report(ellipse1)
    assert not rep.critical
    assert rep.trace_dev > 0.05


# ---------------------------------------------------------------------------
# first variation


def test_normal_speed_first_variation(disc1):
    """v = nu shrinks the disc uniformly; the slope is -2 Lambda."""
    vnu = make_normal_field(disc1.curve, lambda th: np.ones_like(th))
    rep = sc.variation_check(disc1, vnu, step=STEP)
    gap = abs(rep.first_formula - rep.first_fd) / abs(rep.first_fd)
    assert gap <= 0.05, f"formula {rep.first_formula} vs FD {rep.first_fd}"
    assert abs(rep.first_formula + 2.0 * disc1.lam) <= 0.05 * 2.0 * disc1.lam


def test_translation_first_variation_vanishes(disc1):
    rep = sc.variation_check(disc1, make_translation_field(0), step=STEP)
    assert abs(rep.first_formula) <= 0.02 * disc1.lam
    assert abs(rep.first_fd) <= 0.02 * disc1.lam


# ---------------------------------------------------------------------------
# shape derivative


def test_shape_derivative_matches_oracle(disc2):
    """Translating the disc transports u, so u' = -d1 u."""
    up = sc.solve_shape_derivative(disc2, make_translation_field(0))
    ref = dz.interpolate(
        disc2.space, lambda p: -disc_buckling().partial_xy(p, 0)
    )
    diff = up.coeffs - ref.coeffs
    num = math.sqrt(diff @ (disc2.R.matrix @ diff))
    den = math.sqrt(ref.coeffs @ (disc2.R.matrix @ ref.coeffs))
    assert num / den <= 0.05, f"energy-norm distance {num / den:.4f}"
    borth = abs(disc2.u.coeffs @ (disc2.B.matrix @ up.coeffs))
    assert borth <= 1e-10
    nres = sc.neumann_residual(disc2, up, make_translation_field(0))
    assert nres <= 0.05


def test_shape_derivative_refuses_noncritical(ellipse1):
    with pytest.raises(sc.GateError, match="not critical"):
        sc.solve_shape_derivative(ellipse1, make_translation_field(0))


def test_second_variation_mode2(disc1):
    fld = mode_field(disc1.curve, 2)
    rep = sc.variation_check(disc1, fld, step=STEP, second=True)
    gap = abs(rep.second_formula - rep.second_fd) / abs(rep.second_fd)
    assert gap <= 0.10, f"2E(u') {rep.second_formula} vs FD {rep.second_fd}"


# ---------------------------------------------------------------------------
# energies


def test_kernel_energy_shrinks_under_refinement(disc1, disc2):
    """E(d1 u) is zero in the continuum; the discrete value must decay."""
    coarse = abs(sc.energy_E(disc1, oracle_partial(disc1, 0)))
    fine = abs(sc.energy_E(disc2, oracle_partial(disc2, 0)))
    lam2 = disc2.dirichlet[1].value
    assert coarse <= 0.02 * lam2 ** 2
    assert fine < coarse


def test_energy_forms_agree(disc2):
    # the Hessian route adds the curvature boundary term by hand
    for fld in (oracle_partial(disc2, 0), sc.build_psi(disc2).field):
        e1, e2, rel, scale = sc.energy_comparison(disc2, fld)
        assert scale > 1e-12
        assert math.isfinite(e2)
        assert rel <= 0.05, f"E1 {e1} vs E2 {e2}, rel {rel:.2%}"


def test_tilde_energy_flags_clamped_field(disc1, disc2):
    # the eigenfunction has no boundary flux; the ratio must report +inf
    assert math.isinf(sc.tilde_energy(disc1, disc1.u))
    assert math.isinf(sc.tilde_energy(disc2, disc2.u))


def test_tilde_energy_small_on_kernel_fields(disc1, disc2):
    assert abs(sc.tilde_energy(disc1, oracle_partial(disc1, 0))) <= 0.02
    assert abs(sc.tilde_energy(disc2, oracle_partial(disc2, 0))) <= 0.02
    assert abs(sc.tilde_energy(disc2, sc.build_psi(disc2).field)) <= 0.02


# ---------------------------------------------------------------------------
# the cone Z


def test_z_membership_verdicts(disc1):
    rep = sc.z_membership(disc1, oracle_partial(disc1, 0))
    assert rep.member
    assert rep.normal_mass > sc.POSITIVITY_TOL
    assert not sc.z_membership(disc1, disc1.u).member


def test_z_membership_scale_invariant(disc1):
    """Rescaling a field must not change any membership verdict."""
    for fld, want in ((oracle_partial(disc1, 0), True), (disc1.u, False)):
        big = dz.DiscreteField(
            disc1.space, 250.0 * fld.coeffs, fld.kind, meta=dict(fld.meta)
        )
        assert sc.z_membership(disc1, fld).member is want
        assert sc.z_membership(disc1, big).member is want


def test_z_samples_are_members(disc1):
    samples = sc.z_samples(disc1, count=8, seed=7)
    lam2 = disc1.dirichlet[1].value
    assert len(samples) == 8
    for fld in samples:
        rep = sc.z_membership(disc1, fld)
        assert rep.member
        assert sc.energy_E(disc1, fld) >= -0.02 * lam2 ** 2
        mass = fld.coeffs @ (disc1.M.matrix @ fld.coeffs)
        assert abs(mass - 1.0) <= 1e-10


# ---------------------------------------------------------------------------
# trial function and the eigenvalue inequality


def test_build_psi_disc(disc2):
    """On the disc the second Dirichlet mode has zero mean, so t = 1 and
    the radial/angular orthogonality kills c."""
    rep = sc.build_psi(disc2)
    assert abs(rep.t - 1.0) <= 1e-6
    assert abs(rep.c) <= 1e-6
    assert rep.mean1 > 0.0
    assert abs(rep.mean2) <= 1e-8
    assert sc.z_membership(disc2, rep.field).member
    lam2 = disc2.dirichlet[1].value
    assert abs(rep.quadrature) <= 0.02 * lam2 ** 2


def test_build_psi_ellipse(ellipse1):
    rep = sc.build_psi(ellipse1)
    assert 0.0 < rep.t <= 1.0
    assert sc.z_membership(ellipse1, rep.field).member
    assert rep.field.meta["boundary_flux"] == 0.0


def test_psi_forced_weight_matches_closed_form(disc2):
    quad, closed = sc.psi_energy_identity(disc2, force_t=0.5)
    assert abs(quad - closed) <= 0.10 * abs(closed), f"{quad} vs {closed}"
    assert closed < 0.0


@pytest.mark.parametrize("bad_t", [0.0, 1.5, -0.2])
def test_psi_forced_weight_rejects_bad_t(disc2, bad_t):
    with pytest.raises(sc.PsiError, match="outside"):
        sc.psi_energy_identity(disc2, force_t=bad_t)


def test_payne_disc_equality_and_ellipse_gap(disc2, ellipse1):
    """lambda_2 <= Lambda, with equality on the ball only."""
    lam, lam2, gap, rel = sc.payne_check(disc2)
    assert lam2 <= lam or abs(rel) <= 0.01
    assert abs(rel) <= 0.01
    lam, lam2, gap, rel = sc.payne_check(ellipse1)
    assert gap > 0.0
    assert rel > 0.02
