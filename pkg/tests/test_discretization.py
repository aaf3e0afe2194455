"""Element-level correctness of the three quadratic forms.

The split matters: the bending form A carries the clamping terms and is
only meaningful on fields that vanish to first order at the boundary;
the energy form Q is consistent for any H^2 field; the raw Hessian form
R has no edge terms at all.  Several tests pin that split.
"""

import math

import numpy as np
import pytest

from platebuckle import discretization as dz
from platebuckle import mesher
from platebuckle.disc_oracle import disc_buckling
from platebuckle.geometry import make_disc


@pytest.fixture(scope="module")
def disc_mesh():
    return mesher.triangulate(make_disc(), h=0.1)


@pytest.fixture(scope="module")
def space(disc_mesh):
    return dz.build_space(disc_mesh)


def test_dof_layout(space):
    mesh = space.mesh
    assert space.ndof == len(mesh.points) + len(space.edges)
    assert space.element_dofs.shape == (len(mesh.triangles), 6)
    # every edge midpoint dof is shared by at most two triangles
    counts = np.bincount(space.element_dofs[:, 3:].ravel() - len(mesh.points))
    assert counts.max() <= 2


def test_p2_interpolation_is_exact_for_quadratics(space):
    def q(p):
        return 1.0 + 2.0 * p[:, 0] - p[:, 1] + 0.5 * p[:, 0] ** 2 \
            + p[:, 0] * p[:, 1] - 1.5 * p[:, 1] ** 2

    fld = dz.interpolate(space, q)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.6, 0.6, size=(50, 2))
    val, grad, lap = dz.evaluate(fld, pts)
    assert np.allclose(val, q(pts), atol=1e-12)
    assert np.allclose(grad[:, 0], 2.0 + pts[:, 0] + pts[:, 1], atol=1e-11)
    assert np.allclose(grad[:, 1], -1.0 + pts[:, 0] - 3.0 * pts[:, 1], atol=1e-11)
    assert np.allclose(lap, 0.5 * 2 - 1.5 * 2, atol=1e-10)


def test_quadratic_energies_are_exact(disc_mesh, space):
    """For q = x^2 + x y + y^2 interpolated exactly: R gives the Frobenius
    integral, Q the Laplacian integral, K the gradient integral."""
    mesh_area = float(np.sum(dz.build_space(disc_mesh).geometry()[3]))
    fld = dz.interpolate(space, lambda p: p[:, 0] ** 2 + p[:, 0] * p[:, 1] + p[:, 1] ** 2)
    R = dz.assemble_hessian_form(space)
    Q = dz.assemble_energy_form(space)
    f = fld.coeffs
    assert f @ (R.matrix @ f) == pytest.approx(10.0 * mesh_area, rel=1e-12)
    assert f @ (Q.matrix @ f) == pytest.approx(16.0 * mesh_area, rel=1e-10)
    K, M, _ = dz.assemble_laplace(space.mesh, space)
    one = dz.interpolate(space, lambda p: np.ones(len(p)))
    assert one.coeffs @ (K.matrix @ one.coeffs) == pytest.approx(0.0, abs=1e-12)
    assert one.coeffs @ (M.matrix @ one.coeffs) == pytest.approx(mesh_area, rel=1e-12)


def test_bending_form_punishes_nonclamped_fields(disc_mesh):
    """A includes the boundary clamping terms, so a field with a nonzero
    boundary normal derivative gets a large spurious energy while Q stays
    consistent.  This is the designed behavior, not a bug."""
    A, B, space = dz.assemble_buckling(disc_mesh)
    Q = dz.assemble_energy_form(space)
    fld = dz.interpolate(space, lambda p: p[:, 0] ** 2)
    f = fld.coeffs
    a_val = f @ (A.matrix @ f)
    q_val = f @ (Q.matrix @ f)
    assert q_val == pytest.approx(4.0 * space.geometry()[3].sum(), rel=1e-10)
    assert a_val > 20.0 * q_val


def test_volume_integral(space):
    _, M, _ = dz.assemble_laplace(space.mesh, space)
    fld = dz.interpolate(space, lambda p: 2.0 + p[:, 0])
    mesh_area = float(space.geometry()[3].sum())
    assert dz.volume_integral(M, fld) == pytest.approx(2.0 * mesh_area, rel=1e-12)


def test_boundary_quadrature_measures_the_circle(disc_mesh):
    theta, w, pts, normals = dz.boundary_quadrature(disc_mesh, make_disc(), order=4)
    assert w.sum() == pytest.approx(2.0 * math.pi, rel=1e-12)
    assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-12)
    assert np.allclose(normals, pts, atol=1e-12)
    # the weighted x moment of the circle vanishes
    assert abs((w * pts[:, 0]).sum()) < 1e-13


def test_recovered_boundary_laplacian_of_the_oracle(disc_mesh):
    """Patch recovery reproduces the analytic trace Delta u = c0 within
    a percent at h = 0.1; the quadratic boundary fits are what make
    this work (one-sided linear fits carry an O(h) curvature bias)."""
    sol = disc_buckling()
    fine = mesher.refine(disc_mesh, make_disc())
    space = dz.build_space(fine)
    fld = dz.interpolate(space, sol.value_xy)
    theta, vals = dz.boundary_laplacian_samples(fld, order=2)
    assert np.mean(vals) == pytest.approx(sol.c0, rel=2e-2)
    assert np.max(np.abs(vals - sol.c0)) < 0.04 * sol.c0


def test_interior_recovery_accuracy(disc_mesh):
    """Recovered Laplacian error at interior points drops at second
    order under refinement."""
    sol = disc_buckling()
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.4, 0.4, size=(120, 2))
    exact = sol.laplacian_r(np.hypot(pts[:, 0], pts[:, 1]))
    scale = np.max(np.abs(exact))

    def worst(mesh):
        space = dz.build_space(mesh)
        fld = dz.interpolate(space, sol.value_xy)
        rec = dz.recovered_at_points(fld, dz.laplacian_recovery(fld), pts)
        return np.max(np.abs(rec - exact))

    coarse = worst(disc_mesh)
    fine = worst(mesher.refine(disc_mesh, make_disc()))
    assert coarse < 0.035 * scale
    assert fine < 0.35 * coarse


def test_boundary_gradient_extension(disc_mesh):
    sol = disc_buckling()
    space = dz.build_space(disc_mesh)
    fld = dz.interpolate(space, sol.value_xy)
    theta, grad = dz.boundary_gradient_samples(fld, make_disc(), order=2)
    # clamped: the full gradient vanishes on the rim, O(h^2) in the interpolant
    assert np.max(np.hypot(grad[:, 0], grad[:, 1])) < 5e-3


def test_save_form_round_trip(tmp_path, space):
    R = dz.assemble_hessian_form(space)
    path = tmp_path / "form.txt"
    dz.save_form(R, path)
    lines = path.read_text().splitlines()
    n, nnz, tag = lines[0].split()
    assert int(n) == space.ndof and tag == "hessian"
    assert len(lines) == int(nnz) + 1
    # repr round-trips every stored value exactly
    i, j, v = lines[1].split()
    row, col = int(i), int(j)
    assert float(v) == R.matrix[row, col]


def test_symmetry_and_kernel(disc_mesh):
    A, B, space = dz.assemble_buckling(disc_mesh)
    for form in (A, B):
        gap = abs(form.matrix - form.matrix.T)
        assert gap.max() < 1e-14
    # constants lie in the kernel of B
    one = np.ones(space.ndof)
    assert np.max(np.abs(B.matrix @ one)) < 1e-12
