import math

import numpy as np
import pytest

from platebuckle import mesher
from platebuckle.geometry import make_disc, make_ellipse, make_fourier_domain


def _areas(mesh):
    p = mesh.points
    t = mesh.triangles
    d1 = p[t[:, 1]] - p[t[:, 0]]
    d2 = p[t[:, 2]] - p[t[:, 0]]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def test_disc_mesh_shape_and_orientation():
    mesh = mesher.triangulate(make_disc(), h=0.1)
    areas = _areas(mesh)
    assert np.all(areas > 0.0)
    assert areas.sum() == pytest.approx(math.pi, rel=5e-3)
    # every boundary vertex sits on the unit circle
    ids = mesher.boundary_node_ids(mesh)
    assert np.allclose(np.hypot(*mesh.points[ids].T), 1.0, atol=1e-12)


def test_boundary_theta_is_consistent():
    curve = make_ellipse(1.5, 1.0)
    mesh = mesher.triangulate(curve, h=0.1)
    th = mesh.boundary_theta
    start = curve.point(th[:, 0])
    assert np.allclose(start, mesh.points[mesh.boundary_edges[:, 0]], atol=1e-12)
    # parameters increase over each edge and tile [0, 2 pi)
    gaps = np.mod(th[:, 1] - th[:, 0], 2.0 * math.pi)
    assert np.all(gaps > 0.0)
    assert gaps.sum() == pytest.approx(2.0 * math.pi, rel=1e-12)


def test_mesh_quality_bounds():
    mesh = mesher.triangulate(make_fourier_domain(cos_coeffs=(0.0, 0.15)), h=0.1)
    q = mesher.mesh_quality(mesh)
    assert q["min_angle_deg"] > 20.0
    assert q["max_edge"] < 3.0 * q["min_edge"]
    assert q["area"] == pytest.approx(math.pi * (1 + 0.15**2 / 2), rel=5e-3)


def test_refine_quarters_the_triangles():
    curve = make_disc()
    coarse = mesher.triangulate(curve, h=0.2)
    fine = mesher.refine(coarse, curve)
    assert len(fine.triangles) == 4 * len(coarse.triangles)
    assert fine.h == pytest.approx(0.1)
    assert _areas(fine).min() > 0.0
    # boundary midpoints were pushed back onto the exact curve
    ids = mesher.boundary_node_ids(fine)
    assert np.allclose(np.hypot(*fine.points[ids].T), 1.0, atol=1e-12)
    # refined area is closer to pi than the coarse one
    gap_c = abs(_areas(coarse).sum() - math.pi)
    gap_f = abs(_areas(fine).sum() - math.pi)
    assert gap_f < 0.3 * gap_c


def test_save_load_round_trip(tmp_path):
    mesh = mesher.triangulate(make_disc(), h=0.15)
    path = tmp_path / "mesh.txt"
    mesher.save_mesh(mesh, path)
    back = mesher.load_mesh(path)
    assert np.array_equal(back.points, mesh.points)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
    assert np.array_equal(back.boundary_theta, mesh.boundary_theta)
    blob1 = path.read_bytes()
    mesher.save_mesh(back, path)
    assert path.read_bytes() == blob1


def test_unresolved_curvature_is_refused():
    wiggly = make_fourier_domain(cos_coeffs=(0.0, 0.0, 0.0, 0.0, 0.0, 0.12))
    with pytest.raises(mesher.MeshError):
        mesher.triangulate(wiggly, h=0.28)


def test_determinism():
    a = mesher.triangulate(make_disc(), h=0.1)
    b = mesher.triangulate(make_disc(), h=0.1)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.triangles, b.triangles)
