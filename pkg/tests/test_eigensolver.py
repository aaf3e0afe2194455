import numpy as np
import pytest

from platebuckle import discretization as dz
from platebuckle import eigensolver as es
from platebuckle import mesher
from platebuckle.geometry import make_disc


@pytest.fixture(scope="module")
def disc_problem():
    mesh = mesher.triangulate(make_disc(), h=0.1)
    A, B, space = dz.assemble_buckling(mesh)
    return A, B, space


def test_buckling_pair_count_and_order(disc_problem):
    A, B, space = disc_problem
    pairs = es.solve_smallest(A, B, space, k=3)
    vals = [p.value for p in pairs]
    assert len(vals) == 3
    assert vals == sorted(vals)
    assert vals[0] > 0.0


def test_b_orthonormality(disc_problem):
    A, B, space = disc_problem
    pairs = es.solve_smallest(A, B, space, k=3)
    for i, p in enumerate(pairs):
        for j, q in enumerate(pairs):
            dot = p.field.coeffs @ (B.matrix @ q.field.coeffs)
            assert abs(dot - (i == j)) < 1e-10


def test_residuals_within_gate(disc_problem):
    A, B, space = disc_problem
    pairs = es.solve_smallest(A, B, space, k=2)
    for p in pairs:
        assert p.residual < 1e-6


def test_constrained_dofs_stay_zero(disc_problem):
    A, B, space = disc_problem
    pairs = es.solve_smallest(A, B, space, k=1)
    assert np.all(pairs[0].field.coeffs[space.boundary_dofs] == 0.0)


def test_determinism(disc_problem):
    A, B, space = disc_problem
    a = es.solve_smallest(A, B, space, k=2)
    b = es.solve_smallest(A, B, space, k=2)
    for p, q in zip(a, b):
        assert p.value == q.value
        assert np.array_equal(p.field.coeffs, q.field.coeffs)


def test_dirichlet_cluster_labels(disc_problem):
    """The second Dirichlet eigenvalue of the disc is a double pair; the
    solver must tag the two discrete values as one cluster."""
    _, _, space = disc_problem
    K, M, _ = dz.assemble_laplace(space.mesh, space)
    pairs = es.solve_smallest(K, M, space, k=4, kind="dirichlet")
    assert pairs[0].cluster != pairs[1].cluster
    assert pairs[1].cluster == pairs[2].cluster
    assert abs(pairs[1].value - pairs[2].value) < 1e-6 * pairs[1].value


def test_scaled_mesh_scales_the_spectrum():
    """Both forms scale with the domain, so eigenvalues scale by 1/R^2
    exactly when the meshes are scaled copies."""
    lam = {}
    for radius, h in ((1.0, 0.2), (2.0, 0.4)):
        mesh = mesher.triangulate(make_disc(radius), h=h)
        A, B, space = dz.assemble_buckling(mesh)
        lam[radius] = es.solve_smallest(A, B, space, k=1)[0].value
    assert lam[2.0] == pytest.approx(lam[1.0] / 4.0, rel=1e-11)


def test_spectral_gap(disc_problem):
    A, B, space = disc_problem
    pairs = es.solve_smallest(A, B, space, k=2)
    gap = es.spectral_gap(pairs)
    assert gap == pytest.approx(
        (pairs[1].value - pairs[0].value) / pairs[0].value, rel=1e-12)
    assert gap > 0.1  # the disc's lowest buckling mode is well separated
