"""Quadratic C0 interior-penalty discretization of the clamped plate forms.

Continuous degree-2 elements cannot be H^2-conforming, so the fourth-order
bilinear form is assembled element by element and repaired on edges:
consistency and symmetry terms couple the mean second normal derivative to
the jump of the first one, and a penalty sigma/h_e controls that jump.  On
boundary edges the same three terms enforce the clamping condition
d_nu(phi) = 0 weakly (Nitsche style), while phi = 0 is imposed strongly by
constraining every boundary node.

Three independent quadratic forms near |Delta phi|^2 coexist here and are
deliberately kept apart:

* the solver form A: element integral of D2phi : D2chi plus all edge terms,
  coercive, used for the eigenproblem and the shape-derivative system;
* the energy form Q: element integral of (Delta phi)(Delta chi) minus the
  interior-edge consistency pairs, no penalty and no boundary terms; it
  approximates the integral of Delta phi Delta chi for fields that are only
  H^1_0 (nonzero boundary normal derivative), where A's boundary penalty
  would be infinite in the limit;
* the raw Hessian form R: element integral of D2phi : D2chi alone, which
  combined with the curvature boundary term gives the second representation
  of the energy functional.

Second derivatives of a degree-2 field are piecewise constant, so point
values of Delta phi are recovered by an area-weighted least-squares linear
fit over vertex patches before being traced to the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import TAU
from .mesher import Mesh

__all__ = [
    "P2Space",
    "SparseSymmetricForm",
    "DiscreteField",
    "DiscretizationError",
    "build_space",
    "assemble_buckling",
    "assemble_laplace",
    "assemble_energy_form",
    "assemble_hessian_form",
    "assemble_neumann_rhs",
    "interpolate",
    "evaluate",
    "hessian_recovery",
    "laplacian_recovery",
    "recovered_at_points",
    "boundary_laplacian_samples",
    "boundary_gradient_samples",
    "boundary_quadrature",
    "volume_integral",
    "save_form",
]


class DiscretizationError(ValueError):
    """Assembly or evaluation failure."""


# ---------------------------------------------------------------------------
# reference element: P2 on the unit triangle, nodes (vertices, edge midpoints)
# local dof order: v0 v1 v2 m01 m12 m20

_EDGE_SLOT_VERTS = ((0, 1), (1, 2), (2, 0))

# constant reference Hessians of the six shape functions
_HREF = np.array(
    [
        [[4.0, 4.0], [4.0, 4.0]],
        [[4.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 4.0]],
        [[-8.0, -4.0], [-4.0, 0.0]],
        [[0.0, 4.0], [4.0, 0.0]],
        [[0.0, -4.0], [-4.0, -8.0]],
    ]
)


def _ref_values(xi, eta):
    l0 = 1.0 - xi - eta
    return np.stack(
        [
            l0 * (2.0 * l0 - 1.0),
            xi * (2.0 * xi - 1.0),
            eta * (2.0 * eta - 1.0),
            4.0 * l0 * xi,
            4.0 * xi * eta,
            4.0 * eta * l0,
        ],
        axis=-1,
    )


def _ref_grads(xi, eta):
    l0 = 1.0 - xi - eta
    z = np.zeros_like(xi)
    gx = np.stack(
        [
            -(4.0 * l0 - 1.0),
            4.0 * xi - 1.0,
            z,
            4.0 * (l0 - xi),
            4.0 * eta,
            -4.0 * eta,
        ],
        axis=-1,
    )
    gy = np.stack(
        [
            -(4.0 * l0 - 1.0),
            z,
            4.0 * eta - 1.0,
            -4.0 * xi,
            4.0 * xi,
            4.0 * (l0 - eta),
        ],
        axis=-1,
    )
    return np.stack([gx, gy], axis=-1)


def _tri_rule():
    """Degree-5 seven-point rule; weights sum to 1 (scale by element area)."""
    a1, b1 = 0.059715871789769820, 0.470142064105115090
    a2, b2 = 0.797426985353087320, 0.101286507323456340
    w1, w2 = 0.132394152788506180, 0.125939180544827150
    pts = [
        (1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0),
        (a1, b1, w1),
        (b1, a1, w1),
        (b1, b1, w1),
        (a2, b2, w2),
        (b2, a2, w2),
        (b2, b2, w2),
    ]
    xi = np.array([p[0] for p in pts])
    eta = np.array([p[1] for p in pts])
    w = np.array([p[2] for p in pts])
    return xi, eta, w


_QXI, _QETA, _QW = _tri_rule()
_QVAL = _ref_values(_QXI, _QETA)          # (7, 6)
_QGRAD = _ref_grads(_QXI, _QETA)          # (7, 6, 2)

_EDGE_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


# ---------------------------------------------------------------------------
# space


@dataclass
class P2Space:
    """Scalar continuous degree-2 space with strong zeros on boundary nodes.

    Dof ids: vertices first, then one per unique mesh edge (midpoint node).
    """

    mesh: Mesh
    edges: np.ndarray            # (ne, 2) sorted vertex pairs
    element_dofs: np.ndarray     # (nt, 6)
    dof_xy: np.ndarray           # (ndof, 2)
    boundary_dofs: np.ndarray    # sorted, value pinned to 0
    free: np.ndarray
    edge_plus: np.ndarray        # (ne,) owning element (first in order)
    edge_plus_slot: np.ndarray
    edge_minus: np.ndarray       # (ne,) second element or -1
    edge_minus_slot: np.ndarray
    boundary_edge_ids: np.ndarray  # edge id per mesh.boundary_edges row
    _cache: dict = dc_field(default_factory=dict, repr=False)

    @property
    def ndof(self):
        return len(self.dof_xy)

    def geometry(self):
        """Per-element affine data: (p0, Jinv, JiT, area), cached."""
        if "geom" not in self._cache:
            pts = self.mesh.points[self.mesh.triangles]
            p0 = pts[:, 0]
            a = pts[:, 1] - p0
            b = pts[:, 2] - p0
            det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            inv = np.empty((len(det), 2, 2))
            inv[:, 0, 0] = b[:, 1] / det
            inv[:, 0, 1] = -b[:, 0] / det
            inv[:, 1, 0] = -a[:, 1] / det
            inv[:, 1, 1] = a[:, 0] / det
            self._cache["geom"] = (p0, inv, np.swapaxes(inv, 1, 2), 0.5 * det)
        return self._cache["geom"]

    def hessians(self):
        """Physical constant Hessians of local bases, (nt, 6, 2, 2), cached."""
        if "hess" not in self._cache:
            _, inv, invT, _ = self.geometry()
            self._cache["hess"] = np.einsum("tab,ibc,tcd->tiad", invT, _HREF, inv)
        return self._cache["hess"]


def build_space(mesh: Mesh) -> P2Space:
    tri = mesh.triangles.astype(np.int64)
    nv = len(mesh.points)
    nt = len(tri)
    pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    keys = np.minimum(pairs[:, 0], pairs[:, 1]) * nv + np.maximum(
        pairs[:, 0], pairs[:, 1]
    )
    uniq, inv = np.unique(keys, return_inverse=True)
    ne = len(uniq)
    edges = np.stack([uniq // nv, uniq % nv], axis=1).astype(np.int64)

    element_dofs = np.empty((nt, 6), dtype=np.int64)
    element_dofs[:, :3] = tri
    element_dofs[:, 3] = nv + inv[0 * nt : 1 * nt]
    element_dofs[:, 4] = nv + inv[1 * nt : 2 * nt]
    element_dofs[:, 5] = nv + inv[2 * nt : 3 * nt]

    dof_xy = np.vstack(
        [mesh.points, 0.5 * (mesh.points[edges[:, 0]] + mesh.points[edges[:, 1]])]
    )

    # first/second occurrence of each edge in flat (slot*nt + t) order
    order = np.argsort(inv, kind="stable")
    counts = np.bincount(inv, minlength=ne)
    starts = np.concatenate([[0], np.cumsum(counts)])
    first = order[starts[:-1]]
    edge_plus = (first % nt).astype(np.int64)
    edge_plus_slot = (first // nt).astype(np.int64)
    edge_minus = np.full(ne, -1, dtype=np.int64)
    edge_minus_slot = np.zeros(ne, dtype=np.int64)
    two = counts == 2
    second = order[starts[:-1][two] + 1]
    edge_minus[two] = second % nt
    edge_minus_slot[two] = second // nt

    be = mesh.boundary_edges.astype(np.int64)
    bkeys = np.minimum(be[:, 0], be[:, 1]) * nv + np.maximum(be[:, 0], be[:, 1])
    boundary_edge_ids = np.searchsorted(uniq, bkeys)
    if np.any(uniq[boundary_edge_ids] != bkeys):
        raise DiscretizationError("boundary edge missing from triangulation")
    if np.any(edge_minus[boundary_edge_ids] != -1):
        raise DiscretizationError("boundary edge owned by two elements")

    boundary_dofs = np.unique(
        np.concatenate([be.ravel(), nv + boundary_edge_ids])
    )
    free = np.setdiff1d(np.arange(nv + ne), boundary_dofs, assume_unique=False)
    return P2Space(
        mesh=mesh,
        edges=edges,
        element_dofs=element_dofs,
        dof_xy=dof_xy,
        boundary_dofs=boundary_dofs,
        free=free,
        edge_plus=edge_plus,
        edge_plus_slot=edge_plus_slot,
        edge_minus=edge_minus,
        edge_minus_slot=edge_minus_slot,
        boundary_edge_ids=boundary_edge_ids,
    )


# ---------------------------------------------------------------------------
# forms and fields


@dataclass
class SparseSymmetricForm:
    matrix: sp.csr_matrix
    tag: str

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def triplets(self):
        """Upper-triangle (row, col, value) arrays."""
        coo = sp.triu(self.matrix).tocoo()
        return coo.row, coo.col, coo.data

    def restrict(self, idx):
        return self.matrix[np.ix_(idx, idx)].tocsc()


@dataclass
class DiscreteField:
    space: P2Space
    coeffs: np.ndarray
    kind: str = "composite"
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if len(self.coeffs) != self.space.ndof:
            raise DiscretizationError("coefficient length does not match space")

    def combine(self, other, a, b, kind="composite"):
        return DiscreteField(self.space, a * self.coeffs + b * other.coeffs, kind)


def _scatter(blocks, dofs, ndof):
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(ndof, ndof))
    return mat.tocsr()


def _symmetrize(mat):
    return ((mat + mat.T) * 0.5).tocsr()


def _edge_side(space, edge_ids, elems, xq):
    """Gradient of the side element's bases at edge points plus d2/dn2 data.

    xq: physical Gauss points (ne, q, 2).  Returns (dn-ready gradients
    (ne, q, 6, 2), physical Hessians (ne, 6, 2, 2), element dofs (ne, 6)).
    """
    p0, inv, invT, _ = space.geometry()
    hess = space.hessians()
    ref = np.einsum("eab,eqb->eqa", inv[elems], xq - p0[elems][:, None, :])
    gref = _ref_grads(ref[..., 0], ref[..., 1])
    gphys = np.einsum("eab,eqib->eqia", invT[elems], gref)
    return gphys, hess[elems], space.element_dofs[elems]


def _edge_geometry(space, edge_ids):
    """Endpoints, outward-of-plus normal, length, Gauss points for edges."""
    mesh = space.mesh
    tri = mesh.triangles
    elems = space.edge_plus[edge_ids]
    slots = space.edge_plus_slot[edge_ids]
    sv = np.array(_EDGE_SLOT_VERTS)[slots]
    a = mesh.points[tri[elems, sv[:, 0]]]
    b = mesh.points[tri[elems, sv[:, 1]]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
    xq = a[:, None, :] + _EDGE_GAUSS[None, :, None] * d[:, None, :]
    return a, b, normal, length, xq


def _edge_blocks(space, edge_ids, sigma, interior):
    """IP edge matrices: list of (dofs, block) for scattering."""
    _, _, normal, length, xq = _edge_geometry(space, edge_ids)
    gP, hP, dofP = _edge_side(space, edge_ids, space.edge_plus[edge_ids], xq)
    dnP = np.einsum("eqia,ea->eqi", gP, normal)
    d2P = np.einsum("ea,eiab,eb->ei", normal, hP, normal)
    if interior:
        gM, hM, dofM = _edge_side(space, edge_ids, space.edge_minus[edge_ids], xq)
        dnM = np.einsum("eqia,ea->eqi", gM, normal)
        d2M = np.einsum("ea,eiab,eb->ei", normal, hM, normal)
        jump = np.concatenate([dnP, -dnM], axis=2)          # (ne, q, 12)
        avg2 = 0.5 * np.concatenate([d2P, d2M], axis=1)     # (ne, 12)
        dofs = np.concatenate([dofP, dofM], axis=1)
    else:
        jump = dnP
        avg2 = d2P
        dofs = dofP
    w = 0.5 * length                      # per Gauss point on the edge
    jsum = jump.sum(axis=1) * w[:, None]  # integral of the jump
    cons = avg2[:, :, None] * jsum[:, None, :]
    pen = np.einsum("e,eqi,eqj->eij", sigma / length * w, jump, jump)
    block = -cons - np.swapaxes(cons, 1, 2) + pen
    return dofs, block


def assemble_buckling(mesh: Mesh, penalty: float = 20.0):
    """(A, B, space): interior-penalty bending form and gradient form.

    A carries the weak clamping terms on boundary edges; phi = 0 at boundary
    nodes is handled through space.free.  B is the gradient form.
    """
    if penalty <= 0.0:
        raise DiscretizationError("penalty must be positive")
    space = build_space(mesh)
    ndof = space.ndof
    _, inv, invT, area = space.geometry()
    hess = space.hessians()
    eldofs = space.element_dofs

    hh = np.einsum("tiab,tjab->tij", hess, hess) * area[:, None, None]
    gphys = np.einsum("tab,qib->tqia", invT, _QGRAD)
    kk = np.einsum("q,tqia,tqja->tij", _QW, gphys, gphys) * area[:, None, None]

    A = _scatter(hh, eldofs, ndof)
    B = _scatter(kk, eldofs, ndof)

    interior_ids = np.where(space.edge_minus >= 0)[0]
    dofs_i, blocks_i = _edge_blocks(space, interior_ids, penalty, interior=True)
    A = A + _scatter(blocks_i, dofs_i, ndof)
    dofs_b, blocks_b = _edge_blocks(
        space, space.boundary_edge_ids, penalty, interior=False
    )
    A = A + _scatter(blocks_b, dofs_b, ndof)

    return (
        SparseSymmetricForm(_symmetrize(A), "bending"),
        SparseSymmetricForm(_symmetrize(B), "gradient"),
        space,
    )


def assemble_laplace(mesh: Mesh, space: P2Space = None):
    """(K, M, space): Dirichlet stiffness and mass on the same P2 space."""
    if space is None:
        space = build_space(mesh)
    ndof = space.ndof
    _, _, invT, area = space.geometry()
    gphys = np.einsum("tab,qib->tqia", invT, _QGRAD)
    kk = np.einsum("q,tqia,tqja->tij", _QW, gphys, gphys) * area[:, None, None]
    mref = np.einsum("q,qi,qj->ij", _QW, _QVAL, _QVAL)
    mm = area[:, None, None] * mref[None, :, :]
    K = _symmetrize(_scatter(kk, space.element_dofs, ndof))
    M = _symmetrize(_scatter(mm, space.element_dofs, ndof))
    return SparseSymmetricForm(K, "stiffness"), SparseSymmetricForm(M, "mass"), space


def assemble_hessian_form(space: P2Space):
    """Raw element Hessian product, no edge terms (the D2:D2 part alone)."""
    _, _, _, area = space.geometry()
    hess = space.hessians()
    hh = np.einsum("tiab,tjab->tij", hess, hess) * area[:, None, None]
    mat = _symmetrize(_scatter(hh, space.element_dofs, space.ndof))
    return SparseSymmetricForm(mat, "hessian")


def assemble_energy_form(space: P2Space):
    """Laplacian-product form with interior consistency, no boundary terms.

    Q(u, v) = sum_T int Delta u Delta v
            - sum_{interior e} int_e ( [d_n u] {Delta v} + [d_n v] {Delta u} )

    which is consistent with int Delta u Delta v for H^2 fields regardless
    of their boundary normal derivative; used for the energy functional on
    composite fields (psi, oracle derivatives, Z samples).
    """
    ndof = space.ndof
    _, _, _, area = space.geometry()
    hess = space.hessians()
    lap = hess[:, :, 0, 0] + hess[:, :, 1, 1]          # (nt, 6) constants
    ll = lap[:, :, None] * lap[:, None, :] * area[:, None, None]
    Q = _scatter(ll, space.element_dofs, ndof)

    interior_ids = np.where(space.edge_minus >= 0)[0]
    _, _, normal, length, xq = _edge_geometry(space, interior_ids)
    gP, hP, dofP = _edge_side(space, interior_ids, space.edge_plus[interior_ids], xq)
    gM, hM, dofM = _edge_side(space, interior_ids, space.edge_minus[interior_ids], xq)
    dnP = np.einsum("eqia,ea->eqi", gP, normal)
    dnM = np.einsum("eqia,ea->eqi", gM, normal)
    lapP = hP[:, :, 0, 0] + hP[:, :, 1, 1]
    lapM = hM[:, :, 0, 0] + hM[:, :, 1, 1]
    jump = np.concatenate([dnP, -dnM], axis=2)
    avg = 0.5 * np.concatenate([lapP, lapM], axis=1)
    w = 0.5 * length
    jsum = jump.sum(axis=1) * w[:, None]
    cons = avg[:, :, None] * jsum[:, None, :]
    dofs = np.concatenate([dofP, dofM], axis=1)
    Q = Q + _scatter(-cons - np.swapaxes(cons, 1, 2), dofs, ndof)
    return SparseSymmetricForm(_symmetrize(Q), "laplacian-product")


def assemble_neumann_rhs(space: P2Space, curve, gfun, penalty: float):
    """Load vector imposing d_nu(u) = g weakly through the boundary IP terms.

    l(chi) = sum_{boundary e} int_e ( -g d2_nn(chi) + (sigma/h_e) g d_n(chi) )

    g is sampled on the exact curve: gfun(theta) -> values at the Gauss
    parameters of each boundary edge.
    """
    edge_ids = space.boundary_edge_ids
    _, _, normal, length, xq = _edge_geometry(space, edge_ids)
    gP, hP, dofP = _edge_side(space, edge_ids, space.edge_plus[edge_ids], xq)
    dn = np.einsum("eqia,ea->eqi", gP, normal)
    d2 = np.einsum("ea,eiab,eb->ei", normal, hP, normal)

    th = space.mesh.boundary_theta
    theta_q = th[:, 0][:, None] + _EDGE_GAUSS[None, :] * (th[:, 1] - th[:, 0])[:, None]
    g = np.asarray(gfun(theta_q.ravel())).reshape(theta_q.shape)

    w = 0.5 * length
    gsum = (g * w[:, None]).sum(axis=1)
    contrib = -d2 * gsum[:, None] + np.einsum(
        "e,eq,eqi->ei", penalty / length * w, g, dn
    )
    rhs = np.zeros(space.ndof)
    np.add.at(rhs, dofP.ravel(), contrib.ravel())
    return rhs


# ---------------------------------------------------------------------------
# evaluation


def interpolate(space: P2Space, fun, kind="composite", clamp=False):
    """DiscreteField with nodal values fun(dof_xy); clamp zeroes boundary dofs."""
    coeffs = np.asarray(fun(space.dof_xy), dtype=float)
    if clamp:
        coeffs = coeffs.copy()
        coeffs[space.boundary_dofs] = 0.0
    return DiscreteField(space, coeffs, kind)


def _locate(space: P2Space, pts, tol=1e-8):
    """(element id, barycentric (l0, l1, l2)) per query point."""
    if "kdtree" not in space._cache:
        cent = space.mesh.points[space.mesh.triangles].mean(axis=1)
        space._cache["kdtree"] = cKDTree(cent)
    tree = space._cache["kdtree"]
    pts = np.asarray(pts, dtype=float)
    p0, inv, _, _ = space.geometry()
    nt = len(space.mesh.triangles)

    elem = np.full(len(pts), -1, dtype=np.int64)
    best_elem = np.zeros(len(pts), dtype=np.int64)
    best_low = np.full(len(pts), -np.inf)
    for k in (8, 64):
        todo = np.where(elem < 0)[0]
        if len(todo) == 0:
            break
        _, cand = tree.query(pts[todo], k=min(k, nt))
        cand = np.atleast_2d(cand)
        for c in range(cand.shape[1]):
            t = cand[:, c]
            ref = np.einsum("eab,eb->ea", inv[t], pts[todo] - p0[t])
            l0 = 1.0 - ref[:, 0] - ref[:, 1]
            low = np.minimum(l0, np.minimum(ref[:, 0], ref[:, 1]))
            better = low > best_low[todo]
            best_low[todo[better]] = low[better]
            best_elem[todo[better]] = t[better]
        inside = best_low[todo] >= -tol
        elem[todo[inside]] = best_elem[todo[inside]]
    miss = np.where(elem < 0)[0]
    if len(miss):
        worst = best_low[miss].min()
        if worst < -1e-6:
            raise DiscretizationError(
                f"{len(miss)} evaluation points outside the mesh "
                f"(barycentric deficit {worst:.2e})"
            )
        elem[miss] = best_elem[miss]
    ref = np.einsum("eab,eb->ea", inv[elem], pts - p0[elem])
    bary = np.stack([1.0 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]], axis=1)
    return elem, bary


def evaluate(field: DiscreteField, pts, recovered=False):
    """(value, gradient, laplacian) at interior points.

    recovered=True replaces the piecewise-constant element Laplacian by the
    patch-recovered vertex field interpolated linearly.
    """
    space = field.space
    pts = np.asarray(pts, dtype=float)
    elem, bary = _locate(space, pts)
    xi, eta = bary[:, 1], bary[:, 2]
    vals = _ref_values(xi, eta)
    grads = _ref_grads(xi, eta)
    _, _, invT, _ = space.geometry()
    coe = field.coeffs[space.element_dofs[elem]]
    value = np.einsum("ei,ei->e", vals, coe)
    gphys = np.einsum("eab,eib->eia", invT[elem], grads)
    gradient = np.einsum("eia,ei->ea", gphys, coe)
    if recovered:
        lap_v = laplacian_recovery(field)
        tri = space.mesh.triangles[elem]
        laplacian = np.einsum("ei,ei->e", bary, lap_v[tri])
    else:
        hess = space.hessians()[elem]
        lap = hess[:, :, 0, 0] + hess[:, :, 1, 1]
        laplacian = np.einsum("ei,ei->e", lap, coe)
    return value, gradient, laplacian


# ---------------------------------------------------------------------------
# patch recovery of second derivatives


def _element_hessian(field: DiscreteField):
    hess = field.space.hessians()
    coe = field.coeffs[field.space.element_dofs]
    return np.einsum("tiab,ti->tab", hess, coe)


def _fit_patches(points, tpair, vpair, ids, cent, warr, comp, scale, degree):
    """Weighted polynomial fits of element data around the vertices `ids`.

    Returns the fitted value at each vertex (the constant coefficient of a
    fit centered there).  degree 1 uses [1, x, y]; degree 2 adds the three
    quadratic monomials, which removes the one-sided bias of boundary
    patches where the sampled field has curvature.
    """
    nb = len(ids)
    pos = np.full(points.shape[0], -1, dtype=np.int64)
    pos[ids] = np.arange(nb)
    sel = pos[vpair] >= 0
    t, vloc = tpair[sel], pos[vpair[sel]]
    dx = (cent[t] - points[ids][vloc]) / scale
    cols = [np.ones(len(t)), dx[:, 0], dx[:, 1]]
    if degree == 2:
        cols += [dx[:, 0] ** 2, dx[:, 0] * dx[:, 1], dx[:, 1] ** 2]
    rowv = np.stack(cols, axis=1)
    p = rowv.shape[1]
    w = warr[t]
    nmat = np.zeros((nb, p, p))
    rhs = np.zeros((nb, p, comp.shape[1]))
    np.add.at(nmat, vloc, w[:, None, None] * rowv[:, :, None] * rowv[:, None, :])
    np.add.at(rhs, vloc, w[:, None, None] * rowv[:, :, None] * comp[t][:, None, :])
    det = np.linalg.det(nmat)
    bad = np.abs(det) < 1e-10
    if np.any(bad):
        # degenerate patch: fall back to the area-weighted mean
        mean = rhs[bad, 0, :] / np.maximum(nmat[bad, 0, 0][:, None], 1e-300)
        nmat[bad] = np.eye(p)
        rhs[bad] = 0.0
        rhs[bad, 0, :] = mean
    sol = np.linalg.solve(nmat, rhs)
    return sol[:, 0, :]


def _recovery_pairs(space: P2Space):
    if "recovery_pairs" not in space._cache:
        mesh = space.mesh
        nv = len(mesh.points)
        nt = len(mesh.triangles)
        rows = np.repeat(np.arange(nt), 3)
        cols = mesh.triangles.ravel()
        inc = sp.csr_matrix((np.ones(3 * nt), (rows, cols)), shape=(nt, nv))
        bset = np.zeros(nv, dtype=bool)
        bset[mesh.boundary_edges[:, 0]] = True
        adj = (inc.T @ inc).tocsr()
        adj.data[:] = 1.0
        ring2 = (inc @ adj).tocsc()
        keep = np.where(bset)[0]
        r2 = ring2[:, keep].tocoo()
        inc_i = inc[:, ~bset].tocoo()
        interior_ids = np.where(~bset)[0]
        tpair = np.concatenate([inc_i.row, r2.row])
        vpair = np.concatenate([interior_ids[inc_i.col], keep[r2.col]])
        space._cache["recovery_pairs"] = (tpair, vpair, interior_ids, keep)
    return space._cache["recovery_pairs"]


def hessian_recovery(field: DiscreteField):
    """(nv, 3) arrays (Hxx, Hxy, Hyy) at vertices from local least squares.

    Interior vertices take a linear fit over their element ring (symmetric
    patches make that second-order accurate).  Boundary vertices fit a full
    quadratic over the two-ring: their one-sided patches otherwise pick up
    an O(h) bias proportional to the curvature of the recovered field.
    """
    space = field.space
    tpair, vpair, interior_ids, bdry_ids = _recovery_pairs(space)
    mesh = space.mesh
    nv = len(mesh.points)
    _, _, _, area = space.geometry()
    cent = mesh.points[mesh.triangles].mean(axis=1)
    hc = _element_hessian(field)
    comp = np.stack([hc[:, 0, 0], hc[:, 0, 1], hc[:, 1, 1]], axis=1)
    scale = space.mesh.h
    out = np.empty((nv, 3))
    out[interior_ids] = _fit_patches(
        mesh.points, tpair, vpair, interior_ids, cent, area, comp, scale, 1
    )
    out[bdry_ids] = _fit_patches(
        mesh.points, tpair, vpair, bdry_ids, cent, area, comp, scale, 2
    )
    return out


def laplacian_recovery(field: DiscreteField):
    comp = hessian_recovery(field)
    return comp[:, 0] + comp[:, 2]


def recovered_at_points(field: DiscreteField, vertex_vals, pts):
    """Linear interpolation of a per-vertex array at interior points."""
    elem, bary = _locate(field.space, pts)
    tri = field.space.mesh.triangles[elem]
    return np.einsum("ei,ei->e", bary, vertex_vals[tri])


# ---------------------------------------------------------------------------
# boundary sampling on the exact curve


def _edge_theta_samples(mesh: Mesh, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (nodes + 1.0)
    th = mesh.boundary_theta
    dth = th[:, 1] - th[:, 0]
    theta = th[:, 0][:, None] + s[None, :] * dth[:, None]
    wtheta = 0.5 * weights[None, :] * dth[:, None]
    return s, theta, wtheta


def boundary_quadrature(mesh: Mesh, curve, order=4):
    """(theta, dS weights, points, normals) on the exact curve, per edge."""
    _, theta, wtheta = _edge_theta_samples(mesh, order)
    theta = theta.ravel()
    w = wtheta.ravel() * curve.speed(theta)
    return theta, w, curve.point(theta), curve.normal(theta)


def boundary_laplacian_samples(field: DiscreteField, order=4):
    """(theta, Delta u samples) along the boundary from recovered vertices."""
    mesh = field.space.mesh
    lap_v = laplacian_recovery(field)
    s, theta, _ = _edge_theta_samples(mesh, order)
    be = mesh.boundary_edges
    vals = (1.0 - s)[None, :] * lap_v[be[:, 0]][:, None] + s[None, :] * lap_v[
        be[:, 1]
    ][:, None]
    return theta.ravel(), vals.ravel()


def boundary_gradient_samples(field: DiscreteField, curve, order=4):
    """(theta, gradient (N,2)) at exact-curve points, one-sided elements.

    Points on the curve may fall just outside the owning triangle; the
    polynomial is extended (no clipping), which stays O(h^2) accurate.
    """
    space = field.space
    mesh = space.mesh
    _, theta, _ = _edge_theta_samples(mesh, order)
    edge_ids = space.boundary_edge_ids
    elems = space.edge_plus[edge_ids]
    xq = curve.point(theta)                       # (nb, q, 2)
    p0, inv, invT, _ = space.geometry()
    ref = np.einsum("eab,eqb->eqa", inv[elems], xq - p0[elems][:, None, :])
    gref = _ref_grads(ref[..., 0], ref[..., 1])
    gphys = np.einsum("eab,eqib->eqia", invT[elems], gref)
    coe = field.coeffs[space.element_dofs[elems]]
    grad = np.einsum("eqia,ei->eqa", gphys, coe)
    return theta.ravel(), grad.reshape(-1, 2)


def volume_integral(M: SparseSymmetricForm, field: DiscreteField):
    """int of the field over the mesh, via the mass form row sums."""
    return float(M.matrix.sum(axis=1).A1 @ field.coeffs)


def save_form(form: SparseSymmetricForm, path):
    r, c, v = form.triplets()
    lines = [f"{form.dimension} {len(v)} {form.tag}"]
    lines.extend(f"{i} {j} {float(x)!r}" for i, j, x in zip(r, c, v))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
