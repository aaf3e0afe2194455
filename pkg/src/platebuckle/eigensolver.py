"""Shift-invert eigenpair extraction for the assembled symmetric pencils.

Wraps ARPACK through scipy with the conventions the rest of the package
relies on: ascending eigenvalues, B-orthonormal vectors, per-pair relative
residuals, and cluster labels for numerically repeated values.  Starting
vectors come from a fixed seed so reruns are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .discretization import DiscreteField, P2Space, SparseSymmetricForm

__all__ = ["EigenPair", "EigenSolveError", "solve_smallest", "spectral_gap"]

_SEED = 20260816
_CLUSTER_RTOL = 1e-6


class EigenSolveError(RuntimeError):
    """Factorization or convergence failure, with the best residual seen."""


@dataclass
class EigenPair:
    value: float
    field: DiscreteField
    residual: float
    cluster: int


def _b_orthonormalize(vecs, Bf):
    """Modified Gram-Schmidt in the B inner product (degenerate pairs mix)."""
    out = np.array(vecs, dtype=float, copy=True)
    for i in range(out.shape[1]):
        for j in range(i):
            out[:, i] -= (out[:, j] @ (Bf @ out[:, i])) * out[:, j]
        nrm = np.sqrt(out[:, i] @ (Bf @ out[:, i]))
        if not nrm > 0.0:
            raise EigenSolveError("eigenvector with vanishing B norm")
        out[:, i] /= nrm
    return out


def solve_smallest(
    A: SparseSymmetricForm,
    B: SparseSymmetricForm,
    space: P2Space,
    k: int = 2,
    shift: float = 0.0,
    tol: float = 1e-6,
    kind: str = "buckling",
):
    """The k algebraically smallest eigenpairs of A x = mu B x on free dofs.

    Vectors are embedded into the full dof vector (zeros at constrained
    nodes).  A failed factorization at the requested shift is retried at
    perturbed shifts before giving up.
    """
    Af = A.restrict(space.free)
    Bf = B.restrict(space.free)
    n = Af.shape[0]
    if not 0 < k < n - 1:
        raise EigenSolveError(f"cannot extract {k} pairs from a {n}-dim pencil")
    v0 = np.random.default_rng(_SEED).standard_normal(n)

    vals = vecs = None
    failures = []
    for attempt in range(4):
        sigma = shift - attempt * attempt * 1e-2
        try:
            vals, vecs = spla.eigsh(
                Af, k=k, M=Bf, sigma=sigma, which="LM", v0=v0, maxiter=4000
            )
            break
        except spla.ArpackNoConvergence as exc:
            if len(exc.eigenvalues):
                vals, vecs = exc.eigenvalues, exc.eigenvectors
                break
            failures.append(f"shift {sigma:g}: no converged pairs")
        except RuntimeError as exc:
            failures.append(f"shift {sigma:g}: {exc}")
    if vals is None:
        raise EigenSolveError("; ".join(failures))
    if len(vals) < k:
        raise EigenSolveError(
            f"only {len(vals)} of {k} pairs converged (eigenvalues {vals})"
        )

    order = np.argsort(vals)
    vals = vals[order]
    vecs = _b_orthonormalize(vecs[:, order], Bf)

    pairs = []
    cluster = 0
    for i, mu in enumerate(vals):
        x = vecs[:, i]
        ax = Af @ x
        res = float(np.linalg.norm(ax - mu * (Bf @ x)) / np.linalg.norm(ax))
        if res > tol:
            raise EigenSolveError(
                f"pair {i} residual {res:.3e} exceeds tolerance {tol:.1e}"
            )
        if i > 0 and abs(mu - vals[i - 1]) > _CLUSTER_RTOL * max(abs(mu), 1.0):
            cluster += 1
        full = np.zeros(space.ndof)
        full[space.free] = x
        pairs.append(
            EigenPair(float(mu), DiscreteField(space, full, kind), res, cluster)
        )
    return pairs


def spectral_gap(pairs):
    """Relative gap (mu2 - mu1) / mu1 between the two smallest values."""
    if len(pairs) < 2:
        raise EigenSolveError("need at least two pairs for a gap")
    return (pairs[1].value - pairs[0].value) / pairs[0].value
