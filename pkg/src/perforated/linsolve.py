"""Constrained discrete Laplacian, Jacobi-preconditioned CG, inverse iteration."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import IncompatibleRHS, NoFluidNodes, NotConverged
from .geometry import DomainSpec, NodeMask, OuterBC
from .grid import GridFunction, VectorGridFunction, divergence

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """``-Delta_h`` restricted to Fluid unknowns (Dirichlet nodes eliminated).

    ``coupling`` maps values at Outer nodes (flat order of ``outer_index``)
    into the fluid rows, for inhomogeneous boundary data.
    """

    matrix: sp.csr_matrix
    mask: NodeMask
    fluid_index: np.ndarray
    outer_index: np.ndarray
    coupling: sp.csr_matrix
    singular: bool

    @property
    def spec(self) -> DomainSpec:
        return self.mask.spec

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, x):
        return self.matrix @ x

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def scatter(self, x: np.ndarray, outer_values: np.ndarray | None = None) -> np.ndarray:
        """Unknown vector -> full node array (zero on holes)."""
        full = np.zeros(self.spec.grid_shape).ravel()
        full[self.fluid_index] = x
        if outer_values is not None:
            full[self.outer_index] = outer_values
        return full.reshape(self.spec.grid_shape)

    def gather(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).ravel()[self.fluid_index]


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_relative_residual": self.final_relative_residual,
            "converged": self.converged,
        }


def assemble(mask: NodeMask) -> SparseOperator:
    """Rows ``(2d u(x) - sum of neighbours) / h^2`` for every Fluid node.

    Hole and Outer neighbours are eliminated; periodic domains wrap.
    """
    spec = mask.spec
    shape = spec.grid_shape
    labels = mask.labels.ravel()
    fluid_index = np.flatnonzero(mask.fluid.ravel())
    outer_index = np.flatnonzero(mask.outer.ravel())
    if fluid_index.size == 0:
        raise NoFluidNodes("mask has no fluid nodes")
    unknown = np.full(labels.size, -1, dtype=np.int64)
    unknown[fluid_index] = np.arange(fluid_index.size)
    outer_slot = np.full(labels.size, -1, dtype=np.int64)
    outer_slot[outer_index] = np.arange(outer_index.size)

    inv_h2 = 1.0 / spec.h**2
    multi = np.unravel_index(fluid_index, shape)
    rows, cols, vals = [np.arange(fluid_index.size)], [np.arange(fluid_index.size)], [
        np.full(fluid_index.size, 2.0 * spec.d * inv_h2)
    ]
    c_rows, c_cols = [], []
    N = shape[0]
    for j in range(spec.d):
        for step in (-1, 1):
            nb = list(multi)
            shifted = multi[j] + step
            if spec.periodic:
                shifted = shifted % N
            nb[j] = shifted
            # fluid nodes are interior under Dirichlet bc, so shifts stay in range
            flat = np.ravel_multi_index(tuple(nb), shape)
            col = unknown[flat]
            inside = col >= 0
            rows.append(np.flatnonzero(inside))
            cols.append(col[inside])
            vals.append(np.full(int(inside.sum()), -inv_h2))
            on_outer = outer_slot[flat] >= 0
            c_rows.append(np.flatnonzero(on_outer))
            c_cols.append(outer_slot[flat][on_outer])
    n_unk = fluid_index.size
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_unk, n_unk)
    )
    matrix.sum_duplicates()
    c_r = np.concatenate(c_rows) if c_rows else np.zeros(0, dtype=np.int64)
    c_c = np.concatenate(c_cols) if c_cols else np.zeros(0, dtype=np.int64)
    coupling = sp.csr_matrix(
        (np.full(c_r.size, inv_h2), (c_r, c_c)), shape=(n_unk, max(outer_index.size, 0))
    )
    singular = spec.periodic and not np.any(mask.hole)
    return SparseOperator(matrix, mask, fluid_index, outer_index, coupling, singular)


def cg_solve(
    A: SparseOperator | sp.spmatrix,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
    singular: bool | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Jacobi-preconditioned conjugate gradients for ``A x = b``.

    In the singular (periodic, hole-free) case the right-hand side must have
    zero mean; iterates are kept in the zero-mean subspace.
    """
    matrix = A.matrix if isinstance(A, SparseOperator) else sp.csr_matrix(A)
    if singular is None:
        singular = A.singular if isinstance(A, SparseOperator) else False
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = max(1000, 20 * int(round(n ** (1.0 / 2))))
    b_norm = np.linalg.norm(b)
    if singular:
        mean = b.mean()
        if abs(mean) * np.sqrt(n) > 1e-10 * max(b_norm, 1e-300):
            raise IncompatibleRHS(
                "right-hand side has nonzero mean but the operator annihilates constants"
            )
        b = b - mean
        b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    inv_diag = 1.0 / matrix.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if singular:
        x -= x.mean()
    it = 0
    true_res = np.inf
    for _restart in range(4):
        r = b - matrix @ x
        if singular:
            r -= r.mean()
        true_res = np.linalg.norm(r) / b_norm
        if true_res <= tol or it >= max_iter:
            break
        z = inv_diag * r
        p = z.copy()
        rz = float(r @ z)
        while it < max_iter:
            q = matrix @ p
            alpha = rz / float(p @ q)
            x += alpha * p
            r -= alpha * q
            if singular:
                r -= r.mean()
            it += 1
            # stop a little early on the recursive residual; the restart
            # check above decides on the true one
            if np.linalg.norm(r) <= 0.5 * tol * b_norm:
                break
            z = inv_diag * r
            rz_new = float(r @ z)
            p *= rz_new / rz
            p += z
            rz = rz_new
    if singular:
        x -= x.mean()
    true_res = np.linalg.norm(b - matrix @ x) / b_norm
    report = SolveReport(it, float(true_res), bool(true_res <= tol))
    if not report.converged:
        raise NotConverged(report)
    log.debug("cg: %d iterations, residual %.2e", it, true_res)
    return x, report


def smallest_eigenvalue(
    A: SparseOperator | sp.spmatrix,
    tol: float = 1e-8,
    max_iter: int = 200,
    inner_tol: float = 1e-10,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Inverse power iteration with CG inner solves.

    Returns the Rayleigh quotient and a unit eigenvector.  Stops when the
    relative change of the eigenvalue estimate drops below ``tol``.
    """
    matrix = A.matrix if isinstance(A, SparseOperator) else sp.csr_matrix(A)
    if isinstance(A, SparseOperator) and A.singular:
        raise IncompatibleRHS("operator is singular; the smallest eigenvalue is 0")
    rng = np.random.default_rng(seed)
    x = 1.0 + 0.1 * rng.random(matrix.shape[0])
    x /= np.linalg.norm(x)
    lam = float(x @ (matrix @ x))
    total_iters = 0
    for k in range(1, max_iter + 1):
        y, rep = cg_solve(matrix, x, tol=inner_tol, x0=x / lam, singular=False)
        total_iters += rep.iterations
        x = y / np.linalg.norm(y)
        lam_new = float(x @ (matrix @ x))
        change = abs(lam_new - lam) / abs(lam_new)
        lam = lam_new
        if change <= tol:
            log.debug("inverse iteration: %d steps, %d cg iterations", k, total_iters)
            return lam, x
    raise NotConverged(SolveReport(max_iter, change, False), "inverse iteration did not converge")


def build_rhs(
    A: SparseOperator,
    F: np.ndarray | None = None,
    f: VectorGridFunction | None = None,
    boundary: np.ndarray | None = None,
) -> np.ndarray:
    """Discrete ``F + div f`` at Fluid nodes plus lifted boundary data."""
    spec = A.spec
    b = np.zeros(A.size)
    if F is not None:
        b += A.gather(np.broadcast_to(F, spec.grid_shape))
    if f is not None:
        b += A.gather(divergence(f).values)
    if boundary is not None and A.outer_index.size:
        b += A.coupling @ np.asarray(boundary).ravel()[A.outer_index]
    return b


def solve_dirichlet(
    mask: NodeMask,
    F: np.ndarray | None = None,
    f: VectorGridFunction | None = None,
    boundary: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    operator: SparseOperator | None = None,
    x0: np.ndarray | None = None,
) -> tuple[GridFunction, SolveReport]:
    """Solve ``-Delta u = F + div f`` in the fluid, ``u = 0`` in holes,
    ``u = boundary`` on Outer nodes (zero when omitted)."""
    A = assemble(mask) if operator is None else operator
    if boundary is not None and mask.spec.outer_bc is not OuterBC.DIRICHLET_DATA:
        raise ValueError("boundary data requires outer_bc=dirichlet_data")
    b = build_rhs(A, F, f, boundary)
    x, report = cg_solve(A, b, tol=tol, x0=x0)
    outer = None
    if boundary is not None:
        outer = np.asarray(boundary).ravel()[A.outer_index]
    return GridFunction(A.scatter(x, outer), mask.spec, mask), report
