"""Exterior profile around a single obstacle and its capacity constant.

For d >= 3 the profile is harmonic outside T, zero on T and tends to 1 at
infinity; its far field is ``1 - c_* |x|^(2-d)``.  For d = 2 it grows like
``c_* ln|x|``.  The unbounded problem is truncated to the box
``[-R, R]^d`` with Dirichlet data on the box faces.

Both supported obstacle shapes are symmetric under every reflection
``x_j -> -x_j``, so the solve runs on the closed positive orthant with
reflection (Neumann) conditions on the coordinate planes.  Rows on a
symmetry plane carry half weight per plane, which keeps the system
symmetric; the unfolded field equals the full-box solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import EmptyAnnulus, TruncationTooSmall
from .geometry import Ball, DomainSpec, HoleShape, NodeClass, NodeMask, OuterBC
from .grid import GridFunction
from .linsolve import SolveReport, cg_solve

MIN_TRUNCATION_DIAMETERS = 8.0


def obstacle_diameter(shape: HoleShape, d: int) -> float:
    if isinstance(shape, Ball):
        return 2.0 * shape.radius
    return 2.0 * shape.half_width * math.sqrt(d)


def obstacle_radius(shape: HoleShape, d: int) -> float:
    """Radius of the smallest centred ball containing T."""
    return 0.5 * obstacle_diameter(shape, d)


def _far_field_value(d: int, R_trunc: float) -> float:
    # d = 2 has no limit at infinity; ln R fixes the scale of the profile
    return 1.0 if d >= 3 else math.log(R_trunc)


@dataclass(frozen=True, eq=False)
class ExteriorResult:
    """Truncated exterior solve.  ``octant`` holds nodes ``i/n``, ``0 <= i <= R n``."""

    shape: HoleShape
    d: int
    R_trunc: float
    n: int
    octant: np.ndarray
    c_star: float
    intercept: float
    fit_residual: float
    annulus: tuple[float, float]
    report: SolveReport = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @cached_property
    def box_spec(self) -> DomainSpec:
        return DomainSpec(
            d=self.d,
            epsilon=1.0,
            cells=int(round(2 * self.R_trunc)),
            n=self.n,
            outer_bc=OuterBC.DIRICHLET_DATA,
            shape=None,
        )

    @cached_property
    def phi(self) -> GridFunction:
        """The profile on the full box ``[-R, R]^d``."""
        full = self.octant
        for axis in range(self.d):
            mirrored = np.flip(np.take(full, np.arange(1, full.shape[axis]), axis=axis), axis=axis)
            full = np.concatenate([mirrored, full], axis=axis)
        spec = self.box_spec
        labels = np.zeros(spec.grid_shape, dtype=np.int8)
        labels[_obstacle_nodes(self.shape, spec.coords())] = NodeClass.HOLE
        boundary = np.zeros(spec.grid_shape, dtype=bool)
        for axis in range(self.d):
            idx = [slice(None)] * self.d
            idx[axis] = [0, -1]
            boundary[tuple(idx)] = True
        labels[boundary & (labels == NodeClass.FLUID)] = NodeClass.OUTER
        return GridFunction(full, spec, NodeMask(labels, spec))

    def sample(self, index: tuple[np.ndarray, ...]) -> np.ndarray:
        """Profile at integer node offsets ``index`` (any sign) from the obstacle centre."""
        idx = tuple(np.abs(np.asarray(i)) for i in index)
        m = self.octant.shape[0] - 1
        if any(np.any(i > m) for i in idx):
            raise ValueError("sample point outside the truncation box")
        return self.octant[idx]

    def as_dict(self) -> dict:
        return {
            "R_trunc": self.R_trunc,
            "n": self.n,
            "c_star": self.c_star,
            "intercept": self.intercept,
            "fit_residual": self.fit_residual,
            "annulus": list(self.annulus),
            "solver": self.report.as_dict(),
        }


def _obstacle_nodes(shape: HoleShape, coords) -> np.ndarray:
    return np.asarray(shape.contains(*coords))


def _orthant_system(shape: HoleShape, d: int, M: int, n: int, far_value: float):
    """Weighted Laplacian on nodes ``0..M`` per axis; node M is Dirichlet."""
    size = M + 1
    shape_nd = (size,) * d
    y = np.arange(size) / n
    coords = np.meshgrid(*([y] * d), indexing="ij", sparse=True)
    hole = _obstacle_nodes(shape, coords)
    hole = np.broadcast_to(hole, shape_nd)
    boundary = np.zeros(shape_nd, dtype=bool)
    for axis in range(d):
        idx = [slice(None)] * d
        idx[axis] = -1
        boundary[tuple(idx)] = True
    unknown_mask = ~hole & ~boundary
    flat_unknown = np.flatnonzero(unknown_mask.ravel())
    slot = np.full(size**d, -1, dtype=np.int64)
    slot[flat_unknown] = np.arange(flat_unknown.size)
    multi = np.unravel_index(flat_unknown, shape_nd)

    w1 = np.ones(size)
    w1[0] = 0.5
    weight = np.ones(flat_unknown.size)
    for axis in range(d):
        weight = weight * w1[multi[axis]]
    inv_h2 = float(n * n)

    rows = [np.arange(flat_unknown.size)]
    cols = [np.arange(flat_unknown.size)]
    vals = [2.0 * d * inv_h2 * weight]
    b = np.zeros(flat_unknown.size)
    for axis in range(d):
        for step in (-1, 1):
            nb = list(multi)
            # reflection across the symmetry plane: ghost -1 mirrors node 1
            nb[axis] = np.abs(multi[axis] + step)
            flat = np.ravel_multi_index(tuple(nb), shape_nd)
            col = slot[flat]
            coeff = -inv_h2 * weight
            inside = col >= 0
            rows.append(np.flatnonzero(inside))
            cols.append(col[inside])
            vals.append(coeff[inside])
            on_bnd = boundary.ravel()[flat] & ~hole.ravel()[flat]
            b[on_bnd] += inv_h2 * weight[on_bnd] * far_value
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(flat_unknown.size,) * 2,
    )
    matrix.sum_duplicates()
    return matrix, b, flat_unknown, hole, boundary, coords


def _fit(radius: np.ndarray, values: np.ndarray, d: int, annulus, weights=None):
    r_in, r_out = annulus
    sel = (radius >= r_in) & (radius <= r_out)
    if r_out <= r_in or not np.any(sel):
        raise EmptyAnnulus(f"annulus [{r_in}, {r_out}] contains no nodes")
    r = radius[sel]
    w = np.ones(r.size) if weights is None else weights[sel]
    if d >= 3:
        basis = r ** (2.0 - d)
        target = 1.0 - values[sel]
    else:
        basis = np.log(r)
        target = values[sel]
    design = np.stack([basis, np.ones_like(basis)], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], target * sw, rcond=None)
    resid = target - design @ coef
    scale = np.sqrt(np.sum(w * target**2))
    rel = float(np.sqrt(np.sum(w * resid**2)) / scale) if scale > 0 else 0.0
    return float(coef[0]), float(coef[1]), rel


def fit_cstar(phi: GridFunction, d: int, annulus: tuple[float, float]) -> tuple[float, float]:
    """Least-squares capacity constant from the profile on an annulus.

    d >= 3 fits ``1 - phi`` against ``c |x|^(2-d) + b``; d = 2 fits ``phi``
    against ``c ln|x| + b``.  The free constant absorbs the truncation offset.
    Returns ``(c_star, relative residual)``.
    """
    coords = phi.spec.coords(sparse=False)
    radius = np.sqrt(sum(c**2 for c in coords)).ravel()
    values = phi.values.ravel()
    if phi.mask is not None:
        keep = phi.mask.fluid.ravel()
        radius, values = radius[keep], values[keep]
    c, _, rel = _fit(radius, values, d, annulus)
    return c, rel


def solve_phi_star(
    shape: HoleShape,
    R_trunc: float,
    n: int,
    d: int = 3,
    tol: float = 1e-9,
    annulus: tuple[float, float] | None = None,
) -> ExteriorResult:
    """Truncated exterior problem on ``[-R_trunc, R_trunc]^d`` with spacing ``1/n``.

    The default fitting annulus is ``2 * radius(T) <= |x| <= R_trunc / 2``.
    """
    if d not in (2, 3):
        raise ValueError("exterior solves support d = 2 or 3")
    diam = obstacle_diameter(shape, d)
    if R_trunc < MIN_TRUNCATION_DIAMETERS * diam * (1 - 1e-12):
        raise TruncationTooSmall(
            f"R_trunc = {R_trunc} < {MIN_TRUNCATION_DIAMETERS:g} x obstacle diameter {diam:.4g}"
        )
    M = R_trunc * n
    if abs(M - round(M)) > 1e-9 or n % 2:
        raise ValueError("R_trunc * n must be an integer and n even")
    M = int(round(M))
    far = _far_field_value(d, R_trunc)
    matrix, b, unknown, hole, boundary, coords = _orthant_system(shape, d, M, n, far)
    x, report = cg_solve(matrix, b, tol=tol, max_iter=20 * M * d + 1000)
    octant = np.zeros((M + 1,) * d)
    flat = octant.reshape(-1)
    flat[boundary.ravel() & ~hole.ravel()] = far
    flat[unknown] = x
    if annulus is None:
        annulus = (2.0 * obstacle_radius(shape, d), 0.5 * R_trunc)
    radius = np.sqrt(sum(np.broadcast_to(c, octant.shape) ** 2 for c in coords)).ravel()
    idx = np.unravel_index(np.arange(flat.size), octant.shape)
    multiplicity = np.ones(flat.size)
    for axis in range(d):
        multiplicity *= np.where(idx[axis] > 0, 2.0, 1.0)
    keep = ~hole.ravel()
    c, b0, rel = _fit(radius[keep], flat[keep], d, annulus, multiplicity[keep])
    return ExteriorResult(shape, d, float(R_trunc), n, octant, c, b0, rel, tuple(annulus), report)


def extrapolate_cstar(results: list[ExteriorResult]) -> float:
    """Richardson extrapolation in ``R^(2-d)`` from the two largest truncations (d >= 3)."""
    if len(results) < 2:
        raise ValueError("extrapolation needs two truncation radii")
    ordered = sorted(results, key=lambda r: r.R_trunc)
    lo, hi = ordered[-2], ordered[-1]
    d = hi.d
    if d < 3:
        raise ValueError("no truncation error model for d = 2")
    a, b = lo.R_trunc ** (d - 2), hi.R_trunc ** (d - 2)
    return (b * hi.c_star - a * lo.c_star) / (b - a)


def exterior_summary(results: list[ExteriorResult]) -> dict:
    first = results[0]
    summary = {
        "shape": {"kind": first.shape.kind, "size": first.shape.size},
        "d": first.d,
        "n": first.n,
        "R_trunc": [r.R_trunc for r in results],
        "c_star": [r.c_star for r in results],
        "residuals": [r.fit_residual for r in results],
        "extrapolated_c_star": None,
    }
    if first.d >= 3 and len(results) >= 2:
        summary["extrapolated_c_star"] = extrapolate_cstar(results)
    return summary
