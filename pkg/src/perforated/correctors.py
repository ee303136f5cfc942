"""Cell corrector chi and cut-off corrector psi.

``chi`` solves the periodic cell problem ``-Delta chi = eta^(d-2)`` in the
fluid part of the unit cell with ``chi = 0`` on the hole.  ``psi`` vanishes
on the hole, equals 1 away from ``B(0, 1/3)`` and follows the exterior
profile (rescaled by eta) near the hole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EtaTooLarge, InsufficientSamples
from .exterior import ExteriorResult, obstacle_diameter, obstacle_radius, solve_phi_star
from .fitting import ExponentFit, fit_exponent
from .geometry import DomainSpec, HoleShape, NodeClass, NodeMask, OuterBC, build_mask, resolution_for
from .grid import GridFunction, gradient, lp_norm
from .linsolve import SolveReport, assemble, build_rhs, cg_solve

PLATEAU_RADIUS = 1.0 / 3.0
INNER_RADIUS = 0.25


@dataclass(frozen=True, eq=False)
class ChiResult:
    chi: GridFunction
    mean: float
    grad_l2: float
    eta: float
    report: SolveReport = field(repr=False)


@dataclass(frozen=True, eq=False)
class PsiResult:
    psi: GridFunction
    grad_lp: dict[float, float]
    eta: float
    report: SolveReport | None = field(default=None, repr=False)


def solve_chi(eta: float, shape: HoleShape, n: int, d: int = 3, tol: float = 1e-10) -> ChiResult:
    """Periodic cell problem on ``Q_1`` with right-hand side ``eta^(d-2)``.

    ``mean`` integrates over the whole cell (hole nodes contribute zero).
    """
    spec = DomainSpec(d=d, eta=eta, n=n, outer_bc=OuterBC.PERIODIC, shape=shape)
    mask = build_mask(spec)
    A = assemble(mask)
    rhs = np.full(spec.grid_shape, eta ** (d - 2))
    x, report = cg_solve(A, build_rhs(A, F=rhs), tol=tol)
    chi = GridFunction(A.scatter(x), spec, mask)
    mean = float(np.sum(spec.node_weights() * chi.values))
    grad = lp_norm(gradient(chi), 2.0)
    return ChiResult(chi, mean, grad, eta, report)


def psi_closed_form_2d(x, eta: float):
    """Two-dimensional cut-off corrector, radial in ``|x|``.

    ``x`` is a pair of coordinates (scalars or broadcastable arrays) in Y.

    Examples
    --------
    >>> round(psi_closed_form_2d((0.2, 0.0), 0.05), 4)
    0.5757
    """
    inner = 2.0 * eta
    if inner >= PLATEAU_RADIUS:
        raise EtaTooLarge(f"2*eta = {inner:.4g} must be below 1/3")
    r = np.hypot(np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float))
    with np.errstate(divide="ignore"):
        ramp = (np.log(r) - math.log(inner)) / (math.log(PLATEAU_RADIUS) - math.log(inner))
    out = np.clip(ramp, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _offsets(spec: DomainSpec) -> tuple[np.ndarray, ...]:
    """Integer node offsets from the cell centre (periodic ``Q_1``)."""
    k = np.arange(spec.nodes_per_axis) - spec.nodes_per_axis // 2
    return tuple(np.meshgrid(*([k] * spec.d), indexing="ij", sparse=True))


def exterior_for_psi(eta: float, shape: HoleShape, n: int, d: int, tol: float = 1e-9) -> ExteriorResult:
    """Exterior solve on the grid matched to a cell grid with ``n`` nodes per cell.

    The exterior spacing is ``1/(n eta)`` so that ``x / eta`` of every cell node
    is an exterior node.  The truncation box reaches ``|y| = 1/(2 eta)``, twice
    the radius where the profile is sampled.
    """
    n_ext = n * eta
    if abs(n_ext - round(n_ext)) > 1e-9 or round(n_ext) % 2:
        raise ValueError(f"n * eta = {n_ext:.6g} must be an even integer for matched grids")
    n_ext = int(round(n_ext))
    R = max(8.0 * obstacle_diameter(shape, d), 1.0 / (2.0 * eta))
    R = math.ceil(2.0 * R) / 2.0
    return solve_phi_star(shape, R, n_ext, d=d, tol=tol)


def build_psi(
    eta: float,
    shape: HoleShape,
    n: int,
    d: int = 2,
    exterior: ExteriorResult | None = None,
    p_values: Sequence[float] = (2.0, 4.0),
    tol: float = 1e-10,
) -> PsiResult:
    """Sample the cut-off corrector on the periodic unit-cell grid.

    For d = 2 the closed form is evaluated at nodes.  For d = 3 the exterior
    profile is read off a matched grid inside ``B(0, 1/4)`` and the annulus
    ``1/4 < |x| < 1/3`` is filled by a discrete harmonic solve.
    """
    spec = DomainSpec(d=d, eta=eta, n=n, outer_bc=OuterBC.PERIODIC, shape=shape)
    mask = build_mask(spec)
    coords = spec.coords()
    report = None
    if d == 2:
        values = np.asarray(psi_closed_form_2d(coords, eta), dtype=float)
        values = np.broadcast_to(values, spec.grid_shape).copy()
        values[mask.hole] = 0.0
    else:
        if eta * obstacle_radius(shape, d) >= INNER_RADIUS:
            raise EtaTooLarge(f"eta * T is not inside B(0, {INNER_RADIUS})")
        if exterior is None:
            exterior = exterior_for_psi(eta, shape, n, d)
        if abs(exterior.n - n * eta) > 1e-9:
            raise ValueError("exterior grid does not match the cell grid")
        r = np.sqrt(sum(np.square(c) for c in coords))
        r = np.broadcast_to(r, spec.grid_shape)
        inner = (r <= INNER_RADIUS * (1 + 1e-12)) & ~mask.hole
        annulus = (r > INNER_RADIUS * (1 + 1e-12)) & (r < PLATEAU_RADIUS) & ~mask.hole
        values = np.ones(spec.grid_shape)
        values[mask.hole] = 0.0
        off = [np.broadcast_to(o, spec.grid_shape)[inner] for o in _offsets(spec)]
        values[inner] = exterior.sample(tuple(off))
        labels = np.full(spec.grid_shape, NodeClass.OUTER, dtype=np.int8)
        labels[annulus] = NodeClass.FLUID
        labels[mask.hole] = NodeClass.HOLE
        fill_mask = NodeMask(labels, spec)
        A = assemble(fill_mask)
        b = build_rhs(A, boundary=values)
        x, report = cg_solve(A, b, tol=tol)
        values = A.scatter(x, values.ravel()[A.outer_index])
    psi = GridFunction(values, spec, mask)
    grad = gradient(psi)
    grad_lp = {float(p): lp_norm(grad, float(p)) for p in p_values}
    return PsiResult(psi, grad_lp, eta, report)


def psi_model(d: int, p: float) -> tuple[float, float, float]:
    """``(eta_power, log_power, log_divisor)`` of ``||grad psi||_p`` for small eta.

    The d = 2 closed form has ``ln(1/3) - ln(2 eta) = -ln(6 eta)`` in its
    denominator, so its logarithms are taken as ``|ln(6 eta)|``.
    """
    if d == 2:
        div = 1.0 / 6.0
        if p > 2:
            return 2.0 / p - 1.0, -1.0, div
        if p == 2:
            return 0.0, -0.5, div
        return 0.0, -1.0, div
    d_conj = d / (d - 1.0)
    if p > d_conj:
        return d / p - 1.0, 0.0, 2.0
    if p == d_conj:
        return float(d - 2), 1.0 / p, 2.0
    return float(d - 2), 0.0, 2.0


def psi_gradient_scaling(
    etas: Sequence[float],
    p: float,
    shape: HoleShape,
    n: int | None = None,
    d: int = 2,
    nodes_across: int = 8,
) -> ExponentFit:
    """Fit ``||grad psi_eta||_{L^p(Y)}`` over ``etas`` with the log power fixed.

    With ``n=None`` each eta uses ``n = nodes_across / eta`` (rounded up to
    even) so that the hole is resolved by the same number of nodes at every eta.
    """
    etas = sorted({float(e) for e in etas})
    if len(etas) < 4:
        raise InsufficientSamples("psi scaling needs at least 4 distinct eta values")
    _, log_power, divisor = psi_model(d, p)
    samples = []
    for eta in etas:
        n_eta = n if n is not None else resolution_for(eta, nodes_across)
        res = build_psi(eta, shape, n_eta, d=d, p_values=(p,))
        samples.append((eta, res.grad_lp[float(p)]))
    return fit_exponent(samples, log_power=log_power, log_divisor=divisor)
