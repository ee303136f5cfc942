"""Discrete calculus on the structured grid.

Scalar fields live on nodes, vector fields on faces (staggered).  Face ``j``
of node ``i`` sits half a step forward along axis ``j``.  With this layout
``divergence`` is exactly minus the adjoint of ``gradient`` and
``-divergence(gradient(u))`` is the standard (2d+1)-point Laplacian.

Vector L^p norms use the componentwise pointwise norm
``(sum_j |f_j|^p)^(1/p)``; it is the Euclidean norm for p = 2 and within a
factor ``d^|1/2 - 1/p|`` of it otherwise.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import CellOutOfDomain, EmptyRegion, ShiftOutOfRange
from .geometry import DomainSpec, NodeMask, OuterBC, shape_from_dict

_ALIGN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    spec: DomainSpec
    mask: NodeMask | None = None

    def __post_init__(self):
        if self.values.shape != self.spec.grid_shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.spec.grid_shape}")


@dataclass(frozen=True, eq=False)
class VectorGridFunction:
    components: tuple[np.ndarray, ...]
    spec: DomainSpec
    mask: NodeMask | None = None

    def __post_init__(self):
        if len(self.components) != self.spec.d:
            raise ValueError("component count must equal the dimension")
        for j, comp in enumerate(self.components):
            if comp.shape != face_shape(self.spec, j):
                raise ValueError(f"component {j} has shape {comp.shape}, expected {face_shape(self.spec, j)}")


def face_shape(spec: DomainSpec, axis: int) -> tuple[int, ...]:
    shape = list(spec.grid_shape)
    if not spec.periodic:
        shape[axis] -= 1
    return tuple(shape)


def face_coords(spec: DomainSpec, axis: int) -> tuple[np.ndarray, ...]:
    x = spec.axis_coords()
    out = []
    for k in range(spec.d):
        if k == axis:
            c = x + 0.5 * spec.h
            if not spec.periodic:
                c = c[:-1]
        else:
            c = x
        out.append(c.reshape([-1 if m == k else 1 for m in range(spec.d)]))
    return tuple(out)


def face_weights(spec: DomainSpec, axis: int) -> np.ndarray:
    w_node = spec.axis_weights()
    out = np.ones(face_shape(spec, axis))
    for k in range(spec.d):
        if k == axis:
            w = np.full(out.shape[k], spec.h)
        else:
            w = w_node
        out = out * w.reshape([-1 if m == k else 1 for m in range(spec.d)])
    return out


def gradient(u: GridFunction) -> VectorGridFunction:
    """Forward differences ``(u(x + h e_j) - u(x)) / h`` on faces."""
    spec = u.spec
    comps = []
    for j in range(spec.d):
        if spec.periodic:
            comps.append((np.roll(u.values, -1, axis=j) - u.values) / spec.h)
        else:
            comps.append(np.diff(u.values, axis=j) / spec.h)
    return VectorGridFunction(tuple(comps), spec, u.mask)


def divergence(f: VectorGridFunction) -> GridFunction:
    """Backward differences of face values; missing boundary faces count as zero."""
    spec = f.spec
    out = np.zeros(spec.grid_shape)
    for j, comp in enumerate(f.components):
        if spec.periodic:
            out += (comp - np.roll(comp, 1, axis=j)) / spec.h
        else:
            pad = [(0, 0)] * spec.d
            pad[j] = (1, 1)
            out += np.diff(np.pad(comp, pad), axis=j) / spec.h
    return GridFunction(out, spec, f.mask)


Region = np.ndarray | Callable[..., np.ndarray] | None


def _region_mask(region: Region, coords, shape) -> np.ndarray | None:
    if region is None:
        return None
    sel = region(*coords) if callable(region) else region
    return np.broadcast_to(np.asarray(sel, dtype=bool), shape)


def lp_norm(u: GridFunction | VectorGridFunction, p: float, region: Region = None) -> float:
    """Discrete ``||u||_{L^p(region)}`` with trapezoid (dual-cell) weights.

    ``region`` is a boolean array matching the node (or face) layout, or a
    predicate of the coordinate arrays.
    """
    if not np.isfinite(p) or p <= 0:
        raise ValueError(f"p must be finite and positive, got {p}")
    spec = u.spec
    if isinstance(u, GridFunction):
        parts = [(u.values, spec.node_weights(), spec.coords())]
    else:
        parts = [(c, face_weights(spec, j), face_coords(spec, j)) for j, c in enumerate(u.components)]
    total = 0.0
    selected = 0
    for values, weights, coords in parts:
        sel = _region_mask(region, coords, values.shape)
        if sel is None:
            total += float(np.sum(weights * np.abs(values) ** p))
            selected += values.size
        else:
            total += float(np.sum(weights[sel] * np.abs(values[sel]) ** p))
            selected += int(sel.sum())
    if selected == 0:
        raise EmptyRegion("region selects no grid point")
    return total ** (1.0 / p)


def energy(u: GridFunction) -> float:
    """``||grad u||_{L^2}^2``."""
    return lp_norm(gradient(u), 2.0) ** 2


def _cube_axis_weights(positions: np.ndarray, half_width: float, h: float) -> np.ndarray:
    dist = np.abs(positions) - half_width
    w = np.where(dist < -_ALIGN_TOL * h, h, 0.0)
    return np.where(np.abs(dist) <= _ALIGN_TOL * h, 0.5 * h, w)


def cube_integral(values: np.ndarray, spec: DomainSpec, half_width: float, axis: int | None = None) -> float:
    """Trapezoid integral of a node field (``axis=None``) or face field over
    the centred cube ``[-half_width, half_width]^d``."""
    x = spec.axis_coords()
    out = values
    for k in range(spec.d):
        pos = x
        if k == axis:
            pos = x + 0.5 * spec.h
            if not spec.periodic:
                pos = pos[:-1]
        w = _cube_axis_weights(pos, half_width, spec.h)
        out = np.tensordot(w, out, axes=([0], [0]))
    return float(out)


def cell_average(u: GridFunction, z) -> float:
    """``u_hat(z) = integral of u over eps (z + Q_1)`` (the cell is unit size when eps = 1)."""
    spec = u.spec
    z = tuple(int(v) for v in np.atleast_1d(z))
    if len(z) != spec.d:
        raise ValueError("lattice point has wrong dimension")
    n, N = spec.n, spec.nodes_per_axis
    w1 = np.full(n + 1, spec.h)
    w1[0] = w1[-1] = 0.5 * spec.h
    index = []
    for zj in z:
        centre = n * zj + (n * spec.cells) // 2
        idx = np.arange(centre - n // 2, centre + n // 2 + 1)
        if spec.periodic:
            idx = idx % N
        elif idx[0] < 0 or idx[-1] > N - 1:
            raise CellOutOfDomain(f"cell {z} is not inside the domain")
        index.append(idx)
    block = u.values[np.ix_(*index)]
    for _ in range(spec.d):
        block = np.tensordot(w1, block, axes=([0], [0]))
    return float(block)


# ---------------------------------------------------------------------------
# lattice functions and forward differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LatticeFunction:
    """Values of g on the integer box ``origin + [0, shape)``."""

    values: np.ndarray
    origin: tuple[int, ...]

    def __call__(self, z) -> float:
        idx = tuple(int(a) - o for a, o in zip(z, self.origin))
        if any(i < 0 or i >= s for i, s in zip(idx, self.values.shape)):
            raise ShiftOutOfRange(f"point {tuple(z)} outside lattice box")
        return float(self.values[idx])

    def restrict(self, lo, hi) -> np.ndarray:
        """Values on the integer box ``lo <= z <= hi`` (inclusive)."""
        sl = []
        for a, b, o, s in zip(lo, hi, self.origin, self.values.shape):
            i0, i1 = a - o, b - o + 1
            if i0 < 0 or i1 > s:
                raise ShiftOutOfRange(f"box [{lo}, {hi}] exceeds lattice box")
            sl.append(slice(i0, i1))
        return self.values[tuple(sl)]


def multi_indices(d: int, order: int):
    """All gamma in N^d with |gamma| = order."""
    for combo in itertools.combinations_with_replacement(range(d), order):
        gamma = [0] * d
        for j in combo:
            gamma[j] += 1
        yield tuple(gamma)


def forward_difference(g: LatticeFunction, gamma) -> LatticeFunction:
    """``Delta^gamma g`` with ``Delta_j g(z) = g(z + e_j) - g(z)``."""
    gamma = tuple(int(k) for k in gamma)
    if len(gamma) != g.values.ndim or any(k < 0 for k in gamma):
        raise ValueError(f"invalid multi-index {gamma}")
    if sum(gamma) > g.values.ndim + 1:
        raise ValueError(f"|gamma| = {sum(gamma)} exceeds d + 1")
    out = g.values
    for j, k in enumerate(gamma):
        if k >= out.shape[j]:
            raise ShiftOutOfRange(f"shift {k} along axis {j} exceeds lattice box")
        if k:
            out = np.diff(out, n=k, axis=j)
    return LatticeFunction(out, g.origin)


def partial_norm_sq(g: LatticeFunction, order: int, lo, hi) -> np.ndarray:
    """``|partial^order g(z)|^2 = sum_{|gamma|=order} |Delta^gamma g(z)|^2`` on ``lo <= z <= hi``."""
    total = 0.0
    for gamma in multi_indices(g.values.ndim, order):
        total = total + forward_difference(g, gamma).restrict(lo, hi) ** 2
    return np.asarray(total)


# ---------------------------------------------------------------------------
# averaging operator S
# ---------------------------------------------------------------------------


def _node_energy_density(u: GridFunction) -> np.ndarray:
    """Split each face's |D_j u|^2 between its end nodes so that
    ``sum(node_w * e) == sum(face_w * |Du|^2)``; faces touching the box
    boundary give their whole share to the interior node."""
    spec = u.spec
    grad = gradient(u)
    e = np.zeros(spec.grid_shape)
    for j, comp in enumerate(grad.components):
        a = comp**2
        if spec.periodic:
            e += 0.5 * (a + np.roll(a, 1, axis=j))
            continue
        lower = 0.5 * a  # share to node i (face i+1/2)
        upper = 0.5 * a  # share to node i+1
        first = [slice(None)] * spec.d
        last = [slice(None)] * spec.d
        first[j] = 0
        last[j] = -1
        lower[tuple(last)] += upper[tuple(last)]
        upper[tuple(last)] = 0.0
        upper[tuple(first)] += lower[tuple(first)]
        lower[tuple(first)] = 0.0
        pad_lo = [(0, 0)] * spec.d
        pad_hi = [(0, 0)] * spec.d
        pad_lo[j] = (0, 1)
        pad_hi[j] = (1, 0)
        e += np.pad(lower, pad_lo) + np.pad(upper, pad_hi)
    return e


def s_operator(u: GridFunction, epsilon: float | None = None) -> GridFunction:
    """``S(x) = (mean over x + eps Q_2 of |grad u|^2)^(1/2)`` with u extended by zero.

    Periodic domains wrap the window.  Otherwise the result lives on the box
    dilated by ``eps`` on every side (``cells + 2``), which contains the
    whole support of S.
    """
    spec = u.spec
    eps = spec.epsilon if epsilon is None else epsilon
    half = int(round(eps / spec.h))
    if abs(half * spec.h - eps) > _ALIGN_TOL * eps:
        raise ValueError("window half-width must be a whole number of grid steps")
    if spec.outer_bc is OuterBC.DIRICHLET_DATA:
        raise ValueError("S needs zero outer data: the zero extension must stay in W^{1,2}")
    e = _node_energy_density(u)
    kernel = np.ones(2 * half + 1)
    kernel[0] = kernel[-1] = 0.5
    kernel /= 2 * half
    if spec.periodic:
        out = e
        for j in range(spec.d):
            acc = np.zeros_like(out)
            for off, wk in zip(range(-half, half + 1), kernel):
                acc += wk * np.roll(out, -off, axis=j)
            out = acc
        return GridFunction(np.sqrt(np.maximum(out, 0.0)), spec)
    if abs(eps - spec.epsilon) > _ALIGN_TOL * eps:
        raise ValueError("non-periodic S uses the cell size as window scale")
    ext = spec.with_(cells=spec.cells + 2, outer_bc=OuterBC.DIRICHLET_ZERO, shape=None)
    out = np.pad(e, half)
    from scipy import ndimage

    for j in range(spec.d):
        out = ndimage.correlate1d(out, kernel, axis=j, mode="constant", cval=0.0)
    return GridFunction(np.sqrt(np.maximum(out, 0.0)), ext)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _spec_header(spec: DomainSpec) -> dict:
    shape = None
    if spec.shape is not None:
        shape = {"kind": spec.shape.kind, "size": spec.shape.size}
    return {
        "d": spec.d,
        "epsilon": spec.epsilon,
        "eta": spec.eta,
        "cells": spec.cells,
        "n": spec.n,
        "outer_bc": spec.outer_bc.value,
        "shape": shape,
    }


def save_grid_function(u: GridFunction, stem: str | Path) -> tuple[Path, Path]:
    """Write ``stem.bin`` (little-endian float64, C order) and ``stem.json``."""
    stem = Path(stem)
    data = np.ascontiguousarray(u.values, dtype="<f8")
    header = {
        "dims": list(u.values.shape),
        "h": u.spec.h,
        "dtype": "<f8",
        "order": "C",
        "spec": _spec_header(u.spec),
        "mask_hash": u.mask.digest() if u.mask is not None else None,
        "values_sha256": hashlib.sha256(data.tobytes()).hexdigest(),
    }
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    bin_path.write_bytes(data.tobytes())
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def load_grid_function(stem: str | Path) -> GridFunction:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    s = header["spec"]
    spec = DomainSpec(
        d=s["d"],
        epsilon=s["epsilon"],
        eta=s["eta"],
        cells=s["cells"],
        n=s["n"],
        outer_bc=s["outer_bc"],
        shape=shape_from_dict(s["shape"]) if s["shape"] else None,
    )
    values = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=header["dtype"])
    return GridFunction(values.reshape(header["dims"]).copy(), spec)
