"""Periodically perforated domains and their node classification.

The perforated set is R^d with a closed hole ``eps * (k + eta * T)`` removed
from every cell ``eps * (k + Y)``, ``Y = [-1/2, 1/2]^d``.  The computational
domain is the centred box ``Q_{eps R} = (-eps R / 2, eps R / 2)^d`` sampled
on a vertex-centred grid with ``n`` intervals per cell edge.

Grid conventions
----------------
* Periodic: ``n R`` nodes per axis at ``-eps R/2 + i h``; node ``n R`` is
  identified with node 0.
* Dirichlet: ``n R + 1`` nodes per axis; nodes on the box faces are ``Outer``
  unless they lie in a hole.
* ``n`` must be even so every hole centre is a grid node.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import DisconnectedFluid, InvalidGeometry, ResolutionTooCoarse

# relative slack for the closed-set convention on node coordinates
_BOUNDARY_TOL = 1e-9

MIN_NODES_ACROSS = 4


@dataclass(frozen=True)
class Ball:
    radius: float

    def __post_init__(self):
        if not 0.0 < self.radius < 0.5:
            raise InvalidGeometry("T inside Y", f"ball radius {self.radius} not in (0, 1/2)")

    kind = "ball"

    @property
    def size(self):
        return self.radius

    def contains(self, *coords):
        """Closed-set membership for local cell coordinates (unit-cell scale)."""
        r2 = sum(np.square(c) for c in coords)
        return r2 <= (self.radius * (1.0 + _BOUNDARY_TOL)) ** 2

    def distance_to_center(self, *coords):
        return np.sqrt(sum(np.square(c) for c in coords))


@dataclass(frozen=True)
class Cube:
    half_width: float

    def __post_init__(self):
        if not 0.0 < self.half_width < 0.5:
            raise InvalidGeometry(
                "T inside Y", f"cube half-width {self.half_width} not in (0, 1/2)"
            )

    kind = "cube"

    @property
    def size(self):
        return self.half_width

    def contains(self, *coords):
        inside = np.ones(np.broadcast_shapes(*(np.shape(c) for c in coords)), dtype=bool)
        for c in coords:
            inside &= np.abs(c) <= self.half_width * (1.0 + _BOUNDARY_TOL)
        return inside


HoleShape = Ball | Cube


def shape_from_dict(data: dict) -> HoleShape:
    kind = data["kind"].lower()
    if kind == "ball":
        return Ball(float(data["size"]))
    if kind == "cube":
        return Cube(float(data["size"]))
    raise InvalidGeometry("shape kind", f"unknown hole shape {kind!r}")


def max_admissible_c0(shape: HoleShape) -> float:
    """Largest c0 with B(0, c0) in T and dist(dT, dY) >= c0."""
    # both shapes: inscribed radius = size, gap to the cell boundary = 1/2 - size
    return min(shape.size, 0.5 - shape.size)


def validate_geometry(shape: HoleShape, c0: float) -> float:
    """Check the standing geometric condition and return the largest admissible c0.

    Raises
    ------
    InvalidGeometry
        With ``clause`` naming the violated half of the condition.
    """
    if c0 <= 0:
        raise InvalidGeometry("c0 > 0", f"c0 must be positive, got {c0}")
    if c0 > shape.size:
        raise InvalidGeometry(
            "B(0,c0) in T", f"B(0,{c0}) is not contained in {shape.kind}({shape.size})"
        )
    gap = 0.5 - shape.size
    if gap < c0:
        raise InvalidGeometry(
            "dist(dT,dY) >= c0", f"dist(dT, dY) = {gap:.6g} < c0 = {c0}"
        )
    return max_admissible_c0(shape)


class OuterBC(str, enum.Enum):
    PERIODIC = "periodic"
    DIRICHLET_ZERO = "dirichlet_zero"
    DIRICHLET_DATA = "dirichlet_data"


class NodeClass(enum.IntEnum):
    FLUID = 0
    HOLE = 1
    OUTER = 2


@dataclass(frozen=True)
class DomainSpec:
    """Parameters of a perforated box ``Q_{eps R}`` and its grid.

    ``shape=None`` describes the unperforated box (no holes, no resolution
    rule); ``d=1`` is accepted as a test harness for stencil checks.
    """

    d: int
    epsilon: float = 1.0
    eta: float = 1.0
    cells: int = 1
    n: int = 32
    outer_bc: OuterBC = OuterBC.PERIODIC
    shape: HoleShape | None = field(default_factory=lambda: Ball(0.25))

    def __post_init__(self):
        object.__setattr__(self, "outer_bc", OuterBC(self.outer_bc))
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not 0.0 < self.epsilon <= 1.0 or not 0.0 < self.eta <= 1.0:
            raise ValueError("epsilon and eta must lie in (0, 1]")
        if self.cells < 1:
            raise ValueError("cells must be a positive integer")
        if self.n < 2 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 2, got {self.n}")
        if self.shape is not None and self.n * self.eta < MIN_NODES_ACROSS:
            raise ResolutionTooCoarse(
                f"n*eta = {self.n * self.eta:.3g} < {MIN_NODES_ACROSS}: hole not resolved"
            )

    @property
    def h(self) -> float:
        return self.epsilon / self.n

    @property
    def periodic(self) -> bool:
        return self.outer_bc is OuterBC.PERIODIC

    @property
    def length(self) -> float:
        return self.epsilon * self.cells

    @property
    def nodes_per_axis(self) -> int:
        m = self.n * self.cells
        return m if self.periodic else m + 1

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.d

    def axis_coords(self) -> np.ndarray:
        return -0.5 * self.length + self.h * np.arange(self.nodes_per_axis)

    def coords(self, sparse: bool = True) -> tuple[np.ndarray, ...]:
        x = self.axis_coords()
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij", sparse=sparse))

    def axis_weights(self) -> np.ndarray:
        w = np.full(self.nodes_per_axis, self.h)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.h
        return w

    def node_weights(self) -> np.ndarray:
        """Quadrature weights (dual-cell volumes clipped to the box)."""
        w = self.axis_weights()
        out = np.ones(self.grid_shape)
        for j in range(self.d):
            out = out * w.reshape([-1 if k == j else 1 for k in range(self.d)])
        return out

    def with_(self, **changes) -> DomainSpec:
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return DomainSpec(**values)


def resolution_for(eta: float, nodes_across: int) -> int:
    """Smallest even ``n`` with at least ``nodes_across`` nodes per ``eta``."""
    n = int(math.ceil(nodes_across / eta - 1e-9))
    return n + (n % 2)


def is_in_hole(x, spec: DomainSpec) -> bool | np.ndarray:
    """Whether point(s) ``x`` lie in ``eps (k + eta T)`` for the nearest lattice k.

    ``x`` is a sequence of d coordinates (scalars or broadcastable arrays).
    """
    if spec.shape is None:
        out = np.zeros(np.broadcast_shapes(*(np.shape(c) for c in x)), dtype=bool)
        return bool(out) if out.ndim == 0 else out
    local = []
    for c in x:
        y = np.asarray(c, dtype=float) / spec.epsilon
        local.append((y - np.round(y)) / spec.eta)
    inside = spec.shape.contains(*local)
    return bool(inside) if np.ndim(inside) == 0 else inside


def periodic_label(binary: np.ndarray, periodic: bool) -> tuple[np.ndarray, int]:
    """Face-connected components, merging across opposite faces when periodic."""
    labels, count = ndimage.label(binary)
    if not periodic or count < 2:
        return labels, count
    parent = np.arange(count + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for axis in range(binary.ndim):
        first = np.take(labels, 0, axis=axis)
        last = np.take(labels, -1, axis=axis)
        both = (first > 0) & (last > 0)
        for a, b in set(zip(first[both].tolist(), last[both].tolist())):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(count + 1)])
    uniq, relabel = np.unique(roots, return_inverse=True)
    merged = relabel[labels]
    # label 0 (background) maps to 0 because root 0 sorts first
    return merged, len(uniq) - 1


@dataclass(frozen=True, eq=False)
class NodeMask:
    """Per-node classification in C (lexicographic) order."""

    labels: np.ndarray
    spec: DomainSpec

    @cached_property
    def fluid(self) -> np.ndarray:
        return self.labels == NodeClass.FLUID

    @cached_property
    def hole(self) -> np.ndarray:
        return self.labels == NodeClass.HOLE

    @cached_property
    def outer(self) -> np.ndarray:
        return self.labels == NodeClass.OUTER

    @property
    def n_fluid(self) -> int:
        return int(self.fluid.sum())

    @property
    def n_hole(self) -> int:
        return int(self.hole.sum())

    def hole_components(self) -> int:
        return periodic_label(self.hole, self.spec.periodic)[1]

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.labels, dtype=np.int8).tobytes()).hexdigest()[:16]


def build_mask(spec: DomainSpec, check_connected: bool = True) -> NodeMask:
    """Classify every node as Fluid, Hole or Outer.

    Hole takes precedence over Outer so that boundary data never contradicts
    the zero condition in the holes.
    """
    labels = np.zeros(spec.grid_shape, dtype=np.int8)
    if not spec.periodic:
        for axis in range(spec.d):
            idx = [slice(None)] * spec.d
            idx[axis] = [0, -1]
            labels[tuple(idx)] = NodeClass.OUTER
    if spec.shape is not None:
        hole = is_in_hole(spec.coords(), spec)
        if not np.any(hole):
            raise ResolutionTooCoarse("no grid node falls inside the holes")
        labels[hole] = NodeClass.HOLE
    mask = NodeMask(labels, spec)
    if check_connected:
        _, count = periodic_label(mask.fluid, spec.periodic)
        if count > 1:
            raise DisconnectedFluid(f"fluid region has {count} components")
    return mask
