import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from perforated.errors import IncompatibleRHS, NoFluidNodes, NotConverged
from perforated.geometry import Ball, Cube, DomainSpec, NodeClass, NodeMask, OuterBC, build_mask
from perforated.grid import GridFunction, energy, gradient
from perforated.linsolve import assemble, build_rhs, cg_solve, smallest_eigenvalue, solve_dirichlet
from perforated.probes import random_scalar, random_vector


def unit_box(d, n, bc=OuterBC.DIRICHLET_ZERO):
    return DomainSpec(d=d, n=n, outer_bc=bc, shape=None)


def discrete_dirichlet_eigenvalue(d, n):
    h = 1.0 / n
    return d * 4.0 / h**2 * math.sin(math.pi * h / 2) ** 2


def square_poisson_centre(terms=401):
    """Series solution of -Delta u = 1 on the unit square, evaluated at its centre."""
    total = 0.0
    for m in range(1, terms, 2):
        for k in range(1, terms, 2):
            sign = (-1) ** ((m - 1) // 2 + (k - 1) // 2)
            total += 16.0 * sign / (math.pi**4 * m * k * (m * m + k * k))
    return total


class TestAssemble:
    def test_one_dimensional_stencil(self):
        spec = DomainSpec(d=1, n=4, outer_bc=OuterBC.DIRICHLET_ZERO, shape=None)
        A = assemble(build_mask(spec))
        expected = np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]], dtype=float)
        np.testing.assert_allclose(A.matrix.toarray() * spec.h**2, expected)

    def test_periodic_constants_in_kernel(self):
        A = assemble(build_mask(unit_box(2, 16, OuterBC.PERIODIC)))
        assert A.singular
        np.testing.assert_allclose(A @ np.ones(A.size), 0.0, atol=1e-9)

    def test_symmetric(self, rng):
        spec = DomainSpec(d=2, eta=0.5, n=16, cells=2, outer_bc=OuterBC.DIRICHLET_ZERO, shape=Ball(0.25))
        A = assemble(build_mask(spec))
        assert abs(A.matrix - A.matrix.T).max() == 0.0
        v, w = rng.standard_normal((2, A.size))
        assert v @ (A @ w) == pytest.approx(w @ (A @ v), rel=1e-13)

    def test_stencil_width(self):
        spec = DomainSpec(d=3, eta=0.5, n=8, outer_bc=OuterBC.PERIODIC, shape=Cube(0.25))
        A = assemble(build_mask(spec))
        assert np.diff(A.matrix.indptr).max() <= 2 * 3 + 1

    def test_no_fluid_nodes(self):
        spec = unit_box(2, 4)
        labels = np.full(spec.grid_shape, NodeClass.HOLE, dtype=np.int8)
        with pytest.raises(NoFluidNodes):
            assemble(NodeMask(labels, spec))


class TestCG:
    def test_one_unknown(self):
        x, report = cg_solve(sp.identity(1, format="csr"), np.array([5.0]))
        assert x[0] == pytest.approx(5.0)
        assert report.converged

    def test_one_unknown_assembled(self):
        spec = DomainSpec(d=1, n=2, outer_bc=OuterBC.DIRICHLET_ZERO, shape=None)
        A = assemble(build_mask(spec))
        x, _ = cg_solve(A, A @ np.array([5.0]))
        assert x[0] == pytest.approx(5.0)

    def test_square_poisson(self):
        oracle = square_poisson_centre()
        assert oracle == pytest.approx(0.073671, abs=1e-6)
        mask = build_mask(unit_box(2, 128))
        u, report = solve_dirichlet(mask, F=np.ones(mask.spec.grid_shape))
        assert report.final_relative_residual <= 1e-10
        assert u.values.max() == pytest.approx(oracle, rel=0.01)

    def test_incompatible_rhs(self):
        A = assemble(build_mask(unit_box(2, 8, OuterBC.PERIODIC)))
        with pytest.raises(IncompatibleRHS):
            cg_solve(A, np.ones(A.size))

    def test_singular_zero_mean(self, rng):
        A = assemble(build_mask(unit_box(2, 8, OuterBC.PERIODIC)))
        b = rng.standard_normal(A.size)
        b -= b.mean()
        x, _ = cg_solve(A, b)
        assert abs(x.mean()) < 1e-12
        np.testing.assert_allclose(A @ x, b, atol=1e-8 * np.linalg.norm(b))

    def test_not_converged(self):
        A = assemble(build_mask(unit_box(2, 32)))
        with pytest.raises(NotConverged) as info:
            cg_solve(A, np.ones(A.size), max_iter=2)
        assert info.value.exit_code == 3
        assert not info.value.report.converged

    def test_zero_data_zero_solution(self):
        spec = DomainSpec(d=2, eta=0.5, n=16, outer_bc=OuterBC.DIRICHLET_ZERO, cells=2, shape=Ball(0.25))
        u, report = solve_dirichlet(build_mask(spec))
        np.testing.assert_array_equal(u.values, 0.0)
        assert report.iterations == 0

    def test_linear_boundary_data_reproduced(self):
        spec = DomainSpec(d=2, n=16, outer_bc=OuterBC.DIRICHLET_DATA, shape=None)
        x, y = spec.coords()
        g = np.broadcast_to(2 * x - y + 0.5, spec.grid_shape)
        u, _ = solve_dirichlet(build_mask(spec), boundary=g)
        np.testing.assert_allclose(u.values, g, atol=1e-9)


class TestEigenvalue:
    @pytest.mark.parametrize("d,n", [(1, 16), (2, 16), (3, 8)])
    def test_discrete_oracle(self, d, n):
        lam, vec = smallest_eigenvalue(assemble(build_mask(unit_box(d, n))), tol=1e-12)
        assert lam == pytest.approx(discrete_dirichlet_eigenvalue(d, n), rel=1e-8)
        assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_continuum_2d(self):
        lam, _ = smallest_eigenvalue(assemble(build_mask(unit_box(2, 128))))
        assert lam == pytest.approx(2 * math.pi**2, rel=0.01)

    def test_monotone_in_eta(self):
        lams = []
        for eta in (0.25, 0.5, 1.0):
            spec = DomainSpec(d=2, eta=eta, n=32, outer_bc=OuterBC.PERIODIC, shape=Ball(0.25))
            lams.append(smallest_eigenvalue(assemble(build_mask(spec)))[0])
        assert lams[0] <= lams[1] <= lams[2]

    def test_singular_rejected(self):
        with pytest.raises(IncompatibleRHS):
            smallest_eigenvalue(assemble(build_mask(unit_box(2, 8, OuterBC.PERIODIC))))


def test_energy_identity(rng):
    spec = DomainSpec(d=2, eta=0.5, cells=2, n=16, outer_bc=OuterBC.PERIODIC, shape=Ball(0.25))
    mask = build_mask(spec)
    F = random_scalar(spec, rng, mask)
    f = random_vector(spec, rng)
    u, _ = solve_dirichlet(mask, F=F, f=f, tol=1e-13)
    hd = spec.h**spec.d
    source = hd * np.sum(u.values * F)
    flux = hd * sum(np.sum(g * c) for g, c in zip(gradient(u).components, f.components))
    assert energy(u) == pytest.approx(source - flux, rel=1e-9)


@given(st.integers(0, 2**32 - 1), st.sampled_from([OuterBC.PERIODIC, OuterBC.DIRICHLET_ZERO]))
def test_maximum_principle(seed, bc):
    rng = np.random.default_rng(seed)
    spec = DomainSpec(d=2, eta=0.5, cells=2, n=8, outer_bc=bc, shape=Ball(0.25))
    mask = build_mask(spec)
    F = rng.random(spec.grid_shape) * (rng.random(spec.grid_shape) < 0.5)
    u, _ = solve_dirichlet(mask, F=F, tol=1e-12)
    assert u.values.min() >= -1e-12 * max(1.0, u.values.max())
    np.testing.assert_array_equal(u.values[mask.hole], 0.0)


def test_build_rhs_lifts_boundary():
    spec = DomainSpec(d=1, n=4, outer_bc=OuterBC.DIRICHLET_DATA, shape=None)
    A = assemble(build_mask(spec))
    g = np.array([1.0, 0, 0, 0, 3.0])
    b = build_rhs(A, boundary=g)
    np.testing.assert_allclose(b, np.array([1.0, 0.0, 3.0]) / spec.h**2)


def test_scatter_gather_round_trip(rng):
    spec = DomainSpec(d=2, eta=0.5, n=16, outer_bc=OuterBC.PERIODIC, shape=Ball(0.25))
    A = assemble(build_mask(spec))
    x = rng.standard_normal(A.size)
    full = A.scatter(x)
    np.testing.assert_array_equal(A.gather(full), x)
    assert np.all(full[A.mask.hole] == 0.0)
    assert isinstance(GridFunction(full, spec), GridFunction)
