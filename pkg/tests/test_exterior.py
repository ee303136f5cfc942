import math

import numpy as np
import pytest

from perforated.errors import EmptyAnnulus, TruncationTooSmall
from perforated.exterior import (
    exterior_summary,
    extrapolate_cstar,
    fit_cstar,
    obstacle_diameter,
    solve_phi_star,
)
from perforated.geometry import Ball, Cube, DomainSpec, OuterBC
from perforated.grid import GridFunction
from perforated.linsolve import assemble


def synthetic(d, func, cells=8, n=4):
    spec = DomainSpec(d=d, cells=cells, n=n, outer_bc=OuterBC.DIRICHLET_DATA, shape=None)
    r = np.sqrt(sum(c**2 for c in spec.coords(sparse=False)))
    with np.errstate(divide="ignore", invalid="ignore"):
        values = func(r)
    values[~np.isfinite(values)] = 0.0
    return GridFunction(values, spec)


class TestFitCstar:
    def test_exact_round_trip(self):
        phi = synthetic(3, lambda r: 1.0 - 0.3 / r)
        c, rel = fit_cstar(phi, 3, (1.0, 4.0))
        assert c == pytest.approx(0.3, rel=1e-12)
        assert rel < 1e-12

    def test_higher_order_perturbation(self):
        # the free intercept makes the fit shift by about 0.8 times the
        # r^-3 coefficient on this annulus
        phi = synthetic(3, lambda r: 1.0 - 0.3 / r + 0.002 / r**3)
        c, _ = fit_cstar(phi, 3, (1.0, 4.0))
        assert c == pytest.approx(0.3, rel=0.01)

    def test_log_round_trip_2d(self):
        phi = synthetic(2, lambda r: 0.4 * (np.log(r) - np.log(0.25)))
        c, rel = fit_cstar(phi, 2, (0.5, 4.0))
        assert c == pytest.approx(0.4, rel=1e-12)

    def test_empty_annulus(self):
        phi = synthetic(3, lambda r: 1.0 - 0.3 / r)
        with pytest.raises(EmptyAnnulus):
            fit_cstar(phi, 3, (2.0, 2.0))
        with pytest.raises(EmptyAnnulus):
            fit_cstar(phi, 3, (100.0, 200.0))


class TestSolve:
    def test_guards(self):
        with pytest.raises(TruncationTooSmall):
            solve_phi_star(Ball(0.25), 2.0, 8)
        with pytest.raises(ValueError):
            solve_phi_star(Ball(0.125), 2.0, 7)
        with pytest.raises(ValueError):
            solve_phi_star(Ball(0.125), 2.0, 8, d=4)

    def test_obstacle_diameter(self):
        assert obstacle_diameter(Ball(0.2), 3) == pytest.approx(0.4)
        assert obstacle_diameter(Cube(0.1), 2) == pytest.approx(0.2 * math.sqrt(2))

    def test_profile_invariants(self):
        res = solve_phi_star(Ball(0.125), 2.0, 8, d=3)
        phi = res.phi
        assert phi.values.min() >= 0.0 and phi.values.max() <= 1.0 + 1e-12
        np.testing.assert_array_equal(phi.values[phi.mask.hole], 0.0)
        np.testing.assert_allclose(phi.values[phi.mask.outer], 1.0)
        assert res.c_star > 0
        assert phi.values.shape == (2 * 16 + 1,) * 3

    def test_discrete_harmonic(self):
        res = solve_phi_star(Ball(0.125), 2.0, 8, d=3, tol=1e-12)
        phi = res.phi
        A = assemble(phi.mask)
        residual = A @ A.gather(phi.values) - A.coupling @ phi.values.ravel()[A.outer_index]
        scale = np.abs(A.coupling @ phi.values.ravel()[A.outer_index]).max()
        assert np.abs(residual).max() <= 1e-9 * scale

    def test_octant_matches_reflection(self):
        res = solve_phi_star(Cube(0.0625), 2.0, 8, d=2)
        phi = res.phi.values
        np.testing.assert_array_equal(phi, phi[::-1, :])
        np.testing.assert_array_equal(phi, phi[:, ::-1])
        np.testing.assert_array_equal(res.sample((np.array([-3]), np.array([2]))), res.octant[3, 2])
        with pytest.raises(ValueError):
            res.sample((np.array([17]), np.array([0])))

    def test_half_value_at_twice_radius(self):
        a, n = 0.25, 24
        res = solve_phi_star(Ball(a), 4.0, n, d=3)
        # the fitted constant removes the truncation offset of the far-field value
        value = res.sample((np.array([int(2 * a * n)]), np.array([0]), np.array([0])))[0] + res.intercept
        assert value == pytest.approx(0.5, abs=0.02)

    def test_truncation_convergence(self):
        radii = (2.0, 3.0, 4.0, 6.0)
        cs = [solve_phi_star(Ball(0.125), R, 8, d=3).c_star for R in radii]
        diffs = np.diff(cs)
        assert np.all(diffs < 0)
        for k in range(len(diffs) - 1):
            predicted = (1 / radii[k + 1] - 1 / radii[k + 2]) / (1 / radii[k] - 1 / radii[k + 1])
            assert abs(diffs[k + 1]) / abs(diffs[k]) <= predicted * 1.05

    def test_capacity_monotone_in_radius(self):
        cs = [solve_phi_star(Ball(a), 4.0, 16, d=3).c_star for a in (0.125, 0.1875, 0.25)]
        assert cs[0] < cs[1] < cs[2]

    def test_2d_log_profile(self):
        res = solve_phi_star(Ball(0.125), 2.0, 16, d=2)
        assert res.fit_residual <= 0.02
        assert res.c_star > 0

    def test_extrapolation_and_summary(self):
        results = [solve_phi_star(Ball(0.125), R, 8, d=3) for R in (2.0, 3.0)]
        value = extrapolate_cstar(results)
        # exact for a pure 1/R truncation error
        c2, c3 = results[0].c_star, results[1].c_star
        assert value == pytest.approx((3 * c3 - 2 * c2) / 1.0)
        summary = exterior_summary(results)
        assert summary["extrapolated_c_star"] == pytest.approx(value)
        assert summary["R_trunc"] == [2.0, 3.0]
        with pytest.raises(ValueError):
            extrapolate_cstar(results[:1])
        two_d = [solve_phi_star(Ball(0.125), R, 8, d=2) for R in (2.0, 3.0)]
        with pytest.raises(ValueError):
            extrapolate_cstar(two_d)
        assert exterior_summary(two_d)["extrapolated_c_star"] is None
