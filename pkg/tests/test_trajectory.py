import math
import unittest

import numpy as np

from curved_kepler.common.errors import DegenerateOrbitError, ValidationError
from curved_kepler.model.dynamics import PhaseState, integrate
from curved_kepler.model.geometry import make_surface, surface_from_beta, theta_function
from curved_kepler.model.invariants import conserved
from curved_kepler.model.trajectory import (
    apsis_offset,
    circular_momentum,
    compare_orbit,
    conic_params,
    orbit_comparison,
    r_from_rho,
    recurrence_error,
    rho_of_theta,
    sample_bounded_states,
)


class TestConicParams(unittest.TestCase):

    def test_sphere_equator(self):
        s = make_surface(1.0, 1.0)
        cp = conic_params(s, conserved(s, PhaseState(0.5 * math.pi, 0.0, 0.0, 1.0)))
        self.assertAlmostEqual(cp.p, 1.0)
        self.assertAlmostEqual(cp.e, 1.0)
        self.assertAlmostEqual(cp.theta0, math.pi)

    def test_circular_orbit(self):
        s = surface_from_beta(0.5)
        r0 = 0.8
        cp = conic_params(s, conserved(s, PhaseState(r0, 0.0, 0.0, circular_momentum(s, r0))))
        self.assertLess(cp.e, 1e-12)
        self.assertAlmostEqual(rho_of_theta(cp, s.beta, 2.0), -theta_function(s, r0), delta=1e-12)

    def test_theta0_branch(self):
        s = surface_from_beta(2 / 3)
        rng = np.random.default_rng(2)
        for x in sample_bounded_states(s, 20, rng):
            cp = conic_params(s, conserved(s, x))
            self.assertGreaterEqual(cp.theta0, 0.0)
            self.assertLess(cp.theta0, 2 * math.pi / s.beta)

    def test_radial_orbit(self):
        s = make_surface(1.0, 1.0)
        with self.assertRaises(DegenerateOrbitError):
            conic_params(s, conserved(s, PhaseState(1.0, 0.0, 0.3, 0.0)))

    def test_r_from_rho_inverts_theta(self):
        s = make_surface(4.0, 0.2)
        radii = np.array([0.1, 0.5, 0.8, 1.2, 1.5])
        rho = [-theta_function(s, r) for r in radii]
        np.testing.assert_allclose(r_from_rho(s, rho), radii, atol=1e-12)
        self.assertAlmostEqual(r_from_rho(s, rho[2]), 0.8, delta=1e-12)


class TestOrbitComparison(unittest.TestCase):

    def test_bounded_orbits_follow_conic(self):
        rng = np.random.default_rng(4)
        for beta in (1.0, 0.5):
            s = surface_from_beta(beta)
            for x0 in sample_bounded_states(s, 3, rng, max_eccentricity=0.5):
                traj = integrate(s, x0, 30.0, tol=1e-10)
                self.assertLess(compare_orbit(s, traj), 1e-6)

    def test_columns(self):
        s = make_surface(1.0, 1.0)
        traj = integrate(s, PhaseState(1.0, 0.0, 0.1, 0.8), 5.0, num_samples=11)
        theta, rho_numeric, rho_analytic, deviation = orbit_comparison(s, traj)
        self.assertEqual(len(theta), 11)
        np.testing.assert_allclose(deviation, np.abs(rho_numeric - rho_analytic))

    def test_apsides_at_radial_turning_points(self):
        s = surface_from_beta(2 / 3)
        x0 = PhaseState(0.9, 0.0, 0.25, 0.7)
        cp = conic_params(s, conserved(s, x0))

        def turning(_, y):
            return y[2]

        traj = integrate(s, x0, 40.0, tol=1e-11, events=[turning])
        self.assertGreater(len(traj.event_states[0]), 1)
        for state in traj.event_states[0]:
            self.assertLess(apsis_offset(cp, s.beta, state[1]), 1e-5)

    def test_circular_momentum_needs_negative_theta(self):
        with self.assertRaises(ValidationError):
            circular_momentum(make_surface(1.0, 1.0), 2.0)


class TestRecurrence(unittest.TestCase):

    def test_orbit_closes_for_rational_beta(self):
        s = surface_from_beta(2 / 3)
        x0 = sample_bounded_states(s, 1, np.random.default_rng(8), max_eccentricity=0.5)[0]
        self.assertLess(recurrence_error(s, x0, 6 * math.pi, tol=1e-11), 1e-5)

    def test_orbit_does_not_close_early(self):
        s = surface_from_beta(2 / 3)
        x0 = PhaseState(0.9, 0.0, 0.25, 0.7)
        self.assertGreater(recurrence_error(s, x0, 1.5 * math.pi, tol=1e-11), 1e-3)

    def test_radial_orbit(self):
        with self.assertRaises(DegenerateOrbitError):
            recurrence_error(make_surface(1.0, 1.0), PhaseState(1.0, 0.0, 0.1, 0.0), math.pi)

    def test_sampled_eccentricity(self):
        s = surface_from_beta(0.5)
        for x in sample_bounded_states(s, 10, np.random.default_rng(9), max_eccentricity=0.4):
            self.assertLessEqual(conic_params(s, conserved(s, x)).e, 0.4)


if __name__ == "__main__":
    unittest.main()
