import math
import unittest

import numpy as np

from curved_kepler.common.errors import (
    ChartDomainError,
    EquatorDegeneracyError,
    PoleEvaluationError,
    ValidationError,
)
from curved_kepler.model.block import block_function
from curved_kepler.model.blowup import (
    CollisionManifold,
    McGeheeState,
    RegularizedTermination,
    energy_of,
    energy_relation_residual,
    equilibria_and_eigenvalues,
    fit_manifold_slope,
    flow_on_manifold,
    from_mcgehee,
    handoff,
    handoff_radius,
    integrate_regularized,
    manifold_arc,
    manifold_connection,
    numeric_eigenvalues,
    regularized_eom,
    time_rate,
    to_mcgehee,
)
from curved_kepler.model.dynamics import PhaseState, hamiltonian, integrate
from curved_kepler.model.geometry import Pole, make_surface, surface_from_beta


class TestCoordinates(unittest.TestCase):

    def test_round_trip(self):
        s = surface_from_beta(2 / 3)
        x = PhaseState(0.6, 2.0, -0.4, 0.3)
        np.testing.assert_allclose(from_mcgehee(s, to_mcgehee(s, x)).to_array(), x.to_array(), rtol=1e-13)

    def test_energy_is_preserved(self):
        s = surface_from_beta(0.5)
        x = PhaseState(2.0, 0.0, 0.3, 0.2)
        self.assertAlmostEqual(energy_of(s, to_mcgehee(s, x)), hamiltonian(s, x), delta=1e-12)

    def test_equator(self):
        with self.assertRaises(EquatorDegeneracyError):
            to_mcgehee(make_surface(1.0, 1.0), PhaseState(0.5 * math.pi, 0.0, 0.1, 0.1))

    def test_collision_manifold_has_no_physical_state(self):
        with self.assertRaises(PoleEvaluationError):
            from_mcgehee(make_surface(1.0, 1.0), McGeheeState(0.0, 0.0, 1.0, 1.0))

    def test_chart_domain(self):
        s = make_surface(1.0, 1.0)
        y = McGeheeState(2.0, 0.0, 0.5, 0.5)
        with self.assertRaises(ChartDomainError):
            regularized_eom(s, y, Pole.NORTH)
        self.assertEqual(len(regularized_eom(s, y, Pole.SOUTH)), 4)

    def test_time_rate_vanishes_at_the_pole(self):
        s = make_surface(1.0, 1.0)
        self.assertEqual(time_rate(s, 0.0), 0.0)
        self.assertGreater(time_rate(s, 0.5), 0.0)


class TestRegularizedFlow(unittest.TestCase):

    def setUp(self):
        self.sphere = make_surface(1.0, 1.0)
        self.x0 = PhaseState(0.5, 0.0, -0.3, 0.4)

    def test_equilibria_are_fixed(self):
        for gamma_c in (1.0, 2.0):
            s = make_surface(1.0, 0.5, gamma_c=gamma_c)
            manifold = CollisionManifold(gamma_c)
            for sign in (1, -1):
                np.testing.assert_allclose(regularized_eom(s, manifold.equilibrium(0.3, sign)), 0.0, atol=1e-14)

    def test_energy_relation_along_flow(self):
        h = hamiltonian(self.sphere, self.x0)
        traj = integrate_regularized(self.sphere, to_mcgehee(self.sphere, self.x0), 5.0, tol=1e-12)
        self.assertEqual(traj.termination, RegularizedTermination.TAU_LIMIT)
        self.assertLess(np.min(traj.states[:, 0]), self.x0.r)
        for row in traj.states:
            self.assertLess(abs(energy_relation_residual(self.sphere, McGeheeState.from_array(row), h)), 1e-8)

    def test_physical_time_matches_dynamics(self):
        traj = integrate_regularized(self.sphere, to_mcgehee(self.sphere, self.x0), 3.0, tol=1e-12, num_samples=2)
        physical = integrate(self.sphere, self.x0, float(traj.times[-1]), tol=1e-12, num_samples=2)
        final = from_mcgehee(self.sphere, traj.final)
        np.testing.assert_allclose(physical.final.to_array(), final.to_array(), atol=1e-6)

    def test_backward_integration(self):
        y0 = to_mcgehee(self.sphere, self.x0)
        forward = integrate_regularized(self.sphere, y0, 2.0, tol=1e-12, num_samples=2)
        backward = integrate_regularized(self.sphere, forward.final, -2.0, tol=1e-12, num_samples=2)
        np.testing.assert_allclose(backward.final.to_array(), y0.to_array(), atol=1e-8)
        self.assertLess(backward.times[-1], 0.0)

    def test_chart_exit(self):
        x0 = PhaseState(1.0, 0.0, 1.5, 0.5)
        traj = integrate_regularized(self.sphere, to_mcgehee(self.sphere, x0), 50.0)
        self.assertEqual(traj.termination, RegularizedTermination.CHART_EXIT)
        self.assertLess(traj.final.r, self.sphere.r_equator)

    def test_collision_in_finite_physical_time(self):
        x0 = PhaseState(1.0, 0.0, 0.0, 0.0)
        y0 = to_mcgehee(self.sphere, x0)
        short = integrate_regularized(self.sphere, y0, 10.0, tol=1e-12)
        long = integrate_regularized(self.sphere, y0, 20.0, tol=1e-12)
        self.assertEqual(long.termination, RegularizedTermination.TAU_LIMIT)
        # r only reaches the pole as tau grows without bound, t converges to the collision time
        self.assertGreater(long.final.r, 0.0)
        self.assertLess(long.final.r, 1e-6)
        self.assertAlmostEqual(long.times[-1], short.times[-1], delta=1e-6)
        steps = np.diff(long.times)
        self.assertTrue(np.all(steps >= 0))
        self.assertTrue(np.all(np.diff(steps) <= 1e-12))

        physical = integrate(self.sphere, x0, 10.0, collision_margin=1e-4)
        self.assertEqual(physical.termination.value, "collision-approach")
        self.assertAlmostEqual(long.times[-1], physical.times[-1], delta=1e-4)

    def test_zero_duration(self):
        with self.assertRaises(ValidationError):
            integrate_regularized(self.sphere, to_mcgehee(self.sphere, self.x0), 0.0)


class TestCollisionManifold(unittest.TestCase):

    def test_arc_stays_on_manifold(self):
        s = make_surface(1.0, 1.0, gamma_c=2.0)
        arc = manifold_arc(s, theta_star=0.7)
        np.testing.assert_array_equal(arc.states[:, 0], 0.0)
        speed_sq = arc.states[:, 1] ** 2 + arc.states[:, 3] ** 2
        np.testing.assert_allclose(speed_sq, 4.0, atol=1e-9)
        self.assertEqual(arc.times[-1], 0.0)

    def test_v_nondecreasing_along_arc(self):
        for beta in (1.0, 0.5, 2.0):
            arc = manifold_arc(surface_from_beta(beta))
            self.assertTrue(np.all(np.diff(arc.states[:, 1]) >= -1e-12))
            self.assertLess(arc.states[0, 1], 0.0)
            self.assertGreater(arc.states[-1, 1], 0.0)

    def test_slope_half_beta(self):
        s = surface_from_beta(0.5)
        self.assertAlmostEqual(fit_manifold_slope(manifold_arc(s)), 0.25, delta=1e-8)

    def test_slope_other_surfaces(self):
        for beta, gamma_c in ((1.0, 2.0), (2 / 3, 1.0), (2.0, 1.0)):
            s = surface_from_beta(beta, gamma_c=gamma_c)
            self.assertAlmostEqual(fit_manifold_slope(manifold_arc(s)), 0.5 * beta, delta=1e-8)

    def test_flow_on_manifold(self):
        s = surface_from_beta(2 / 3)
        self.assertAlmostEqual(flow_on_manifold(s, -1.0, 0.0, 3.0), 0.0)

    def test_spectra(self):
        for beta in (1.0, 0.5, 2 / 3):
            for gamma_c in (1.0, 2.0):
                s = surface_from_beta(beta, gamma_c=gamma_c)
                for spectrum in equilibria_and_eigenvalues(s):
                    numeric = numeric_eigenvalues(s, spectrum.sign)
                    np.testing.assert_allclose(numeric.real, spectrum.eigenvalues, atol=1e-6)
                    np.testing.assert_allclose(numeric.imag, 0.0, atol=1e-6)

    def test_equilibria(self):
        s = make_surface(1.0, 1.0, gamma_c=2.0)
        plus, minus = equilibria_and_eigenvalues(s)
        self.assertEqual(plus.v, 2.0)
        self.assertEqual(minus.v, -2.0)
        self.assertEqual(plus.eigenvalues, (-1.0, 0.0, 2.0, 2.0))

    def test_connection(self):
        same = manifold_connection(surface_from_beta(0.5))
        self.assertEqual(same.kind, "same-direction")
        self.assertEqual(same.m, 4)
        self.assertAlmostEqual(same.circuits, 2.0)

        opposite = manifold_connection(surface_from_beta(2 / 3))
        self.assertEqual(opposite.kind, "opposite-direction")
        self.assertAlmostEqual(opposite.circuits, 1.5)

        self.assertEqual(manifold_connection(surface_from_beta(0.37)).kind, "none")


class TestHandoff(unittest.TestCase):

    def test_handoff_radius(self):
        s = make_surface(1.0, 1.0)
        r = handoff_radius(s, -0.5)
        self.assertAlmostEqual(r, 0.25 * math.pi, delta=1e-12)
        self.assertAlmostEqual(block_function(s, handoff_radius(s, 2.0, 0.3)), 0.3, delta=1e-12)

    def test_handoff_outside_chart(self):
        with self.assertRaises(ChartDomainError):
            handoff(make_surface(1.0, 1.0), PhaseState(2.0, 0.0, 0.1, 0.1))

    def test_collision_continuation(self):
        s = make_surface(1.0, 1.0)
        traj = integrate(s, PhaseState(0.5, 0.0, -0.3, 0.4), 50.0, collision_margin=0.2)
        y0 = handoff(s, traj.final)
        self.assertAlmostEqual(y0.r, 0.2, delta=1e-9)
        continued = integrate_regularized(s, y0, 10.0)
        self.assertGreater(continued.final.r, 0.0)


if __name__ == "__main__":
    unittest.main()
