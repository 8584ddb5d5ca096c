import math
import unittest
from unittest import mock

import numpy as np

from curved_kepler.common.errors import (
    AsymptoticSetError,
    BlockTooLargeError,
    ChartDomainError,
    ClassificationError,
    ValidationError,
)
from curved_kepler.model.block import (
    BlockSpec,
    block_function,
    barrier_radius,
    block_function_second_derivative,
    classify_regularizability,
    conic_gamma,
    default_block_size,
    extrapolate_zero_limit,
    gamma_exit,
    gamma_limits,
    make_block,
    map_across_block,
    numeric_gamma_limit,
    numeric_transit,
    reverse_transit,
    south_barrier_margin,
    south_pole_block_check,
    zeta,
)
from curved_kepler.model.blowup import McGeheeState, integrate_regularized
from curved_kepler.model.dynamics import integrate, sample_states
from curved_kepler.model.geometry import Pole, make_surface, surface_from_beta


class TestMakeBlock(unittest.TestCase):

    def setUp(self):
        self.sphere = make_surface(1.0, 1.0)

    def test_sphere_block(self):
        bs = make_block(self.sphere, -0.5, 0.5)
        self.assertIsInstance(bs, BlockSpec)
        self.assertAlmostEqual(bs.r_delta, math.atan(0.5), delta=1e-12)
        self.assertAlmostEqual(bs.k1, math.cos(math.atan(0.5)), delta=1e-12)
        self.assertAlmostEqual(bs.k2, -0.8, delta=1e-12)
        self.assertAlmostEqual(bs.boundary_sq, 1.5)
        self.assertAlmostEqual(bs.convexity, 0.1, delta=1e-12)
        self.assertGreater(block_function_second_derivative(bs, self.sphere), 0.0)

    def test_block_too_large(self):
        with self.assertRaises(BlockTooLargeError):
            make_block(self.sphere, -0.5, 1.0)

    def test_second_derivative_by_finite_differences(self):
        step = 1e-3
        for beta in (1.0, 2 / 3):
            s = surface_from_beta(beta)
            bs = make_block(s, -0.5, default_block_size(s, -0.5))
            tangency = McGeheeState(r=bs.r_delta, v=0.0, theta=0.0, u=math.sqrt(bs.boundary_sq))
            forward = integrate_regularized(s, tangency, step, tol=1e-13, num_samples=2).final
            backward = integrate_regularized(s, tangency, -step, tol=1e-13, num_samples=2).final
            middle = block_function(s, bs.r_delta)
            second = (block_function(s, forward.r) - 2 * middle + block_function(s, backward.r)) / step**2
            expected = block_function_second_derivative(bs, s)
            self.assertAlmostEqual(second, expected, delta=1e-4 * abs(expected))

    def test_block_beyond_energy_bound(self):
        with self.assertRaises(ValidationError) as context:
            make_block(self.sphere, -0.5, 2.5)
        self.assertNotIsInstance(context.exception, BlockTooLargeError)
        self.assertEqual(context.exception.field, "delta")

    def test_non_positive_delta(self):
        with self.assertRaises(ValidationError):
            make_block(self.sphere, -0.5, 0.0)

    def test_default_block_size_halves(self):
        self.assertEqual(default_block_size(self.sphere, -0.5), 0.5)
        self.assertEqual(default_block_size(self.sphere, -1.0), 0.25)
        for beta in (2.0, 2 / 3, 0.4):
            s = surface_from_beta(beta)
            for h in (-1.0, 0.0, 1.0):
                self.assertGreater(make_block(s, h, default_block_size(s, h)).convexity, 0.0)

    def test_south_block(self):
        bs = make_block(self.sphere, 1.0, 2.0, Pole.SOUTH)
        self.assertGreater(bs.r_delta, self.sphere.r_equator)
        self.assertAlmostEqual(bs.boundary_sq, 2.0)
        self.assertGreater(bs.k2, 0.0)
        self.assertEqual(default_block_size(self.sphere, 1.0, Pole.SOUTH), 2.0)

    def test_south_block_needs_positive_energy(self):
        with self.assertRaises(ValidationError):
            make_block(self.sphere, -1.0, 2.0, Pole.SOUTH)
        with self.assertRaises(ValidationError):
            make_block(self.sphere, 1.0, 0.5, Pole.SOUTH)

    def test_to_dict(self):
        self.assertEqual(make_block(self.sphere, -0.5, 0.5).to_dict()["pole"], "north")


class TestExitAngle(unittest.TestCase):

    def setUp(self):
        self.sphere = make_surface(1.0, 1.0)
        self.block = make_block(self.sphere, -0.5, 0.5)

    def test_zeta_on_asymptotic_set(self):
        for beta in (1.0, 0.5):
            s = surface_from_beta(beta)
            bs = make_block(s, -0.5, default_block_size(s, -0.5))
            self.assertAlmostEqual(zeta(bs, s, 0.0), 0.5 * math.pi / beta)

    def test_zeta_reflection(self):
        for beta in (1.0, 2 / 3, 0.5):
            s = surface_from_beta(beta)
            bs = make_block(s, -0.5, default_block_size(s, -0.5))
            for fraction in (0.05, 0.4, 0.9):
                u = fraction * bs.u_max
                self.assertAlmostEqual(beta * zeta(bs, s, -u), math.pi - beta * zeta(bs, s, u), delta=1e-12)

    def test_zeta_outside_boundary(self):
        with self.assertRaises(ChartDomainError):
            zeta(self.block, self.sphere, 2.0)

    def test_gamma_at_sample_entry(self):
        # conic orbit through the entry point u = 1 has p = 0.4, e = sqrt(0.44)
        expected = 2 * math.acos(-0.2 / math.sqrt(0.44))
        self.assertAlmostEqual(gamma_exit(self.block, self.sphere, 1.0), expected, delta=1e-10)
        self.assertAlmostEqual(gamma_exit(self.block, self.sphere, -1.0), -expected, delta=1e-10)

    def test_gamma_vanishes_at_tangency(self):
        u = self.block.u_max * (1 - 1e-12)
        self.assertAlmostEqual(gamma_exit(self.block, self.sphere, u), 0.0, delta=1e-4)
        self.assertAlmostEqual(gamma_exit(self.block, self.sphere, -u), 0.0, delta=1e-4)

    def test_gamma_one_sided_limits(self):
        self.assertAlmostEqual(gamma_exit(self.block, self.sphere, 1e-9), 2 * math.pi, delta=1e-6)
        self.assertAlmostEqual(gamma_exit(self.block, self.sphere, -1e-9), -2 * math.pi, delta=1e-6)
        upper, lower = gamma_limits(surface_from_beta(0.5))
        self.assertAlmostEqual(upper, 4 * math.pi)
        self.assertAlmostEqual(lower, -4 * math.pi)

    def test_gamma_undefined_on_asymptotic_set(self):
        with self.assertRaises(AsymptoticSetError):
            gamma_exit(self.block, self.sphere, 0.0)
        with self.assertRaises(AsymptoticSetError):
            numeric_transit(self.block, self.sphere, 0.0, 0.0)

    def test_agrees_with_conic_orbit(self):
        for beta in (1.0, 2 / 3, 0.4):
            s = surface_from_beta(beta)
            bs = make_block(s, -0.3, default_block_size(s, -0.3))
            for fraction in (-0.9, -0.4, -0.05, 0.05, 0.4, 0.9):
                u = fraction * bs.u_max
                self.assertAlmostEqual(gamma_exit(bs, s, u), conic_gamma(bs, s, u), delta=1e-8)

    def test_map_preserves_speed(self):
        exit_point = map_across_block(self.block, self.sphere, 0.4, 0.3)
        self.assertEqual(exit_point.u, 0.3)
        self.assertAlmostEqual(exit_point.v, math.sqrt(1.5 - 0.09))
        self.assertAlmostEqual(exit_point.theta, 0.4 + gamma_exit(self.block, self.sphere, 0.3))


class TestTransit(unittest.TestCase):

    def test_sphere_sample_entry(self):
        s = make_surface(1.0, 1.0)
        bs = make_block(s, -0.5, 0.5)
        result = numeric_transit(bs, s, 0.0, 0.3)
        self.assertAlmostEqual(result.theta, gamma_exit(bs, s, 0.3), delta=1e-6)
        self.assertAlmostEqual(result.u, 0.3, delta=1e-6)
        self.assertGreater(result.v, 0.0)
        self.assertLess(result.r_turn, bs.r_delta)

    def test_analytic_map_over_grid(self):
        for beta in (1.0, 0.5):
            s = surface_from_beta(beta)
            bs = make_block(s, -0.5, default_block_size(s, -0.5))
            for theta in (0.0, 2.0):
                for fraction in (-0.95, -0.5, -0.05, 0.05, 0.5, 0.95):
                    u = fraction * bs.u_max
                    expected = map_across_block(bs, s, theta, u)
                    result = numeric_transit(bs, s, theta, u)
                    self.assertAlmostEqual(result.theta, expected.theta, delta=1e-6)
                    self.assertAlmostEqual(result.u, expected.u, delta=1e-6)
                    self.assertAlmostEqual(result.v, expected.v, delta=1e-6)

    def test_reverse_transit_recovers_entry(self):
        s = surface_from_beta(2 / 3)
        bs = make_block(s, -0.5, default_block_size(s, -0.5))
        result = numeric_transit(bs, s, 0.5, 0.4 * bs.u_max)
        entry = reverse_transit(bs, s, result)
        self.assertAlmostEqual(entry.r, bs.r_delta, delta=1e-6)
        self.assertAlmostEqual(entry.theta, 0.5, delta=1e-6)
        self.assertAlmostEqual(entry.u, 0.4 * bs.u_max, delta=1e-6)
        self.assertLess(entry.v, 0.0)

    def test_gamma_limit_extrapolation(self):
        for beta in (1.0, 2 / 3, 0.5, 0.4):
            s = surface_from_beta(beta)
            bs = make_block(s, -0.5, default_block_size(s, -0.5))
            limit, gammas = numeric_gamma_limit(bs, s, 1)
            self.assertEqual(len(gammas), 4)
            self.assertAlmostEqual(limit, 2 * math.pi / beta, delta=1e-3)

    def test_gamma_limit_from_below(self):
        s = make_surface(1.0, 1.0)
        bs = make_block(s, -0.5, 0.5)
        limit, _ = numeric_gamma_limit(bs, s, -1)
        self.assertAlmostEqual(limit, -2 * math.pi, delta=1e-3)

    def test_extrapolate_linear(self):
        self.assertAlmostEqual(extrapolate_zero_limit([0.1, 0.01, 0.001], [3.2, 3.02, 3.002]), 3.0)
        with self.assertRaises(ValidationError):
            extrapolate_zero_limit([0.1], [1.0])


class TestRegularizability(unittest.TestCase):

    def test_truth_table(self):
        table = [
            (2.0, 1, None),
            (1.0, 2, 1),
            (2 / 3, 3, None),
            (0.5, 4, 2),
            (0.4, 5, None),
            (1 / 3, 6, 3),
            (2 / 7, 7, None),
            (0.37, None, None),
            (1 / math.sqrt(2), None, None),
        ]
        for beta, north_m, orbifold_n in table:
            verdict = classify_regularizability(surface_from_beta(beta))
            self.assertEqual(verdict.north_m, north_m, f"beta={beta}")
            self.assertEqual(verdict.orbifold_n, orbifold_n, f"beta={beta}")
            self.assertEqual(verdict.south, "regularizable")
            if orbifold_n is not None:
                self.assertEqual(verdict.north_m, 2 * orbifold_n)
                self.assertTrue(verdict.north_regularizable)

    def test_orbifold_beyond_m_max(self):
        verdict = classify_regularizability(surface_from_beta(1 / 40), m_max=64)
        self.assertEqual(verdict.orbifold_n, 40)
        self.assertEqual(verdict.north_m, 80)

    def test_verdict_line(self):
        self.assertEqual(
            classify_regularizability(make_surface(1.0, 1.0)).to_line(),
            "beta=1.0 north=2 south=regularizable orbifold=1",
        )
        self.assertEqual(
            classify_regularizability(surface_from_beta(0.37)).to_line(),
            "beta=0.37 north=none south=regularizable orbifold=none",
        )

    def test_inconsistent_orbifold_raises(self):
        with mock.patch("curved_kepler.model.block.classify_orbifold", return_value=3):
            with self.assertRaises(ClassificationError):
                classify_regularizability(make_surface(1.0, 1.0))


class TestSouthPole(unittest.TestCase):

    def test_south_transits_exit(self):
        for beta in (1.0, 0.5):
            s = surface_from_beta(beta)
            report = south_pole_block_check(s, 1.0)
            self.assertTrue(report.all_exited)
            self.assertEqual(report.samples, 9)
            self.assertLess(report.max_map_error, 1e-6)
            self.assertGreaterEqual(report.min_barrier_margin, -1e-8)

    def test_barrier_radius(self):
        s = make_surface(1.0, 1.0)
        self.assertEqual(barrier_radius(s, -1.0), s.r_equator)
        # gamma_c Theta(r) = h, Theta = -cot(r)
        self.assertAlmostEqual(-1.0 / math.tan(barrier_radius(s, 0.5)), 0.5, delta=1e-12)

    def test_barrier_along_random_trajectories(self):
        s = surface_from_beta(2 / 3)
        for x0 in sample_states(s, 50, np.random.default_rng(21)):
            traj = integrate(s, x0, 5.0, num_samples=201)
            self.assertGreaterEqual(south_barrier_margin(s, traj), -1e-8)


if __name__ == "__main__":
    unittest.main()
