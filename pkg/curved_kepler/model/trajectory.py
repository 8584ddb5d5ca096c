"""
Analytic orbit equation and its comparison with integrated trajectories.

With rho = -Theta(r) every nonradial orbit satisfies
rho(theta) = (1 + e cos(beta (theta - theta0))) / p.
"""

import logging
import math
from dataclasses import dataclass, asdict
from typing import List, Tuple

import numpy as np

from curved_kepler.common.errors import DegenerateOrbitError, ValidationError, NumericalFailureError
from curved_kepler.model.geometry import SurfaceSpec, profile, pole_margin
from curved_kepler.model.dynamics import PhaseState, Trajectory, Termination, integrate
from curved_kepler.model.invariants import ConservedSet, conserved

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConicParams:
    """Semi-latus analog p, eccentricity analog e and orientation theta0"""

    p: float
    e: float
    theta0: float

    def to_dict(self):
        return asdict(self)


def conic_params(s: SurfaceSpec, c: ConservedSet) -> ConicParams:
    """p = beta^2 p_theta^2 / gamma_c, e (cos, sin)(beta theta0) = beta (I1, I2) / gamma_c"""
    if c.p_theta == 0:
        raise DegenerateOrbitError("radial orbit (p_theta = 0) has no conic form")

    p = s.beta * s.beta * c.p_theta * c.p_theta / s.gamma_c
    e = s.beta * math.hypot(c.I1, c.I2) / s.gamma_c
    if e == 0:
        return ConicParams(p=p, e=0.0, theta0=0.0)

    phase = math.atan2(c.I2, c.I1) % (2 * math.pi)
    theta0 = phase / s.beta
    # atan2 % 2pi can round to exactly 2pi
    if theta0 >= 2 * math.pi / s.beta:
        theta0 = 0.0
    return ConicParams(p=p, e=e, theta0=theta0)


def rho_of_theta(cp: ConicParams, beta: float, theta):
    """rho along the conic, accepts scalars or arrays"""
    return (1.0 + cp.e * np.cos(beta * (np.asarray(theta) - cp.theta0))) / cp.p


def r_from_rho(s: SurfaceSpec, rho):
    """Inverse of rho = -Theta(r) on (r_N, r_S), accepts scalars or arrays"""
    # cot(sqrt(K) r) = L^2 sqrt(K) rho and arccot(y) = pi/2 - arctan(y) lies in (0, pi)
    r = (0.5 * math.pi - np.arctan(s.L * s.beta * np.asarray(rho, dtype=float))) / s.sqrt_k
    return float(r) if np.ndim(r) == 0 else r


def orbit_comparison(s: SurfaceSpec, traj: Trajectory) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """theta, numeric rho = -Theta(r(t)), analytic rho(theta) and their deviation per sample"""
    cp = conic_params(s, conserved(s, traj.initial))
    r, theta = traj.states[:, 0], traj.states[:, 1]
    x = s.sqrt_k * r
    rho_numeric = np.cos(x) / (s.L * s.beta * np.sin(x))
    rho_analytic = rho_of_theta(cp, s.beta, theta)
    return theta, rho_numeric, rho_analytic, np.abs(rho_numeric - rho_analytic)


def compare_orbit(s: SurfaceSpec, traj: Trajectory) -> float:
    """Max |-Theta(r(t)) - rho(theta(t))| using the conic of the initial state"""
    return float(np.max(orbit_comparison(s, traj)[3]))


def circular_momentum(s: SurfaceSpec, r: float) -> float:
    """Positive p_theta of the circular orbit through r, which needs Theta(r) < 0"""
    theta_r = profile(s, r).theta
    if not theta_r < 0:
        raise ValidationError("r", f"circular orbits only exist where Theta < 0, got Theta({r})={theta_r}")
    return math.sqrt(-s.gamma_c / (s.beta * s.beta * theta_r))


def apsis_offset(cp: ConicParams, beta: float, theta: float) -> float:
    """Angular distance from theta to the nearest apsis beta (theta - theta0) = k pi"""
    phase = beta * (theta - cp.theta0)
    return abs(phase - math.pi * round(phase / math.pi)) / beta


def sample_bounded_states(
    s: SurfaceSpec,
    n: int,
    rng: np.random.Generator,
    max_eccentricity: float = 0.7,
    band: Tuple[float, float] = (0.2, 0.8),
    max_tries: int = 10000,
) -> List[PhaseState]:
    """Random nonradial states whose orbits stay clear of both poles"""
    margin = 10 * pole_margin(s)
    low = s.r_N + band[0] * (s.r_S - s.r_N)
    high = s.r_N + band[1] * (s.r_S - s.r_N)
    states = []
    for _ in range(max_tries):
        if len(states) == n:
            break
        r = rng.uniform(low, high)
        x = PhaseState(
            r=r,
            theta=rng.uniform(0.0, 2 * math.pi),
            p_r=rng.uniform(-0.5, 0.5),
            p_theta=rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.2),
        )
        cp = conic_params(s, conserved(s, x))
        if cp.e > max_eccentricity:
            continue
        r_min = r_from_rho(s, (1 + cp.e) / cp.p)
        r_max = r_from_rho(s, (1 - cp.e) / cp.p)
        if r_min < s.r_N + margin or r_max > s.r_S - margin:
            continue
        states.append(x)

    if len(states) < n:
        raise NumericalFailureError(f"found only {len(states)} of {n} bounded states in {max_tries} tries")
    return states


def recurrence_error(
    s: SurfaceSpec, x0: PhaseState, theta_advance: float, tol: float = 1e-10, t_max: float = 1e4
) -> float:
    """Integrate until theta has advanced by theta_advance and compare (r, p_r, p_theta) with x0"""
    if x0.p_theta == 0:
        raise DegenerateOrbitError("radial orbit never advances in theta")
    target = x0.theta + math.copysign(abs(theta_advance), x0.p_theta)

    def advanced(_, y):
        return y[1] - target

    advanced.terminal = True

    traj = integrate(s, x0, t_max, tol=tol, num_samples=2, events=[advanced])
    traj.raise_for_failure()
    if traj.termination != Termination.EVENT:
        raise NumericalFailureError(
            f"theta did not advance by {theta_advance} before termination {traj.termination.value}"
        )

    final = traj.final
    LOGGER.debug("theta advanced by %s after t=%s", theta_advance, traj.times[-1])
    return max(abs(final.r - x0.r), abs(final.p_r - x0.p_r), abs(final.p_theta - x0.p_theta))

