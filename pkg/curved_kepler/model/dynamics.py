"""
Physical Hamiltonian dynamics of the Kepler problem on the surface.

H = p_r^2 / 2 + p_theta^2 / (2 f^2) + gamma_c Theta(r), unit mass.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from curved_kepler.common.errors import ValidationError, NumericalFailureError
from curved_kepler.model.geometry import SurfaceSpec, profile, check_radius, barrier_radius, BARRIER_SLACK_FRACTION

LOGGER = logging.getLogger(__name__)

MIN_TOLERANCE = 1e-14
MAX_TOLERANCE = 1e-3

# absolute tolerance is tol * ATOL_FACTOR
ATOL_FACTOR = 1e-2

COLLISION_MARGIN_FRACTION = 1e-3
DEFAULT_NUM_SAMPLES = 2001


@dataclass(frozen=True)
class PhaseState:
    """Canonical state (r, theta, p_r, p_theta); theta is never reduced mod 2 pi"""

    r: float
    theta: float
    p_r: float
    p_theta: float

    def to_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.p_r, self.p_theta], dtype=float)

    @classmethod
    def from_array(cls, y) -> "PhaseState":
        return cls(r=float(y[0]), theta=float(y[1]), p_r=float(y[2]), p_theta=float(y[3]))

    def reversed(self) -> "PhaseState":
        """Time reversed state (momenta negated)"""
        return PhaseState(self.r, self.theta, -self.p_r, -self.p_theta)

    def to_dict(self):
        return asdict(self)


class Termination(Enum):
    """Why an integration stopped"""

    TIME_LIMIT = "time-limit"
    COLLISION_APPROACH = "collision-approach"
    EVENT = "event"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class Trajectory:
    """Sampled solution; states rows are (r, theta, p_r, p_theta)"""

    times: np.ndarray
    states: np.ndarray
    termination: Termination
    event_times: List[np.ndarray] = field(default_factory=list)
    event_states: List[np.ndarray] = field(default_factory=list)
    message: str = ""

    def __len__(self):
        return len(self.times)

    @property
    def samples(self) -> List[Tuple[float, PhaseState]]:
        return [(float(t), PhaseState.from_array(y)) for t, y in zip(self.times, self.states)]

    @property
    def initial(self) -> PhaseState:
        return PhaseState.from_array(self.states[0])

    @property
    def final(self) -> PhaseState:
        return PhaseState.from_array(self.states[-1])

    def raise_for_failure(self):
        """Raise NumericalFailureError if the integration broke down"""
        if self.termination == Termination.NUMERICAL_FAILURE:
            raise NumericalFailureError(f"integration failed at t={self.times[-1]}: {self.message}")


def hamiltonian(s: SurfaceSpec, x: PhaseState) -> float:
    """Energy of a state"""
    f, _, theta, _ = profile(s, x.r)
    return 0.5 * x.p_r * x.p_r + 0.5 * x.p_theta * x.p_theta / (f * f) + s.gamma_c * theta


def eom(s: SurfaceSpec, x: PhaseState) -> np.ndarray:
    """(r', theta', p_r', p_theta') in the PhaseState.to_array order"""
    check_radius(s, x.r)
    return np.array(_vector_field(s, x.r, x.p_r, x.p_theta))


def _vector_field(s: SurfaceSpec, r: float, p_r: float, p_theta: float):
    x = s.sqrt_k * r
    f = s.L * math.sin(x)
    df = s.beta * math.cos(x)
    inv_f_sq = 1.0 / (f * f)
    return (
        p_r,
        p_theta * inv_f_sq,
        p_theta * p_theta * df * inv_f_sq / f - s.gamma_c * inv_f_sq,
        0.0,
    )


def validate_tolerance(tol: float, name: str = "tol"):
    if not MIN_TOLERANCE <= tol <= MAX_TOLERANCE:
        raise ValidationError(name, f"must lie in [{MIN_TOLERANCE}, {MAX_TOLERANCE}], got {tol!r}")


def default_collision_margin(s: SurfaceSpec) -> float:
    return COLLISION_MARGIN_FRACTION * s.r_S


def integrate(
    s: SurfaceSpec,
    x0: PhaseState,
    t_end: float,
    tol: float = 1e-10,
    collision_margin: Optional[float] = None,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    events: Sequence[Callable] = (),
) -> Trajectory:
    """Integrate the equations of motion with DOP853 and dense output sampling.

    Stops early with COLLISION_APPROACH when r drops below r_N + collision_margin.
    Passing the energy barrier of x0 by more than a small slack counts as
    NUMERICAL_FAILURE; high energy orbits may come arbitrarily close to r_S.
    Extra events follow the solve_ivp convention, fn(t, y) with optional
    ``terminal`` and ``direction`` attributes; y is (r, theta, p_r, p_theta).
    A terminal extra event stops with EVENT.
    """
    validate_tolerance(tol)
    if not t_end > 0:
        raise ValidationError("t_end", f"must be positive, got {t_end!r}")
    if num_samples < 2:
        raise ValidationError("num_samples", f"must be at least 2, got {num_samples!r}")
    check_radius(s, x0.r)

    if collision_margin is None:
        collision_margin = default_collision_margin(s)
    if not collision_margin > 0:
        raise ValidationError("collision_margin", f"must be positive, got {collision_margin!r}")

    y0 = x0.to_array()
    if x0.r <= s.r_N + collision_margin:
        LOGGER.info("Initial state r=%s already inside the collision margin", x0.r)
        return Trajectory(np.array([0.0]), y0[np.newaxis, :], Termination.COLLISION_APPROACH)

    def rhs(_, y):
        return _vector_field(s, y[0], y[2], y[3])

    def collision(_, y):
        return y[0] - (s.r_N + collision_margin)

    collision.terminal = True
    collision.direction = -1

    # gamma_c Theta(r) <= h bounds r, crossing the barrier means the energy drifted
    r_guard = barrier_radius(s, hamiltonian(s, x0)) + BARRIER_SLACK_FRACTION * (s.r_S - s.r_N)

    def south(_, y):
        return r_guard - y[0]

    south.terminal = True
    south.direction = -1

    all_events = [collision, south] + list(events)

    t_eval = np.linspace(0.0, t_end, num_samples)
    solution = solve_ivp(
        rhs,
        (0.0, t_end),
        y0,
        method="DOP853",
        t_eval=t_eval,
        events=all_events,
        rtol=tol,
        atol=tol * ATOL_FACTOR,
        dense_output=True,
    )

    times = solution.t
    states = solution.y.T

    if solution.status == -1:
        LOGGER.warning("Integration failed: %s", solution.message)
        termination = Termination.NUMERICAL_FAILURE
    elif solution.status == 1:
        if len(solution.t_events[0]) > 0:
            termination = Termination.COLLISION_APPROACH
        elif len(solution.t_events[1]) > 0:
            LOGGER.warning("Trajectory crossed the energy barrier at r=%s, energy drifted numerically", r_guard)
            termination = Termination.NUMERICAL_FAILURE
        else:
            termination = Termination.EVENT
        t_stop = max(
            te[-1]
            for event, te in zip(all_events, solution.t_events)
            if len(te) > 0 and getattr(event, "terminal", False)
        )
        if len(times) == 0 or t_stop > times[-1]:
            times = np.append(times, t_stop)
            states = np.vstack([states, solution.sol(t_stop)])
    else:
        termination = Termination.TIME_LIMIT

    if len(times) == 0:
        times = np.array([0.0])
        states = y0[np.newaxis, :]

    LOGGER.debug("Integrated to t=%s with %d samples, termination %s", times[-1], len(times), termination.value)

    return Trajectory(
        times=times,
        states=states,
        termination=termination,
        event_times=[np.asarray(te) for te in solution.t_events[2:]],
        event_states=[np.asarray(ye) for ye in solution.y_events[2:]],
        message=solution.message,
    )


def sample_states(
    s: SurfaceSpec,
    n: int,
    rng: np.random.Generator,
    band: Tuple[float, float] = (0.1, 0.9),
    momentum_scale: float = 1.0,
) -> List[PhaseState]:
    """Uniform random states with r in a band of (r_N, r_S) and bounded momenta"""
    low = s.r_N + band[0] * (s.r_S - s.r_N)
    high = s.r_N + band[1] * (s.r_S - s.r_N)
    states = []
    for _ in range(n):
        r = rng.uniform(low, high)
        theta = rng.uniform(0.0, 2 * math.pi)
        p_r = rng.uniform(-momentum_scale, momentum_scale)
        p_theta = rng.uniform(-momentum_scale, momentum_scale)
        states.append(PhaseState(r, theta, p_r, p_theta))
    return states
