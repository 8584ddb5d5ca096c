"""
Blow-up of the collision singularity.

McGehee type coordinates v = p_r / sqrt|Theta|, u = p_theta / (f sqrt|Theta|) and the
time change d tau = (sqrt|Theta| / f) dt turn the equations of motion into

    r' = v f
    v' = u^2 f' - v^2 / (2 f Theta) - gamma_c / (f |Theta|)
    theta' = u
    u' = -u v (f' + 1 / (2 f Theta))

On this surface f Theta = -cos(sqrt(K) r) / beta, so the field is analytic up to and
including the poles and only degenerates on the equator. The collision manifold
N = {r = r_N, u^2 + v^2 = 2 gamma_c} is invariant.

Arrays of blown-up states use the column order (r, v, theta, u).
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from curved_kepler.common.errors import (
    ValidationError,
    ChartDomainError,
    EquatorDegeneracyError,
    PoleEvaluationError,
)
from curved_kepler.model.geometry import SurfaceSpec, Pole, check_radius, match_fraction, DEFAULT_M_MAX
from curved_kepler.model.dynamics import PhaseState, validate_tolerance, ATOL_FACTOR

LOGGER = logging.getLogger(__name__)

# |Theta| below this (relative to 1 / (L beta)) counts as the equator
EQUATOR_TOLERANCE = 1e-12

CHART_MARGIN_FRACTION = 1e-3
JACOBIAN_STEP = 1e-6
DEFAULT_DELTA_CAP = 1.0


@dataclass(frozen=True)
class McGeheeState:
    """Blown-up state; theta is unreduced"""

    r: float
    theta: float
    v: float
    u: float

    def to_array(self) -> np.ndarray:
        """(r, v, theta, u)"""
        return np.array([self.r, self.v, self.theta, self.u], dtype=float)

    @classmethod
    def from_array(cls, y) -> "McGeheeState":
        return cls(r=float(y[0]), theta=float(y[2]), v=float(y[1]), u=float(y[3]))

    @property
    def chi(self) -> float:
        """Fiber angle with u = |w| cos(chi), v = |w| sin(chi)"""
        return math.atan2(self.v, self.u)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CollisionManifold:
    """The torus N: theta mod 2 pi times the circle u^2 + v^2 = 2 gamma_c"""

    gamma_c: float

    @property
    def radius(self) -> float:
        return math.sqrt(2 * self.gamma_c)

    def point(self, theta: float, chi: float, r_n: float = 0.0) -> McGeheeState:
        return McGeheeState(r=r_n, theta=theta, v=self.radius * math.sin(chi), u=self.radius * math.cos(chi))

    def equilibrium(self, theta: float, sign: int, r_n: float = 0.0) -> McGeheeState:
        """Point of S+ (sign=1) or S- (sign=-1)"""
        return McGeheeState(r=r_n, theta=theta, v=math.copysign(self.radius, sign), u=0.0)


class RegularizedTermination(Enum):
    TAU_LIMIT = "tau-limit"
    CHART_EXIT = "chart-exit"
    EVENT = "event"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class RegularizedTrajectory:
    """Samples in tau; states rows are (r, v, theta, u), times holds physical t(tau)"""

    taus: np.ndarray
    states: np.ndarray
    times: np.ndarray
    termination: RegularizedTermination
    event_taus: List[np.ndarray] = field(default_factory=list)
    event_states: List[np.ndarray] = field(default_factory=list)
    message: str = ""

    def __len__(self):
        return len(self.taus)

    @property
    def final(self) -> McGeheeState:
        return McGeheeState.from_array(self.states[-1])

    @property
    def chi(self) -> np.ndarray:
        return np.arctan2(self.states[:, 1], self.states[:, 3])


def check_chart(s: SurfaceSpec, r: float, pole: Pole = Pole.NORTH):
    """Raise unless r lies in the closed-at-the-pole half chart of the given pole"""
    if pole == Pole.NORTH:
        inside = s.r_N <= r < s.r_equator
    else:
        inside = s.r_equator < r <= s.r_S
    if not inside:
        raise ChartDomainError(f"r={r!r} is outside the {pole.value} pole chart")


def to_mcgehee(s: SurfaceSpec, x: PhaseState) -> McGeheeState:
    """Blow-up coordinates of a physical state"""
    check_radius(s, x.r)
    arg = s.sqrt_k * x.r
    f = s.L * math.sin(arg)
    abs_theta = abs(math.cos(arg)) / (s.beta * f)
    if abs_theta * s.L * s.beta < EQUATOR_TOLERANCE:
        raise EquatorDegeneracyError(f"Theta vanishes at r={x.r}, the blow-up is singular on the equator")
    root = math.sqrt(abs_theta)
    return McGeheeState(r=x.r, theta=x.theta, v=x.p_r / root, u=x.p_theta / (f * root))


def from_mcgehee(s: SurfaceSpec, y: McGeheeState) -> PhaseState:
    """Inverse of to_mcgehee away from the poles and the equator"""
    if not s.r_N < y.r < s.r_S:
        raise PoleEvaluationError(f"r={y.r!r} lies on the collision manifold or beyond, no physical state")
    arg = s.sqrt_k * y.r
    f = s.L * math.sin(arg)
    abs_theta = abs(math.cos(arg)) / (s.beta * f)
    if abs_theta * s.L * s.beta < EQUATOR_TOLERANCE:
        raise EquatorDegeneracyError(f"Theta vanishes at r={y.r}, the blow-up is singular on the equator")
    root = math.sqrt(abs_theta)
    return PhaseState(r=y.r, theta=y.theta, p_r=y.v * root, p_theta=y.u * f * root)


def _field(s: SurfaceSpec, r: float, v: float, u: float):
    arg = s.sqrt_k * r
    cos_x = math.cos(arg)
    f = s.L * math.sin(arg)
    df = s.beta * cos_x
    # 1 / (2 f Theta) and 1 / (f |Theta|)
    inv_two_f_theta = -0.5 * s.beta / cos_x
    inv_f_abs_theta = s.beta / abs(cos_x)
    return (
        v * f,
        u * u * df - v * v * inv_two_f_theta - s.gamma_c * inv_f_abs_theta,
        u,
        -u * v * (df + inv_two_f_theta),
    )


def time_rate(s: SurfaceSpec, r: float) -> float:
    """dt / d tau = f / sqrt|Theta| = f^(3/2) sqrt(beta / |cos(sqrt(K) r)|)"""
    arg = s.sqrt_k * r
    f = abs(s.L * math.sin(arg))
    return f * math.sqrt(f * s.beta / abs(math.cos(arg)))


def regularized_eom(s: SurfaceSpec, y: McGeheeState, pole: Pole = Pole.NORTH) -> np.ndarray:
    """(r', v', theta', u') with respect to tau"""
    check_chart(s, y.r, pole)
    return np.array(_field(s, y.r, y.v, y.u))


def energy_relation_residual(s: SurfaceSpec, y: McGeheeState, h: float) -> float:
    """sgn(Theta) (u^2 + v^2) / 2 + gamma_c - h / Theta, finite at the poles"""
    arg = s.sqrt_k * y.r
    cos_x = math.cos(arg)
    # h / Theta = -h L beta tan(x)
    h_over_theta = -h * s.L * s.beta * math.sin(arg) / cos_x
    sign = -math.copysign(1.0, cos_x)
    return sign * 0.5 * (y.u * y.u + y.v * y.v) + s.gamma_c - h_over_theta


def energy_of(s: SurfaceSpec, y: McGeheeState) -> float:
    """h = |Theta| (u^2 + v^2) / 2 + gamma_c Theta off the poles"""
    return _hamiltonian(s, from_mcgehee(s, y))


def _hamiltonian(s: SurfaceSpec, x: PhaseState) -> float:
    arg = s.sqrt_k * x.r
    f = s.L * math.sin(arg)
    theta_r = -math.cos(arg) / (s.L * s.beta * math.sin(arg))
    return 0.5 * x.p_r * x.p_r + 0.5 * x.p_theta * x.p_theta / (f * f) + s.gamma_c * theta_r


def default_chart_margin(s: SurfaceSpec) -> float:
    return CHART_MARGIN_FRACTION * s.r_S


def integrate_regularized(
    s: SurfaceSpec,
    y0: McGeheeState,
    tau_end: float,
    tol: float = 1e-10,
    pole: Pole = Pole.NORTH,
    num_samples: int = 1001,
    events: Sequence[Callable] = (),
    chart_margin: Optional[float] = None,
) -> RegularizedTrajectory:
    """Integrate the blown-up field in tau (backwards when tau_end < 0).

    Physical time is carried along as a fifth component, t(0) = 0. Stops with
    CHART_EXIT within chart_margin of the equator. Extra events use the solve_ivp
    convention on the augmented vector (r, v, theta, u, t).
    """
    validate_tolerance(tol)
    if tau_end == 0:
        raise ValidationError("tau_end", "must be nonzero")
    if num_samples < 2:
        raise ValidationError("num_samples", f"must be at least 2, got {num_samples!r}")
    check_chart(s, y0.r, pole)
    if chart_margin is None:
        chart_margin = default_chart_margin(s)

    def rhs(_, z):
        return (*_field(s, z[0], z[1], z[3]), time_rate(s, z[0]))

    # positive inside the chart
    def chart_exit(_, z):
        if pole == Pole.NORTH:
            return (s.r_equator - chart_margin) - z[0]
        return z[0] - (s.r_equator + chart_margin)

    chart_exit.terminal = True
    chart_exit.direction = -1

    all_events = [chart_exit] + list(events)
    z0 = np.append(y0.to_array(), 0.0)
    solution = solve_ivp(
        rhs,
        (0.0, tau_end),
        z0,
        method="DOP853",
        t_eval=np.linspace(0.0, tau_end, num_samples),
        events=all_events,
        rtol=tol,
        atol=tol * ATOL_FACTOR,
        dense_output=True,
    )

    taus = solution.t
    states = solution.y.T

    if solution.status == -1:
        LOGGER.warning("Regularized integration failed: %s", solution.message)
        termination = RegularizedTermination.NUMERICAL_FAILURE
    elif solution.status == 1:
        termination = (
            RegularizedTermination.CHART_EXIT
            if len(solution.t_events[0]) > 0
            else RegularizedTermination.EVENT
        )
        tau_stop = [
            te[-1]
            for event, te in zip(all_events, solution.t_events)
            if len(te) > 0 and getattr(event, "terminal", False)
        ][0]
        if len(taus) == 0 or abs(tau_stop) > abs(taus[-1]):
            taus = np.append(taus, tau_stop)
            states = np.vstack([states, solution.sol(tau_stop)])
    else:
        termination = RegularizedTermination.TAU_LIMIT

    if len(taus) == 0:
        taus = np.array([0.0])
        states = z0[np.newaxis, :]

    return RegularizedTrajectory(
        taus=taus,
        states=states[:, :4],
        times=states[:, 4],
        termination=termination,
        event_taus=[np.asarray(te) for te in solution.t_events[1:]],
        event_states=[np.asarray(ye)[:, :4] if len(ye) else np.zeros((0, 4)) for ye in solution.y_events[1:]],
        message=solution.message,
    )


def flow_on_manifold(s: SurfaceSpec, chi0: float, theta_start: float, theta_end: float) -> float:
    """chi after moving along N from theta_start to theta_end, d chi / d theta = |beta| / 2"""
    return chi0 + 0.5 * abs(s.beta) * (theta_end - theta_start)


def manifold_arc(
    s: SurfaceSpec,
    theta_star: float = 0.0,
    chi_offset: float = 1e-3,
    tau_end: Optional[float] = None,
    tol: float = 1e-12,
    num_samples: int = 1001,
) -> RegularizedTrajectory:
    """Integrated orbit on N leaving S- near chi = -pi/2 with u > 0"""
    manifold = CollisionManifold(s.gamma_c)
    y0 = manifold.point(theta_star, -0.5 * math.pi + chi_offset, r_n=s.r_N)
    if tau_end is None:
        # chi' = (|beta| / 2) sqrt(2 gamma_c) cos(chi), symmetric escape from both ends
        rate = 0.5 * abs(s.beta) * manifold.radius
        tau_end = 2 * math.atanh(math.cos(chi_offset)) / rate
    return integrate_regularized(s, y0, tau_end, tol=tol, num_samples=num_samples)


def fit_manifold_slope(traj: RegularizedTrajectory) -> float:
    """Least squares slope of chi against theta"""
    slope, _ = np.polyfit(traj.states[:, 2], traj.chi, 1)
    return float(slope)


@dataclass(frozen=True)
class EquilibriumSpectrum:
    """An equilibrium circle on N with the eigenvalues of its linearization"""

    sign: int
    v: float
    eigenvalues: Tuple[float, float, float, float]

    def to_dict(self):
        return asdict(self)


def equilibria_and_eigenvalues(s: SurfaceSpec) -> Tuple[EquilibriumSpectrum, EquilibriumSpectrum]:
    """S+ and S- with their closed form spectra, eigenvalues sorted ascending"""
    k = abs(s.beta)
    root = math.sqrt(2 * s.gamma_c)
    spectra = []
    for sign in (1, -1):
        values = (
            sign * k * root,
            sign * s.beta * s.beta * root / k,
            0.0,
            -sign * root * (k - s.beta * s.beta / (2 * k)),
        )
        spectra.append(EquilibriumSpectrum(sign=sign, v=sign * root, eigenvalues=tuple(sorted(values))))
    return spectra[0], spectra[1]


def numeric_jacobian(s: SurfaceSpec, y: McGeheeState, step: float = JACOBIAN_STEP) -> np.ndarray:
    """Central difference Jacobian of the blown-up field in (r, v, theta, u)"""
    base = y.to_array()
    jacobian = np.zeros((4, 4))
    for j in range(4):
        h = step * max(1.0, abs(base[j]))
        forward, backward = base.copy(), base.copy()
        forward[j] += h
        backward[j] -= h
        jacobian[:, j] = (
            np.array(_field(s, forward[0], forward[1], forward[3]))
            - np.array(_field(s, backward[0], backward[1], backward[3]))
        ) / (2 * h)
    return jacobian


def numeric_eigenvalues(s: SurfaceSpec, sign: int, step: float = JACOBIAN_STEP) -> np.ndarray:
    """Eigenvalues of the numeric Jacobian at S+ (sign=1) or S- (sign=-1), sorted by real part"""
    y = CollisionManifold(s.gamma_c).equilibrium(0.0, sign, r_n=s.r_N)
    values = np.linalg.eigvals(numeric_jacobian(s, y, step))
    return values[np.argsort(values.real)]


@dataclass(frozen=True)
class ManifoldConnection:
    """How the unstable branch from S- comes back around N"""

    kind: str
    circuits: float
    m: Optional[int]

    def to_dict(self):
        return asdict(self)


def manifold_connection(s: SurfaceSpec, m_max: int = DEFAULT_M_MAX) -> ManifoldConnection:
    """|beta| = 1/n: rejoins after n circuits moving the same way; |beta| = 2/(2n+1): after n + 1/2
    circuits moving the opposite way; otherwise the branches never line up"""
    circuits = 1.0 / abs(s.beta)
    m = match_fraction(s.beta, 2, m_max)
    if m is None:
        kind = "none"
    elif m % 2 == 0:
        kind = "same-direction"
    else:
        kind = "opposite-direction"
    return ManifoldConnection(kind=kind, circuits=circuits, m=m)


def handoff_radius(s: SurfaceSpec, h: float, delta_switch: Optional[float] = None) -> float:
    """Radius where 1/|Theta| = delta_switch (default 0.5 gamma_c / |h|)"""
    if delta_switch is None:
        delta_switch = 0.5 * s.gamma_c / abs(h) if h != 0 else 0.5 * DEFAULT_DELTA_CAP
    if not delta_switch > 0:
        raise ValidationError("delta_switch", f"must be positive, got {delta_switch!r}")
    # cot(sqrt(K) r) = L beta / delta
    return (0.5 * math.pi - math.atan(s.L * s.beta / delta_switch)) / s.sqrt_k


def handoff(s: SurfaceSpec, x: PhaseState) -> McGeheeState:
    """Blow-up coordinates of a physical state in the north chart"""
    check_chart(s, x.r, Pole.NORTH)
    return to_mcgehee(s, x)
