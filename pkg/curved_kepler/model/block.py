"""
Isolating blocks around the poles and block regularization.

The north block is B(h, delta) = {1/|Theta| <= delta} inside the north chart. Its
boundary b is the circle u^2 + v^2 = 2 gamma_c + 2 h delta over theta, entered
through b+ (v < 0) and left through b- (v > 0). Orbits entering near the
asymptotic set a+ (u = 0) follow the collision manifold, and the theta shift
Gamma(u) of the map across the block has one-sided limits +-2 pi / |beta|. The
map extends continuously through a+ exactly when Gamma(0+) is a multiple of pi,
that is when |beta| = 2/m.

The south block {1/Theta <= delta} is only reachable for h > 0 and
delta > gamma_c / h; no orbit reaches the south pole, so a+- are empty there.
"""

import logging
import math
from dataclasses import dataclass, asdict
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from curved_kepler.common.errors import (
    ValidationError,
    BlockTooLargeError,
    ChartDomainError,
    AsymptoticSetError,
    NumericalFailureError,
    TransitTimeoutError,
    ClassificationError,
)
from curved_kepler.common.utils import format_float
from curved_kepler.model.geometry import (
    SurfaceSpec,
    Pole,
    barrier_radius,
    classify_orbifold,
    match_fraction,
    DEFAULT_M_MAX,
)
from curved_kepler.model.dynamics import Trajectory, hamiltonian
from curved_kepler.model.blowup import (
    McGeheeState,
    RegularizedTermination,
    integrate_regularized,
    DEFAULT_DELTA_CAP,
)

LOGGER = logging.getLogger(__name__)

BISECTION_TOLERANCE = 1e-13
TRANSIT_TOLERANCE = 1e-12
DEFAULT_TAU_MAX = 1e4
MAX_HALVINGS = 60
LIMIT_U_SEQUENCE = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class BlockSpec:
    """Isolating block parameters; k1 = |Theta| f and k2 = beta Theta |Theta| f^2 at r_delta"""

    pole: Pole
    h: float
    delta: float
    r_delta: float
    k1: float
    k2: float
    boundary_sq: float
    convexity: float

    @property
    def u_max(self) -> float:
        """Largest |u| on the boundary circle"""
        return math.sqrt(self.boundary_sq)

    def to_dict(self):
        data = asdict(self)
        data["pole"] = self.pole.value
        return data


class BoundaryPoint(NamedTuple):
    """A point of the block boundary (r = r_delta)"""

    theta: float
    u: float
    v: float


class TransitResult(NamedTuple):
    """Exit point of an integrated transit, the tau it took and the radius where v changed sign"""

    theta: float
    u: float
    v: float
    tau: float
    r_turn: float


def block_function(s: SurfaceSpec, r: float) -> float:
    """1 / |Theta(r)| = beta f / |cos(sqrt(K) r)|"""
    arg = s.sqrt_k * r
    return s.beta * s.L * math.sin(arg) / abs(math.cos(arg))


def _tangency_acceleration(s: SurfaceSpec, pole: Pole, r_delta: float, boundary_sq: float):
    """v' at a tangency point (v = 0, u^2 = boundary_sq) and f Theta^2 there"""
    arg = s.sqrt_k * r_delta
    cos_x = math.cos(arg)
    f = s.L * math.sin(arg)
    df = s.beta * cos_x
    f_abs_theta = abs(cos_x) / s.beta
    dv = boundary_sq * df - s.gamma_c / f_abs_theta
    return dv, f_abs_theta * f_abs_theta / f, df


def make_block(
    s: SurfaceSpec, h: float, delta: float, pole: Pole = Pole.NORTH, delta_cap: float = DEFAULT_DELTA_CAP
) -> BlockSpec:
    """Locate r_delta by bisection, compute k1, k2 and check the block is isolating"""
    if not delta > 0:
        raise ValidationError("delta", f"must be positive, got {delta!r}")

    if pole == Pole.NORTH:
        if h != 0 and delta >= s.gamma_c / abs(h):
            raise ValidationError("delta", f"must be below gamma_c/|h| = {s.gamma_c / abs(h)}, got {delta}")
        if h == 0 and delta > delta_cap:
            raise ValidationError("delta", f"must not exceed the cap {delta_cap} when h = 0, got {delta}")
        boundary_sq = 2 * s.gamma_c + 2 * h * delta
        bracket = (s.r_N, s.r_equator)
    else:
        if not h > 0:
            raise ValidationError("h", f"the south block is only reachable for h > 0, got {h}")
        if delta <= s.gamma_c / h:
            raise ValidationError("delta", f"must exceed gamma_c/h = {s.gamma_c / h}, got {delta}")
        boundary_sq = 2 * h * delta - 2 * s.gamma_c
        bracket = (s.r_equator, s.r_S)

    # 1/|Theta| increases from 0 towards the equator on either side
    r_delta = optimize.bisect(
        lambda r: block_function(s, r) - delta, bracket[0], bracket[1], xtol=BISECTION_TOLERANCE
    )

    arg = s.sqrt_k * r_delta
    k1 = abs(math.cos(arg)) / s.beta
    sign_theta = -1.0 if pole == Pole.NORTH else 1.0
    k2 = sign_theta * s.beta * k1 * k1

    dv, _, df = _tangency_acceleration(s, pole, r_delta, boundary_sq)
    # north: (h delta + gamma_c) f'^2 - gamma_c beta^2 / 2; same sign as the second derivative of 1/|Theta|
    convexity = -sign_theta * abs(df) * dv / 2

    block = BlockSpec(
        pole=pole,
        h=h,
        delta=delta,
        r_delta=r_delta,
        k1=k1,
        k2=k2,
        boundary_sq=boundary_sq,
        convexity=convexity,
    )
    if not convexity > 0:
        raise BlockTooLargeError("delta", f"delta={delta} fails the convexity condition ({convexity})")

    LOGGER.debug("Block %s", block)
    return block


def default_block_size(
    s: SurfaceSpec, h: float, pole: Pole = Pole.NORTH, delta_cap: float = DEFAULT_DELTA_CAP
) -> float:
    """0.5 gamma_c / |h| (0.5 cap for h = 0), halved until the block is isolating.

    South blocks use 2 gamma_c / h, which always isolates.
    """
    if pole == Pole.SOUTH:
        if not h > 0:
            raise ValidationError("h", f"the south block is only reachable for h > 0, got {h}")
        return 2 * s.gamma_c / h

    delta = 0.5 * s.gamma_c / abs(h) if h != 0 else 0.5 * delta_cap
    for _ in range(MAX_HALVINGS):
        try:
            make_block(s, h, delta, pole, delta_cap)
            return delta
        except BlockTooLargeError:
            LOGGER.info("delta=%s is not isolating for beta=%s, h=%s, halving", delta, s.beta, h)
            delta *= 0.5
    raise BlockTooLargeError("delta", f"no isolating block found for beta={s.beta}, h={h}")


def block_function_second_derivative(bs: BlockSpec, s: SurfaceSpec) -> float:
    """d^2/d tau^2 of 1/|Theta| at any tangency point of the boundary"""
    dv, f_theta_sq, _ = _tangency_acceleration(s, bs.pole, bs.r_delta, bs.boundary_sq)
    sign_theta = -1.0 if bs.pole == Pole.NORTH else 1.0
    return -sign_theta * dv / f_theta_sq


def _check_boundary(bs: BlockSpec, u: float):
    if u * u > bs.boundary_sq:
        raise ChartDomainError(f"u={u} is outside the boundary circle u^2 <= {bs.boundary_sq}")


def _require_north(bs: BlockSpec):
    if bs.pole != Pole.NORTH:
        raise ChartDomainError("the exit angle formula is derived for the north block")


def zeta(bs: BlockSpec, s: SurfaceSpec, u: float) -> float:
    """Angle with beta (theta - theta0) = beta zeta + pi/2 at entry, for entries on b+.

    (cos, sin)(beta zeta) = (k1 u v, k2 u^2 + gamma_c / beta) / I with v = -sqrt(A - u^2).
    beta zeta is taken on the continuous branch (pi/2, 3pi/2) for u > 0 and
    (-pi/2, pi/2) for u < 0; it is pi/2 at u = 0 and agrees with the principal
    arc-cosine wherever the sine is positive.
    """
    _require_north(bs)
    _check_boundary(bs, u)
    v = -math.sqrt(bs.boundary_sq - u * u)
    cosine = bs.k1 * u * v
    sine = bs.k2 * u * u + s.gamma_c / s.beta
    angle = math.atan2(sine, cosine)
    if u > 0 and angle < 0:
        angle += 2 * math.pi
    return angle / s.beta


def gamma_exit(bs: BlockSpec, s: SurfaceSpec, u: float) -> float:
    """theta shift of the map across the north block, -2 zeta - pi/beta + (2 pi/beta)(1 -+ beta/|beta|)"""
    if u == 0:
        raise AsymptoticSetError("Gamma is undefined on a+ (u = 0), use gamma_limits")
    sign = 1.0 if u > 0 else -1.0
    return (
        -2 * zeta(bs, s, u)
        - math.pi / s.beta
        + (2 * math.pi / s.beta) * (1 + sign * s.beta / abs(s.beta))
    )


def gamma_limits(s: SurfaceSpec) -> Tuple[float, float]:
    """Gamma(0+) and Gamma(0-)"""
    limit = 2 * math.pi / abs(s.beta)
    return limit, -limit


def conic_gamma(bs: BlockSpec, s: SurfaceSpec, u: float) -> float:
    """theta shift across either block from the conic orbit equation"""
    _check_boundary(bs, u)
    if u == 0:
        if bs.pole == Pole.NORTH:
            raise AsymptoticSetError("Gamma is undefined on a+ (u = 0)")
        # radial bounce
        return 0.0

    f = s.L * math.sin(s.sqrt_k * bs.r_delta)
    p_theta = u * math.sqrt(f * bs.k1)
    p_sq = p_theta * p_theta
    beta_sq = s.beta * s.beta
    magnitude_sq = 2 * p_sq * bs.h - s.K * p_sq * p_sq / beta_sq + s.gamma_c * s.gamma_c / beta_sq
    e = s.beta * math.sqrt(max(magnitude_sq, 0.0)) / s.gamma_c
    p = beta_sq * p_sq / s.gamma_c
    # rho = -Theta = 1/delta on the north boundary, -1/delta on the south one
    if bs.pole == Pole.NORTH:
        argument = (p / bs.delta - 1) / e
    else:
        argument = (p / bs.delta + 1) / e
    phi = math.acos(min(1.0, max(-1.0, argument)))
    return math.copysign(2 * phi / s.beta, u)


def entry_state(bs: BlockSpec, s: SurfaceSpec, theta: float, u: float) -> McGeheeState:
    """Point of b+ with the given theta and u"""
    _check_boundary(bs, u)
    speed = math.sqrt(bs.boundary_sq - u * u)
    v = -speed if bs.pole == Pole.NORTH else speed
    return McGeheeState(r=bs.r_delta, theta=theta, v=v, u=u)


def map_across_block(bs: BlockSpec, s: SurfaceSpec, theta: float, u: float) -> BoundaryPoint:
    """Exit point of the orbit entering at (theta, u) on b+; u and |v| are preserved and v flips"""
    if bs.pole == Pole.NORTH:
        shift = gamma_exit(bs, s, u)
    else:
        shift = conic_gamma(bs, s, u)
    entry = entry_state(bs, s, theta, u)
    return BoundaryPoint(theta=theta + shift, u=u, v=-entry.v)


def _exit_event(bs: BlockSpec):
    # negative until the orbit has turned around, then the signed distance past r_delta
    if bs.pole == Pole.NORTH:

        def crossed(_, z):
            return z[0] - bs.r_delta if z[1] > 0 else -1.0

    else:

        def crossed(_, z):
            return bs.r_delta - z[0] if z[1] < 0 else -1.0

    crossed.terminal = True
    crossed.direction = 1
    return crossed


def numeric_transit(
    bs: BlockSpec,
    s: SurfaceSpec,
    theta: float,
    u: float,
    tol: float = TRANSIT_TOLERANCE,
    tau_max: float = DEFAULT_TAU_MAX,
) -> TransitResult:
    """Integrate the blown-up field from b+ until the orbit leaves through b-"""
    if bs.pole == Pole.NORTH and u == 0:
        raise AsymptoticSetError("entries with u = 0 fall into the collision manifold and never exit")

    y0 = entry_state(bs, s, theta, u)

    def turning(_, z):
        return z[1]

    traj = integrate_regularized(
        s, y0, tau_max, tol=tol, pole=bs.pole, num_samples=2, events=[_exit_event(bs), turning]
    )
    if traj.termination == RegularizedTermination.TAU_LIMIT:
        raise TransitTimeoutError(f"transit from theta={theta}, u={u} did not exit within tau={tau_max}")
    if traj.termination != RegularizedTermination.EVENT:
        raise NumericalFailureError(
            f"transit from theta={theta}, u={u} ended with {traj.termination.value}: {traj.message}"
        )

    exit_state = traj.final
    turns = traj.event_states[1]
    r_turn = float(turns[0][0]) if len(turns) else bs.r_delta
    return TransitResult(
        theta=exit_state.theta, u=exit_state.u, v=exit_state.v, tau=float(traj.taus[-1]), r_turn=r_turn
    )


def reverse_transit(
    bs: BlockSpec, s: SurfaceSpec, result: TransitResult, tol: float = TRANSIT_TOLERANCE
) -> McGeheeState:
    """Integrate backwards from an exit point for the transit time"""
    y = McGeheeState(r=bs.r_delta, theta=result.theta, v=result.v, u=result.u)
    traj = integrate_regularized(s, y, -result.tau, tol=tol, pole=bs.pole, num_samples=2)
    if traj.termination != RegularizedTermination.TAU_LIMIT:
        raise NumericalFailureError(f"reverse transit ended with {traj.termination.value}")
    return traj.final


def extrapolate_zero_limit(us: Sequence[float], values: Sequence[float]) -> float:
    """Richardson limit at u = 0 from the two smallest |u|, assuming a linear leading error"""
    if len(us) != len(values) or len(us) < 2:
        raise ValidationError("us", "need at least two matching samples")
    order = np.argsort(np.abs(us))
    u1, u2 = us[order[0]], us[order[1]]
    v1, v2 = values[order[0]], values[order[1]]
    return (u2 * v1 - u1 * v2) / (u2 - u1)


def numeric_gamma_limit(
    bs: BlockSpec,
    s: SurfaceSpec,
    sign: int = 1,
    us: Sequence[float] = LIMIT_U_SEQUENCE,
    tol: float = TRANSIT_TOLERANCE,
    tau_max: float = DEFAULT_TAU_MAX,
) -> Tuple[float, List[float]]:
    """Extrapolated Gamma(0+) (sign=1) or Gamma(0-) (sign=-1) from integrated transits"""
    samples = [math.copysign(min(u, 0.5 * bs.u_max), sign) for u in us]
    gammas = []
    for u in samples:
        result = numeric_transit(bs, s, 0.0, u, tol=tol, tau_max=tau_max)
        gammas.append(result.theta)
        LOGGER.debug("beta=%s u=%s Gamma=%s tau=%s", s.beta, u, result.theta, result.tau)
    return extrapolate_zero_limit(samples, gammas), gammas


@dataclass(frozen=True)
class RegularizabilityVerdict:
    """Block regularizability of both poles"""

    beta: float
    north_m: Optional[int]
    orbifold_n: Optional[int]
    south: str = "regularizable"

    @property
    def north_regularizable(self) -> bool:
        return self.north_m is not None

    def to_line(self) -> str:
        north = "none" if self.north_m is None else str(self.north_m)
        orbifold = "none" if self.orbifold_n is None else str(self.orbifold_n)
        return f"beta={format_float(self.beta)} north={north} south={self.south} orbifold={orbifold}"

    def to_dict(self):
        return asdict(self)


def classify_regularizability(s: SurfaceSpec, m_max: int = DEFAULT_M_MAX) -> RegularizabilityVerdict:
    """North pole regularizable iff |beta| = 2/m; the south pole always is"""
    orbifold_n = classify_orbifold(s, m_max)
    search = m_max if orbifold_n is None else max(m_max, 2 * orbifold_n)
    north_m = match_fraction(s.beta, 2, search)

    if orbifold_n is not None and north_m != 2 * orbifold_n:
        raise ClassificationError(f"beta={s.beta!r} is an orbifold with n={orbifold_n} but north m={north_m}")

    return RegularizabilityVerdict(beta=s.beta, north_m=north_m, orbifold_n=orbifold_n)


@dataclass(frozen=True)
class SouthPoleReport:
    """Sampled transits through the south block"""

    h: float
    delta: float
    samples: int
    all_exited: bool
    max_tau: float
    max_map_error: float
    barrier_radius: float
    min_barrier_margin: float

    def to_dict(self):
        return asdict(self)


def south_barrier_margin(s: SurfaceSpec, traj: Trajectory) -> float:
    """min over samples with Theta > 0 of h/Theta - gamma_c, nonnegative on any trajectory"""
    h = hamiltonian(s, traj.initial)
    arg = s.sqrt_k * traj.states[:, 0]
    theta_r = -np.cos(arg) / (s.L * s.beta * np.sin(arg))
    positive = theta_r > 0
    if not np.any(positive):
        return math.inf
    return float(np.min(h / theta_r[positive] - s.gamma_c))


def south_pole_block_check(
    s: SurfaceSpec,
    h: float,
    delta: Optional[float] = None,
    n_samples: int = 9,
    tol: float = TRANSIT_TOLERANCE,
    tau_max: float = DEFAULT_TAU_MAX,
) -> SouthPoleReport:
    """Transit a fan of entries, u = 0 included, through the south block and check each one leaves"""
    if delta is None:
        delta = default_block_size(s, h, Pole.SOUTH)
    bs = make_block(s, h, delta, Pole.SOUTH)
    r_barrier = barrier_radius(s, h)

    us = np.linspace(-0.95, 0.95, n_samples) * bs.u_max
    exited = 0
    max_tau = 0.0
    max_error = 0.0
    min_margin = math.inf
    for u in us:
        try:
            result = numeric_transit(bs, s, 0.0, float(u), tol=tol, tau_max=tau_max)
        except TransitTimeoutError:
            LOGGER.warning("South transit with u=%s timed out", u)
            continue
        exited += 1
        max_tau = max(max_tau, result.tau)
        expected = map_across_block(bs, s, 0.0, float(u))
        max_error = max(
            max_error,
            abs(result.theta - expected.theta),
            abs(result.u - expected.u),
            abs(result.v - expected.v),
        )
        min_margin = min(min_margin, r_barrier - result.r_turn)

    LOGGER.info("South block h=%s delta=%s: %d of %d transits exited", h, delta, exited, len(us))
    return SouthPoleReport(
        h=h,
        delta=delta,
        samples=len(us),
        all_exited=exited == len(us),
        max_tau=max_tau,
        max_map_error=max_error,
        barrier_radius=r_barrier,
        min_barrier_margin=min_margin,
    )
