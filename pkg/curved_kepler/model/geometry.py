"""
Constant positive curvature surfaces of revolution.

The profile is f(r) = L sin(sqrt(K) r) on (r_N, r_S) = (0, pi / sqrt(K)), the
generalized gravitational potential is V = gamma_c * Theta with
Theta(r) = -cot(sqrt(K) r) / (L^2 sqrt(K)), an antiderivative of 1 / f^2.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import NamedTuple, Optional

from scipy import integrate

from curved_kepler.common.errors import (
    ValidationError,
    PoleEvaluationError,
    NumericalFailureError,
    EmbeddingUnavailableError,
)

LOGGER = logging.getLogger(__name__)

# Relative tolerance for matching beta against 1/n and 2/m
RATIONALITY_TOLERANCE = 1e-9
DEFAULT_M_MAX = 64

# Fraction of (r_S - r_N) kept clear of the poles by derivative based checks
POLE_MARGIN_FRACTION = 1e-3

# step in sqrt(K) r, the radial step shrinks with the curvature radius
LAPLACE_BELTRAMI_STEP = 1e-4
# slack past the energy barrier tolerated before a trajectory counts as escaped
BARRIER_SLACK_FRACTION = 1e-6


class Pole(Enum):
    """The two singular points of the potential"""

    NORTH = "north"
    SOUTH = "south"


@dataclass(frozen=True)
class SurfaceSpec:
    """A member of the constant curvature family with its coupling constant"""

    K: float
    L: float
    gamma_c: float
    beta: float = field(init=False)
    r_N: float = field(init=False)
    r_S: float = field(init=False)
    embeddable: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "beta", self.L * math.sqrt(self.K))
        object.__setattr__(self, "r_N", 0.0)
        object.__setattr__(self, "r_S", math.pi / math.sqrt(self.K))
        object.__setattr__(self, "embeddable", self.beta <= 1.0)

    @property
    def sqrt_k(self) -> float:
        return math.sqrt(self.K)

    @property
    def r_equator(self) -> float:
        """Radius where Theta vanishes"""
        return 0.5 * self.r_S

    def __str__(self):
        return f"SurfaceSpec(K={self.K}, L={self.L}, gamma_c={self.gamma_c}, beta={self.beta})"

    def to_dict(self):
        """Convert the surface to a dictionary"""
        return asdict(self)


class Profile(NamedTuple):
    """Profile quantities at a radius"""

    f: float
    df: float
    theta: float
    potential: float


def make_surface(K: float, L: float, gamma_c: float = 1.0) -> SurfaceSpec:
    """Validate the parameters and build a SurfaceSpec"""
    for name, value in (("K", K), ("L", L), ("gamma_c", gamma_c)):
        if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
            raise ValidationError(name, f"must be a positive finite number, got {value!r}")

    surface = SurfaceSpec(K=float(K), L=float(L), gamma_c=float(gamma_c))
    if not surface.embeddable:
        LOGGER.debug("beta=%s > 1, surface is treated as an abstract metric", surface.beta)
    return surface


def surface_from_beta(beta: float, K: float = 1.0, gamma_c: float = 1.0) -> SurfaceSpec:
    """Surface with the given beta at curvature K (L = beta / sqrt(K))"""
    if not math.isfinite(beta) or beta <= 0:
        raise ValidationError("beta", f"must be a positive finite number, got {beta!r}")
    if not math.isfinite(K) or K <= 0:
        raise ValidationError("K", f"must be a positive finite number, got {K!r}")
    return make_surface(K, beta / math.sqrt(K), gamma_c)


def pole_margin(s: SurfaceSpec) -> float:
    """Distance kept from the poles by finite difference checks"""
    return POLE_MARGIN_FRACTION * (s.r_S - s.r_N)


def check_radius(s: SurfaceSpec, r: float):
    """Raise if r is not strictly between the poles"""
    if not r > s.r_N or not r < s.r_S:
        raise PoleEvaluationError(f"r={r!r} is not inside ({s.r_N}, {s.r_S}) where f > 0")


def theta_function(s: SurfaceSpec, r: float) -> float:
    """Theta(r) = -cot(sqrt(K) r) / (L^2 sqrt(K)), no pole check"""
    x = s.sqrt_k * r
    return -math.cos(x) / (s.L * s.beta * math.sin(x))


def barrier_radius(s: SurfaceSpec, h: float) -> float:
    """Largest r reachable at energy h, where gamma_c Theta(r) = h (the equator for h <= 0)"""
    if h <= 0:
        return s.r_equator
    # cot(sqrt(K) r) = -L beta h / gamma_c
    return (0.5 * math.pi - math.atan(-s.L * s.beta * h / s.gamma_c)) / s.sqrt_k


def profile(s: SurfaceSpec, r: float) -> Profile:
    """f, f', Theta and V at r"""
    check_radius(s, r)
    x = s.sqrt_k * r
    f = s.L * math.sin(x)
    df = s.beta * math.cos(x)
    theta = -math.cos(x) / (s.L * s.beta * math.sin(x))
    return Profile(f=f, df=df, theta=theta, potential=s.gamma_c * theta)


def laplace_beltrami_residual(s: SurfaceSpec, r: float, step: Optional[float] = None) -> float:
    """(1/f^2) d/dr (f^2 dV/dr) by nested central differences on V"""
    if step is None:
        step = LAPLACE_BELTRAMI_STEP / s.sqrt_k
    if not step > 0:
        raise ValidationError("step", f"must be positive, got {step!r}")

    margin = pole_margin(s)
    if r - 2 * step < s.r_N + margin or r + 2 * step > s.r_S - margin:
        raise NumericalFailureError(f"finite difference stencil at r={r} reaches within {margin} of a pole")

    def potential(x):
        return s.gamma_c * theta_function(s, x)

    def flux(x):
        f = profile(s, x).f
        return f * f * (potential(x + step) - potential(x - step)) / (2 * step)

    f = profile(s, r).f
    return (flux(r + step) - flux(r - step)) / (2 * step) / (f * f)


def laplace_beltrami_scale(s: SurfaceSpec, r: float) -> float:
    """|V'| / f + |V''| = gamma_c (1 + 2 |f'|) / f^3, the size of the terms that cancel in the residual"""
    p = profile(s, r)
    return s.gamma_c * (1.0 + 2.0 * abs(p.df)) / p.f**3


def proposition_residuals(s: SurfaceSpec, r: float):
    """Residuals of the three profile identities, scaled by max(1, |term|)

    -f f'' + f'^2 = beta^2,  f'/f = -beta^2 Theta,  Theta^2 = 1/(beta^2 f^2) - K/beta^4
    """
    f, df, theta, _ = profile(s, r)
    d2f = -s.K * f
    beta_sq = s.beta * s.beta

    lhs = -f * d2f + df * df
    res1 = abs(lhs - beta_sq) / max(1.0, abs(beta_sq))

    lhs = df / f
    rhs = -beta_sq * theta
    res2 = abs(lhs - rhs) / max(1.0, abs(lhs))

    lhs = theta * theta
    rhs = 1.0 / (beta_sq * f * f) - s.K / (beta_sq * beta_sq)
    res3 = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
    return res1, res2, res3


def match_fraction(value: float, numerator: int, m_max: int, rel_tol: float = RATIONALITY_TOLERANCE) -> Optional[int]:
    """Smallest m <= m_max with |value - numerator/m| <= rel_tol * numerator/m"""
    if m_max < 1:
        raise ValidationError("m_max", f"must be at least 1, got {m_max!r}")
    value = abs(value)
    if value == 0:
        return None

    # only the integers next to numerator/value can match
    estimate = numerator / value
    for m in sorted({math.floor(estimate), math.ceil(estimate)}):
        if 1 <= m <= m_max:
            target = numerator / m
            if abs(value - target) <= rel_tol * target:
                return m
    return None


def classify_orbifold(s: SurfaceSpec, m_max: int = DEFAULT_M_MAX) -> Optional[int]:
    """n when beta = 1/n (cone angle 2 pi / n at both poles), else None"""
    return match_fraction(s.beta, 1, m_max)


def cone_angle(s: SurfaceSpec) -> float:
    """Tangent cone angle 2 pi sin(phi) at either pole, sin(phi) = f'(r_N) = beta"""
    if not s.embeddable:
        raise EmbeddingUnavailableError(f"beta={s.beta} > 1 has no tangent cone in R^3")
    return 2 * math.pi * s.beta


def embedding_profile(s: SurfaceSpec, r: float) -> float:
    """Height g(r) of the unit speed profile curve (f(r), 0, g(r))"""
    if not s.embeddable:
        raise EmbeddingUnavailableError(f"beta={s.beta} > 1, the surface is an abstract metric only")
    if r < s.r_N or r > s.r_S:
        raise ValidationError("r", f"must lie in [{s.r_N}, {s.r_S}], got {r!r}")

    def integrand(rho):
        df = s.beta * math.cos(s.sqrt_k * rho)
        return math.sqrt(max(0.0, 1.0 - df * df))

    g, error = integrate.quad(integrand, s.r_N, r, epsabs=1e-13, epsrel=1e-13, limit=200)
    LOGGER.debug("g(%s)=%s with quadrature error estimate %s", r, g, error)
    return g
