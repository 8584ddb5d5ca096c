"""
First integrals of the Kepler problem on the surface.

Besides H and p_theta the system carries two Runge-Lenz type integrals

    I1 =  sin(b t) p_r p_t - b cos(b t) Theta p_t^2 - (gamma_c / b) cos(b t)
    I2 = -cos(b t) p_r p_t - b sin(b t) Theta p_t^2 - (gamma_c / b) sin(b t)

(b = beta, t = theta, p_t = p_theta), tied together by
I1^2 + I2^2 = 2 p_theta^2 H - K p_theta^4 / beta^2 + gamma_c^2 / beta^2.
"""

import logging
import math
from dataclasses import dataclass, asdict
from typing import Callable, Dict, Sequence

import numpy as np

from curved_kepler.common.errors import ValidationError, NumericalFailureError
from curved_kepler.model.geometry import SurfaceSpec, profile, check_radius
from curved_kepler.model.dynamics import PhaseState, Trajectory

LOGGER = logging.getLogger(__name__)

BRACKET_STEP = 1e-5
RANK_TOLERANCE = 1e-6

# Smallest usable finite difference step
MIN_STEP = 1e-12


@dataclass(frozen=True)
class ConservedSet:
    """Values of the four integrals at a state"""

    H: float
    p_theta: float
    I1: float
    I2: float

    @property
    def I(self) -> float:
        return math.hypot(self.I1, self.I2)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class IntegralDrift:
    """Max absolute deviation of each integral from its initial value"""

    H: float
    p_theta: float
    I1: float
    I2: float

    def max(self) -> float:
        return max(self.H, self.p_theta, self.I1, self.I2)

    def to_dict(self):
        return asdict(self)


def _runge_lenz(s: SurfaceSpec, theta, p_r_p_theta, theta_p_theta_sq):
    """I1, I2 from theta, p_r p_theta and Theta p_theta^2 (works on arrays)"""
    bt = s.beta * theta
    c, sn = np.cos(bt), np.sin(bt)
    coupling = s.gamma_c / s.beta
    i1 = sn * p_r_p_theta - s.beta * c * theta_p_theta_sq - coupling * c
    i2 = -c * p_r_p_theta - s.beta * sn * theta_p_theta_sq - coupling * sn
    return i1, i2


def conserved(s: SurfaceSpec, x: PhaseState) -> ConservedSet:
    """Closed form H, p_theta, I1, I2"""
    f, _, theta_r, _ = profile(s, x.r)
    energy = 0.5 * x.p_r * x.p_r + 0.5 * x.p_theta * x.p_theta / (f * f) + s.gamma_c * theta_r
    i1, i2 = _runge_lenz(s, x.theta, x.p_r * x.p_theta, theta_r * x.p_theta * x.p_theta)
    return ConservedSet(H=energy, p_theta=x.p_theta, I1=float(i1), I2=float(i2))


def conserved_mcgehee(s: SurfaceSpec, y):
    """I1, I2 in blown-up coordinates, y has attributes r, theta, v, u.

    p_r p_theta = f |Theta| u v and Theta p_theta^2 = Theta |Theta| f^2 u^2,
    both bounded up to the pole.
    """
    x = s.sqrt_k * y.r
    # f |Theta| = |cos x| / beta and Theta = -cos x / (beta f)
    f_abs_theta = abs(math.cos(x)) / s.beta
    theta_abs_theta_f_sq = -math.cos(x) * abs(math.cos(x)) / (s.beta * s.beta)
    i1, i2 = _runge_lenz(s, y.theta, f_abs_theta * y.u * y.v, theta_abs_theta_f_sq * y.u * y.u)
    return float(i1), float(i2)


def conserved_arrays(s: SurfaceSpec, states: np.ndarray) -> Dict[str, np.ndarray]:
    """Vectorized integrals for rows (r, theta, p_r, p_theta)"""
    r, theta, p_r, p_theta = states[:, 0], states[:, 1], states[:, 2], states[:, 3]
    if np.any(r <= s.r_N) or np.any(r >= s.r_S):
        check_radius(s, float(r[(r <= s.r_N) | (r >= s.r_S)][0]))
    x = s.sqrt_k * r
    f = s.L * np.sin(x)
    theta_r = -np.cos(x) / (s.L * s.beta * np.sin(x))
    energy = 0.5 * p_r * p_r + 0.5 * p_theta * p_theta / (f * f) + s.gamma_c * theta_r
    i1, i2 = _runge_lenz(s, theta, p_r * p_theta, theta_r * p_theta * p_theta)
    return {"H": energy, "p_theta": p_theta.copy(), "I1": i1, "I2": i2}


def dependency_residual(s: SurfaceSpec, x: PhaseState, k_exponent: int = 1) -> float:
    """|I1^2 + I2^2 - (2 p_theta^2 H - K^k p_theta^4 / beta^2 + gamma_c^2 / beta^2)|

    k_exponent=2 evaluates the misprinted variant of the relation.
    """
    c = conserved(s, x)
    beta_sq = s.beta * s.beta
    p_sq = x.p_theta * x.p_theta
    lhs = c.I1 * c.I1 + c.I2 * c.I2
    rhs = 2 * p_sq * c.H - (s.K**k_exponent) * p_sq * p_sq / beta_sq + s.gamma_c * s.gamma_c / beta_sq
    return abs(lhs - rhs)


def _integral_function(s: SurfaceSpec, which: str) -> Callable[[np.ndarray], float]:
    def energy(y):
        f, _, theta_r, _ = profile(s, y[0])
        return 0.5 * y[2] * y[2] + 0.5 * y[3] * y[3] / (f * f) + s.gamma_c * theta_r

    def angular(y):
        return y[3]

    def runge_lenz(name):
        def fn(y):
            return getattr(conserved(s, PhaseState.from_array(y)), name)

        return fn

    functions = {"H": energy, "p_theta": angular, "I1": runge_lenz("I1"), "I2": runge_lenz("I2")}
    if which not in functions:
        raise ValidationError("which", f"must be one of {sorted(functions)}, got {which!r}")
    return functions[which]


def gradient(s: SurfaceSpec, x: PhaseState, which: str, step: float = BRACKET_STEP) -> np.ndarray:
    """Central difference gradient in (r, theta, p_r, p_theta), step scaled by |coordinate|"""
    if not step > MIN_STEP:
        raise NumericalFailureError(f"finite difference step {step} underflows")
    fn = _integral_function(s, which)
    y = x.to_array()
    grad = np.zeros(4)
    for i in range(4):
        h = step * max(1.0, abs(y[i]))
        forward, backward = y.copy(), y.copy()
        forward[i] += h
        backward[i] -= h
        if i == 0 and (backward[0] <= s.r_N or forward[0] >= s.r_S):
            raise NumericalFailureError(f"finite difference stencil at r={x.r} crosses a pole")
        grad[i] = (fn(forward) - fn(backward)) / (2 * h)
    return grad


def poisson_bracket(grad_f: np.ndarray, grad_g: np.ndarray) -> float:
    """{F, G} = F_r G_pr - F_pr G_r + F_theta G_ptheta - F_ptheta G_theta"""
    return float(grad_f[0] * grad_g[2] - grad_f[2] * grad_g[0] + grad_f[1] * grad_g[3] - grad_f[3] * grad_g[1])


def poisson_bracket_residual(s: SurfaceSpec, x: PhaseState, which: str, step: float = BRACKET_STEP) -> float:
    """|{F, H}| by central differences; vanishes up to O(step^2) for an integral"""
    return abs(poisson_bracket(gradient(s, x, which, step), gradient(s, x, "H", step)))


def gradient_rank(
    s: SurfaceSpec,
    x: PhaseState,
    names: Sequence[str] = ("H", "p_theta", "I1"),
    step: float = BRACKET_STEP,
    tol: float = RANK_TOLERANCE,
) -> int:
    """Numerical rank of the stacked gradients of the named integrals"""
    matrix = np.vstack([gradient(s, x, name, step) for name in names])
    return int(np.linalg.matrix_rank(matrix, tol=tol))


def drift_along_flow(s: SurfaceSpec, traj: Trajectory, relative: bool = False) -> IntegralDrift:
    """Max |F(x(t)) - F(x(0))| over the samples for H, p_theta, I1, I2.

    With relative=True each drift is divided by the size of its integral, floored
    at 1: |H(0)|, |p_theta(0)| and for I1, I2 the root of the summed magnitudes
    of the terms in the dependency relation, which bounds |(I1, I2)|.
    """
    if len(traj) < 2:
        raise ValidationError("trajectory", "needs at least two samples")
    values = conserved_arrays(s, traj.states)
    drift = {key: float(np.max(np.abs(array - array[0]))) for key, array in values.items()}
    if relative:
        energy, momentum_sq = abs(values["H"][0]), values["p_theta"][0] ** 2
        runge_lenz = math.sqrt(
            2 * momentum_sq * energy + s.K * momentum_sq**2 / s.beta**2 + (s.gamma_c / s.beta) ** 2
        )
        scales = {"H": energy, "p_theta": math.sqrt(momentum_sq), "I1": runge_lenz, "I2": runge_lenz}
        drift = {key: value / max(1.0, float(scales[key])) for key, value in drift.items()}
    return IntegralDrift(**drift)
