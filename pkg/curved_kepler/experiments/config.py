"""
Run configuration for the curved-kepler CLI.

A run is described by one JSON document mirroring RunConfig. Numeric leaves take
JSON numbers or strings such as "2/3" so rational parameters stay exact.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional

from curved_kepler.common.errors import ValidationError
from curved_kepler.common.utils import from_dict, load_json
from curved_kepler.model.dynamics import MIN_TOLERANCE, MAX_TOLERANCE

LOGGER = logging.getLogger(__name__)

MODES = ("simulate", "blowup", "block-map", "classify", "verify", "sweep")

DEFAULT_BETAS = [2.0, 1.0, 2 / 3, 0.5, 0.4, 1 / 3, 2 / 7]
DEFAULT_ENERGIES = [-1.0, 0.0, 1.0]


@dataclass
class SurfaceConfig:
    K: float = 1.0
    L: float = 1.0
    gamma_c: float = 1.0


@dataclass
class StateConfig:
    """Initial state for simulate runs"""

    r: float = 1.0
    theta: float = 0.0
    p_r: float = 0.0
    p_theta: float = 0.8


@dataclass
class IntegratorConfig:
    tol: float = 1e-10
    t_end: float = 100.0
    num_samples: int = 2001
    collision_margin: Optional[float] = None
    tau_end: float = 40.0


@dataclass
class BlockConfig:
    """Block used by block-map runs; delta None picks the default size"""

    energy: float = -0.5
    delta: Optional[float] = None
    num_u: int = 9
    thetas: List[float] = field(default_factory=lambda: [0.0, 1.0])
    transit_tol: float = 1e-12
    tau_max: float = 1e4


@dataclass
class BlowupConfig:
    """Lines of the fictitious flow on the collision manifold"""

    num_lines: int = 8
    chi_offset: float = 1e-3
    num_samples: int = 201


@dataclass
class SweepConfig:
    betas: List[float] = field(default_factory=lambda: list(DEFAULT_BETAS))
    energies: List[float] = field(default_factory=lambda: list(DEFAULT_ENERGIES))


@dataclass
class VerifyConfig:
    seed: int = 0
    num_states: int = 100
    num_orbits: int = 3
    t_end: float = 20.0


@dataclass
class RunConfig:
    mode: str = "verify"
    output: str = "results"
    m_max: int = 64
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)
    initial_state: StateConfig = field(default_factory=StateConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    block: BlockConfig = field(default_factory=BlockConfig)
    blowup: BlowupConfig = field(default_factory=BlowupConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def to_dict(self):
        return asdict(self)


def load_config(file_path: str) -> RunConfig:
    """Read a RunConfig from a JSON document"""
    data = load_json(file_path)
    if data is None:
        raise ValidationError("config", f"cannot read a JSON document from {file_path}")
    return config_from_dict(data)


def config_from_dict(data: dict) -> RunConfig:
    return from_dict(RunConfig, data)


def _positive(name: str, value: float):
    if not math.isfinite(value) or value <= 0:
        raise ValidationError(name, f"must be a positive finite number, got {value!r}")


def _at_least(name: str, value: int, minimum: int):
    if value < minimum:
        raise ValidationError(name, f"must be at least {minimum}, got {value!r}")


def validate_config(config: RunConfig):
    """Check every field before any computation starts"""
    if config.mode not in MODES:
        raise ValidationError("mode", f"must be one of {', '.join(MODES)}, got {config.mode!r}")
    if not config.output:
        raise ValidationError("output", "must not be empty")
    _at_least("m_max", config.m_max, 1)

    for name in ("K", "L", "gamma_c"):
        _positive(f"surface.{name}", getattr(config.surface, name))
    r_s = math.pi / math.sqrt(config.surface.K)

    state = config.initial_state
    if not 0 < state.r < r_s:
        raise ValidationError("initial_state.r", f"must lie strictly between the poles (0, {r_s}), got {state.r!r}")
    for name in ("theta", "p_r", "p_theta"):
        if not math.isfinite(getattr(state, name)):
            raise ValidationError(f"initial_state.{name}", "must be finite")

    integrator = config.integrator
    if not MIN_TOLERANCE <= integrator.tol <= MAX_TOLERANCE:
        raise ValidationError(
            "integrator.tol", f"must lie in [{MIN_TOLERANCE}, {MAX_TOLERANCE}], got {integrator.tol!r}"
        )
    _positive("integrator.t_end", integrator.t_end)
    _positive("integrator.tau_end", integrator.tau_end)
    _at_least("integrator.num_samples", integrator.num_samples, 2)
    if integrator.collision_margin is not None:
        _positive("integrator.collision_margin", integrator.collision_margin)

    block = config.block
    if not math.isfinite(block.energy):
        raise ValidationError("block.energy", "must be finite")
    if block.delta is not None:
        _positive("block.delta", block.delta)
    _at_least("block.num_u", block.num_u, 1)
    if not block.thetas:
        raise ValidationError("block.thetas", "must not be empty")
    if not MIN_TOLERANCE <= block.transit_tol <= MAX_TOLERANCE:
        raise ValidationError("block.transit_tol", f"must lie in [{MIN_TOLERANCE}, {MAX_TOLERANCE}]")
    _positive("block.tau_max", block.tau_max)

    _at_least("blowup.num_lines", config.blowup.num_lines, 1)
    _at_least("blowup.num_samples", config.blowup.num_samples, 2)
    if not 0 < config.blowup.chi_offset < 0.5 * math.pi:
        raise ValidationError("blowup.chi_offset", f"must lie in (0, pi/2), got {config.blowup.chi_offset!r}")

    if config.mode in ("sweep", "classify"):
        if not config.sweep.betas:
            raise ValidationError("sweep.betas", "grid must not be empty")
        if config.mode == "sweep" and not config.sweep.energies:
            raise ValidationError("sweep.energies", "grid must not be empty")
    for i, beta in enumerate(config.sweep.betas):
        _positive(f"sweep.betas[{i}]", beta)
    for i, energy in enumerate(config.sweep.energies):
        if not math.isfinite(energy):
            raise ValidationError(f"sweep.energies[{i}]", "must be finite")

    verify = config.verify
    _at_least("verify.num_states", verify.num_states, 1)
    _at_least("verify.num_orbits", verify.num_orbits, 1)
    _at_least("verify.seed", verify.seed, 0)
    _positive("verify.t_end", verify.t_end)

    LOGGER.debug("Validated config for mode %s", config.mode)
