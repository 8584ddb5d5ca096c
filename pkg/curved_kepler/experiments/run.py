"""
Command line front end: curved-kepler <mode> [--config path] [--out dir] [--tol x] [--beta p/q] [--energy h]

Exit status is 0 on success, 1 for invalid input and 2 for numerical failures,
failed verification suites and failed sweep rows.
"""

import argparse
import logging
import math
import os
import sys
import time

import numpy as np

from curved_kepler.common.errors import CurvedKeplerError, NumericalFailureError
from curved_kepler.common.utils import parse_number, save_json, setup_logging, write_csv
from curved_kepler.experiments.config import MODES, RunConfig, load_config, validate_config
from curved_kepler.experiments.sweep import run_sweep, write_sweep
from curved_kepler.experiments.verify import block_map_rows, run_verification, write_verification
from curved_kepler.model import blowup, dynamics, invariants, trajectory
from curved_kepler.model.block import classify_regularizability
from curved_kepler.model.geometry import make_surface, surface_from_beta

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

EFFECTIVE_CONFIG_FILE = "effective_config.json"
TRAJECTORY_HEADER = ["t", "r", "theta", "p_r", "p_theta", "H", "I1", "I2"]
ORBIT_HEADER = ["theta", "rho_numeric", "rho_analytic", "deviation"]
REGULARIZED_HEADER = ["tau", "t", "r", "theta", "v", "u"]
MANIFOLD_HEADER = ["tau", "theta", "chi", "u", "v"]
BLOCK_MAP_HEADER = ["u", "theta_in", "gamma_analytic", "gamma_numeric", "deviation", "tau"]


def build_config(args) -> RunConfig:
    """Config document (or defaults) with the command line overrides applied"""
    config = load_config(args.config) if args.config is not None else RunConfig()
    config.mode = args.mode
    if args.out is not None:
        config.output = args.out
    if args.tol is not None:
        config.integrator.tol = parse_number(args.tol, "--tol")
    if args.beta is not None:
        beta = parse_number(args.beta, "--beta")
        config.surface.L = beta / math.sqrt(config.surface.K)
        config.sweep.betas = [beta]
    if args.energy is not None:
        energy = parse_number(args.energy, "--energy")
        config.block.energy = energy
        config.sweep.energies = [energy]
    return config


def simulate(config: RunConfig) -> int:
    """Integrate one orbit, export it with its integrals and the conic comparison"""
    s = make_surface(config.surface.K, config.surface.L, config.surface.gamma_c)
    state = config.initial_state
    x0 = dynamics.PhaseState(state.r, state.theta, state.p_r, state.p_theta)

    collision_margin = config.integrator.collision_margin
    if collision_margin is None and x0.p_theta == 0:
        # only radial orbits collide, hand them over where 1/|Theta| = 0.5 gamma_c / |h|
        collision_margin = blowup.handoff_radius(s, dynamics.hamiltonian(s, x0)) - s.r_N
        LOGGER.info("Radial orbit, blow-up hand-off at r=%s", s.r_N + collision_margin)

    traj = dynamics.integrate(
        s,
        x0,
        config.integrator.t_end,
        tol=config.integrator.tol,
        collision_margin=collision_margin,
        num_samples=config.integrator.num_samples,
    )
    traj.raise_for_failure()

    values = invariants.conserved_arrays(s, traj.states)
    rows = np.column_stack([traj.times, traj.states, values["H"], values["I1"], values["I2"]])
    write_csv(os.path.join(config.output, "trajectory.csv"), TRAJECTORY_HEADER, rows.tolist())

    summary = {
        "surface": s.to_dict(),
        "termination": traj.termination.value,
        "t_final": float(traj.times[-1]),
        "drift": invariants.drift_along_flow(s, traj).to_dict() if len(traj) > 1 else None,
    }

    if x0.p_theta != 0:
        theta, rho_numeric, rho_analytic, deviation = trajectory.orbit_comparison(s, traj)
        write_csv(
            os.path.join(config.output, "orbit_comparison.csv"),
            ORBIT_HEADER,
            np.column_stack([theta, rho_numeric, rho_analytic, deviation]).tolist(),
        )
        summary["conic"] = trajectory.conic_params(s, invariants.conserved(s, x0)).to_dict()
        summary["max_deviation"] = float(np.max(deviation))
    else:
        LOGGER.info("Radial orbit, skipping the conic comparison")

    if traj.termination == dynamics.Termination.COLLISION_APPROACH:
        LOGGER.info("Collision approach at t=%s, continuing in blow-up coordinates", traj.times[-1])
        y0 = blowup.handoff(s, traj.final)
        regularized = blowup.integrate_regularized(
            s, y0, config.integrator.tau_end, tol=config.integrator.tol, num_samples=config.integrator.num_samples
        )
        if regularized.termination == blowup.RegularizedTermination.NUMERICAL_FAILURE:
            raise NumericalFailureError(f"regularized continuation failed: {regularized.message}")
        states = regularized.states
        t = traj.times[-1] + regularized.times
        rows = np.column_stack([regularized.taus, t, states[:, 0], states[:, 2], states[:, 1], states[:, 3]])
        write_csv(os.path.join(config.output, "regularized.csv"), REGULARIZED_HEADER, rows.tolist())
        summary["regularized_termination"] = regularized.termination.value

    save_json(summary, os.path.join(config.output, "simulate_summary.json"))
    LOGGER.info("Simulated %d samples, termination %s", len(traj), traj.termination.value)
    return EXIT_OK


def blowup_flow(config: RunConfig) -> int:
    """Lines of the fictitious flow on the collision manifold, one csv per line"""
    s = make_surface(config.surface.K, config.surface.L, config.surface.gamma_c)
    cfg = config.blowup
    slopes = []
    for k in range(cfg.num_lines):
        theta_star = 2 * math.pi * k / cfg.num_lines
        arc = blowup.manifold_arc(
            s, theta_star, chi_offset=cfg.chi_offset, tol=config.integrator.tol, num_samples=cfg.num_samples
        )
        if arc.termination == blowup.RegularizedTermination.NUMERICAL_FAILURE:
            raise NumericalFailureError(f"manifold line {k} failed: {arc.message}")
        rows = np.column_stack([arc.taus, arc.states[:, 2], arc.chi, arc.states[:, 3], arc.states[:, 1]])
        write_csv(os.path.join(config.output, f"manifold_flow_{k:02d}.csv"), MANIFOLD_HEADER, rows.tolist())
        slopes.append(blowup.fit_manifold_slope(arc))

    summary = {
        "beta": s.beta,
        "expected_slope": 0.5 * abs(s.beta),
        "slopes": slopes,
        "connection": blowup.manifold_connection(s, config.m_max).to_dict(),
        "equilibria": [spectrum.to_dict() for spectrum in blowup.equilibria_and_eigenvalues(s)],
    }
    save_json(summary, os.path.join(config.output, "manifold_slopes.json"))
    LOGGER.info("Wrote %d manifold lines, slope %s (expected %s)", len(slopes), slopes[0], 0.5 * abs(s.beta))
    return EXIT_OK


def block_map(config: RunConfig) -> int:
    """Analytic and integrated Gamma over the configured entry grid"""
    s = make_surface(config.surface.K, config.surface.L, config.surface.gamma_c)
    bs, rows = block_map_rows(s, config)
    write_csv(os.path.join(config.output, "block_map.csv"), BLOCK_MAP_HEADER, rows)
    summary = {"block": bs.to_dict(), "max_deviation": max(row[4] for row in rows)}
    save_json(summary, os.path.join(config.output, "block_map_summary.json"))
    LOGGER.info("Block map over %d entries, max deviation %s", len(rows), summary["max_deviation"])
    return EXIT_OK


def classify(config: RunConfig) -> int:
    """One verdict line per beta of the sweep grid"""
    lines = []
    for beta in config.sweep.betas:
        s = surface_from_beta(beta, K=config.surface.K, gamma_c=config.surface.gamma_c)
        verdict = classify_regularizability(s, config.m_max)
        LOGGER.info(verdict.to_line())
        lines.append(verdict.to_line())

    with open(os.path.join(config.output, "verdicts.txt"), "w", encoding="utf-8") as file:
        file.write("\n".join(lines) + "\n")
    return EXIT_OK


def verify(config: RunConfig) -> int:
    s = make_surface(config.surface.K, config.surface.L, config.surface.gamma_c)
    results, state_rows = run_verification(s, config)
    passed = write_verification(config.output, s, results, state_rows)
    return EXIT_OK if passed else EXIT_NUMERICAL


def sweep(config: RunConfig) -> int:
    rows = run_sweep(config)
    write_sweep(config.output, rows)
    failed = [row for row in rows if row.failed]
    if failed:
        LOGGER.warning("%d of %d sweep rows failed", len(failed), len(rows))
        return EXIT_NUMERICAL
    return EXIT_OK


MODE_HANDLERS = {
    "simulate": simulate,
    "blowup": blowup_flow,
    "block-map": block_map,
    "classify": classify,
    "verify": verify,
    "sweep": sweep,
}


def main(args) -> int:
    try:
        config = build_config(args)
        validate_config(config)
    except CurvedKeplerError as e:
        LOGGER.error("Invalid configuration: %s", e)
        return EXIT_INVALID

    os.makedirs(config.output, exist_ok=True)
    save_json(config.to_dict(), os.path.join(config.output, EFFECTIVE_CONFIG_FILE))
    LOGGER.info("Running %s into %s", config.mode, config.output)

    try:
        return MODE_HANDLERS[config.mode](config)
    except NumericalFailureError as e:
        LOGGER.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    except CurvedKeplerError as e:
        LOGGER.error("%s: %s", type(e).__name__, e)
        return EXIT_INVALID


def get_args_parser():
    arg_parser = argparse.ArgumentParser(
        description=(
            "Kepler problem on constant curvature surfaces of revolution:"
            " integration, collision blow-up and block regularization"
        )
    )
    arg_parser.add_argument("mode", type=str, choices=MODES, help="What to run")
    arg_parser.add_argument("--config", type=str, help="JSON run configuration", default=None)
    arg_parser.add_argument("--out", type=str, help="Output directory, overrides the config", default=None)
    arg_parser.add_argument("--tol", type=str, help="Integrator tolerance", default=None)
    arg_parser.add_argument(
        "--beta", type=str, help="Surface beta, decimal or p/q; sets L = beta / sqrt(K)", default=None
    )
    arg_parser.add_argument("--energy", type=str, help="Energy h for block-map and sweep runs", default=None)
    arg_parser.add_argument("--log", type=str, help="Log level", default="INFO")
    arg_parser.add_argument("--log-file", type=str, help="Log file", default=None)
    return arg_parser


def cli():
    execution_start_time = time.time()
    input_args = get_args_parser().parse_args()
    setup_logging(input_args.log, input_args.log_file)

    status = main(input_args)

    LOGGER.info("Total runtime %.2fs", time.time() - execution_start_time)
    sys.exit(status)


if __name__ == "__main__":
    cli()
