"""
Concurrent beta x energy sweep of the regularizability verdict and the Gamma(0+) limit.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, asdict
from typing import List, Optional

from tqdm import tqdm

from curved_kepler.common.errors import CurvedKeplerError
from curved_kepler.common.utils import thread_count, write_csv
from curved_kepler.experiments.config import RunConfig
from curved_kepler.model.block import (
    classify_regularizability,
    default_block_size,
    gamma_limits,
    make_block,
    numeric_gamma_limit,
)
from curved_kepler.model.geometry import surface_from_beta

LOGGER = logging.getLogger(__name__)

LIMIT_TOLERANCE = 1e-3

SWEEP_FILE = "sweep_summary.csv"
SWEEP_HEADER = [
    "index",
    "beta",
    "energy",
    "north",
    "orbifold",
    "delta",
    "gamma_limit_numeric",
    "gamma_limit_expected",
    "deviation",
    "status",
]


@dataclass
class SweepRow:
    """One grid point of the sweep"""

    index: int
    beta: float
    energy: float
    north_m: Optional[int] = None
    orbifold_n: Optional[int] = None
    delta: float = math.nan
    gamma_limit_numeric: float = math.nan
    gamma_limit_expected: float = math.nan
    deviation: float = math.nan
    status: str = "ok"
    message: str = ""

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def to_csv_row(self) -> list:
        return [
            self.index,
            self.beta,
            self.energy,
            "none" if self.north_m is None else self.north_m,
            "none" if self.orbifold_n is None else self.orbifold_n,
            self.delta,
            self.gamma_limit_numeric,
            self.gamma_limit_expected,
            self.deviation,
            self.status,
        ]

    def to_dict(self):
        return asdict(self)


def sweep_grid(config: RunConfig) -> List[tuple]:
    """(index, beta, energy) in row-major order over betas then energies"""
    cells = []
    for beta in config.sweep.betas:
        for energy in config.sweep.energies:
            cells.append((len(cells), beta, energy))
    return cells


def run_cell(config: RunConfig, index: int, beta: float, energy: float) -> SweepRow:
    """Verdict and extrapolated Gamma(0+) for one grid point, failures recorded on the row"""
    row = SweepRow(index=index, beta=beta, energy=energy)
    try:
        s = surface_from_beta(beta, K=config.surface.K, gamma_c=config.surface.gamma_c)
        verdict = classify_regularizability(s, config.m_max)
        row.north_m = verdict.north_m
        row.orbifold_n = verdict.orbifold_n

        row.delta = default_block_size(s, energy)
        bs = make_block(s, energy, row.delta)
        limit, _ = numeric_gamma_limit(bs, s, 1, tol=config.block.transit_tol, tau_max=config.block.tau_max)
        row.gamma_limit_numeric = limit
        row.gamma_limit_expected = gamma_limits(s)[0]
        row.deviation = abs(limit - row.gamma_limit_expected)
        if row.deviation >= LIMIT_TOLERANCE:
            row.status = "failed"
            row.message = f"Gamma(0+) off by {row.deviation}"
    except CurvedKeplerError as e:
        row.status = "failed"
        row.message = f"{type(e).__name__}: {e}"

    if row.failed:
        LOGGER.warning("Sweep cell %d (beta=%s, h=%s) failed: %s", index, beta, energy, row.message)
    return row


def run_sweep(config: RunConfig, workers: Optional[int] = None) -> List[SweepRow]:
    """Evaluate every grid point concurrently; rows come back ordered by grid index"""
    cells = sweep_grid(config)
    if workers is None:
        workers = thread_count()

    LOGGER.info("Sweeping %d cells with %d workers", len(cells), workers)
    rows = []
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures_to_cell = {executor.submit(run_cell, config, *cell): cell for cell in cells}

        for future in tqdm(
            as_completed(futures_to_cell), total=len(cells), disable=LOGGER.getEffectiveLevel() > logging.INFO
        ):
            row = future.result()
            cell = futures_to_cell[future]
            LOGGER.debug("Completed cell %s, status: %s", cell, row.status)
            rows.append(row)

    rows.sort(key=lambda row: row.index)
    return rows


def write_sweep(output: str, rows: List[SweepRow]) -> str:
    os.makedirs(output, exist_ok=True)
    file_path = os.path.join(output, SWEEP_FILE)
    write_csv(file_path, SWEEP_HEADER, [row.to_csv_row() for row in rows])
    LOGGER.info("Wrote %d sweep rows to %s", len(rows), file_path)
    return file_path
