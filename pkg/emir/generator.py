"""Seeded synthetic designs with biased cell power.

Draw order is fixed (cluster centres, placement, cap raster) so a design is a
pure function of ``(config, seed)``.
"""
import logging
from typing import List, Tuple

import numpy as np

from .design import validate_design
from .errors import GeneratorError
from .grid import build_grid
from .schemas import (
    C4Array,
    CellInstance,
    Design,
    DieBox,
    GeneratorConfig,
    PowerCalibration,
    RoutingCapMap,
)
from .solver import cell_currents, solve_dc

logger = logging.getLogger(__name__)


def centred_bump_origin(die: DieBox, pitch: float) -> Tuple[float, float]:
    """Lowest-left bump of a lattice padded one pitch past the die and centred on it."""
    return (
        die.x0 - pitch + (die.width % pitch) / 2.0,
        die.y0 - pitch + (die.height % pitch) / 2.0,
    )


def _cluster_intensity(x: np.ndarray, y: np.ndarray, centres: np.ndarray, sigma: float) -> np.ndarray:
    """max_k exp(-|p - c_k|^2 / 2 sigma^2), 0 when there are no clusters."""
    if centres.size == 0:
        return np.zeros_like(x, dtype=float)
    dx = x[:, None] - centres[None, :, 0]
    dy = y[:, None] - centres[None, :, 1]
    return np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).max(axis=1)


def _row_widths(budget: int, widths: List[int], rng: np.random.Generator) -> List[int]:
    out = []
    remaining = budget
    while remaining > 0:
        w = int(rng.choice(widths))
        w = min(w, remaining)
        out.append(w)
        remaining -= w
    return out


def _place(config: GeneratorConfig, die: DieBox, rng: np.random.Generator) -> List[Tuple[float, float, float]]:
    """(x, y, width) of every cell, row by row, left to right."""
    cfg = config.design
    rows = int(np.floor(die.height / cfg.row_height + 1e-9))
    sites = int(np.floor(die.width / cfg.unit_inverter_width + 1e-9))
    if not (0 < config.utilization <= 1):
        raise GeneratorError("INFEASIBLE_UTILIZATION", f"utilization {config.utilization} not in (0, 1]")
    if not config.cell_widths or min(config.cell_widths) < 1:
        raise GeneratorError("INFEASIBLE_UTILIZATION", "cell_widths must be positive site counts")
    target = int(round(config.utilization * die.width * die.height / (cfg.unit_inverter_width * cfg.row_height)))
    if rows <= 0 or target > rows * sites:
        raise GeneratorError(
            "INFEASIBLE_UTILIZATION",
            f"{target} cell sites requested but only {rows} rows x {sites} sites fit the die",
        )

    base, extra = divmod(target, rows)
    placed = []
    for row in range(rows):
        budget = base + (1 if row < extra else 0)
        widths = _row_widths(budget, config.cell_widths, rng)
        gaps = rng.multinomial(sites - budget, np.full(len(widths) + 1, 1.0 / (len(widths) + 1)))
        site = 0
        for w, gap in zip(widths, gaps):
            site += int(gap)
            placed.append((
                die.x0 + site * cfg.unit_inverter_width,
                die.y0 + row * cfg.row_height,
                w * cfg.unit_inverter_width,
            ))
            site += w
    logger.debug("placed %d cells on %d rows (%d of %d sites)", len(placed), rows, target, rows * sites)
    return placed


def _cap_map(config: GeneratorConfig, die: DieBox, centres: np.ndarray, rng: np.random.Generator) -> RoutingCapMap:
    tile = config.cap_tile
    rows = int(round(die.height / tile))
    cols = int(round(die.width / tile))
    base = rng.gamma(shape=2.0, scale=config.cap_mean / 2.0, size=(rows, cols))
    ys, xs = np.meshgrid(
        die.y0 + (np.arange(rows) + 0.5) * tile,
        die.x0 + (np.arange(cols) + 0.5) * tile,
        indexing="ij",
    )
    gain = 1.0 + config.cap_hot_gain * _cluster_intensity(xs.ravel(), ys.ravel(), centres, config.cluster_sigma)
    values = base * gain.reshape(rows, cols)
    return RoutingCapMap(tile_size=tile, values=values.tolist())


def calibrate_power(design: Design, calibration: PowerCalibration) -> Design:
    """Rescale cell power so the chosen drop quantile sits at the target fraction of Vdd.

    The DC system is linear, so one solve gives the scale factor exactly; the
    EM limit is then read off the scaled wire current densities.
    """
    if not design.cells:
        return design
    grid = build_grid(design)
    result = solve_dc(grid, cell_currents(design))
    vdd = design.c4.supply_voltage
    q = float(np.quantile(result.cell_ir_drop, calibration.ir_quantile))
    if q <= 0:
        logger.warning("calibration skipped: drop quantile is zero")
        return design
    scale = calibration.ir_target_fraction * vdd / q
    if result.cell_ir_drop.max() * scale >= vdd:
        raise GeneratorError(
            "INFEASIBLE_CALIBRATION",
            f"scaling powers by {scale:.3g} would drop a cell below 0 V",
        )

    config = design.config
    if calibration.em_quantile is not None:
        wire_j = result.branch_current_density[grid.wire_mask] * scale
        limit = float(np.quantile(wire_j, calibration.em_quantile)) if wire_j.size else 0.0
        if limit > 0:
            config = config.model_copy(update={"em_current_density_limit": limit})

    cells = [c.model_copy(update={"power": c.power * scale}) for c in design.cells]
    logger.info(
        "calibrated power x%.4g: q%.2f drop -> %.3g V, J_limit %.4g A/um^2",
        scale, calibration.ir_quantile, q * scale, config.em_current_density_limit,
    )
    return design.model_copy(update={"cells": cells, "config": config})


def generate_design(config: GeneratorConfig, seed: int) -> Design:
    rng = np.random.default_rng(seed)
    die = DieBox(x0=0.0, y0=0.0, x1=config.die_width, y1=config.die_height)

    centres = np.column_stack([
        rng.uniform(die.x0, die.x1, size=config.hot_clusters),
        rng.uniform(die.y0, die.y1, size=config.hot_clusters),
    ]) if config.hot_clusters > 0 else np.zeros((0, 2))

    placed = _place(config, die, rng)
    height = config.design.row_height
    if placed:
        arr = np.array(placed)
        intensity = _cluster_intensity(arr[:, 0] + arr[:, 2] / 2.0, arr[:, 1] + height / 2.0, centres, config.cluster_sigma)
    else:
        intensity = np.zeros(0)
    multiplier = 1.0 + (config.hot_ratio - 1.0) * intensity

    width = len(str(max(len(placed) - 1, 0)))
    cells = [
        CellInstance(
            id=f"c{i:0{width}d}",
            x=float(x),
            y=float(y),
            width=float(w),
            height=height,
            power=float(config.baseline_power * m),
        )
        for i, ((x, y, w), m) in enumerate(zip(placed, multiplier))
    ]

    design = Design(
        die=die,
        config=config.design,
        layers=config.layers,
        c4=C4Array(
            pitch=config.c4_pitch,
            origin=centred_bump_origin(die, config.c4_pitch),
            supply_voltage=config.supply_voltage,
            bump_resistance=config.bump_resistance,
        ),
        cells=cells,
        cap_map=_cap_map(config, die, centres, rng),
    )

    violations = validate_design(design)
    if violations:
        codes = ", ".join(sorted({v.code for v in violations}))
        raise GeneratorError("INVALID_DESIGN", f"generator config yields an invalid design: {codes}", {"violations": violations})

    if config.calibration is not None:
        design = calibrate_power(design, config.calibration)
    logger.info("generated design: %d cells, %d hot clusters, seed %d", len(cells), config.hot_clusters, seed)
    return design
