"""DC sign-off solve: nodal analysis with bumps pinned to Vdd.

The unknowns are node drops ``d = Vdd - v``. With Dirichlet rows removed the
system ``G_ff d_f = i_load`` is symmetric positive definite.
"""
import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import settings
from .errors import SolverError
from .design import design_id
from .grid import GridGraph, build_grid
from .schemas import (
    Design,
    DesignConfig,
    EmViolation,
    GoldenMeta,
    GoldenResult,
    IrViolation,
    ViolationSet,
    WorstCell,
)

logger = logging.getLogger(__name__)

_REFINE_STEPS = 3


@dataclass(frozen=True)
class SolveResult:
    grid: GridGraph
    node_voltages: np.ndarray
    branch_currents: np.ndarray
    cell_ir_drop: np.ndarray
    branch_current_density: np.ndarray
    source_currents: np.ndarray
    residual: float
    method: str


def cell_currents(design: Design) -> np.ndarray:
    """Load current per cell, I = P / Vdd, in design cell order."""
    return np.array([c.power for c in design.cells], dtype=float) / design.c4.supply_voltage


def conductance_matrix(grid: GridGraph) -> sp.csr_matrix:
    g = 1.0 / grid.branch_resistance
    a, b = grid.branch_a, grid.branch_b
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([g, g, -g, -g])
    n = grid.node_count
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _solve_direct(A: sp.csc_matrix, b: np.ndarray, tol: float):
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolverError("SINGULAR_SYSTEM", f"factorisation failed: {exc}") from exc
    d = lu.solve(b)
    for _ in range(_REFINE_STEPS):
        r = b - A @ d
        if np.max(np.abs(r)) <= tol:
            break
        d = d + lu.solve(r)
    return d


def _solve_cg(A: sp.csr_matrix, b: np.ndarray, rtol: float, maxiter: int):
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("SINGULAR_SYSTEM", "conductance matrix has a non-positive diagonal entry")
    M = spla.LinearOperator(A.shape, matvec=lambda x: x / diag)
    d, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    if info > 0:
        achieved = float(np.linalg.norm(b - A @ d) / np.linalg.norm(b))
        raise SolverError(
            "NO_CONVERGENCE",
            f"CG stopped after {info} iterations at relative residual {achieved:.3e}",
            {"residual": achieved},
        )
    if info < 0:
        raise SolverError("SINGULAR_SYSTEM", f"CG breakdown (info={info})")
    return d


def solve_dc(
    grid: GridGraph,
    loads: Sequence[float],
    method: Optional[str] = None,
    rtol: Optional[float] = None,
) -> SolveResult:
    method = method or settings.solver_method
    rtol = settings.solver_rtol if rtol is None else rtol
    loads = np.asarray(loads, dtype=float)
    if loads.shape != grid.cell_node.shape:
        raise SolverError("INVALID_LOAD", f"{loads.size} loads for {grid.cell_node.size} cells")
    if np.any(loads < 0) or not np.all(np.isfinite(loads)):
        raise SolverError("INVALID_LOAD", "cell currents must be finite and non-negative")

    n = grid.node_count
    vdd = grid.supply_voltage
    inj = np.bincount(grid.cell_node, weights=loads, minlength=n) if loads.size else np.zeros(n)
    total = float(loads.sum())

    free = np.ones(n, dtype=bool)
    free[grid.dirichlet] = False
    free &= ~grid.floating
    free_idx = np.flatnonzero(free)

    drops = np.zeros(n)
    residual = 0.0
    started = time.perf_counter()
    if total > 0 and free_idx.size:
        G = conductance_matrix(grid)
        A = G[free_idx][:, free_idx]
        b = inj[free_idx]
        if method == "direct":
            d = _solve_direct(A.tocsc(), b, rtol * total)
        elif method == "cg":
            d = _solve_cg(A.tocsr(), b, rtol, settings.cg_maxiter)
        else:
            raise SolverError("INVALID_METHOD", f"unknown solver method {method!r}")
        residual = float(np.max(np.abs(A @ d - b))) / total
        if residual > rtol:
            raise SolverError(
                "NO_CONVERGENCE",
                f"Kirchhoff residual {residual:.3e} exceeds {rtol:.1e}",
                {"residual": residual},
            )
        drops[free_idx] = d
    logger.debug("solve_dc(%s): %d unknowns in %.3fs", method, free_idx.size, time.perf_counter() - started)

    voltages = vdd - drops
    # positive a -> b
    currents = (drops[grid.branch_b] - drops[grid.branch_a]) / grid.branch_resistance

    source = np.zeros(n)
    np.add.at(source, grid.branch_a, currents)
    np.add.at(source, grid.branch_b, -currents)
    source_currents = source[grid.dirichlet]

    density = np.zeros(grid.branch_count)
    wires = grid.wire_mask
    density[wires] = np.abs(currents[wires]) / grid.branch_area[wires]

    cell_drop = np.clip(drops[grid.cell_node], 0.0, None)
    if cell_drop.size and cell_drop.max() >= vdd:
        worst = int(np.argmax(cell_drop))
        raise SolverError(
            "DROP_EXCEEDS_SUPPLY",
            f"cell {grid.cell_ids[worst]} drops {cell_drop[worst]:.4g} V on a {vdd} V supply",
        )

    return SolveResult(
        grid=grid,
        node_voltages=voltages,
        branch_currents=currents,
        cell_ir_drop=cell_drop,
        branch_current_density=density,
        source_currents=source_currents,
        residual=residual,
        method=method,
    )


def compute_violations(result: SolveResult, config: DesignConfig) -> ViolationSet:
    grid = result.grid
    threshold = config.ir_threshold_fraction * grid.supply_voltage
    hot = np.flatnonzero(result.cell_ir_drop > threshold)
    ir = sorted(
        (IrViolation(cell=grid.cell_ids[i], drop=float(result.cell_ir_drop[i])) for i in hot),
        key=lambda v: v.cell,
    )

    over = np.flatnonzero(grid.wire_mask & (result.branch_current_density > config.em_current_density_limit))
    em = [
        EmViolation(
            branch=int(k),
            layer=int(grid.branch_layer[k]),
            x0=float(grid.node_x[grid.branch_a[k]]),
            y0=float(grid.node_y[grid.branch_a[k]]),
            x1=float(grid.node_x[grid.branch_b[k]]),
            y1=float(grid.node_y[grid.branch_b[k]]),
            current=float(result.branch_currents[k]),
            density=float(result.branch_current_density[k]),
        )
        for k in over
    ]
    return ViolationSet(ir_violations=ir, em_violations=em)


def golden_result(
    design: Design,
    result: SolveResult,
    violations: ViolationSet,
    dump_voltages: bool = False,
    worst: Optional[int] = None,
) -> GoldenResult:
    worst = settings.worst_cells if worst is None else worst
    grid = result.grid
    vdd = grid.supply_voltage
    drops = result.cell_ir_drop
    order = np.argsort(-drops, kind="stable")[:worst]
    worst_cells = []
    for i in order:
        cx, cy = design.cells[i].center
        worst_cells.append(WorstCell(
            cell=grid.cell_ids[i],
            drop=float(drops[i]),
            drop_pct=float(100.0 * drops[i] / vdd),
            x=cx,
            y=cy,
        ))
    meta = GoldenMeta(
        solver=result.method,
        residual=result.residual,
        node_count=grid.node_count,
        branch_count=grid.branch_count,
        dirichlet_count=int(grid.dirichlet.size),
        supply_voltage=vdd,
        ir_threshold=design.config.ir_threshold_fraction * vdd,
        em_current_density_limit=design.config.em_current_density_limit,
        total_load_current=float(cell_currents(design).sum()),
        max_drop=float(drops.max()) if drops.size else 0.0,
        mean_drop=float(drops.mean()) if drops.size else 0.0,
        worst_cells=worst_cells,
    )
    return GoldenResult(
        design_id=design_id(design),
        cell_ir_drop={cid: float(d) for cid, d in zip(grid.cell_ids, drops)},
        ir=violations.ir_violations,
        em=violations.em_violations,
        meta=meta,
        node_voltages=[float(v) for v in result.node_voltages] if dump_voltages else None,
    )


def signoff(design: Design, dump_voltages: bool = False, method: Optional[str] = None) -> GoldenResult:
    """build_grid -> solve_dc -> compute_violations for one design."""
    grid = build_grid(design)
    result = solve_dc(grid, cell_currents(design), method=method)
    violations = compute_violations(result, design.config)
    logger.info(
        "signoff %s: max drop %.4g V, %d IR / %d EM violations (residual %.2e)",
        design_id(design), float(result.cell_ir_drop.max()) if result.cell_ir_drop.size else 0.0,
        len(violations.ir_violations), len(violations.em_violations), result.residual,
    )
    return golden_result(design, result, violations, dump_voltages=dump_voltages)
