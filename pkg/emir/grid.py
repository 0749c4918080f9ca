"""Resistor-network view of the power grid.

Stripes of layer i run at ``die_origin + o_i + k * p_i``. Nodes sit where the
stripes of two adjacent layers cross (one node per layer at each crossing,
joined by a via), wires join consecutive nodes along a stripe, cells hang on
the nearest layer-1 node and in-die bumps pin the nearest top-layer node.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .design import bumps_in_die, validate_design
from .errors import SolverError
from .schemas import Design, DieBox, LayerSpec

logger = logging.getLogger(__name__)

WIRE, VIA, BUMP = 0, 1, 2
BRANCH_KINDS = {WIRE: "wire", VIA: "via", BUMP: "bump"}

_STRUCTURAL_CODES = {
    "DIE_DEGENERATE",
    "TOO_FEW_LAYERS",
    "LAYER_INDEX_GAP",
    "STRIPE_OVERLAP",
    "LAYER_OFFSET",
    "LAYER_NO_STRIPES",
    "LAYER_ELECTRICAL",
    "LAYER_DIRECTION",
    "SUPPLY_VOLTAGE",
    "BUMP_RESISTANCE",
}


@dataclass(frozen=True)
class GridGraph:
    node_layer: np.ndarray
    node_x: np.ndarray
    node_y: np.ndarray
    branch_a: np.ndarray
    branch_b: np.ndarray
    branch_resistance: np.ndarray
    branch_kind: np.ndarray
    branch_layer: np.ndarray
    branch_area: np.ndarray
    dirichlet: np.ndarray
    cell_node: np.ndarray
    cell_ids: Tuple[str, ...]
    supply_voltage: float
    floating: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.node_layer.shape[0])

    @property
    def branch_count(self) -> int:
        return int(self.branch_a.shape[0])

    @property
    def wire_mask(self) -> np.ndarray:
        return self.branch_kind == WIRE

    def nodes(self) -> List[Tuple[int, float, float]]:
        return [(int(l), float(x), float(y)) for l, x, y in zip(self.node_layer, self.node_x, self.node_y)]

    def branches(self) -> List[Tuple[int, int, float, str, int, float]]:
        return [
            (int(a), int(b), float(r), BRANCH_KINDS[int(k)], int(l), float(s))
            for a, b, r, k, l, s in zip(
                self.branch_a, self.branch_b, self.branch_resistance,
                self.branch_kind, self.branch_layer, self.branch_area,
            )
        ]

    @classmethod
    def from_branches(
        cls,
        nodes: Sequence[Tuple[int, float, float]],
        branches: Sequence[Tuple[int, int, float, str, int, float]],
        dirichlet: Sequence[int],
        cell_node: Sequence[int],
        supply_voltage: float = 1.0,
        cell_ids: Sequence[str] = (),
    ) -> "GridGraph":
        """Hand-built network; branches are (a, b, ohms, kind, layer, area)."""
        kinds = {name: code for code, name in BRANCH_KINDS.items()}
        node_arr = np.array(nodes, dtype=float).reshape(-1, 3)
        br = list(branches)
        ids = tuple(cell_ids) or tuple(f"c{i}" for i in range(len(cell_node)))
        return _finish(
            node_layer=node_arr[:, 0].astype(int),
            node_x=node_arr[:, 1],
            node_y=node_arr[:, 2],
            branch_a=np.array([b[0] for b in br], dtype=int),
            branch_b=np.array([b[1] for b in br], dtype=int),
            branch_resistance=np.array([b[2] for b in br], dtype=float),
            branch_kind=np.array([kinds[b[3]] for b in br], dtype=np.int8),
            branch_layer=np.array([b[4] for b in br], dtype=int),
            branch_area=np.array([b[5] for b in br], dtype=float),
            dirichlet=np.unique(np.asarray(dirichlet, dtype=int)),
            cell_node=np.asarray(cell_node, dtype=int),
            cell_ids=ids,
            supply_voltage=float(supply_voltage),
        )


def stripe_positions(layer: LayerSpec, die: DieBox) -> np.ndarray:
    """Centre-line coordinates of the stripes of ``layer`` clipped to the die."""
    if layer.direction == "horizontal":
        base, extent = die.y0, die.height
    else:
        base, extent = die.x0, die.width
    count = int(np.floor((extent - layer.offset) / layer.pitch + 1e-9)) + 1
    if count <= 0:
        return np.zeros(0)
    return base + (layer.offset + np.arange(count) * layer.pitch)


def _nearest(coords: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Index of the nearest sorted coordinate; ties go to the lower one."""
    idx = np.searchsorted(coords, values)
    lo = np.clip(idx - 1, 0, len(coords) - 1)
    hi = np.clip(idx, 0, len(coords) - 1)
    take_hi = np.abs(coords[hi] - values) < np.abs(values - coords[lo])
    return np.where(take_hi, hi, lo)


class _NodeTable:
    def __init__(self):
        self.index: Dict[Tuple[int, float, float], int] = {}
        self.layer: List[int] = []
        self.x: List[float] = []
        self.y: List[float] = []

    def get(self, layer: int, x: float, y: float) -> int:
        key = (layer, x, y)
        node = self.index.get(key)
        if node is None:
            node = len(self.layer)
            self.index[key] = node
            self.layer.append(layer)
            self.x.append(x)
            self.y.append(y)
        return node


def _crossings(lower: LayerSpec, upper: LayerSpec, pos: Dict[int, np.ndarray]) -> List[Tuple[float, float]]:
    if lower.direction == "horizontal":
        ys, xs = pos[lower.index], pos[upper.index]
    else:
        xs, ys = pos[lower.index], pos[upper.index]
    return [(float(x), float(y)) for y in ys for x in xs]


def _mesh_axes(design: Design, pos: Dict[int, np.ndarray], layer: int, partner: int) -> Tuple[np.ndarray, np.ndarray]:
    """(x coords, y coords) of the node lattice that ``layer`` forms with ``partner``."""
    if design.layers[layer - 1].direction == "horizontal":
        return pos[partner], pos[layer]
    return pos[layer], pos[partner]


def build_grid(design: Design) -> GridGraph:
    structural = [v for v in validate_design(design) if v.code in _STRUCTURAL_CODES]
    if structural:
        codes = ", ".join(sorted({v.code for v in structural}))
        raise SolverError("INVALID_DESIGN", f"cannot build a grid: {codes}", {"violations": structural})

    layers = design.layers
    top = len(layers)
    pos = {layer.index: stripe_positions(layer, design.die) for layer in layers}

    table = _NodeTable()
    vias: List[Tuple[int, int, float]] = []
    for lower, upper in zip(layers, layers[1:]):
        for x, y in _crossings(lower, upper, pos):
            a = table.get(lower.index, x, y)
            b = table.get(upper.index, x, y)
            vias.append((a, b, lower.via_resistance_to_above))

    node_layer = np.array(table.layer, dtype=int)
    node_x = np.array(table.x, dtype=float)
    node_y = np.array(table.y, dtype=float)

    a_list: List[np.ndarray] = []
    b_list: List[np.ndarray] = []
    r_list: List[np.ndarray] = []
    layer_list: List[np.ndarray] = []
    area_list: List[np.ndarray] = []
    for layer in layers:
        ids = np.flatnonzero(node_layer == layer.index)
        if ids.size < 2:
            continue
        if layer.direction == "horizontal":
            along, across = node_x[ids], node_y[ids]
        else:
            along, across = node_y[ids], node_x[ids]
        order = np.lexsort((along, across))
        ids, along, across = ids[order], along[order], across[order]
        same = across[1:] == across[:-1]
        length = along[1:] - along[:-1]
        a_list.append(ids[:-1][same])
        b_list.append(ids[1:][same])
        r_list.append(layer.sheet_resistance * length[same] / layer.width)
        layer_list.append(np.full(int(same.sum()), layer.index))
        area_list.append(np.full(int(same.sum()), layer.cross_section))

    wire_a = np.concatenate(a_list) if a_list else np.zeros(0, dtype=int)
    wire_b = np.concatenate(b_list) if b_list else np.zeros(0, dtype=int)
    wire_r = np.concatenate(r_list) if r_list else np.zeros(0)
    wire_layer = np.concatenate(layer_list) if layer_list else np.zeros(0, dtype=int)
    wire_area = np.concatenate(area_list) if area_list else np.zeros(0)

    via_arr = np.array(vias, dtype=float).reshape(-1, 3)
    branch_a = np.concatenate([wire_a, via_arr[:, 0].astype(int)])
    branch_b = np.concatenate([wire_b, via_arr[:, 1].astype(int)])
    branch_r = np.concatenate([wire_r, via_arr[:, 2]])
    branch_kind = np.concatenate([np.full(wire_a.size, WIRE, dtype=np.int8), np.full(len(vias), VIA, dtype=np.int8)])
    branch_layer = np.concatenate([wire_layer, node_layer[via_arr[:, 0].astype(int)]])
    branch_area = np.concatenate([wire_area, np.zeros(len(vias))])

    # cells -> nearest layer-1 node
    cells = design.cells
    cell_node = np.zeros(len(cells), dtype=int)
    if cells:
        xs, ys = _mesh_axes(design, pos, 1, 2)
        cx = np.array([c.x + c.width / 2.0 for c in cells])
        cy = np.array([c.y + c.height / 2.0 for c in cells])
        px, py = xs[_nearest(xs, cx)], ys[_nearest(ys, cy)]
        cell_node = np.array([table.index[(1, float(x), float(y))] for x, y in zip(px, py)], dtype=int)

    # in-die bumps -> nearest top-layer node
    bumps = bumps_in_die(design.c4, design.die)
    pinned: List[int] = []
    pads: List[Tuple[float, float, int]] = []
    if bumps:
        xs, ys = _mesh_axes(design, pos, top, top - 1)
        bx = np.array([b[0] for b in bumps])
        by = np.array([b[1] for b in bumps])
        px, py = xs[_nearest(xs, bx)], ys[_nearest(ys, by)]
        for (x, y), tx, ty in zip(bumps, px, py):
            node = table.index[(top, float(tx), float(ty))]
            if design.c4.bump_resistance > 0:
                pads.append((x, y, node))
            else:
                pinned.append(node)

    if pads:
        pad_ids = []
        for x, y, node in pads:
            pad = table.get(top + 1, float(x), float(y))
            pad_ids.append(pad)
            branch_a = np.append(branch_a, pad)
            branch_b = np.append(branch_b, node)
            branch_r = np.append(branch_r, design.c4.bump_resistance)
            branch_kind = np.append(branch_kind, np.int8(BUMP))
            branch_layer = np.append(branch_layer, top)
            branch_area = np.append(branch_area, 0.0)
        node_layer = np.array(table.layer, dtype=int)
        node_x = np.array(table.x, dtype=float)
        node_y = np.array(table.y, dtype=float)
        pinned.extend(pad_ids)

    grid = _finish(
        node_layer=node_layer,
        node_x=node_x,
        node_y=node_y,
        branch_a=branch_a,
        branch_b=branch_b,
        branch_resistance=branch_r,
        branch_kind=branch_kind,
        branch_layer=branch_layer,
        branch_area=branch_area,
        dirichlet=np.unique(np.array(pinned, dtype=int)),
        cell_node=cell_node,
        cell_ids=tuple(c.id for c in cells),
        supply_voltage=design.c4.supply_voltage,
    )
    logger.info(
        "grid: %d nodes, %d branches (%d wires), %d pinned nodes, %d cells",
        grid.node_count, grid.branch_count, int(grid.wire_mask.sum()), grid.dirichlet.size, len(cells),
    )
    return grid


def _merge_zero_branches(fields: dict) -> dict:
    """Collapse 0-ohm branches (e.g. vias with no resistance) into single nodes."""
    zero = fields["branch_resistance"] <= 0
    if not zero.any():
        return fields
    n = fields["node_layer"].shape[0]
    parent = np.arange(n)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in zip(fields["branch_a"][zero], fields["branch_b"][zero]):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n)])
    keep = np.unique(roots)
    remap = np.full(n, -1)
    remap[keep] = np.arange(keep.size)
    mapping = remap[roots]

    out = dict(fields)
    out["node_layer"] = fields["node_layer"][keep]
    out["node_x"] = fields["node_x"][keep]
    out["node_y"] = fields["node_y"][keep]
    live = ~zero
    for key in ("branch_resistance", "branch_kind", "branch_layer", "branch_area"):
        out[key] = fields[key][live]
    out["branch_a"] = mapping[fields["branch_a"][live]]
    out["branch_b"] = mapping[fields["branch_b"][live]]
    out["dirichlet"] = np.unique(mapping[fields["dirichlet"]])
    out["cell_node"] = mapping[fields["cell_node"]]
    return out


def _finish(**fields) -> GridGraph:
    fields = _merge_zero_branches(fields)
    n = fields["node_layer"].shape[0]
    adjacency = coo_matrix(
        (np.ones(fields["branch_a"].size), (fields["branch_a"], fields["branch_b"])),
        shape=(n, n),
    )
    _, labels = connected_components(adjacency, directed=False)
    sourced = np.zeros(labels.max() + 1 if n else 0, dtype=bool)
    sourced[labels[fields["dirichlet"]]] = True
    floating = ~sourced[labels] if n else np.zeros(0, dtype=bool)

    loaded = np.unique(fields["cell_node"])
    stranded = loaded[floating[loaded]] if loaded.size else loaded
    if stranded.size:
        raise SolverError(
            "FLOATING_NETWORK",
            f"{stranded.size} load node(s) have no path to a C4 bump",
            {"nodes": stranded[:10].tolist()},
        )
    if floating.any():
        logger.warning("%d unloaded node(s) float without a bump; they are left at Vdd", int(floating.sum()))
    return GridGraph(floating=floating, **fields)
