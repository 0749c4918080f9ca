"""Analysis windows, their feature vectors and golden labels.

Continuous layout::

    [w_1, p_1, o_1, ..., w_T, p_T, o_T,
     pd_(1,1) ... pd_(L/W, L/H),        # i along x outer, j along y inner
     c,                                 # routing cap over the analysis window
     X_1, Y_1, ..., X_9, Y_9]           # bump - cover centre, bottom row first

Discontinuous windows prepend the die corners relative to the analysis
window's lower-left: [X_a, Y_a, X_b, Y_b].
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
from pydantic import ValidationError

from .design import describe_validation_error, design_id, nearest_bump_index
from .errors import FeatureError
from .schemas import (
    FEATURE_LAYOUT_VERSION,
    DatasetClass,
    DatasetHeader,
    DatasetRow,
    Design,
    ViolationSet,
)
from .storage import dump_jsonl, store

logger = logging.getLogger(__name__)

_EPS = 1e-9

Box = Tuple[float, float, float, float]


@dataclass(frozen=True)
class AnalysisWindow:
    id: Tuple[int, int]
    bbox: Box
    cover_bbox: Box
    window_class: str
    clipped: bool = False

    @property
    def dataset_class(self) -> DatasetClass:
        return "continuous" if self.window_class == "continuous" else "discontinuous"

    @property
    def cover_center(self) -> Tuple[float, float]:
        x0, y0, x1, y1 = self.cover_bbox
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0


def window_grid_shape(design: Design) -> Tuple[int, int]:
    a = design.config.analysis_window
    rows = math.ceil(design.die.height / a - _EPS)
    cols = math.ceil(design.die.width / a - _EPS)
    return rows, cols


def tile_windows(design: Design) -> List[AnalysisWindow]:
    die = design.die
    a = design.config.analysis_window
    half = design.config.cover_window / 2.0
    rows, cols = window_grid_shape(design)
    out = []
    for r in range(rows):
        y0 = die.y0 + r * a
        y1 = min(y0 + a, die.y1)
        for c in range(cols):
            x0 = die.x0 + c * a
            x1 = min(x0 + a, die.x1)
            clipped = (x1 - x0) < a - _EPS or (y1 - y0) < a - _EPS
            cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
            cover = (cx - half, cy - half, cx + half, cy + half)
            crossed = (
                int(cover[0] < die.x0 - _EPS)
                + int(cover[2] > die.x1 + _EPS)
                + int(cover[1] < die.y0 - _EPS)
                + int(cover[3] > die.y1 + _EPS)
            )
            if crossed >= 2:
                cls = "corner"
            elif crossed == 1 or clipped:
                cls = "boundary"
            else:
                cls = "continuous"
            out.append(AnalysisWindow(id=(r, c), bbox=(x0, y0, x1, y1), cover_bbox=cover, window_class=cls, clipped=clipped))
    return out


def feature_dimension(n_layers: int, pd_cols: int, pd_rows: int, dataset_class: DatasetClass) -> int:
    n = 3 * n_layers + pd_cols * pd_rows + 1 + 18
    return n + 4 if dataset_class == "discontinuous" else n


class GridMeta:
    """Per-design arrays shared by every window's extraction."""

    def __init__(self, design: Design):
        self.design = design
        cfg = design.config
        self.layer_vector = np.array(
            [v for layer in design.layers for v in (layer.width, layer.pitch, layer.offset)], dtype=float
        )
        cells = design.cells
        self.cell_x0 = np.array([c.x for c in cells], dtype=float)
        self.cell_y0 = np.array([c.y for c in cells], dtype=float)
        self.cell_x1 = self.cell_x0 + np.array([c.width for c in cells], dtype=float)
        self.cell_y1 = self.cell_y0 + np.array([c.height for c in cells], dtype=float)
        area = (self.cell_x1 - self.cell_x0) * (self.cell_y1 - self.cell_y0)
        self.cell_density = np.array([c.power for c in cells], dtype=float) / np.where(area > 0, area, 1.0)
        self.cap = np.array(design.cap_map.values, dtype=float).reshape(len(design.cap_map.values), -1)
        self.cap_tile = design.cap_map.tile_size
        self.pd_cols = cfg.pd_cols
        self.pd_rows = cfg.pd_rows
        c4 = design.c4
        nx, ny = c4.lattice_counts(design.die)
        # bump lattice columns (x) and rows (y), padded one pitch past the die
        self.bump_x = np.array([c4.position(m, 0)[0] for m in range(nx)], dtype=float)
        self.bump_y = np.array([c4.position(0, n)[1] for n in range(ny)], dtype=float)

    @classmethod
    def from_design(cls, design: Design) -> "GridMeta":
        return cls(design)

    def dimension(self, dataset_class: DatasetClass) -> int:
        return feature_dimension(len(self.design.layers), self.pd_cols, self.pd_rows, dataset_class)


def _overlap(lo: np.ndarray, hi: np.ndarray, edges_lo: np.ndarray, edges_hi: np.ndarray) -> np.ndarray:
    """|[lo, hi] ∩ [edges_lo, edges_hi]| for every (item, interval) pair."""
    return np.clip(np.minimum(hi[:, None], edges_hi[None, :]) - np.maximum(lo[:, None], edges_lo[None, :]), 0.0, None)


def power_density_grid(meta: GridMeta, cover: Box) -> np.ndarray:
    """(L/W) x (L/H) power density of the cover window, W/µm², indexed [i, j]."""
    cfg = meta.design.config
    w, h = cfg.unit_inverter_width, cfg.row_height
    cx0, cy0, cx1, cy1 = cover
    pd = np.zeros((meta.pd_cols, meta.pd_rows))
    hit = (meta.cell_x1 > cx0) & (meta.cell_x0 < cx1) & (meta.cell_y1 > cy0) & (meta.cell_y0 < cy1)
    if not hit.any():
        return pd
    # coordinates relative to the cover window keep the result translation-exact
    x0, x1 = meta.cell_x0[hit] - cx0, meta.cell_x1[hit] - cx0
    y0, y1 = meta.cell_y0[hit] - cy0, meta.cell_y1[hit] - cy0
    xs = np.arange(meta.pd_cols) * w
    ys = np.arange(meta.pd_rows) * h
    ox = _overlap(x0, x1, xs, xs + w)
    oy = _overlap(y0, y1, ys, ys + h)
    pd = np.einsum("c,ci,cj->ij", meta.cell_density[hit], ox, oy)
    return pd / (w * h)


def window_capacitance(meta: GridMeta, bbox: Box) -> float:
    die = meta.design.die
    t = meta.cap_tile
    rows, cols = meta.cap.shape
    x0, y0, x1, y1 = bbox[0] - die.x0, bbox[1] - die.y0, bbox[2] - die.x0, bbox[3] - die.y0
    xs = np.arange(cols) * t
    ys = np.arange(rows) * t
    ox = _overlap(np.array([x0]), np.array([x1]), xs, xs + t)[0]
    oy = _overlap(np.array([y0]), np.array([y1]), ys, ys + t)[0]
    return float(oy @ meta.cap @ ox) / (t * t)


def bump_displacements(meta: GridMeta, window: AnalysisWindow) -> np.ndarray:
    """(dx, dy) of the 3x3 bumps around the cover centre, bottom row first, left to right."""
    cx, cy = window.cover_center
    m, n = nearest_bump_index(meta.design.c4, cx, cy)
    if m < 1 or n < 1 or m + 1 >= meta.bump_x.size or n + 1 >= meta.bump_y.size:
        raise FeatureError(
            "MISSING_BUMP_MATRIX",
            f"window {window.id}: no 3x3 bump matrix around cover centre ({cx}, {cy})",
        )
    dx = meta.bump_x[m - 1:m + 2] - cx
    dy = meta.bump_y[n - 1:n + 2] - cy
    return np.column_stack([np.tile(dx, 3), np.repeat(dy, 3)]).ravel()


def extract_features(design: Design, window: AnalysisWindow, cache: Optional[GridMeta] = None) -> List[float]:
    meta = cache if cache is not None else GridMeta(design)
    parts = [
        meta.layer_vector,
        power_density_grid(meta, window.cover_bbox).ravel(),
        np.array([window_capacitance(meta, window.bbox)]),
        bump_displacements(meta, window),
    ]
    if window.dataset_class == "discontinuous":
        die = design.die
        wx, wy = window.bbox[0], window.bbox[1]
        parts.insert(0, np.array([die.x0 - wx, die.y0 - wy, die.x1 - wx, die.y1 - wy]))
    return np.concatenate(parts).tolist()


# ---------- labels ----------

def window_of_point(design: Design, x: float, y: float) -> Tuple[int, int]:
    """Half-open window membership; points on the far die edge join the last row/col."""
    a = design.config.analysis_window
    rows, cols = window_grid_shape(design)
    r = math.floor((y - design.die.y0) / a)
    c = math.floor((x - design.die.x0) / a)
    return min(max(r, 0), rows - 1), min(max(c, 0), cols - 1)


def violation_windows(violations: ViolationSet, design: Design) -> Tuple[Set[Tuple[int, int]], Set[Tuple[int, int]]]:
    centres = {c.id: c.center for c in design.cells}
    ir = set()
    for v in violations.ir_violations:
        if v.cell not in centres:
            raise FeatureError("ALIGNMENT_ERROR", f"violating cell {v.cell!r} is not in the design")
        ir.add(window_of_point(design, *centres[v.cell]))
    em = {window_of_point(design, *v.midpoint) for v in violations.em_violations}
    return ir, em


def label_window(window: AnalysisWindow, violations: ViolationSet, design: Design) -> Tuple[int, int]:
    ir, em = violation_windows(violations, design)
    return int(window.id in ir), int(window.id in em)


def build_dataset(
    design: Design,
    violations: ViolationSet,
    cache: Optional[GridMeta] = None,
) -> Dict[DatasetClass, List[DatasetRow]]:
    meta = cache if cache is not None else GridMeta(design)
    did = design_id(design)
    ir, em = violation_windows(violations, design)
    out: Dict[DatasetClass, List[DatasetRow]] = {"continuous": [], "discontinuous": []}
    for window in sorted(tile_windows(design), key=lambda w: w.id):
        out[window.dataset_class].append(DatasetRow(
            design_id=did,
            window=window.id,
            window_class=window.window_class,
            features=extract_features(design, window, meta),
            label_ir=int(window.id in ir),
            label_em=int(window.id in em),
        ))
    logger.info(
        "dataset %s: %d continuous / %d discontinuous rows, %d IR and %d EM positive windows",
        did, len(out["continuous"]), len(out["discontinuous"]), len(ir), len(em),
    )
    return out


def dataset_header(design: Design, dataset_class: DatasetClass) -> DatasetHeader:
    cfg = design.config
    return DatasetHeader(
        dataset_class=dataset_class,
        T=len(design.layers),
        L=cfg.cover_window,
        W=cfg.unit_inverter_width,
        H=cfg.row_height,
        dimension=feature_dimension(len(design.layers), cfg.pd_cols, cfg.pd_rows, dataset_class),
    )


# ---------- JSONL ----------

def dataset_to_jsonl(header: DatasetHeader, rows: Iterable[DatasetRow]) -> str:
    records = [{"header": header.model_dump(mode="json")}]
    records.extend(r.model_dump(mode="json", by_alias=True) for r in rows)
    return dump_jsonl(records)


def parse_dataset(text: str) -> Tuple[DatasetHeader, List[DatasetRow]]:
    lines = [(n, line) for n, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not lines:
        raise FeatureError("PARSE_ERROR", "dataset: empty file, header line missing")
    header: Optional[DatasetHeader] = None
    rows: List[DatasetRow] = []
    for n, line in lines:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FeatureError("PARSE_ERROR", f"dataset line {n}: {exc.msg}") from exc
        try:
            if header is None:
                if not isinstance(obj, dict) or set(obj) != {"header"}:
                    raise FeatureError("PARSE_ERROR", f"dataset line {n}: expected the header record first")
                header = DatasetHeader.model_validate(obj["header"])
                if header.feature_layout_version != FEATURE_LAYOUT_VERSION:
                    raise FeatureError(
                        "VERSION_MISMATCH",
                        f"feature layout {header.feature_layout_version!r}, expected {FEATURE_LAYOUT_VERSION!r}",
                    )
                continue
            row = DatasetRow.model_validate(obj)
        except ValidationError as exc:
            raise FeatureError("PARSE_ERROR", f"dataset line {n}: {describe_validation_error(exc)}") from exc
        if len(row.features) != header.dimension:
            raise FeatureError(
                "DIMENSION_MISMATCH",
                f"dataset line {n}: {len(row.features)} features, header says {header.dimension}",
            )
        rows.append(row)
    return header, rows


def write_dataset(path, header: DatasetHeader, rows: Iterable[DatasetRow]):
    return store.write_text(path, dataset_to_jsonl(header, rows))


def read_dataset(path) -> Tuple[DatasetHeader, List[DatasetRow]]:
    return parse_dataset(store.read_text(path))
