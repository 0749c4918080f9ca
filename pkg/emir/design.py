"""Design file format, validation and shared bump geometry."""
import hashlib
import json
import math
from collections import defaultdict
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

from .errors import DesignError
from .schemas import (
    SCHEMA_VERSION,
    C4Array,
    CellInstance,
    Design,
    DieBox,
    GeneratorConfig,
    Violation,
)

_EPS = 1e-9


# ---------- file format ----------

def _reject_constant(name: str) -> Any:
    raise ValueError(f"{name} is not a permitted number")


def _load_versioned(text: str, what: str) -> Dict[str, Any]:
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DesignError("PARSE_ERROR", f"{what}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except ValueError as exc:
        raise DesignError("PARSE_ERROR", f"{what}: {exc}") from exc

    if not isinstance(obj, dict):
        raise DesignError("PARSE_ERROR", f"{what}: top level must be a JSON object")
    if "schema_version" not in obj:
        raise DesignError("PARSE_ERROR", f"{what}: missing field 'schema_version'")
    version = obj.pop("schema_version")
    if version != SCHEMA_VERSION:
        raise DesignError(
            "SCHEMA_VERSION_MISMATCH",
            f"{what}: schema_version {version!r}, expected {SCHEMA_VERSION!r}",
        )
    return obj


def describe_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors()[:5]:
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    more = len(exc.errors()) - len(parts)
    if more > 0:
        parts.append(f"(+{more} more)")
    return "; ".join(parts)


def parse_design(text: str) -> Design:
    obj = _load_versioned(text, "design")
    try:
        return Design.model_validate(obj)
    except ValidationError as exc:
        raise DesignError("PARSE_ERROR", f"design: {describe_validation_error(exc)}") from exc


def serialize_design(design: Design) -> str:
    payload = {"schema_version": SCHEMA_VERSION, **design.model_dump(mode="json")}
    return json.dumps(payload, indent=1, allow_nan=False) + "\n"


def parse_generator_config(text: str) -> GeneratorConfig:
    obj = _load_versioned(text, "generator config")
    if set(obj) != {"generator"}:
        raise DesignError("PARSE_ERROR", "generator config: expected exactly one key 'generator'")
    try:
        return GeneratorConfig.model_validate(obj["generator"])
    except ValidationError as exc:
        raise DesignError("PARSE_ERROR", f"generator: {describe_validation_error(exc)}") from exc


def serialize_generator_config(config: GeneratorConfig) -> str:
    payload = {"schema_version": SCHEMA_VERSION, "generator": config.model_dump(mode="json")}
    return json.dumps(payload, indent=1, allow_nan=False) + "\n"


def design_id(design: Design) -> str:
    return hashlib.sha256(serialize_design(design).encode("utf-8")).hexdigest()[:12]


def translate_design(design: Design, dx: float, dy: float) -> Design:
    """Rigidly move the die with everything on it; stripe offsets are die-relative."""
    die = design.die
    c4 = design.c4
    return Design(
        die=DieBox(x0=die.x0 + dx, y0=die.y0 + dy, x1=die.x1 + dx, y1=die.y1 + dy),
        config=design.config,
        layers=design.layers,
        c4=c4.model_copy(update={"origin": (c4.origin[0] + dx, c4.origin[1] + dy)}),
        cells=[c.model_copy(update={"x": c.x + dx, "y": c.y + dy}) for c in design.cells],
        cap_map=design.cap_map,
    )


# ---------- bump geometry ----------

def nearest_bump_index(c4: C4Array, x: float, y: float) -> Tuple[int, int]:
    # ties resolve towards the higher index; fixed so every caller agrees
    m = math.floor((x - c4.origin[0]) / c4.pitch + 0.5)
    n = math.floor((y - c4.origin[1]) / c4.pitch + 0.5)
    return m, n


def bump_matrix(c4: C4Array, die: DieBox, x: float, y: float) -> Optional[List[Tuple[float, float]]]:
    """The 3×3 bumps around (x, y), bottom row first, left to right; None if any is missing."""
    nx, ny = c4.lattice_counts(die)
    m, n = nearest_bump_index(c4, x, y)
    if m - 1 < 0 or n - 1 < 0 or m + 1 >= nx or n + 1 >= ny:
        return None
    return [c4.position(m + dm, n + dn) for dn in (-1, 0, 1) for dm in (-1, 0, 1)]


def bumps_in_die(c4: C4Array, die: DieBox) -> List[Tuple[float, float]]:
    nx, ny = c4.lattice_counts(die)
    out = []
    for n in range(ny):
        for m in range(nx):
            x, y = c4.position(m, n)
            if die.x0 - _EPS <= x <= die.x1 + _EPS and die.y0 - _EPS <= y <= die.y1 + _EPS:
                out.append((x, y))
    return out


# ---------- validation ----------

def _is_positive_integer(value: float) -> bool:
    return value > 0.5 and abs(value - round(value)) <= 1e-9 * max(1.0, abs(value))


def _check_layers(design: Design, out: List[Violation]) -> None:
    layers = design.layers
    if len(layers) < 2:
        out.append(Violation(code="TOO_FEW_LAYERS", message=f"{len(layers)} layer(s); at least 2 are needed to form a mesh"))

    indices = [layer.index for layer in layers]
    if indices != list(range(1, len(layers) + 1)):
        out.append(Violation(
            code="LAYER_INDEX_GAP",
            message=f"layer indices {indices} are not 1..{len(layers)} in order",
        ))

    for layer in layers:
        tag = f"layer {layer.index}"
        if not (0 < layer.width < layer.pitch):
            out.append(Violation(code="STRIPE_OVERLAP", message=f"{tag}: need 0 < width ({layer.width}) < pitch ({layer.pitch})"))
        if not (0 <= layer.offset < layer.pitch):
            out.append(Violation(code="LAYER_OFFSET", message=f"{tag}: need 0 <= offset ({layer.offset}) < pitch ({layer.pitch})"))
        extent = design.die.height if layer.direction == "horizontal" else design.die.width
        if layer.pitch > 0 and extent > 0 and extent - layer.offset < -1e-9 * layer.pitch:
            out.append(Violation(
                code="LAYER_NO_STRIPES",
                message=f"{tag}: offset {layer.offset} lies beyond the die extent {extent}; no stripe falls inside",
            ))
        if layer.sheet_resistance <= 0 or layer.thickness <= 0 or layer.via_resistance_to_above < 0:
            out.append(Violation(code="LAYER_ELECTRICAL", message=f"{tag}: sheet resistance and thickness must be > 0, via resistance >= 0"))

    for below, above in zip(layers, layers[1:]):
        if below.direction == above.direction:
            out.append(Violation(
                code="LAYER_DIRECTION",
                message=f"layers {below.index} and {above.index} are both {below.direction}",
            ))


def _check_config(design: Design, out: List[Violation]) -> None:
    cfg = design.config
    if cfg.analysis_window <= 0 or cfg.cover_window <= cfg.analysis_window:
        out.append(Violation(
            code="WINDOW_GEOMETRY",
            message=f"need 0 < analysis window ({cfg.analysis_window}) < cover window ({cfg.cover_window})",
        ))
    if cfg.unit_inverter_width <= 0 or cfg.row_height <= 0 or not (
        _is_positive_integer(cfg.cover_window / cfg.unit_inverter_width)
        and _is_positive_integer(cfg.cover_window / cfg.row_height)
    ):
        out.append(Violation(
            code="PD_GRID_NOT_INTEGRAL",
            message=f"L/W and L/H must be positive integers (L={cfg.cover_window}, W={cfg.unit_inverter_width}, H={cfg.row_height})",
        ))
    if not (0 < cfg.ir_threshold_fraction < 1):
        out.append(Violation(code="IR_THRESHOLD_RANGE", message=f"ir_threshold_fraction {cfg.ir_threshold_fraction} not in (0, 1)"))
    if cfg.em_current_density_limit <= 0:
        out.append(Violation(code="EM_LIMIT_RANGE", message="em_current_density_limit must be > 0"))


def _check_c4(design: Design, out: List[Violation]) -> None:
    c4, die, cfg = design.c4, design.die, design.config
    if c4.supply_voltage <= 0:
        out.append(Violation(code="SUPPLY_VOLTAGE", message=f"supply voltage {c4.supply_voltage} must be > 0"))
    if c4.bump_resistance < 0:
        out.append(Violation(code="BUMP_RESISTANCE", message="bump resistance must be >= 0"))
    if c4.pitch <= 0:
        out.append(Violation(code="NINE_BUMP_CONTAINMENT", message="C4 pitch must be > 0"))
        return
    if c4.pitch < cfg.cover_window:
        out.append(Violation(
            code="NINE_BUMP_CONTAINMENT",
            message=f"C4 pitch {c4.pitch} < cover window {cfg.cover_window}: a cover window may escape its 3x3 bump matrix",
        ))
    ox, oy = c4.origin
    if ox < die.x0 - c4.pitch - _EPS or oy < die.y0 - c4.pitch - _EPS:
        out.append(Violation(code="C4_ORIGIN", message=f"C4 origin {c4.origin} lies below the die padded by one pitch"))
    for x, y in ((die.x0, die.y0), (die.x1, die.y0), (die.x0, die.y1), (die.x1, die.y1)):
        if bump_matrix(c4, die, x, y) is None:
            out.append(Violation(
                code="NINE_BUMP_CONTAINMENT",
                message=f"no complete 3x3 bump matrix around die corner ({x}, {y}); pad the bump array by one pitch",
            ))
            break


def _check_cells(design: Design, out: List[Violation]) -> None:
    die, h = design.die, design.config.row_height
    seen = set()
    rows: Dict[int, List[CellInstance]] = defaultdict(list)
    for cell in design.cells:
        if cell.id in seen:
            out.append(Violation(code="CELL_ID_DUPLICATE", message=f"cell id {cell.id!r} appears twice"))
        seen.add(cell.id)
        if cell.power < 0:
            out.append(Violation(code="CELL_POWER_NEGATIVE", message=f"cell {cell.id}: power {cell.power} < 0"))
        if (
            cell.width <= 0
            or cell.x < die.x0 - _EPS
            or cell.y < die.y0 - _EPS
            or cell.x + cell.width > die.x1 + _EPS
            or cell.y + cell.height > die.y1 + _EPS
        ):
            out.append(Violation(code="CELL_OUTSIDE_DIE", message=f"cell {cell.id} is not inside the die"))
        row = (cell.y - die.y0) / h if h > 0 else 0.0
        if h <= 0 or abs(row - round(row)) > 1e-9 or abs(cell.height - h) > 1e-9:
            out.append(Violation(code="CELL_OFF_ROW", message=f"cell {cell.id} is not on a standard row of height {h}"))
            continue
        rows[int(round(row))].append(cell)

    for row, cells in sorted(rows.items()):
        cells = sorted(cells, key=lambda c: (c.x, c.id))
        for left, right in zip(cells, cells[1:]):
            if right.x < left.x + left.width - _EPS:
                out.append(Violation(code="CELL_OVERLAP", message=f"cells {left.id} and {right.id} overlap on row {row}"))


def _check_cap_map(design: Design, out: List[Violation]) -> None:
    cap, die = design.cap_map, design.die
    rows = len(cap.values)
    cols = len(cap.values[0]) if rows else 0
    if (
        cap.tile_size <= 0
        or any(len(r) != cols for r in cap.values)
        or abs(rows * cap.tile_size - die.height) > 1e-6
        or abs(cols * cap.tile_size - die.width) > 1e-6
    ):
        out.append(Violation(
            code="CAP_MAP_COVERAGE",
            message=f"cap map {rows}x{cols} tiles of {cap.tile_size} does not cover the {die.width}x{die.height} die exactly",
        ))
    if any(v < 0 for r in cap.values for v in r):
        out.append(Violation(code="CAP_NEGATIVE", message="cap map holds negative capacitance"))


def validate_design(design: Design) -> List[Violation]:
    """Every invariant violation of ``design``; an empty list means valid."""
    out: List[Violation] = []
    die = design.die
    if die.x1 <= die.x0 or die.y1 <= die.y0:
        out.append(Violation(code="DIE_DEGENERATE", message=f"die {die} has no area"))
        return out
    _check_layers(design, out)
    _check_config(design, out)
    if die.width < design.config.cover_window or die.height < design.config.cover_window:
        out.append(Violation(code="DIE_TOO_SMALL", message="die is smaller than one cover window"))
    _check_c4(design, out)
    _check_cells(design, out)
    _check_cap_map(design, out)
    return out
