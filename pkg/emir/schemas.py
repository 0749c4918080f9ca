"""Data types shared across the flow.

Units are fixed repo-wide: µm, volts, amperes, watts, ohms, femtofarads.
Every artifact type forbids unknown fields and rejects NaN/Inf.
"""
import math
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

SCHEMA_VERSION = "1"
FEATURE_LAYOUT_VERSION = "1"
MODEL_FORMAT_VERSION = "1"

Direction = Literal["horizontal", "vertical"]
WindowClass = Literal["continuous", "boundary", "corner"]
DatasetClass = Literal["continuous", "discontinuous"]
Target = Literal["ir", "em", "hotspot"]
ModelKind = Literal["knn", "forest", "mlp"]


class _Record(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)


# ---------- design ----------

class DieBox(_Record):
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


class LayerSpec(_Record):
    index: int
    direction: Direction
    width: float = Field(..., description="stripe width w_i, µm")
    pitch: float = Field(..., description="stripe pitch p_i, µm")
    offset: float = Field(..., description="offset o_i of the first stripe from the die edge, µm")
    sheet_resistance: float = Field(..., description="ohms per square")
    thickness: float = Field(..., description="µm")
    via_resistance_to_above: float = Field(1.0, description="ohms per via cut to layer index+1")

    @property
    def cross_section(self) -> float:
        return self.width * self.thickness


class C4Array(_Record):
    pitch: float
    origin: Tuple[float, float] = Field(..., description="lowest-left bump, µm")
    supply_voltage: float = 1.0
    bump_resistance: float = Field(0.0, description="series resistance of each bump, ohms")

    def lattice_counts(self, die: DieBox) -> Tuple[int, int]:
        """Bumps along x and y, clipped to the die padded by one pitch."""
        nx = math.floor((die.x1 + self.pitch - self.origin[0]) / self.pitch + 1e-9) + 1
        ny = math.floor((die.y1 + self.pitch - self.origin[1]) / self.pitch + 1e-9) + 1
        return max(nx, 0), max(ny, 0)

    def position(self, m: int, n: int) -> Tuple[float, float]:
        return self.origin[0] + m * self.pitch, self.origin[1] + n * self.pitch


class CellInstance(_Record):
    id: str
    x: float
    y: float
    width: float
    height: float
    power: float

    @property
    def center(self) -> Tuple[float, float]:
        return self.x + self.width / 2.0, self.y + self.height / 2.0


class RoutingCapMap(_Record):
    tile_size: float
    values: List[List[float]] = Field(..., description="values[row][col] in fF, row 0 at the die bottom")


class DesignConfig(_Record):
    analysis_window: float = 5.0
    cover_window: float = 20.0
    unit_inverter_width: float = 1.0
    row_height: float = 2.0
    ir_threshold_fraction: float = 0.10
    em_current_density_limit: float = Field(1e-2, description="J_limit, A/µm²")

    @property
    def pd_cols(self) -> int:
        return int(round(self.cover_window / self.unit_inverter_width))

    @property
    def pd_rows(self) -> int:
        return int(round(self.cover_window / self.row_height))


class Design(_Record):
    die: DieBox
    config: DesignConfig
    layers: List[LayerSpec]
    c4: C4Array
    cells: List[CellInstance]
    cap_map: RoutingCapMap

    @property
    def top_layer(self) -> int:
        return len(self.layers)


class Violation(_Record):
    code: str
    message: str


# ---------- generator ----------

def default_layers() -> List[LayerSpec]:
    # Stand-in stack, not taken from any real process. Low layers are thick for
    # their width so the densest wire current sits on the top straps by the bumps.
    return [
        LayerSpec(index=1, direction="horizontal", width=0.2, pitch=2.0, offset=0.0,
                  sheet_resistance=0.05, thickness=0.3, via_resistance_to_above=1.0),
        LayerSpec(index=2, direction="vertical", width=1.5, pitch=5.0, offset=2.5,
                  sheet_resistance=0.025, thickness=0.4, via_resistance_to_above=1.0),
        LayerSpec(index=3, direction="horizontal", width=1.0, pitch=5.0, offset=2.5,
                  sheet_resistance=0.017, thickness=0.4, via_resistance_to_above=1.0),
        LayerSpec(index=4, direction="vertical", width=1.5, pitch=25.0, offset=0.0,
                  sheet_resistance=0.0125, thickness=0.5, via_resistance_to_above=0.0),
    ]


class PowerCalibration(_Record):
    ir_quantile: float = Field(0.92, description="quantile of cell IR drop to pin")
    ir_target_fraction: float = Field(0.10, description="fraction of Vdd the quantile is pinned to")
    em_quantile: Optional[float] = Field(0.995, description="quantile of wire J used as J_limit; null keeps the config value")


class GeneratorConfig(_Record):
    die_width: float = 200.0
    die_height: float = 200.0
    layers: List[LayerSpec] = Field(default_factory=default_layers)
    c4_pitch: float = 50.0
    supply_voltage: float = 1.0
    bump_resistance: float = 0.0
    design: DesignConfig = Field(default_factory=DesignConfig)
    utilization: float = 0.6
    cell_widths: List[int] = Field(default_factory=lambda: [1, 2, 3, 4], description="in unit-inverter widths")
    baseline_power: float = Field(1e-3, description="W per cell before clustering")
    hot_clusters: int = 4
    hot_ratio: float = 6.0
    cluster_sigma: float = 15.0
    cap_tile: float = 5.0
    cap_mean: float = 2.0
    cap_hot_gain: float = 1.0
    calibration: Optional[PowerCalibration] = Field(default_factory=PowerCalibration)


# ---------- golden result ----------

class IrViolation(_Record):
    cell: str
    drop: float


class EmViolation(_Record):
    branch: int
    layer: int
    x0: float
    y0: float
    x1: float
    y1: float
    current: float
    density: float

    @property
    def midpoint(self) -> Tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0


class ViolationSet(_Record):
    ir_violations: List[IrViolation] = Field(default_factory=list)
    em_violations: List[EmViolation] = Field(default_factory=list)


class WorstCell(_Record):
    cell: str
    drop: float
    drop_pct: float
    x: float
    y: float


class GoldenMeta(_Record):
    solver: str
    residual: float
    node_count: int
    branch_count: int
    dirichlet_count: int
    supply_voltage: float
    ir_threshold: float
    em_current_density_limit: float
    total_load_current: float
    max_drop: float
    mean_drop: float
    worst_cells: List[WorstCell] = Field(default_factory=list)


class GoldenResult(_Record):
    schema_version: Literal["1"] = SCHEMA_VERSION
    design_id: str
    cell_ir_drop: Dict[str, float]
    ir: List[IrViolation]
    em: List[EmViolation]
    meta: GoldenMeta
    node_voltages: Optional[List[float]] = None

    def violations(self) -> ViolationSet:
        return ViolationSet(ir_violations=self.ir, em_violations=self.em)


# ---------- dataset ----------

class DatasetHeader(_Record):
    feature_layout_version: str = FEATURE_LAYOUT_VERSION
    dataset_class: DatasetClass
    T: int
    L: float
    W: float
    H: float
    dimension: int


class DatasetRow(_Record):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False, populate_by_name=True)

    design_id: str
    window: Tuple[int, int]
    window_class: WindowClass = Field(..., alias="class")
    features: List[float]
    label_ir: Literal[0, 1]
    label_em: Literal[0, 1]

    def label(self, target: Target) -> int:
        if target == "ir":
            return self.label_ir
        if target == "em":
            return self.label_em
        return int(self.label_ir or self.label_em)


# ---------- models ----------

class KnnParams(_Record):
    kind: Literal["knn"] = "knn"
    k: int = Field(5, ge=1)


class ForestParams(_Record):
    kind: Literal["forest"] = "forest"
    n_trees: int = Field(100, ge=1)
    max_depth: Optional[int] = Field(16, ge=1)
    bootstrap: bool = True
    min_samples_split: int = Field(2, ge=2)


class MlpParams(_Record):
    kind: Literal["mlp"] = "mlp"
    hidden: int = Field(64, ge=1)
    learning_rate: float = Field(0.01, gt=0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(200, ge=1)
    pos_weight_scale: float = Field(1.0, gt=0)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


Hyperparameters = Union[KnnParams, ForestParams, MlpParams]

_PARAMS_BY_KIND = {"knn": KnnParams, "forest": ForestParams, "mlp": MlpParams}


class ModelSpec(_Record):
    target: Target
    window_class: DatasetClass
    seed: int = Field(0, ge=0)
    hyperparameters: Hyperparameters = Field(..., discriminator="kind")

    @property
    def kind(self) -> str:
        return self.hyperparameters.kind

    @classmethod
    def for_kind(cls, kind: str, target: str, window_class: str, seed: int = 0, **overrides) -> "ModelSpec":
        params = _PARAMS_BY_KIND[kind](**overrides)
        return cls(target=target, window_class=window_class, seed=seed, hyperparameters=params)


class PredictionRow(_Record):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False, populate_by_name=True)

    design_id: str
    window: Tuple[int, int]
    window_class: WindowClass = Field(..., alias="class")
    target: Target
    kind: ModelKind
    label: Literal[0, 1]
    score: float


# ---------- reports ----------

class ConfusionCounts(_Record):
    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def signoff(self) -> int:
        return self.tp + self.fn

    @property
    def flagged(self) -> int:
        return self.tp + self.fp

    @property
    def precision(self) -> Optional[float]:
        return self.tp / self.flagged if self.flagged else None

    @property
    def recall(self) -> Optional[float]:
        return self.tp / self.signoff if self.signoff else None

    @property
    def f1(self) -> Optional[float]:
        p, r = self.precision, self.recall
        if p is None or r is None or p + r == 0:
            return None
        return 2 * p * r / (p + r)


class TargetMetrics(_Record):
    target: Target
    counts: ConfusionCounts
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


class ReportColumn(_Record):
    window_class: DatasetClass
    windows: int
    signoff_ir: int
    signoff_em: int
    flagged_ir: Optional[int]
    flagged_em: Optional[int]
    false_positives: int
    prediction_accuracy: Optional[float]
    metrics: List[TargetMetrics]


class AccuracyReport(_Record):
    kind: Optional[str] = None
    columns: List[ReportColumn]
    footer: str


class SeedScore(_Record):
    seed: int
    prediction_accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    counts: ConfusionCounts


class ComparisonCell(_Record):
    window_class: DatasetClass
    target: Target
    kind: ModelKind
    status: Literal["scored", "DEGENERATE"]
    reason: Optional[str] = None
    mean_accuracy: Optional[float] = None
    mean_f1: Optional[float] = None
    per_seed: List[SeedScore] = Field(default_factory=list)


class ClassScore(_Record):
    """One kind on one window class, IR and EM counts pooled per seed, then averaged."""

    window_class: DatasetClass
    kind: ModelKind
    mean_accuracy: float
    mean_flagged: float
    mean_false_positives: float
    within_fp_budget: bool
    mean_f1: Optional[float] = None


class ComparisonReport(_Record):
    seeds: List[int]
    targets: List[Target]
    cells: List[ComparisonCell]
    rankings: Dict[str, List[str]]
    observations: Dict[str, Optional[bool]]
    class_scores: List[ClassScore] = Field(default_factory=list)


class ManifestStep(_Record):
    command: str
    argv: List[str]
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)


class Manifest(_Record):
    seed: int
    config_sha256: str
    steps: List[ManifestStep]
    best_models: Dict[str, Optional[str]] = Field(default_factory=dict)


class ScanHit(_Record):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False, populate_by_name=True)

    window: Tuple[int, int]
    window_class: WindowClass = Field(..., alias="class")
    target: Target
    kind: ModelKind
    score: float


class ScanReport(_Record):
    design_id: str
    models: Dict[str, str] = Field(default_factory=dict, description="slot -> model file")
    windows: int
    flagged: List[ScanHit] = Field(default_factory=list)
