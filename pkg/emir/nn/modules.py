import json
import logging
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple, Type

import numpy as np
from pydantic import ValidationError

from ..design import describe_validation_error
from ..errors import ModelError
from ..schemas import FEATURE_LAYOUT_VERSION, MODEL_FORMAT_VERSION, DatasetRow, ModelSpec
from .base import Classifier, Standardizer, fit_standardizer
from .forest import ForestClassifier
from .knn import KnnClassifier
from .mlp import MlpClassifier

logger = logging.getLogger(__name__)

REGISTRY: Dict[str, Type[Classifier]] = {
    "knn": KnnClassifier,
    "forest": ForestClassifier,
    "mlp": MlpClassifier,
}


class ConstantClassifier(Classifier):
    """Stand-in for a slot whose training labels are all one class."""

    def __init__(self, params, label: int = 0):
        super().__init__(params)
        self.kind = params.kind
        self.label = label

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> None:
        self.label = int(y[0])

    def score(self, X: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(X).shape[0], float(self.label))

    def get_parameters(self) -> Dict:
        return {"constant": self.label}

    def set_parameters(self, parameters: Dict) -> None:
        self.label = int(parameters["constant"])


@dataclass
class TrainedModel:
    spec: ModelSpec
    standardizer: Standardizer
    classifier: Classifier
    dimension: int
    feature_layout_version: str = FEATURE_LAYOUT_VERSION

    @property
    def kind(self) -> str:
        return self.spec.kind


def _row_class(row: DatasetRow) -> str:
    return "continuous" if row.window_class == "continuous" else "discontinuous"


def training_matrix(spec: ModelSpec, rows: Sequence[DatasetRow]) -> Tuple[np.ndarray, np.ndarray]:
    if not rows:
        raise ModelError("EMPTY_DATASET", "no training rows")
    dims = {len(r.features) for r in rows}
    if len(dims) != 1:
        raise ModelError("DIMENSION_MISMATCH", f"rows carry feature lengths {sorted(dims)}")
    stray = [r.window for r in rows if _row_class(r) != spec.window_class]
    if stray:
        raise ModelError(
            "DIMENSION_MISMATCH",
            f"{len(stray)} row(s) are not {spec.window_class} windows, e.g. window {stray[0]}",
        )
    X = np.array([r.features for r in rows], dtype=float)
    y = np.array([r.label(spec.target) for r in rows], dtype=int)
    return X, y


def train(spec: ModelSpec, rows: Sequence[DatasetRow], allow_degenerate: bool = False) -> TrainedModel:
    X, y = training_matrix(spec, rows)
    positives = int(y.sum())
    standardizer = fit_standardizer(X)
    if positives == 0 or positives == y.size:
        if not allow_degenerate:
            raise ModelError(
                "SINGLE_CLASS_DATASET",
                f"all {y.size} {spec.window_class} rows have {spec.target} label {int(y[0])}",
            )
        logger.warning(
            "%s/%s/%s: single-class labels, falling back to constant %d",
            spec.kind, spec.target, spec.window_class, int(y[0]),
        )
        classifier = ConstantClassifier(spec.hyperparameters)
        classifier.fit(X, y, spec.seed)
        return TrainedModel(spec=spec, standardizer=standardizer, classifier=classifier, dimension=X.shape[1])
    classifier = REGISTRY[spec.kind](spec.hyperparameters)
    classifier.fit(standardizer.transform(X), y, spec.seed)
    logger.info(
        "trained %s/%s/%s on %d rows (%d positive), d=%d",
        spec.kind, spec.target, spec.window_class, y.size, positives, X.shape[1],
    )
    return TrainedModel(spec=spec, standardizer=standardizer, classifier=classifier, dimension=X.shape[1])


def predict_batch(model: TrainedModel, X: Sequence[Sequence[float]]) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dimension:
        raise ModelError(
            "DIMENSION_MISMATCH",
            f"query has {X.shape[1]} features, model was trained on {model.dimension}",
        )
    return model.classifier.decide(model.standardizer.transform(X))


def predict(model: TrainedModel, fv: Sequence[float]) -> Tuple[int, float]:
    if len(fv) != model.dimension:
        raise ModelError(
            "DIMENSION_MISMATCH",
            f"query has {len(fv)} features, model was trained on {model.dimension}",
        )
    labels, scores = predict_batch(model, [fv])
    return int(labels[0]), float(scores[0])


def save_model(model: TrainedModel) -> str:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "feature_layout_version": model.feature_layout_version,
        "dimension": model.dimension,
        "spec": model.spec.model_dump(mode="json"),
        "standardizer": model.standardizer.model_dump(mode="json"),
        "parameters": model.classifier.get_parameters(),
    }
    return json.dumps(payload, allow_nan=False, separators=(",", ":")) + "\n"


def load_model(text: str) -> TrainedModel:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError("PARSE_ERROR", f"model: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ModelError("PARSE_ERROR", "model: top level must be a JSON object")
    missing = [k for k in ("format_version", "kind", "spec", "standardizer", "parameters", "dimension") if k not in obj]
    if missing:
        raise ModelError("PARSE_ERROR", f"model: missing field(s) {', '.join(missing)}")
    if obj["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelError("VERSION_MISMATCH", f"model format {obj['format_version']!r}, expected {MODEL_FORMAT_VERSION!r}")
    layout = obj.get("feature_layout_version", FEATURE_LAYOUT_VERSION)
    if layout != FEATURE_LAYOUT_VERSION:
        raise ModelError("VERSION_MISMATCH", f"feature layout {layout!r}, expected {FEATURE_LAYOUT_VERSION!r}")
    try:
        spec = ModelSpec.model_validate(obj["spec"])
        standardizer = Standardizer.model_validate(obj["standardizer"])
    except ValidationError as exc:
        raise ModelError("PARSE_ERROR", f"model: {describe_validation_error(exc)}") from exc
    if spec.kind != obj["kind"]:
        raise ModelError("PARSE_ERROR", f"model kind {obj['kind']!r} disagrees with spec kind {spec.kind!r}")
    params = obj["parameters"]
    is_constant = isinstance(params, dict) and "constant" in params
    classifier = (ConstantClassifier if is_constant else REGISTRY[spec.kind])(spec.hyperparameters)
    try:
        classifier.set_parameters(obj["parameters"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError("PARSE_ERROR", f"model parameters: {exc}") from exc
    dimension = int(obj["dimension"])
    if standardizer.dimension != dimension:
        raise ModelError("PARSE_ERROR", f"standardizer has {standardizer.dimension} columns, model says {dimension}")
    return TrainedModel(spec=spec, standardizer=standardizer, classifier=classifier, dimension=dimension)
