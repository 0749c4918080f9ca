from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..errors import ModelError
from ..schemas import Hyperparameters


class Standardizer(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    mean: List[float]
    std: List[float]

    @property
    def dimension(self) -> int:
        return len(self.mean)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - np.asarray(self.mean)) / np.asarray(self.std)


def fit_standardizer(rows: Sequence[Sequence[float]]) -> Standardizer:
    """Column mean and population std; zero-variance columns keep std 1."""
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("EMPTY_DATASET", "cannot fit a standardizer on zero rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = X.max(axis=0) == X.min(axis=0)
    mean = np.where(constant, X[0], mean)
    std = np.where(constant | (std <= 1e-12 * np.maximum(1.0, np.abs(mean))), 1.0, std)
    return Standardizer(mean=mean.tolist(), std=std.tolist())


def apply(standardizer: Standardizer, fv: Sequence[float]) -> List[float]:
    if len(fv) != standardizer.dimension:
        raise ModelError("DIMENSION_MISMATCH", f"{len(fv)} features, standardizer expects {standardizer.dimension}")
    return standardizer.transform(fv).tolist()


class Classifier(ABC):
    kind: str
    # whether a score of exactly the threshold is a hotspot
    tie_is_hotspot: bool = False

    def __init__(self, params: Hyperparameters):
        self.params = params

    @abstractmethod
    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> None:
        """Learn from standardized rows X and 0/1 labels y."""

    @abstractmethod
    def score(self, X: np.ndarray) -> np.ndarray:
        """Hotspot score in [0, 1] per standardized row."""

    @abstractmethod
    def get_parameters(self) -> Dict[str, Any]:
        """JSON-ready learned state."""

    @abstractmethod
    def set_parameters(self, parameters: Dict[str, Any]) -> None:
        ...

    def decide(self, X: np.ndarray, thr: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
        s = self.score(X)
        labels = (s >= thr) if self.tie_is_hotspot else (s > thr)
        return labels.astype(int), s
