from typing import Any, Dict

import numpy as np
from scipy.spatial.distance import cdist

from ..schemas import KnnParams
from .base import Classifier

_CHUNK = 1024


class KnnClassifier(Classifier):
    """Majority vote of the k nearest stored rows; a split vote is a hotspot."""

    kind = "knn"
    tie_is_hotspot = True

    def __init__(self, params: KnnParams):
        super().__init__(params)
        self.X = np.zeros((0, 0))
        self.y = np.zeros(0, dtype=int)

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> None:
        self.X = np.array(X, dtype=float)
        self.y = np.array(y, dtype=int)

    def neighbours(self, X: np.ndarray) -> np.ndarray:
        k = min(self.params.k, self.X.shape[0])
        out = []
        for start in range(0, X.shape[0], _CHUNK):
            d = cdist(X[start:start + _CHUNK], self.X, "sqeuclidean")
            # stable sort: equal distances keep the lower stored row first
            out.append(np.argsort(d, axis=1, kind="stable")[:, :k])
        return np.vstack(out) if out else np.zeros((0, k), dtype=int)

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.y[self.neighbours(X)].mean(axis=1)

    def get_parameters(self) -> Dict[str, Any]:
        return {"rows": self.X.tolist(), "labels": self.y.tolist()}

    def set_parameters(self, parameters: Dict[str, Any]) -> None:
        self.X = np.array(parameters["rows"], dtype=float)
        self.y = np.array(parameters["labels"], dtype=int)
