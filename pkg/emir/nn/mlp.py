"""One-hidden-layer perceptron: d -> hidden (ReLU) -> 1 (sigmoid).

Loss is the batch mean of the positive-weighted binary cross-entropy

    w * y * softplus(-z) + (1 - y) * softplus(z)

with ``w = pos_weight_scale * N_neg / N_pos``; training uses Adam.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from ..schemas import MlpParams
from .base import Classifier

logger = logging.getLogger(__name__)


@dataclass
class MlpWeights:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    NAMES = ("W1", "b1", "w2", "b2")

    @classmethod
    def glorot(cls, d: int, hidden: int, rng: np.random.Generator) -> "MlpWeights":
        lim1 = np.sqrt(6.0 / (d + hidden))
        lim2 = np.sqrt(6.0 / (hidden + 1))
        return cls(
            W1=rng.uniform(-lim1, lim1, size=(d, hidden)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-lim2, lim2, size=hidden),
            b2=np.zeros(1),
        )

    @classmethod
    def zeros(cls, d: int, hidden: int) -> "MlpWeights":
        return cls(W1=np.zeros((d, hidden)), b1=np.zeros(hidden), w2=np.zeros(hidden), b2=np.zeros(1))

    def arrays(self):
        return [getattr(self, name) for name in self.NAMES]

    def copy(self) -> "MlpWeights":
        return MlpWeights(*(a.copy() for a in self.arrays()))


def forward(p: MlpWeights, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(pre-activation z1, hidden a1, logit z) for every row."""
    z1 = X @ p.W1 + p.b1
    a1 = np.maximum(z1, 0.0)
    z = a1 @ p.w2 + p.b2[0]
    return z1, a1, z


def loss(p: MlpWeights, X: np.ndarray, y: np.ndarray, pos_weight: float = 1.0) -> float:
    _, _, z = forward(p, X)
    per_row = pos_weight * y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
    return float(per_row.mean())


def gradients(p: MlpWeights, X: np.ndarray, y: np.ndarray, pos_weight: float = 1.0) -> MlpWeights:
    z1, a1, z = forward(p, X)
    s = expit(z)
    dz = (-pos_weight * y * (1.0 - s) + (1.0 - y) * s) / X.shape[0]
    dz1 = np.outer(dz, p.w2) * (z1 > 0)
    return MlpWeights(
        W1=X.T @ dz1,
        b1=dz1.sum(axis=0),
        w2=a1.T @ dz,
        b2=np.array([dz.sum()]),
    )


@dataclass(frozen=True)
class GradientCheck:
    max_error: float
    checked: int
    skipped: int


def gradient_check(
    p: MlpWeights,
    X: np.ndarray,
    y: np.ndarray,
    pos_weight: float = 1.0,
    step: float = 1e-4,
) -> GradientCheck:
    """Analytic gradient against central differences, parameter by parameter.

    Perturbations that flip any ReLU on the batch are skipped.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    analytic = gradients(p, X, y, pos_weight)
    pattern = forward(p, X)[0] > 0
    worst = 0.0
    checked = skipped = 0
    shifted = p.copy()
    for name in MlpWeights.NAMES:
        values = getattr(shifted, name)
        grad = getattr(analytic, name)
        for idx in np.ndindex(values.shape):
            orig = values[idx]
            values[idx] = orig + step
            up_pattern = forward(shifted, X)[0] > 0
            up = loss(shifted, X, y, pos_weight)
            values[idx] = orig - step
            down_pattern = forward(shifted, X)[0] > 0
            down = loss(shifted, X, y, pos_weight)
            values[idx] = orig
            if not (np.array_equal(up_pattern, pattern) and np.array_equal(down_pattern, pattern)):
                skipped += 1
                continue
            numeric = (up - down) / (2.0 * step)
            ga = grad[idx]
            err = abs(ga - numeric) / max(1e-8, abs(ga) + abs(numeric))
            worst = max(worst, err)
            checked += 1
    return GradientCheck(max_error=worst, checked=checked, skipped=skipped)


class _Adam:
    def __init__(self, params: MlpParams, like: MlpWeights):
        self.lr = params.learning_rate
        self.beta1 = params.beta1
        self.beta2 = params.beta2
        self.eps = params.epsilon
        self.m = [np.zeros_like(a) for a in like.arrays()]
        self.v = [np.zeros_like(a) for a in like.arrays()]
        self.t = 0

    def step(self, p: MlpWeights, g: MlpWeights) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for a, ga, m, v in zip(p.arrays(), g.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * ga
            v *= self.beta2
            v += (1.0 - self.beta2) * ga * ga
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class MlpClassifier(Classifier):
    kind = "mlp"

    def __init__(self, params: MlpParams):
        super().__init__(params)
        self.weights: Optional[MlpWeights] = None
        self.pos_weight = 1.0

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> None:
        rng = np.random.default_rng(seed)
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n_pos = float(y.sum())
        n_neg = float(y.size - n_pos)
        self.pos_weight = self.params.pos_weight_scale * n_neg / n_pos
        self.weights = MlpWeights.glorot(X.shape[1], self.params.hidden, rng)
        adam = _Adam(self.params, self.weights)
        batch = self.params.batch_size
        for epoch in range(self.params.epochs):
            order = rng.permutation(X.shape[0])
            for start in range(0, order.size, batch):
                rows = order[start:start + batch]
                adam.step(self.weights, gradients(self.weights, X[rows], y[rows], self.pos_weight))
            if logger.isEnabledFor(logging.DEBUG) and (epoch + 1) % 50 == 0:
                logger.debug("epoch %d: loss %.5f", epoch + 1, loss(self.weights, X, y, self.pos_weight))

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return expit(forward(self.weights, X)[2])

    def get_parameters(self) -> Dict[str, Any]:
        w = self.weights
        return {
            "W1": w.W1.tolist(),
            "b1": w.b1.tolist(),
            "w2": w.w2.tolist(),
            "b2": float(w.b2[0]),
            "pos_weight": self.pos_weight,
        }

    def set_parameters(self, parameters: Dict[str, Any]) -> None:
        hidden = len(parameters["b1"])
        self.weights = MlpWeights(
            W1=np.array(parameters["W1"], dtype=float).reshape(-1, hidden),
            b1=np.array(parameters["b1"], dtype=float),
            w2=np.array(parameters["w2"], dtype=float),
            b2=np.array([float(parameters["b2"])]),
        )
        self.pos_weight = float(parameters["pos_weight"])
