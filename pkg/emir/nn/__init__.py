"""Classifiers behind one train/predict contract."""
from .base import Classifier, Standardizer, apply, fit_standardizer
from .modules import REGISTRY, TrainedModel, load_model, predict, predict_batch, save_model, train

__all__ = [
    "Classifier",
    "Standardizer",
    "apply",
    "fit_standardizer",
    "REGISTRY",
    "TrainedModel",
    "load_model",
    "predict",
    "predict_batch",
    "save_model",
    "train",
]
