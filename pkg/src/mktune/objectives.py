"""Evaluation callables handed to the tuner.

All of them are module-level classes or functions so they pickle for the
process backend.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .datasets import Dataset
from .kernels import KernelParams
from .svm import TrainSettings, accuracy, class_averaged_accuracy, train_ovo

METRICS = ("overall", "class-averaged")

FAIL_VALUE = 0.052


def default_params(n_features: int) -> KernelParams:
    """Baseline: even mix, both kernel scales 1/d, C = 1, coef0 = 0."""
    return KernelParams(mixed_ratio=0.5, sigmoid_ratio=1.0 / n_features,
                        gaussian_ratio=1.0 / n_features, coef0=0.0, c=1.0)


@dataclass
class SVMObjective:
    """Train a one-vs-one mixed-kernel SVM on ``train``, score it on ``test``.

    Configuration keys override ``defaults``; a partial configuration (for
    instance a space tuning only C and coef0) keeps the remaining defaults.
    """

    train: Dataset
    test: Dataset
    metric: str = "overall"
    settings: TrainSettings = field(default_factory=TrainSettings)
    defaults: KernelParams | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.defaults is None:
            self.defaults = default_params(self.train.d)

    def params(self, config) -> KernelParams:
        return KernelParams.from_config(config, self.defaults)

    def __call__(self, config) -> float:
        model = train_ovo(self.train.features, self.train.labels, self.params(config), self.settings)
        if self.metric == "overall":
            return accuracy(model, self.test.features, self.test.labels)
        return class_averaged_accuracy(model, self.test.features, self.test.labels)


def slab_objective(config) -> float:
    """Synthetic accuracy with failing slabs, for exercising range refinement.

    Returns 0.052 when ``C <= 0.36`` or ``|coef0| > 1``. Elsewhere returns
    0.8 plus a smooth bump of height 0.1 centred at C = 1, coef0 = 0.5.
    Other keys are ignored.
    """
    c, coef0 = config["C"], config["coef0"]
    if c <= 0.36 or abs(coef0) > 1.0:
        return FAIL_VALUE
    bump = math.exp(-0.5 * (math.log10(c) / 0.5) ** 2 - 0.5 * ((coef0 - 0.5) / 0.5) ** 2)
    return 0.8 + 0.1 * bump


def slab_optimum() -> float:
    return 0.9


@dataclass
class QuadraticObjective:
    """``1 - (x - center)^2`` on a single parameter ``name``."""

    center: float = 0.37
    name: str = "x"

    def __call__(self, config) -> float:
        return 1.0 - (config[self.name] - self.center) ** 2


def constant_objective(config) -> float:
    return 0.9
