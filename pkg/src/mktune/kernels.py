"""Sigmoid, Gaussian and mixed kernels.

The mixed kernel blends the two with a ratio ``mixed_ratio`` in [0, 1]::

    K(x, y) = (1 - mixed_ratio) * tanh(sigmoid_ratio * <x, y> + coef0)
              + mixed_ratio * exp(-gaussian_ratio * ||x - y||^2)

``mixed_ratio = 0`` is the pure sigmoid kernel, ``mixed_ratio = 1`` the pure
Gaussian kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Row chunk for Gram blocks; bounds the (rows, cols, d) difference tensor.
_MAX_BLOCK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class KernelParams:
    """The five tunables of a mixed-kernel SVM.

    ``c`` is the soft-margin penalty. It is not a kernel parameter but travels
    with the kernel so a single object fully describes one classifier.
    """

    mixed_ratio: float = 0.5
    sigmoid_ratio: float = 1.0
    gaussian_ratio: float = 1.0
    coef0: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        for name in ("mixed_ratio", "sigmoid_ratio", "gaussian_ratio", "coef0", "c"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise InvalidInputError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.mixed_ratio <= 1.0:
            raise InvalidInputError(f"mixed_ratio must lie in [0, 1], got {self.mixed_ratio}")
        if self.sigmoid_ratio <= 0:
            raise InvalidInputError(f"sigmoid_ratio must be positive, got {self.sigmoid_ratio}")
        if self.gaussian_ratio <= 0:
            raise InvalidInputError(f"gaussian_ratio must be positive, got {self.gaussian_ratio}")
        if self.c <= 0:
            raise InvalidInputError(f"c must be positive, got {self.c}")

    @classmethod
    def from_config(cls, config, defaults: "KernelParams | None" = None) -> "KernelParams":
        """Build from a configuration mapping; absent names fall back to ``defaults``.

        Accepts ``C`` or ``c`` for the penalty.
        """
        base = defaults if defaults is not None else cls()
        values = {
            "mixed_ratio": base.mixed_ratio,
            "sigmoid_ratio": base.sigmoid_ratio,
            "gaussian_ratio": base.gaussian_ratio,
            "coef0": base.coef0,
            "c": base.c,
        }
        for key, value in config.items():
            name = "c" if key == "C" else key
            if name not in values:
                raise InvalidInputError(f"unknown kernel parameter {key!r}")
            values[name] = value
        return cls(**values)

    def as_config(self) -> dict:
        return {
            "mixed_ratio": self.mixed_ratio,
            "sigmoid_ratio": self.sigmoid_ratio,
            "gaussian_ratio": self.gaussian_ratio,
            "C": self.c,
            "coef0": self.coef0,
        }


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise InvalidInputError(f"feature vectors must have equal length, got {x.shape} and {y.shape}")
    return x, y


def gaussian_kernel(x, y, gaussian_ratio: float) -> float:
    """exp(-gaussian_ratio * ||x - y||^2)."""
    x, y = _pair(x, y)
    if gaussian_ratio <= 0:
        raise InvalidInputError("gaussian_ratio must be positive")
    diff = x - y
    return float(np.exp(-gaussian_ratio * np.sum(diff * diff)))


def sigmoid_kernel(x, y, sigmoid_ratio: float, coef0: float) -> float:
    """tanh(sigmoid_ratio * <x, y> + coef0)."""
    x, y = _pair(x, y)
    if sigmoid_ratio <= 0:
        raise InvalidInputError("sigmoid_ratio must be positive")
    return float(np.tanh(sigmoid_ratio * np.dot(x, y) + coef0))


def mixed_kernel(x, y, p: KernelParams) -> float:
    """(1 - a) * sigmoid + a * gaussian with a = ``p.mixed_ratio``."""
    a = p.mixed_ratio
    return (1.0 - a) * sigmoid_kernel(x, y, p.sigmoid_ratio, p.coef0) + a * gaussian_kernel(
        x, y, p.gaussian_ratio
    )


def _matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D feature matrix, got shape {a.shape}")
    return a


def gram_matrix(rows, cols, p: KernelParams) -> np.ndarray:
    """Mixed-kernel matrix with entry (i, j) = mixed_kernel(rows[i], cols[j], p).

    Squared distances are accumulated as sums of squared differences rather
    than through the expanded ``|x|^2 + |y|^2 - 2<x, y>`` form, so the
    Gaussian part of the diagonal of a square Gram matrix is exactly 1.
    """
    rows = _matrix(rows, "rows")
    cols = _matrix(cols, "cols")
    if rows.shape[1] != cols.shape[1]:
        raise InvalidInputError(
            f"feature dimension mismatch: rows have {rows.shape[1]}, cols have {cols.shape[1]}"
        )
    m, d = rows.shape
    n = cols.shape[0]
    a = p.mixed_ratio
    out = np.zeros((m, n), dtype=np.float64)
    step = max(1, _MAX_BLOCK_ELEMENTS // max(1, n * d))
    for start in range(0, m, step):
        r = rows[start:start + step, None, :]
        if a < 1.0:
            # elementwise products keep K(x, y) == K(y, x) bit for bit
            dots = (r * cols[None, :, :]).sum(axis=2)
            out[start:start + step] += (1.0 - a) * np.tanh(p.sigmoid_ratio * dots + p.coef0)
        if a > 0.0:
            diff = r - cols[None, :, :]
            sq = np.einsum("ijk,ijk->ij", diff, diff)
            out[start:start + step] += a * np.exp(-p.gaussian_ratio * sq)
    return out


def kernel_diagonal(x, p: KernelParams) -> np.ndarray:
    """K(x_i, x_i) for every row, without forming the full matrix."""
    x = _matrix(x, "x")
    a = p.mixed_ratio
    sig = np.tanh(p.sigmoid_ratio * np.einsum("ij,ij->i", x, x) + p.coef0)
    return (1.0 - a) * sig + a
