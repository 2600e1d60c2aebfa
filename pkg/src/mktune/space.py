"""Quantized, box-constrained hyperparameter spaces.

Every parameter lives on the grid ``lower + k * q`` clipped to
``[lower, upper]``. Configurations are plain ``dict`` objects mapping
parameter names to floats.

Spaces are read from and written to an INI document, one section per
parameter, sections in space order::

    [C]
    lower = 0.1
    upper = 100
    q = 0.01
    scale = linear
"""
from __future__ import annotations

import configparser
import hashlib
import io
import itertools
import math
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError, RefusalError

SCALES = ("linear", "log")

# Slack used when deciding how many grid steps fit in a range.
_GRID_EPS = 1e-9


def _decimals(value: float) -> int:
    exponent = Decimal(repr(float(value))).normalize().as_tuple().exponent
    return max(0, -exponent) if isinstance(exponent, int) else 0


@dataclass(frozen=True)
class ParameterDef:
    name: str
    lower: float
    upper: float
    q: float
    scale: str = "linear"

    def __post_init__(self):
        for attr in ("lower", "upper", "q"):
            value = float(getattr(self, attr))
            if not math.isfinite(value):
                raise InvalidInputError(f"{self.name}: {attr} must be finite")
            object.__setattr__(self, attr, value)
        if not self.name or not str(self.name).isidentifier():
            raise InvalidInputError(f"parameter name must be an identifier, got {self.name!r}")
        if not self.lower < self.upper:
            raise InvalidInputError(f"{self.name}: lower ({self.lower}) must be below upper ({self.upper})")
        if not self.q > 0:
            raise InvalidInputError(f"{self.name}: q must be positive")
        if self.scale not in SCALES:
            raise InvalidInputError(f"{self.name}: scale must be one of {SCALES}, got {self.scale!r}")
        if self.scale == "log" and self.lower <= 0:
            raise InvalidInputError(f"{self.name}: a log-scale parameter needs lower > 0")
        # digits that make lower + k*q print exactly
        object.__setattr__(self, "_digits", min(15, max(_decimals(self.lower), _decimals(self.q))))

    @property
    def n_steps(self) -> int:
        """Index of the last grid point; the grid has ``n_steps + 1`` points."""
        return int(math.floor((self.upper - self.lower) / self.q + _GRID_EPS))

    @property
    def grid_size(self) -> int:
        return self.n_steps + 1

    def value_at(self, k):
        """Grid value(s) for integer step(s) ``k``."""
        return np.round(self.lower + np.asarray(k, dtype=np.float64) * self.q, self._digits)

    def grid(self) -> list[float]:
        return [float(v) for v in self.value_at(np.arange(self.grid_size))]

    def quantize_array(self, values) -> np.ndarray:
        v = np.clip(np.asarray(values, dtype=np.float64), self.lower, self.upper)
        # halves go up: ties round toward upper
        k = np.floor((v - self.lower) / self.q + 0.5)
        k = np.clip(k, 0, self.n_steps)
        return self.value_at(k)

    def on_grid(self, value: float) -> bool:
        if not self.lower <= value <= self.upper:
            return False
        k = (value - self.lower) / self.q
        return abs(k - round(k)) <= 1e-6 and round(k) <= self.n_steps

    def to_unit(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        if self.scale == "log":
            lo, hi = math.log(self.lower), math.log(self.upper)
            return (np.log(v) - lo) / (hi - lo)
        return (v - self.lower) / (self.upper - self.lower)

    def from_unit(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.scale == "log":
            lo, hi = math.log(self.lower), math.log(self.upper)
            return np.exp(lo + u * (hi - lo))
        return self.lower + u * (self.upper - self.lower)


def quantize(value: float, pdef: ParameterDef) -> float:
    """Clamp ``value`` into range and snap it to the nearest grid point.

    >>> quantize(0.374, ParameterDef("C", 0.1, 100, 0.01))
    0.37
    """
    return float(pdef.quantize_array(value))


class ParameterSpace:
    """Ordered collection of parameter definitions; the order fixes the encoding."""

    def __init__(self, params):
        self.params = tuple(params)
        if not self.params:
            raise InvalidInputError("a parameter space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise InvalidInputError(f"duplicate parameter names in {names}")
        self._by_name = {p.name: p for p in self.params}

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def dim(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> ParameterDef:
        return self._by_name[name]

    def __contains__(self, name) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def __eq__(self, other):
        return isinstance(other, ParameterSpace) and self.params == other.params

    def __hash__(self):
        return hash(self.params)

    def __repr__(self):
        return f"ParameterSpace({list(self.params)!r})"

    def replace(self, **defs: ParameterDef) -> "ParameterSpace":
        """Copy with some definitions swapped out, order preserved."""
        unknown = set(defs) - set(self._by_name)
        if unknown:
            raise InvalidInputError(f"unknown parameters {sorted(unknown)}")
        return ParameterSpace(defs.get(p.name, p) for p in self.params)

    @property
    def grid_size(self) -> int:
        return math.prod(p.grid_size for p in self.params)

    def key(self, config) -> tuple:
        """Hashable identity of a configuration."""
        return tuple(float(config[n]) for n in self.names)

    def fingerprint(self) -> str:
        """Order-sensitive hex digest of every (name, lower, upper, q, scale)."""
        text = "\n".join(f"{p.name},{p.lower!r},{p.upper!r},{p.q!r},{p.scale}" for p in self.params)
        return hashlib.sha256(text.encode()).hexdigest()

    # -- configurations ------------------------------------------------------
    def validate(self, config) -> dict:
        """Return ``config`` as a fresh dict, raising if it does not belong to the space."""
        if set(config) != set(self.names):
            raise InvalidInputError(
                f"configuration keys {sorted(config)} do not match space {self.names}"
            )
        out = {}
        for p in self.params:
            try:
                value = float(config[p.name])
            except (TypeError, ValueError):
                raise InvalidInputError(f"{p.name}: not a number: {config[p.name]!r}") from None
            if not p.on_grid(value):
                raise InvalidInputError(
                    f"{p.name}={value!r} is outside [{p.lower}, {p.upper}] or off the q={p.q} grid"
                )
            out[p.name] = value
        return out

    def is_valid(self, config) -> bool:
        try:
            self.validate(config)
        except InvalidInputError:
            return False
        return True

    def quantize(self, config) -> dict:
        return {p.name: quantize(config[p.name], p) for p in self.params}

    def sample_array(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` quantized uniform draws as an (n, dim) array in space order."""
        cols = []
        for p in self.params:
            if p.scale == "log":
                raw = np.exp(rng.uniform(math.log(p.lower), math.log(p.upper), size=n))
            else:
                raw = rng.uniform(p.lower, p.upper, size=n)
            cols.append(p.quantize_array(raw))
        return np.column_stack(cols) if cols else np.zeros((n, 0))

    def row_to_config(self, row) -> dict:
        return {name: float(v) for name, v in zip(self.names, row)}

    def encode_array(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return np.column_stack([p.to_unit(values[:, i]) for i, p in enumerate(self.params)])


def sample(space: ParameterSpace, rng: np.random.Generator) -> dict:
    """One uniform draw per parameter on its own scale, then quantized."""
    return space.row_to_config(space.sample_array(rng, 1)[0])


def encode(config, space: ParameterSpace) -> np.ndarray:
    """Map a valid configuration into the unit cube, log-transforming log-scale parameters."""
    config = space.validate(config)
    return np.array([float(p.to_unit(config[p.name])) for p in space.params])


def decode(vector, space: ParameterSpace) -> dict:
    """Inverse of :func:`encode`, followed by quantization."""
    v = np.asarray(vector, dtype=np.float64).ravel()
    if v.shape[0] != space.dim:
        raise InvalidInputError(f"expected a vector of length {space.dim}, got {v.shape[0]}")
    v = np.clip(v, 0.0, 1.0)
    return {p.name: quantize(float(p.from_unit(u)), p) for p, u in zip(space.params, v)}


def grid_enumerate(space: ParameterSpace, cap: int) -> list[dict]:
    """Every grid configuration, first parameter varying slowest.

    Raises
    ------
    RefusalError
        If the grid has more than ``cap`` points.
    """
    size = space.grid_size
    if size > cap:
        raise RefusalError(f"grid has {size} configurations, more than the cap of {cap}")
    grids = [p.grid() for p in space.params]
    return [dict(zip(space.names, combo)) for combo in itertools.product(*grids)]


def default_space() -> ParameterSpace:
    """The five mixed-kernel SVM hyperparameters with their wide starting ranges."""
    return ParameterSpace([
        ParameterDef("mixed_ratio", 0.0, 1.0, 1e-5, "linear"),
        ParameterDef("sigmoid_ratio", 1e-5, 10.0, 1e-5, "log"),
        ParameterDef("gaussian_ratio", 1e-5, 10.0, 1e-5, "log"),
        ParameterDef("C", 0.1, 100.0, 0.01, "linear"),
        ParameterDef("coef0", -15.0, 15.0, 0.01, "linear"),
    ])


# -- INI serialization ------------------------------------------------------

def space_to_text(space: ParameterSpace) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for p in space.params:
        parser[p.name] = {"lower": repr(p.lower), "upper": repr(p.upper), "q": repr(p.q), "scale": p.scale}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def space_from_text(text: str, source=None) -> ParameterSpace:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(source) if source else "<space>")
    except configparser.Error as exc:
        raise ParseError(str(exc), path=source) from None
    params = []
    for name in parser.sections():
        section = parser[name]
        missing = {"lower", "upper", "q"} - set(section)
        if missing:
            raise ParseError(f"section [{name}] is missing {sorted(missing)}", path=source)
        try:
            params.append(ParameterDef(
                name,
                float(section["lower"]),
                float(section["upper"]),
                float(section["q"]),
                section.get("scale", "linear").strip(),
            ))
        except ValueError as exc:
            raise ParseError(f"section [{name}]: {exc}", path=source) from None
    if not params:
        raise ParseError("no parameter sections found", path=source)
    return ParameterSpace(params)


def save_space(space: ParameterSpace, path) -> None:
    Path(path).write_text(space_to_text(space))


def load_space(path) -> ParameterSpace:
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=path)
    return space_from_text(path.read_text(), source=path)
