"""Gridded fields with parametric far-field tails, and their text snapshot format."""

from __future__ import annotations

import enum
import functools
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

__all__ = [
    "GridSpec",
    "Side",
    "TailKind",
    "TailModel",
    "Field",
    "BUFFER_FRACTION",
    "BAND_FRACTION",
    "fit_power_amplitude",
    "write_snapshot",
    "read_snapshot",
    "format_float",
]

#: Outer fraction of the box on each side excluded from accuracy contracts.
BUFFER_FRACTION = 0.1
#: Outermost fraction of interior nodes used to refit power-law tails.
BAND_FRACTION = 0.05


def format_float(value):
    """Round-trippable 17-significant-digit decimal."""
    return format(float(value), ".17g")


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid x_j = -L + j h, j = 0..N-1, with h = 2L/N."""

    half_width: float
    num_points: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        n = self.num_points
        if n < 4 or n % 2:
            raise ValueError("num_points must be an even integer >= 4")

    @property
    def L(self):
        return self.half_width

    @property
    def N(self):
        return self.num_points

    @property
    def h(self):
        return 2.0 * self.half_width / self.num_points

    @functools.cached_property
    def x(self):
        nodes = -self.half_width + self.h * np.arange(self.num_points)
        nodes.flags.writeable = False
        return nodes

    @property
    def is_power_of_two(self):
        return self.num_points & (self.num_points - 1) == 0

    def interior_mask(self, fraction=BUFFER_FRACTION):
        """Nodes with |x| <= (1 - fraction) L."""
        return np.abs(self.x) <= (1.0 - fraction) * self.half_width

    def band_mask(self, side):
        """Outermost BAND_FRACTION of the interior on one side."""
        x = self.x
        outer = (1.0 - BUFFER_FRACTION) * self.half_width
        inner = outer * (1.0 - BAND_FRACTION)
        sel = (np.abs(x) >= inner) & (np.abs(x) <= outer)
        return sel & (x < 0) if Side(side) is Side.LEFT else sel & (x > 0)


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class TailKind(enum.Enum):
    POWER_LAW = "PowerLaw"
    CONSTANT = "Constant"


@dataclass(frozen=True)
class TailModel:
    """Far-field model beyond the box: a|x|^-beta (PowerLaw) or a level c (Constant)."""

    side: Side
    kind: TailKind
    amplitude: float = 0.0
    exponent: float = 0.0
    level: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        object.__setattr__(self, "kind", TailKind(self.kind))
        if self.kind is TailKind.POWER_LAW and not self.exponent > 0:
            raise ValueError("power-law tail needs a positive exponent")

    @classmethod
    def power(cls, side, amplitude, exponent):
        return cls(side, TailKind.POWER_LAW, amplitude=float(amplitude), exponent=float(exponent))

    @classmethod
    def constant(cls, side, level):
        return cls(side, TailKind.CONSTANT, level=float(level))

    @property
    def is_power(self):
        return self.kind is TailKind.POWER_LAW

    @property
    def is_zero(self):
        return (self.level == 0.0) if not self.is_power else (self.amplitude == 0.0)

    @property
    def limit(self):
        """Value approached as |x| -> infinity."""
        return 0.0 if self.is_power else self.level

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_power:
            return self.amplitude * np.abs(x) ** -self.exponent
        return np.full_like(x, self.level)

    def scaled(self, factor):
        if self.is_power:
            return replace(self, amplitude=factor * self.amplitude)
        return replace(self, level=factor * self.level)

    def plus(self, other: "TailModel"):
        """Sum of two tails on the same side.

        A power law added to a Constant(0) keeps the power law; two power laws
        must share the exponent.
        """
        if self.is_power and other.is_power:
            if not math.isclose(self.exponent, other.exponent, rel_tol=1e-12):
                raise ValueError("cannot add power-law tails with different exponents")
            return replace(self, amplitude=self.amplitude + other.amplitude)
        if not self.is_power and not other.is_power:
            return replace(self, level=self.level + other.level)
        power, const = (self, other) if self.is_power else (other, self)
        if const.level != 0.0:
            return const
        return power

    def describe(self):
        if self.is_power:
            return f"PowerLaw,a={format_float(self.amplitude)},beta={format_float(self.exponent)}"
        return f"Constant,c={format_float(self.level)}"

    @classmethod
    def parse(cls, side, text):
        kind, *params = [s.strip() for s in text.split(",")]
        values = dict(p.split("=", 1) for p in params)
        if kind == TailKind.POWER_LAW.value:
            return cls.power(side, float(values["a"]), float(values["beta"]))
        if kind == TailKind.CONSTANT.value:
            return cls.constant(side, float(values["c"]))
        raise ValueError(f"unknown tail kind {kind!r}")


def fit_power_amplitude(grid: GridSpec, values, side, exponent):
    """Least-squares amplitude a of a|x|^-beta on the outer interior band."""
    sel = grid.band_mask(side)
    w = np.abs(grid.x[sel]) ** -exponent
    return float(np.dot(values[sel], w) / np.dot(w, w))


def _sum_tail(grid, values, a: TailModel, b: TailModel):
    """Tail of a sum; of two unequal power laws the heavier one survives, refit to the sum."""
    if a.is_power and b.is_power and not math.isclose(a.exponent, b.exponent, rel_tol=1e-12):
        heavy = a if a.exponent < b.exponent else b
        return replace(heavy, amplitude=fit_power_amplitude(grid, values, heavy.side, heavy.exponent))
    return a.plus(b)


@dataclass(frozen=True, eq=False)
class Field:
    """Samples on a GridSpec plus tail models and a time stamp."""

    grid: GridSpec
    values: np.ndarray
    left_tail: TailModel
    right_tail: TailModel
    time_stamp: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.N,):
            raise ValueError(f"expected {self.grid.N} samples, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        if vals is self.values and vals.flags.writeable:
            vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if self.left_tail.side is not Side.LEFT or self.right_tail.side is not Side.RIGHT:
            raise ValueError("tail sides do not match their slots")

    @classmethod
    def constant(cls, grid, level, time_stamp=0.0):
        return cls(grid, np.full(grid.N, float(level)), TailModel.constant(Side.LEFT, level),
                   TailModel.constant(Side.RIGHT, level), time_stamp)

    @property
    def x(self):
        return self.grid.x

    def with_values(self, values, left=None, right=None, time_stamp=None):
        return Field(self.grid, values, left or self.left_tail, right or self.right_tail,
                     self.time_stamp if time_stamp is None else time_stamp)

    def tails(self):
        return self.left_tail, self.right_tail

    def __add__(self, other: "Field"):
        vals = self.values + other.values
        tails = [_sum_tail(self.grid, vals, a, b)
                 for a, b in ((self.left_tail, other.left_tail), (self.right_tail, other.right_tail))]
        return Field(self.grid, vals, tails[0], tails[1], self.time_stamp)

    def scaled(self, factor):
        return Field(self.grid, factor * self.values, self.left_tail.scaled(factor),
                     self.right_tail.scaled(factor), self.time_stamp)

    def interior(self, fraction=BUFFER_FRACTION):
        mask = self.grid.interior_mask(fraction)
        return self.x[mask], self.values[mask]

    def evaluate(self, x):
        """Linear interpolation inside the box, tail models outside."""
        x = np.asarray(x, dtype=float)
        g = self.grid
        xs = np.append(g.x, g.L)
        vs = np.append(self.values, self.right_tail(g.L) if self.right_tail.is_power
                       else self.right_tail.level)
        out = np.interp(x, xs, vs)
        out = np.where(x < -g.L, self.left_tail(x), out)
        return np.where(x > g.L, self.right_tail(x), out)


def write_snapshot(field: Field, path, alpha):
    """Write the shared text snapshot: comment header then ``x,u`` rows."""
    g = field.grid
    head = [
        f"# t={format_float(field.time_stamp)}",
        f"# L={format_float(g.L)}",
        f"# N={g.N}",
        f"# alpha={format_float(alpha)}",
        f"# tail_left={field.left_tail.describe()}",
        f"# tail_right={field.right_tail.describe()}",
        "x,u",
    ]
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack((g.x, field.values)), fmt="%.17g", delimiter=",")
    Path(path).write_text("\n".join(head) + "\n" + buf.getvalue())


def read_snapshot(path):
    """Inverse of write_snapshot; returns (field, alpha)."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
    try:
        grid = GridSpec(float(meta["L"]), int(meta["N"]))
        left = TailModel.parse(Side.LEFT, meta["tail_left"])
        right = TailModel.parse(Side.RIGHT, meta["tail_right"])
        t, alpha = float(meta["t"]), float(meta["alpha"])
    except KeyError as exc:
        raise ValueError(f"{path}: snapshot header lacks {exc.args[0]!r}") from None
    # six comment lines plus the "x,u" column row
    data = np.loadtxt(path, delimiter=",", skiprows=7, ndmin=2)
    if data.shape[0] != grid.N:
        raise ValueError(f"{path}: expected {grid.N} rows, found {data.shape[0]}")
    return Field(grid, data[:, 1].copy(), left, right, t), alpha

