"""Level-set tracking and exponential rate fitting for simulated fronts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from fracfkpp.fields import BUFFER_FRACTION, Field, format_float

__all__ = [
    "FrontTrace",
    "RateEstimate",
    "FitError",
    "Verdict",
    "PrefactorDiagnostic",
    "FitPolicy",
    "FrontTracker",
    "extract_level_sets",
    "fit_exponential_rate",
    "policy_window",
    "theorem_verdict",
    "instantaneous_speed",
    "speed_at",
    "heuristic_prefactor_diagnostic",
    "sigma_star",
    "sigma_double_star",
    "write_trace",
    "read_trace",
]


def sigma_star(alpha, fprime0=1.0, n=1):
    """Front rate f'(0)/(n + 2 alpha) for data decaying like |x|^(-n-2 alpha)."""
    return fprime0 / (n + 2.0 * alpha)


def sigma_double_star(alpha, fprime0=1.0):
    """Front rate f'(0)/(2 alpha) for nondecreasing data decaying like |x|^(-2 alpha) on the left."""
    return fprime0 / (2.0 * alpha)


class FitError(ValueError):
    pass


def extract_level_sets(u: Field, level):
    """Leftmost and rightmost crossings of ``level`` inside the interior, or None.

    A crossing lies between adjacent nodes where u - level changes sign (a node
    with u exactly equal to level counts as the nonnegative side) and is placed
    by linear interpolation.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    mask = u.grid.interior_mask()
    x = u.x[mask]
    v = u.values[mask]
    above = v >= level
    flips = np.nonzero(above[1:] != above[:-1])[0]
    if flips.size == 0:
        return None, None

    def place(i):
        v0, v1 = v[i], v[i + 1]
        if v0 == level:
            return float(x[i])
        return float(x[i] + (level - v0) / (v1 - v0) * (x[i + 1] - x[i]))

    return place(flips[0]), place(flips[-1])


@dataclass
class FrontTrace:
    """Crossing positions of one level over time; NaN marks an absent crossing."""

    level: float
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    left: np.ndarray = field(default_factory=lambda: np.empty(0))
    right: np.ndarray = field(default_factory=lambda: np.empty(0))
    spacing: Optional[float] = None
    half_width: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie strictly between 0 and 1")
        self.times = np.asarray(self.times, dtype=float)
        self.left = np.asarray(self.left, dtype=float)
        self.right = np.asarray(self.right, dtype=float)
        if not (self.times.shape == self.left.shape == self.right.shape):
            raise ValueError("times, left and right must have equal length")

    @classmethod
    def from_positions(cls, level, times, positions, side="right", **kw):
        """Synthetic single-sided trace, mainly for tests and demos."""
        pos = np.asarray(positions, dtype=float)
        other = np.full_like(pos, np.nan)
        left, right = (pos, other) if side == "left" else (other, pos)
        return cls(level, times, left, right, **kw)

    def append(self, t, xl, xr):
        self.times = np.append(self.times, t)
        self.left = np.append(self.left, np.nan if xl is None else xl)
        self.right = np.append(self.right, np.nan if xr is None else xr)

    def side(self, side):
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        return self.left if side == "left" else self.right

    def samples(self):
        """List of (t, x_left or None, x_right or None)."""
        def opt(v):
            return None if math.isnan(v) else float(v)
        return [(float(t), opt(a), opt(b)) for t, a, b in zip(self.times, self.left, self.right)]

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class FitPolicy:
    """Default fit window: last ``tail_fraction`` of the trace with fronts away from
    the origin and from the buffer by ``clearance`` grid spacings."""

    tail_fraction: float = 0.6
    clearance: float = 50.0
    min_resolved: float = 10.0
    min_samples: int = 5


DEFAULT_POLICY = FitPolicy()


@dataclass(frozen=True)
class RateEstimate:
    slope: float
    intercept: float
    rms_residual: float
    window: tuple
    sample_count: int
    side: str = "right"
    level: Optional[float] = None

    def to_dict(self):
        return {
            "level": self.level,
            "side": self.side,
            "slope": self.slope,
            "intercept": self.intercept,
            "rms_residual": self.rms_residual,
            "window": list(self.window),
            "sample_count": self.sample_count,
        }


def _usable(trace: FrontTrace, side, policy: FitPolicy, clearance):
    pos = np.abs(trace.side(side))
    ok = np.isfinite(pos)
    h = trace.spacing
    if h is not None:
        with np.errstate(invalid="ignore"):
            ok &= pos >= max(policy.min_resolved, clearance) * h
            if trace.half_width is not None:
                edge = (1.0 - BUFFER_FRACTION) * trace.half_width
                ok &= pos <= edge - clearance * h
    return ok


def policy_window(trace: FrontTrace, side, policy: FitPolicy = DEFAULT_POLICY):
    """Window chosen by ``policy``: last part of the trace, intersected with resolved samples."""
    ok = _usable(trace, side, policy, policy.clearance)
    t = trace.times[ok]
    if t.size == 0:
        raise FitError("no resolved crossings to define a fit window")
    t0, t1 = float(trace.times.min()), float(trace.times.max())
    start = max(t1 - policy.tail_fraction * (t1 - t0), float(t.min()))
    return (start, float(t.max()))


def fit_exponential_rate(trace: FrontTrace, side="right", window=None,
                         policy: FitPolicy = DEFAULT_POLICY) -> RateEstimate:
    """Least-squares line through (t, log|x_side(t)|) over ``window``.

    With no window the policy window is used.  Samples must be finite and at
    least ``policy.min_resolved`` grid spacings from the origin when the trace
    knows its grid spacing.
    """
    if window is None:
        window = policy_window(trace, side, policy)
        clearance = policy.clearance
    else:
        clearance = 0.0
    lo, hi = window
    ok = _usable(trace, side, policy, clearance)
    ok &= (trace.times >= lo - 1e-12) & (trace.times <= hi + 1e-12)
    ok &= np.abs(np.nan_to_num(trace.side(side))) > 0.0
    t = trace.times[ok]
    if t.size < policy.min_samples:
        raise FitError(f"only {t.size} usable samples in window [{lo:g}, {hi:g}] "
                       f"(need {policy.min_samples})")
    y = np.log(np.abs(trace.side(side)[ok]))
    design = np.column_stack((t, np.ones_like(t)))
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * t + intercept)
    return RateEstimate(float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))),
                        (float(t.min()), float(t.max())), int(t.size), side, trace.level)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    slope: float
    expected: float
    tol: float
    label: str = ""

    def to_dict(self):
        return {"label": self.label, "passed": self.passed, "slope": self.slope,
                "expected": self.expected, "tol": self.tol}


def theorem_verdict(estimate: RateEstimate, expected_sigma, tol, label="") -> Verdict:
    return Verdict(bool(abs(estimate.slope - expected_sigma) <= tol), estimate.slope,
                   float(expected_sigma), float(tol), label)


def instantaneous_speed(trace: FrontTrace, side="right"):
    """Outward front speed d|x_side|/dt by centred differences at the valid samples."""
    pos = np.abs(trace.side(side))
    ok = np.isfinite(pos)
    t = trace.times[ok]
    if t.size < 3:
        raise FitError("need at least three crossings to difference")
    return t, np.gradient(pos[ok], t)


def speed_at(trace: FrontTrace, t, side="right"):
    times, speed = instantaneous_speed(trace, side)
    if not times[0] <= t <= times[-1]:
        raise FitError(f"t={t:g} outside the traced range")
    return float(np.interp(t, times, speed))


@dataclass(frozen=True)
class PrefactorDiagnostic:
    times: np.ndarray
    plain: np.ndarray
    heuristic: np.ndarray

    def variation(self, which="plain", window=None):
        """max/min of a normalized series over ``window``."""
        series = self.plain if which == "plain" else self.heuristic
        sel = np.ones_like(self.times, dtype=bool)
        if window is not None:
            sel = (self.times >= window[0] - 1e-12) & (self.times <= window[1] + 1e-12)
        s = series[sel]
        return float(s.max() / s.min())

    def to_dict(self):
        return {"t": self.times.tolist(), "x_exp": self.plain.tolist(),
                "x_exp_tpow": self.heuristic.tolist()}


def heuristic_prefactor_diagnostic(trace: FrontTrace, sigma, alpha, side="right", n=1):
    """Series |x| e^(-sigma t) and |x| e^(-sigma t) t^(-1/(n + 2 alpha))."""
    pos = np.abs(trace.side(side))
    ok = np.isfinite(pos) & (trace.times > 0)
    t = trace.times[ok]
    plain = pos[ok] * np.exp(-sigma * t)
    return PrefactorDiagnostic(t, plain, plain * t ** (-1.0 / (n + 2.0 * alpha)))


class FrontTracker:
    """Snapshot observer that records crossings for several levels."""

    def __init__(self, levels: Sequence[float]):
        self.traces = {float(lv): FrontTrace(float(lv)) for lv in levels}

    def __call__(self, u: Field):
        for lv, trace in self.traces.items():
            trace.spacing = u.grid.h
            trace.half_width = u.grid.L
            trace.append(u.time_stamp, *extract_level_sets(u, lv))


def _cell(v):
    return "" if math.isnan(v) else format_float(v)


def write_trace(trace: FrontTrace, path):
    buf = io.StringIO()
    buf.write(f"# level={format_float(trace.level)}\n")
    if trace.spacing is not None:
        buf.write(f"# h={format_float(trace.spacing)}\n")
    if trace.half_width is not None:
        buf.write(f"# L={format_float(trace.half_width)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "x_left", "x_right"])
    for t, a, b in zip(trace.times, trace.left, trace.right):
        writer.writerow([format_float(t), _cell(a), _cell(b)])
    Path(path).write_text(buf.getvalue())


def read_trace(path) -> FrontTrace:
    meta, rows = {}, []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, val = ln[1:].strip().partition("=")
            meta[key.strip()] = float(val)
        else:
            body.append(ln)
    reader = csv.DictReader(body)
    if reader.fieldnames != ["t", "x_left", "x_right"]:
        raise ValueError(f"{path}: expected columns t,x_left,x_right")
    for row in reader:
        rows.append([float(row["t"])] + [float(row[k]) if row[k] else np.nan
                                         for k in ("x_left", "x_right")])
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    if "level" not in meta:
        raise ValueError(f"{path}: missing '# level=' header")
    return FrontTrace(meta["level"], arr[:, 0], arr[:, 1], arr[:, 2],
                      meta.get("h"), meta.get("L"))
