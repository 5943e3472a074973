"""Time integration of u_t + (-Delta)^alpha u = f(u) through the variation-of-constants formula.

One step of the exponential midpoint rule reads

    mid     = T_{dt/2} u + (dt/2) f(u)
    u_next  = T_{dt} u + dt T_{dt/2} f(mid),

with T the exact linear flow (background image plus Fourier multiplier).  The
remainder r of u is transformed once and reused for both T_{dt/2} u and
T_{dt} u, so a step costs four real FFTs.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from fracfkpp.fields import Field, TailModel
from fracfkpp.semigroup import (
    apply_semigroup_spectral,
    background_for,
    propagator,
    retail,
)

__all__ = [
    "ReactionKind",
    "KppNonlinearity",
    "LinearReaction",
    "EvolveSchedule",
    "SolutionTrajectory",
    "StepError",
    "BlowUpError",
    "RangeViolation",
    "CoverageError",
    "RANGE_LIMITS",
    "comparison_slack",
    "map_field",
    "step_etd1",
    "evolve",
    "logistic_closed_form",
    "frac_laplacian",
    "duhamel_residual",
    "duhamel_integral",
]

#: Values outside this band abort a run; inside it they are clipped back to [0, 1].
RANGE_LIMITS = (-0.01, 1.01)


def comparison_slack(dt, t):
    """Slack 10 dt^2 per unit time allowed in discrete comparison statements."""
    return 10.0 * dt * dt * t


class StepError(RuntimeError):
    """A time step failed; ``time`` is the start of the failing step when known."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.message = message
        self.time = time

    def __str__(self):
        if self.time is None:
            return self.message
        return f"{self.message} (at t={self.time:.6g})"


class BlowUpError(StepError):
    pass


class RangeViolation(StepError):
    pass


class CoverageError(ValueError):
    """Snapshots do not cover the quadrature nodes of a time integral."""


# ---------------------------------------------------------------------------
# Reaction terms

class ReactionKind(enum.Enum):
    LOGISTIC = "Logistic"
    CUSTOM = "Custom"


@dataclass(frozen=True, eq=False)
class KppNonlinearity:
    """Concave f on [0, 1] with f(0) = f(1) = 0 and f'(1) < 0 < f'(0).

    Arguments are clamped to [0, 1] before evaluation.  Custom nonlinearities
    are piecewise-linear interpolants of a table, which keeps concavity.
    """

    kind: ReactionKind = ReactionKind.LOGISTIC
    nodes: Optional[np.ndarray] = None
    table: Optional[np.ndarray] = None
    bounded = True

    def __post_init__(self):
        object.__setattr__(self, "kind", ReactionKind(self.kind))
        if self.kind is ReactionKind.CUSTOM:
            u = np.asarray(self.nodes, dtype=float)
            f = np.asarray(self.table, dtype=float)
            if u.ndim != 1 or u.shape != f.shape or u.size < 3:
                raise ValueError("custom nonlinearity needs matching 1-d node and value tables")
            if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0):
                raise ValueError("custom nodes must increase from 0 to 1")
            if abs(f[0]) > 1e-14 or abs(f[-1]) > 1e-14:
                raise ValueError("custom nonlinearity must vanish at 0 and 1")
            slopes = np.diff(f) / np.diff(u)
            if np.any(np.diff(slopes) > 1e-12):
                raise ValueError("custom nonlinearity is not concave")
            object.__setattr__(self, "nodes", u)
            object.__setattr__(self, "table", f)
        if not self.fprime1 < 0.0 < self.fprime0:
            raise ValueError("need f'(1) < 0 < f'(0)")

    @classmethod
    def logistic(cls):
        return cls(ReactionKind.LOGISTIC)

    @classmethod
    def custom(cls, nodes, values):
        return cls(ReactionKind.CUSTOM, nodes, values)

    @classmethod
    def scaled_logistic(cls, rate, points=2049):
        """Tabulated rate * u(1 - u)."""
        u = np.linspace(0.0, 1.0, points)
        return cls.custom(u, rate * u * (1.0 - u))

    @property
    def fprime0(self):
        if self.kind is ReactionKind.LOGISTIC:
            return 1.0
        return float((self.table[1] - self.table[0]) / (self.nodes[1] - self.nodes[0]))

    @property
    def fprime1(self):
        if self.kind is ReactionKind.LOGISTIC:
            return -1.0
        return float((self.table[-1] - self.table[-2]) / (self.nodes[-1] - self.nodes[-2]))

    @property
    def max_slope(self):
        if self.kind is ReactionKind.LOGISTIC:
            return 1.0
        return float(np.max(np.abs(np.diff(self.table) / np.diff(self.nodes))))

    def __call__(self, u):
        v = np.clip(u, 0.0, 1.0)
        if self.kind is ReactionKind.LOGISTIC:
            return v * (1.0 - v)
        return np.interp(v, self.nodes, self.table)

    def derivative(self, u):
        v = np.clip(u, 0.0, 1.0)
        if self.kind is ReactionKind.LOGISTIC:
            return 1.0 - 2.0 * v
        return np.interp(v, self.nodes[1:], np.diff(self.table) / np.diff(self.nodes))

    def tail(self, tail: TailModel):
        """Image of a tail model: power laws are in the linear regime f(u) ~ f'(0) u."""
        if tail.is_power:
            return tail.scaled(self.fprime0)
        return TailModel.constant(tail.side, float(self(tail.level)))

    def apply(self, u: Field) -> Field:
        return Field(u.grid, self(u.values), self.tail(u.left_tail), self.tail(u.right_tail),
                     u.time_stamp)

    def describe(self):
        if self.kind is ReactionKind.LOGISTIC:
            return {"kind": "Logistic", "fprime0": 1.0, "fprime1": -1.0}
        return {"kind": "Custom", "fprime0": self.fprime0, "fprime1": self.fprime1,
                "nodes": self.nodes.tolist(), "values": self.table.tolist()}


@dataclass(frozen=True)
class LinearReaction:
    """f(u) = rate * u with no clamping; rate 0 gives the pure linear flow."""

    rate: float = 0.0
    bounded = False

    @property
    def fprime0(self):
        return self.rate

    @property
    def max_slope(self):
        return abs(self.rate)

    def __call__(self, u):
        return self.rate * np.asarray(u, dtype=float)

    def derivative(self, u):
        return np.full(np.shape(u), self.rate)

    def tail(self, tail: TailModel):
        return tail.scaled(self.rate)

    def apply(self, u: Field) -> Field:
        return Field(u.grid, self(u.values), self.tail(u.left_tail), self.tail(u.right_tail),
                     u.time_stamp)

    def describe(self):
        return {"kind": "Linear", "rate": self.rate}


def map_field(u: Field, fn: Callable, alpha) -> Field:
    """Apply a pointwise map with fn(0) = 0; tails follow fn at their limit level."""
    vals = fn(u.values)
    tails = []
    for tail in (u.left_tail, u.right_tail):
        level = float(fn(np.array(tail.limit)))
        tails.append(TailModel.constant(tail.side, level))
    left, right = retail(u.grid, vals, tails[0], tails[1], alpha)
    return Field(u.grid, vals, left, right, u.time_stamp)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvolveSchedule:
    dt: float = 0.01
    t_end: float = 1.0
    snapshot_times: tuple = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        times = tuple(sorted(float(t) for t in self.snapshot_times))
        if times and (times[0] < 0 or times[-1] > self.t_end + 1e-12):
            raise ValueError("snapshot times must lie in [0, t_end]")
        object.__setattr__(self, "snapshot_times", times)

    @property
    def num_steps(self):
        return int(round(self.t_end / self.dt))

    def validate_for(self, reaction):
        limit = 0.1 / reaction.max_slope if reaction.max_slope > 0 else math.inf
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds 0.1/max|f'| = {limit}")

    @classmethod
    def every(cls, dt, t_end, spacing):
        """Snapshots at multiples of ``spacing`` from 0 to t_end."""
        count = int(round(t_end / spacing))
        return cls(dt, t_end, tuple(k * spacing for k in range(count + 1)))


@dataclass
class SolutionTrajectory:
    snapshots: list
    schedule: EvolveSchedule
    nonlinearity: object
    alpha: float
    max_overshoot: float = 0.0
    steps: int = 0
    wall_time: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([s.time_stamp for s in self.snapshots])

    def at(self, t, tol=None):
        """Snapshot whose time stamp is within ``tol`` (default dt/2) of t."""
        tol = 0.5 * self.schedule.dt if tol is None else tol
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol:
            raise CoverageError(f"no snapshot within {tol:g} of t={t:g}")
        return self.snapshots[k]

    def final(self):
        return self.snapshots[-1]


# ---------------------------------------------------------------------------

def _check_values(values, reaction, t):
    if not np.all(np.isfinite(values)):
        raise BlowUpError("non-finite values produced", t)
    if getattr(reaction, "bounded", False):
        lo, hi = float(values.min()), float(values.max())
        if lo < RANGE_LIMITS[0] or hi > RANGE_LIMITS[1]:
            raise RangeViolation(f"values left [{RANGE_LIMITS[0]}, {RANGE_LIMITS[1]}]: "
                                 f"min {lo:.6g}, max {hi:.6g}", t)


def _react(f, u: Field, t) -> Field:
    vals = f(u.values)
    if not np.all(np.isfinite(vals)):
        raise BlowUpError("reaction term is not finite", t)
    return Field(u.grid, vals, f.tail(u.left_tail), f.tail(u.right_tail), u.time_stamp)


def step_etd1(u: Field, dt, alpha, f) -> Field:
    """One exponential-midpoint step of size dt."""
    prop = propagator(u.grid, alpha)
    g = u.grid
    x = u.x
    bg = background_for(u, alpha)
    r_hat = prop.forward(u.values - bg.values(x))
    half = prop.multiplier(0.5 * dt)
    full = prop.multiplier(dt)

    fu = _react(f, u, u.time_stamp)
    half_vals = bg.advanced(0.5 * dt).values(x) + prop.inverse(half * r_hat)
    mid_vals = half_vals + 0.5 * dt * fu.values
    mid_left = u.left_tail if u.left_tail.is_power else u.left_tail.plus(fu.left_tail.scaled(0.5 * dt))
    mid_right = (u.right_tail if u.right_tail.is_power
                 else u.right_tail.plus(fu.right_tail.scaled(0.5 * dt)))
    if not np.all(np.isfinite(mid_vals)):
        raise BlowUpError("half-step predictor is not finite", u.time_stamp)
    mid_left, mid_right = retail(g, mid_vals, mid_left, mid_right, alpha)
    fmid = _react(f, Field(g, mid_vals, mid_left, mid_right, u.time_stamp + 0.5 * dt),
                  u.time_stamp)

    bg2 = background_for(fmid, alpha)
    r2_hat = prop.forward(fmid.values - bg2.values(x))
    out = (bg.advanced(dt).values(x) + dt * bg2.advanced(0.5 * dt).values(x)
           + prop.inverse(full * r_hat + dt * (half * r2_hat)))
    _check_values(out, f, u.time_stamp)

    templates = []
    for tail, ftail in ((u.left_tail, fmid.left_tail), (u.right_tail, fmid.right_tail)):
        templates.append(tail if tail.is_power else tail.plus(ftail.scaled(dt)))
    left, right = retail(g, out, templates[0], templates[1], alpha)
    return Field(g, out, left, right, u.time_stamp + dt)


def evolve(u0: Field, schedule: EvolveSchedule, alpha, f, observer=None,
           keep_snapshots=True) -> SolutionTrajectory:
    """March u0 to schedule.t_end, storing snapshots at the nearest steps.

    After every step, overshoots outside [0, 1] (bounded reactions only) are
    clipped back and the largest one is recorded.  ``observer(field)`` is
    called on every snapshot, which lets long runs avoid holding them all.
    """
    schedule.validate_for(f)
    if getattr(f, "bounded", False):
        if u0.values.min() < 0.0 or u0.values.max() > 1.0:
            raise ValueError("initial data must take values in [0, 1]")
    dt = schedule.dt
    n_steps = schedule.num_steps
    wanted = sorted({min(int(round(t / dt)), n_steps) for t in schedule.snapshot_times})
    wanted_set = set(wanted)
    snaps = []
    start = time.perf_counter()
    u = Field(u0.grid, u0.values, u0.left_tail, u0.right_tail, 0.0)
    overshoot = 0.0

    def emit(field_, k):
        stamped = Field(field_.grid, field_.values, field_.left_tail, field_.right_tail, k * dt)
        if observer is not None:
            observer(stamped)
        if keep_snapshots:
            snaps.append(stamped)

    if 0 in wanted_set:
        emit(u, 0)
    for k in range(1, n_steps + 1):
        try:
            u = step_etd1(u, dt, alpha, f)
        except StepError as exc:
            if exc.time is None:
                exc.time = (k - 1) * dt
            raise
        if getattr(f, "bounded", False):
            vals = u.values
            over = max(0.0, -float(vals.min()), float(vals.max()) - 1.0)
            if over > 0.0:
                overshoot = max(overshoot, over)
                u = u.with_values(np.clip(vals, 0.0, 1.0))
        if k in wanted_set:
            emit(u, k)
    return SolutionTrajectory(snaps, schedule, f, alpha, overshoot, n_steps,
                              time.perf_counter() - start)


def logistic_closed_form(level, t):
    """Solution of phi' = phi(1 - phi), phi(0) = level."""
    if not 0.0 < level <= 1.0:
        raise ValueError("level must lie in (0, 1]")
    t = np.asarray(t, dtype=float)
    grow = np.exp(t)
    out = level * grow / (1.0 - level + level * grow)
    return out if out.ndim else float(out)


def frac_laplacian(u: Field, alpha) -> Field:
    """(-Delta)^alpha u: analytic generator on the background, |xi|^(2 alpha) on the rest."""
    prop = propagator(u.grid, alpha)
    x = u.x
    bg = background_for(u, alpha)
    rest = prop.inverse(prop.symbol * prop.forward(u.values - bg.values(x)))
    vals = bg.generator(x) + rest
    tails = [TailModel.constant(t.side, 0.0) for t in (u.left_tail, u.right_tail)]
    for i, t in enumerate((u.left_tail, u.right_tail)):
        if t.is_power:
            tails[i] = t
    left, right = retail(u.grid, vals, tails[0], tails[1], alpha)
    return Field(u.grid, vals, left, right, u.time_stamp)


# ---------------------------------------------------------------------------
# Variation-of-constants checks

# Widest snapshot gap, in quadrature panels, bridged by linear interpolation.
_MAX_GAP = 4


def _snapshot_at(traj: SolutionTrajectory, s, spacing):
    """Snapshot at time s, linearly interpolated between neighbours if needed."""
    times = traj.times
    k = int(np.argmin(np.abs(times - s)))
    if abs(times[k] - s) <= 1e-9 + 1e-6 * traj.schedule.dt:
        return traj.snapshots[k]
    lo = np.nonzero(times <= s)[0]
    hi = np.nonzero(times >= s)[0]
    if lo.size == 0 or hi.size == 0:
        raise CoverageError(f"time {s:g} lies outside the stored snapshots")
    a, b = traj.snapshots[lo[-1]], traj.snapshots[hi[0]]
    if b.time_stamp - a.time_stamp > _MAX_GAP * spacing * (1 + 1e-9):
        raise CoverageError(f"snapshot gap around t={s:g} exceeds {_MAX_GAP} quadrature panels")
    w = (s - a.time_stamp) / (b.time_stamp - a.time_stamp)
    return a.scaled(1.0 - w) + b.scaled(w)


def duhamel_integral(traj: SolutionTrajectory, t, m, integrand):
    """int_0^t T_{t-s} integrand(u(s)) ds by composite Simpson with m panels."""
    if m < 8 or m % 2:
        raise ValueError("m must be an even integer >= 8")
    alpha = traj.alpha
    spacing = t / m
    weights = np.ones(m + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    weights *= spacing / 3.0
    total = None
    for j in range(m + 1):
        s = j * spacing
        g = integrand(_snapshot_at(traj, s, spacing))
        if t - s > 1e-12:
            g = apply_semigroup_spectral(g, t - s, alpha)
        term = g.scaled(weights[j])
        total = term if total is None else total + term
    return total


def duhamel_residual(traj: SolutionTrajectory, t, m=50):
    """Interior sup-norm of u(t) - [T_t u0 + int_0^t T_{t-s} f(u(s)) ds]."""
    u_t = traj.at(t)
    u0 = traj.at(0.0)
    f = traj.nonlinearity
    rhs = apply_semigroup_spectral(u0, t, traj.alpha) + duhamel_integral(traj, t, m, f.apply)
    mask = u_t.grid.interior_mask()
    return float(np.max(np.abs(u_t.values - rhs.values)[mask]))
