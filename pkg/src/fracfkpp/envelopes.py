"""Explicit sub/supersolutions for alpha = 1/2 and the lower-envelope iterations.

The explicit family is

    u_{a,b0}(t, x) = a / (1 + x^2 / b(t)^2),   b(t) = (1 + b0) e^{t/2} - 1,

whose residual u_t + (-Delta)^(1/2) u - u(1 - u) equals
a (1 + x^2/b^2)^(-2) (1/b - 1 + a).  The iterations advance the markers of
level-eps lower bounds by a fixed geometric factor per period t0.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from fracfkpp import semigroup
from fracfkpp.fields import Field, GridSpec, Side, TailModel
from fracfkpp.solver import SolutionTrajectory, comparison_slack, frac_laplacian

__all__ = [
    "Role",
    "ExplicitEnvelope",
    "explicit_envelope_value",
    "envelope_residual_factor",
    "EnvelopeReport",
    "verify_envelope_numerically",
    "ENVELOPE_T_PROBES",
    "ENVELOPE_X_PROBES",
    "linear_supersolution",
    "ScheduleInfeasible",
    "DegenerateSchedule",
    "IterationKind",
    "ExprSchedule",
    "SCHEDULE_X_PROBES",
    "schedule_lower_constant",
    "compute_expr_schedule",
    "compute_expi_schedule",
    "EnvelopeIterationState",
    "initial_state",
    "marker_factor",
    "iterate_expr_envelope",
    "iterate_expi_envelope",
    "OrderingReport",
    "check_ordering",
    "dominating_super_envelope",
    "seeded_sub_envelope",
]


class Role(enum.Enum):
    SUB = "Sub"
    SUPER = "Super"


@dataclass(frozen=True)
class ExplicitEnvelope:
    a: float
    b0: float
    role: Role

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if not self.a > 0:
            raise ValueError("amplitude a must be positive")
        if not self.b0 > 1:
            raise ValueError("b0 must exceed 1")
        if self.role is Role.SUB and self.a > (self.b0 - 1.0) / self.b0 * (1 + 1e-15):
            raise ValueError(f"a Sub envelope needs a <= (b0-1)/b0 = {(self.b0 - 1) / self.b0}")
        if self.role is Role.SUPER and self.a < 1.0:
            raise ValueError("a Super envelope needs a >= 1")

    def width(self, t):
        return (1.0 + self.b0) * np.exp(0.5 * np.asarray(t, dtype=float)) - 1.0

    def value(self, t, x):
        b = self.width(t)
        x = np.asarray(x, dtype=float)
        return self.a / (1.0 + (x / b) ** 2)

    def time_derivative(self, t, x):
        b = self.width(t)
        db = 0.5 * (1.0 + b)
        s = (np.asarray(x, dtype=float) / b) ** 2
        return self.a * 2.0 * s * db / (b * (1.0 + s) ** 2)

    def residual_factor(self, t):
        return 1.0 / self.width(t) - 1.0 + self.a

    def expected_residual(self, t, x):
        s = (np.asarray(x, dtype=float) / self.width(t)) ** 2
        return self.a * self.residual_factor(t) / (1.0 + s) ** 2

    def field(self, grid: GridSpec, t) -> Field:
        """Sampled envelope at time t with its exact |x|^-2 tails."""
        b = float(self.width(t))
        amp = self.a * b * b
        return Field(grid, self.value(t, grid.x), TailModel.power(Side.LEFT, amp, 2.0),
                     TailModel.power(Side.RIGHT, amp, 2.0), float(t))

    def to_dict(self):
        return {"a": self.a, "b0": self.b0, "role": self.role.value}


def explicit_envelope_value(env: ExplicitEnvelope, t, x):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    return env.value(t, x)


def envelope_residual_factor(env: ExplicitEnvelope, t):
    """b(t)^-1 - 1 + a; nonpositive for Sub envelopes, positive for Super ones."""
    return env.residual_factor(t)


ENVELOPE_T_PROBES = (0.0, 0.5, 1.0, 2.0, 4.0)
ENVELOPE_X_PROBES = (0.0, 1.0, -1.0, 5.0, -5.0, 20.0, -20.0, 100.0, -100.0)
_ENVELOPE_GRID = GridSpec(1024.0, 2 ** 15)


@dataclass
class EnvelopeReport:
    envelope: dict
    probes: list
    residuals: list
    expected: list
    tolerance: float
    worst_deviation: float
    worst_probe: tuple
    sign_ok: bool
    passed: bool

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def verify_envelope_numerically(env: ExplicitEnvelope, t_probes=ENVELOPE_T_PROBES,
                                x_probes=ENVELOPE_X_PROBES, grid: GridSpec = _ENVELOPE_GRID,
                                rtol=1e-4) -> EnvelopeReport:
    """Residual u_t + (-Delta)^(1/2) u - u(1 - u) of the sampled envelope at the probes.

    The fractional Laplacian is the solver's operator applied to the sampled
    field; u_t is differentiated analytically.  Probes must be grid nodes.
    """
    tol = rtol * env.a
    idx = []
    for x in x_probes:
        k = int(round((x + grid.L) / grid.h))
        if not (0 <= k < grid.N and abs(grid.x[k] - x) < 1e-9 * max(1.0, abs(x))):
            raise ValueError(f"probe x={x} is not a node of the verification grid")
        if abs(x) > 0.5 * grid.L:
            raise ValueError(f"probe x={x} lies outside |x| <= L/2")
        idx.append(k)
    probes, residuals, expected = [], [], []
    for t in t_probes:
        u = env.field(grid, t)
        lap = frac_laplacian(u, 0.5).values
        v = u.values
        res = env.time_derivative(t, grid.x[idx]) + lap[idx] - v[idx] * (1.0 - v[idx])
        for x, r in zip(x_probes, res):
            probes.append((float(t), float(x)))
            residuals.append(float(r))
            expected.append(float(env.expected_residual(t, x)))
    dev = np.abs(np.array(residuals) - np.array(expected))
    worst = int(np.argmax(dev))
    res_arr = np.array(residuals)
    if env.role is Role.SUB:
        sign_ok = bool(np.all(res_arr <= tol))
    else:
        sign_ok = bool(np.all(res_arr >= -tol))
    return EnvelopeReport(env.to_dict(), probes, residuals, expected, tol, float(dev[worst]),
                          probes[worst], sign_ok, bool(sign_ok and dev[worst] <= tol))


def linear_supersolution(u0: Field, t, alpha, fprime0) -> Field:
    """e^(f'(0) t) T_t u0, which dominates the solution started from u0."""
    if fprime0 * t > 300.0:
        raise OverflowError(f"growth factor exp({fprime0 * t:g}) is out of range")
    if t == 0:
        return u0
    return semigroup.apply_semigroup_spectral(u0, t, alpha).scaled(math.exp(fprime0 * t))


# ---------------------------------------------------------------------------
# Lower-envelope iterations

class ScheduleInfeasible(ValueError):
    pass


class DegenerateSchedule(ValueError):
    pass


class IterationKind(enum.Enum):
    DECAYING = "Decaying"
    MONOTONE = "Monotone"


@dataclass(frozen=True)
class ExprSchedule:
    kind: IterationKind
    alpha: float
    n: int
    sigma: float
    c_meas: float
    t0: float
    eps0: float
    delta: float
    growth_ratio: float  # f(delta)/delta

    @property
    def exponent(self):
        """n + 2 alpha for decaying data, 2 alpha for monotone data."""
        if self.kind is IterationKind.DECAYING:
            return self.n + 2.0 * self.alpha
        return 2.0 * self.alpha

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def _ratio(f, delta):
    return float(f(np.array(delta))) / delta


def _schedule(kind, alpha, n, f, sigma, c_meas, t0_step=0.1, t0_cap=1e3):
    expo = (n + 2.0 * alpha) if kind is IterationKind.DECAYING else 2.0 * alpha
    sig_crit = f.fprime0 / expo
    if not 0.0 < sigma < sig_crit:
        raise ValueError(f"sigma must lie in (0, {sig_crit:g})")
    if not c_meas > 0:
        raise ValueError("c_meas must be positive")
    mid = 0.5 * (sigma + sig_crit)
    # f(delta)/delta decreases from f'(0): delta is admissible below the root of g
    def g(d):
        return _ratio(f, d) / expo - mid

    if g(1.0 - 1e-12) > 0:
        d_max = 1.0
    else:
        d_max = optimize.bisect(g, 1e-14, 1.0 - 1e-12, xtol=1e-15, rtol=1e-15, maxiter=200)
    delta = 0.5 * d_max
    time_power = 0.5 * n / alpha + 1.0 if kind is IterationKind.DECAYING else 0.5 / alpha + 1.0

    def holds(t0):
        lhs = (1.0 / expo) * math.log(c_meas * t0 / (t0 ** time_power + 1.0)) + mid * t0
        return lhs >= sigma * t0

    steps = int(round((t0_cap - 1.0) / t0_step))
    for k in range(steps + 1):
        t0 = round(1.0 + k * t0_step, 10)
        if holds(t0):
            return ExprSchedule(kind, alpha, n, sigma, c_meas, t0,
                                delta * math.exp(-f.fprime0 * t0), delta, _ratio(f, delta))
    raise ScheduleInfeasible(f"no t0 <= {t0_cap:g} satisfies the growth condition "
                             f"(c_meas={c_meas:g} may be too small)")


# |x| probes for the lower constant that feeds a schedule.  The markers of the
# first periods sit within a few units of the origin, so the constant must hold
# there too; far-field probes alone overstate it.
SCHEDULE_X_PROBES = (1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0, 30.0, 100.0)


def schedule_lower_constant(alpha, kind=IterationKind.DECAYING):
    """Measured lower constant c over t in {1, 2, 4, 8} and |x| in SCHEDULE_X_PROBES."""
    kind = IterationKind(kind)
    if kind is IterationKind.DECAYING:
        return semigroup.check_hr_bounds(alpha, x_probes=SCHEDULE_X_PROBES).lower_constant
    neg = tuple(-x for x in SCHEDULE_X_PROBES)
    return semigroup.check_hi_bounds(alpha, x_probes=neg).lower_constant


def compute_expr_schedule(alpha, f, sigma, c_meas, n=1) -> ExprSchedule:
    """(t0, eps0, delta) for the decaying-data iteration.

    delta is the midpoint of the admissible interval where
    f(delta)/delta > (n + 2 alpha) (sigma + sigma*)/2; t0 is the first point of a
    0.1-spaced scan from 1 where the period growth beats e^(sigma t0).
    """
    return _schedule(IterationKind.DECAYING, alpha, n, f, sigma, c_meas)


def compute_expi_schedule(alpha, f, sigma, c_meas) -> ExprSchedule:
    """Monotone-data analogue with exponent 2 alpha in place of n + 2 alpha."""
    return _schedule(IterationKind.MONOTONE, alpha, 1, f, sigma, c_meas)


@dataclass(frozen=True)
class EnvelopeIterationState:
    schedule: ExprSchedule
    eps: float
    markers: tuple
    amplitudes: tuple

    @property
    def kind(self):
        return self.schedule.kind

    @property
    def steps(self):
        return len(self.markers) - 1

    def to_dict(self):
        return {"schedule": self.schedule.to_dict(), "eps": self.eps,
                "markers": list(self.markers), "amplitudes": list(self.amplitudes)}


def initial_state(schedule: ExprSchedule, marker0, eps=None) -> EnvelopeIterationState:
    """State at k = 0: r0 >= 1 (decaying) or x0 <= -1 (monotone), eps <= eps0."""
    eps = schedule.eps0 if eps is None else float(eps)
    if not 0 < eps <= schedule.eps0 * (1 + 1e-12):
        raise ValueError("eps must lie in (0, eps0]")
    if schedule.kind is IterationKind.DECAYING and marker0 < 1:
        raise ValueError("r0 must be at least 1")
    if schedule.kind is IterationKind.MONOTONE and marker0 > -1:
        raise ValueError("x0 must be at most -1")
    amp = eps * abs(marker0) ** schedule.exponent
    return EnvelopeIterationState(schedule, eps, (float(marker0),), (amp,))


def marker_factor(schedule: ExprSchedule):
    """Per-period growth factor of the markers."""
    s = schedule
    power = 0.5 * s.n / s.alpha + 1.0 if s.kind is IterationKind.DECAYING else 0.5 / s.alpha + 1.0
    gain = s.c_meas * s.t0 / (s.t0 ** power + 1.0)
    return gain ** (1.0 / s.exponent) * math.exp(s.growth_ratio * s.t0 / s.exponent)


def _iterate(state: EnvelopeIterationState, k, kind):
    if state.kind is not kind:
        raise ValueError(f"expected a {kind.value} iteration state")
    s = state.schedule
    factor = marker_factor(s)
    if not factor > 1.0:
        raise DegenerateSchedule(f"marker growth factor {factor:g} does not exceed 1")
    floor = math.exp(s.sigma * s.t0)
    m0 = state.markers[0]
    start = state.steps
    markers = list(state.markers)
    try:
        for j in range(start + 1, start + k + 1):
            markers.append(m0 * factor ** j)
            if abs(markers[-1]) < abs(markers[-2]) * floor * (1 - 1e-12):
                raise DegenerateSchedule("marker advance fell below e^(sigma t0)")
        amps = tuple(state.eps * abs(m) ** s.exponent for m in markers)
    except OverflowError:
        raise OverflowError(f"marker or amplitude after {start + k} periods exceeds the float "
                            f"range (factor {factor:g})") from None
    if not all(math.isfinite(a) for a in amps + tuple(markers)):
        raise OverflowError(f"marker or amplitude after {start + k} periods exceeds the float "
                            f"range (factor {factor:g})")
    return replace(state, markers=tuple(markers), amplitudes=amps)


def iterate_expr_envelope(state: EnvelopeIterationState, k=1) -> EnvelopeIterationState:
    """Advance k periods: r_(j+1) = r_j * factor and a_(j+1) = eps r_(j+1)^(n + 2 alpha)."""
    return _iterate(state, k, IterationKind.DECAYING)


def iterate_expi_envelope(state: EnvelopeIterationState, k=1) -> EnvelopeIterationState:
    """Advance k periods with negative markers moving left."""
    return _iterate(state, k, IterationKind.MONOTONE)


# ---------------------------------------------------------------------------

@dataclass
class OrderingReport:
    precondition_ok: bool
    holds: bool
    worst_lower: float
    worst_upper: float
    worst_time: Optional[float]
    slack: float
    message: str = ""

    def to_dict(self):
        return asdict(self)


def _as_values(bound, t, grid):
    if bound is None:
        return None
    if callable(bound):
        bound = bound(t)
    if isinstance(bound, Field):
        return bound.values
    if np.isscalar(bound):
        return np.full(grid.N, float(bound))
    return np.asarray(bound, dtype=float)


def check_ordering(sub: Optional[Callable], traj: SolutionTrajectory,
                   sup: Optional[Callable], t_shift=0.0, initial_slack=1e-12) -> OrderingReport:
    """sub(t) - eps_cmp <= u(t) <= sup(t) + eps_cmp on interior nodes at every snapshot.

    ``sub``/``sup`` map a time (measured from ``t_shift``, so an envelope can be
    seeded at a later snapshot) to a Field, an array or a scalar; None skips a side.
    """
    dt = traj.schedule.dt
    snaps = [s for s in traj.snapshots if s.time_stamp >= t_shift - 1e-12]
    if not snaps:
        return OrderingReport(False, False, 0.0, 0.0, None, 0.0, "no snapshots after the seed time")
    grid = snaps[0].grid
    mask = grid.interior_mask()
    first = snaps[0]
    lo = _as_values(sub, 0.0, grid)
    hi = _as_values(sup, 0.0, grid)
    bad_lo = float(np.max((lo - first.values)[mask])) if lo is not None else -np.inf
    bad_hi = float(np.max((first.values - hi)[mask])) if hi is not None else -np.inf
    if bad_lo > initial_slack or bad_hi > initial_slack:
        return OrderingReport(False, False, bad_lo, bad_hi, first.time_stamp, 0.0,
                              "initial ordering violated")
    worst_lo = worst_hi = -np.inf
    worst_t = None
    slack = 0.0
    holds = True
    for snap in snaps:
        t = snap.time_stamp - t_shift
        slack = comparison_slack(dt, t) + initial_slack
        lo = _as_values(sub, t, grid)
        hi = _as_values(sup, t, grid)
        v = snap.values
        d_lo = float(np.max((lo - v)[mask])) if lo is not None else -np.inf
        d_hi = float(np.max((v - hi)[mask])) if hi is not None else -np.inf
        if max(d_lo - worst_lo, d_hi - worst_hi) > 0:
            worst_t = snap.time_stamp
        worst_lo, worst_hi = max(worst_lo, d_lo), max(worst_hi, d_hi)
        if d_lo > slack or d_hi > slack:
            holds = False
    return OrderingReport(True, holds, worst_lo, worst_hi, worst_t, slack,
                          "" if holds else "ordering violated beyond the comparison slack")


def dominating_super_envelope(u0: Field, b0=None) -> ExplicitEnvelope:
    """Smallest-amplitude Super envelope with u0 <= u_{a,b0}(0, .) on the grid and tails.

    With b0 unset, b0 = 2 is used.  The amplitude is the larger of 1 and the
    max of u0 (1 + x^2/b0^2), including the tail amplitudes against the
    envelope's a b0^2 |x|^-2 decay.
    """
    b0 = 2.0 if b0 is None else float(b0)
    x = u0.x
    need = float(np.max(u0.values * (1.0 + (x / b0) ** 2)))
    for tail in u0.tails():
        if tail.is_power:
            if tail.exponent < 2.0:
                raise ValueError("tail decays too slowly for an |x|^-2 envelope")
            if tail.exponent == 2.0:
                need = max(need, tail.amplitude / b0 ** 2)
        elif tail.level > 0:
            raise ValueError("constant tails are not dominated by a decaying envelope")
    return ExplicitEnvelope(max(1.0, need), b0, Role.SUPER)


def seeded_sub_envelope(u_seed: Field, seed_time) -> ExplicitEnvelope:
    """Largest Sub envelope with b0 = seed_time lying under ``u_seed`` on the grid and tails.

    The amplitude is min u_seed (1 + x^2/T^2) over the nodes, further limited by
    the tail amplitudes and by the Sub threshold (T - 1)/T.
    """
    b0 = float(seed_time)
    if not b0 > 1:
        raise ValueError("the seed time must exceed 1")
    x = u_seed.x
    room = float(np.min(u_seed.values * (1.0 + (x / b0) ** 2)))
    for tail in u_seed.tails():
        if tail.is_power:
            if tail.exponent > 2.0:
                raise ValueError("tail decays faster than the envelope's |x|^-2")
            if tail.exponent == 2.0:
                room = min(room, tail.amplitude / b0 ** 2)
        elif tail.level <= 0:
            raise ValueError("a vanishing tail cannot dominate a positive envelope")
    if not room > 0:
        raise ValueError("the seeded field is not positive")
    return ExplicitEnvelope(min(room, (b0 - 1.0) / b0), b0, Role.SUB)
