"""The linear flow T_t u = p(t, .) * u on gridded fields, and bounds it satisfies.

Heavy tails and jumps make a plain periodic FFT convolution wrong by the mass
that wraps around the box.  Every field is therefore split as u = S + r where
the background S is built from kernels and kernel CDFs,

    S(x) = c_left + J * P(tau_J, x) + M * p(tau_M, x),

chosen so that S carries the far-field behaviour recorded in the tail models.
S has the exact image T_t S = c_left + J P(tau_J + t, .) + M p(tau_M + t, .),
and only the remainder r, which is small near the box edges, goes through the
Fourier multiplier exp(-t |xi|^(2 alpha)).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft
from scipy import integrate, optimize, signal

from fracfkpp import _stable, kernels
from fracfkpp.fields import (
    BUFFER_FRACTION,
    Field,
    GridSpec,
    Side,
    TailModel,
    fit_power_amplitude,
)

__all__ = [
    "BufferOverrun",
    "Background",
    "background_for",
    "retail",
    "SpectralPropagator",
    "propagator",
    "set_default_workers",
    "apply_semigroup_spectral",
    "apply_semigroup_quadrature",
    "tail_convolution",
    "BoundReport",
    "check_hr_bounds",
    "check_hi_bounds",
    "check_w_gamma_bounds",
    "convolve_quad",
    "canonical_decaying_datum",
    "canonical_monotone_datum",
    "heaviside_datum",
    "truncated_power_datum",
    "truncated_monotone_datum",
    "RadialReport",
    "check_radial_monotone_preservation",
]

_WORKERS = None
_KERNEL_MASS_TOL = 1e-4


def set_default_workers(n):
    """Thread count handed to scipy.fft (None lets scipy decide)."""
    global _WORKERS
    _WORKERS = None if n is None else int(n)


class BufferOverrun(ValueError):
    """The kernel spreads more than 1% of its mass past the buffer zone."""

    def __init__(self, t, t_max):
        super().__init__(f"t={t:g} exceeds the maximal safe time {t_max:.6g} for this grid")
        self.t = t
        self.t_max = t_max


# ---------------------------------------------------------------------------
# Background decomposition

def _same(a, b):
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


@dataclass(frozen=True)
class Background:
    """c_left + J P(tau_J, .) + M p(tau_M, .); tau_J = 0 stands for the sharp unit step."""

    alpha: float
    base: float = 0.0
    jump: float = 0.0
    tau_jump: float = 1.0
    mass: float = 0.0
    tau_mass: float = 1.0

    def values(self, x):
        out = np.full(np.shape(x), self.base)
        if self.jump != 0.0:
            if self.tau_jump == 0.0:
                out += self.jump * np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
            else:
                out += self.jump * kernels.cdf(self.alpha, self.tau_jump, x)
        if self.mass != 0.0:
            out += self.mass * kernels.pdf(self.alpha, self.tau_mass, x)
        return out

    def advanced(self, t):
        return replace(self, tau_jump=self.tau_jump + t, tau_mass=self.tau_mass + t)

    def generator(self, x):
        """(-Delta)^alpha S, from d/dtau of the kernel and its CDF."""
        a2 = 2.0 * self.alpha
        out = np.zeros(np.shape(x))
        if self.jump != 0.0 and self.tau_jump == 0.0:
            # limit of p(tau, x)/tau; the principal value vanishes at x = 0
            c = _stable.tail_constant(self.alpha)
            ax = np.where(x == 0, 1.0, np.abs(x))
            out += np.where(x == 0, 0.0, self.jump * c * np.sign(x) * ax ** -a2 / a2)
        elif self.jump != 0.0:
            tj = self.tau_jump
            out += self.jump * x * kernels.pdf(self.alpha, tj, x) / (a2 * tj)
        if self.mass != 0.0:
            tm = self.tau_mass
            p = kernels.pdf(self.alpha, tm, x)
            px = kernels.pdf_dx(self.alpha, tm, x)
            out += self.mass * (p + x * px) / (a2 * tm)
        return out


def _is_sharp_step(values, mid, base, jump):
    """Does the full jump happen across the two cells around the origin node?"""
    across = values[mid + 1] - values[mid - 1]
    centre = values[mid] - base - 0.5 * jump
    return abs(across - jump) <= 1e-9 * abs(jump) and abs(centre) <= 1e-9 * abs(jump)


def background_for(u: Field, alpha) -> Background:
    """Kernel-built background matching the tail models of ``u``."""
    g = u.grid
    left, right = u.left_tail, u.right_tail
    base = left.limit
    jump = right.limit - base
    floor_tau = (8.0 * g.h) ** (2.0 * alpha)
    c = _stable.tail_constant(alpha)
    tau_jump = floor_tau
    mid = g.N // 2
    if jump != 0.0 and _is_sharp_step(u.values, mid, base, jump):
        # a sampled jump would ring in Fourier space; the exact step image absorbs it
        tau_jump = 0.0
    elif jump != 0.0 and c > 0.0:
        for tail in (left, right):
            if tail.is_power and _same(tail.exponent, 2.0 * alpha) and tail.amplitude * jump > 0:
                # the CDF deviates from its limits like c tau/(2 alpha) |x|^(-2 alpha)
                tau_jump = max(2.0 * alpha * abs(tail.amplitude) / (c * abs(jump)), floor_tau)
                break
    bg = Background(alpha, base, jump, tau_jump)
    if c == 0.0:
        return bg
    beta = 1.0 + 2.0 * alpha
    matched = [t for t in (left, right) if t.is_power and _same(t.exponent, beta)]
    amp = float(np.mean([t.amplitude for t in matched])) if matched else 0.0
    if amp <= 0.0:
        return bg
    rest = u.values - bg.values(u.x)
    # trapezoid mass plus the analytic mass of matched tails beyond the box
    mass = g.h * float(np.sum(rest)) + sum(t.amplitude * g.L ** (1.0 - beta) / (beta - 1.0)
                                           for t in matched)
    if mass <= 0.0:
        return bg
    tau_mass = amp / (c * mass)
    if tau_mass < floor_tau:
        tau_mass = floor_tau
        mass = amp / (c * tau_mass)
    return replace(bg, mass=mass, tau_mass=tau_mass)


def retail(grid: GridSpec, values, left: TailModel, right: TailModel, alpha):
    """Tail models for ``values`` given template tails.

    Constant tails keep the template level.  PowerLaw amplitudes are refit on
    the outer interior band.  A Constant(0) side whose band is no longer zero
    (heavy-tailed kernels create algebraic tails instantly) is promoted to a
    power law: exponent 2 alpha when the opposite side sits at a positive
    constant, 1 + 2 alpha otherwise.
    """
    out = []
    for tail, other in ((left, right), (right, left)):
        if tail.is_power:
            amp = fit_power_amplitude(grid, values, tail.side, tail.exponent)
            out.append(replace(tail, amplitude=amp))
            continue
        if tail.level == 0.0 and alpha < 1.0:
            band = values[grid.band_mask(tail.side)]
            scale = max(1.0, float(np.max(np.abs(values))))
            if np.max(np.abs(band)) > 1e-13 * scale:
                beta = 2.0 * alpha if (not other.is_power and other.level > 0) else 1.0 + 2.0 * alpha
                amp = fit_power_amplitude(grid, values, tail.side, beta)
                out.append(TailModel.power(tail.side, amp, beta))
                continue
        out.append(tail)
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Spectral backend

class SpectralPropagator:
    """Fourier multipliers exp(-t |xi|^(2 alpha)) on one grid."""

    def __init__(self, grid: GridSpec, alpha):
        self.grid = grid
        self.alpha = float(alpha)
        xi = 2.0 * math.pi * scipy.fft.rfftfreq(grid.N, d=grid.h)
        self.symbol = xi ** (2.0 * self.alpha)
        self._mult = {}
        self._t_safe = None

    def multiplier(self, t):
        m = self._mult.get(t)
        if m is None:
            m = np.exp(-t * self.symbol)
            if len(self._mult) > 16:
                self._mult.clear()
            self._mult[t] = m
        return m

    def forward(self, values):
        return scipy.fft.rfft(values, workers=_WORKERS)

    def inverse(self, coeffs):
        return scipy.fft.irfft(coeffs, n=self.grid.N, workers=_WORKERS)

    @property
    def max_safe_time(self):
        """Largest t with at most 1% of kernel mass beyond the buffer width."""
        if self._t_safe is None:
            width = BUFFER_FRACTION * self.grid.L

            def excess(log_t):
                return 2.0 * float(kernels.upper_tail(self.alpha, math.exp(log_t), width)) - 0.01

            self._t_safe = math.exp(optimize.brentq(excess, -60.0, 60.0, xtol=1e-12))
        return self._t_safe

    def check_time(self, t):
        if t > self.max_safe_time:
            raise BufferOverrun(t, self.max_safe_time)


@functools.lru_cache(maxsize=8)
def propagator(grid: GridSpec, alpha) -> SpectralPropagator:
    return SpectralPropagator(grid, alpha)


def apply_semigroup_spectral(u: Field, t, alpha) -> Field:
    """T_t u by background subtraction plus the periodic Fourier multiplier."""
    if not t > 0:
        raise ValueError("t must be positive")
    prop = propagator(u.grid, alpha)
    prop.check_time(t)
    x = u.x
    bg = background_for(u, alpha)
    r_hat = prop.forward(u.values - bg.values(x))
    out = bg.advanced(t).values(x) + prop.inverse(prop.multiplier(t) * r_hat)
    left, right = retail(u.grid, out, u.left_tail, u.right_tail, alpha)
    return Field(u.grid, out, left, right, u.time_stamp + t)


# ---------------------------------------------------------------------------
# Quadrature backend

def _tail_nodes(order):
    # (0, 1] graded geometrically towards both ends
    edges = np.concatenate((2.0 ** -np.arange(32, 0, -1), 1.0 - 2.0 ** -np.arange(1, 33)))
    edges = np.concatenate(([0.0], edges, [1.0]))
    return _stable._panel_nodes(edges, order)


def _power_tail_integral(alpha, t, dist, cut, amplitude, beta, order):
    """int_cut^inf p(t, y - cut + dist) a y^(-beta) dy with y = cut/s, vectorized over dist."""
    s, w = _tail_nodes(order)
    weight = w * s ** (beta - 2.0)
    out = np.empty(dist.shape)
    for lo in range(0, dist.size, 1024):
        d = dist[lo:lo + 1024, None]
        out[lo:lo + 1024] = kernels.pdf(alpha, t, cut / s[None, :] - cut + d) @ weight
    return amplitude * cut ** (1.0 - beta) * out


def tail_convolution(tail: TailModel, alpha, t, x, cut):
    """int over the tail region beyond ``cut`` of p(t, x - y) tail(y) dy.

    The region is y > cut for a right tail and y < -cut for a left tail.
    Constant tails reduce to a kernel CDF.  Power-law tails are integrated
    with y = cut/s on panels graded towards s = 0 and s = 1.  A lower Gauss order
    is re-run on a subsample of points; relative disagreement above 1e-6 raises
    QuadratureError.
    """
    x = np.asarray(x, dtype=float)
    if tail.side is Side.LEFT:
        x = -x
    dist = cut - x  # distance from x to the start of the tail region
    if not tail.is_power:
        if tail.level == 0.0:
            return np.zeros_like(x)
        return tail.level * kernels.upper_tail(alpha, t, dist)
    if tail.amplitude == 0.0:
        return np.zeros_like(x)
    flat = dist.ravel()
    hi = _power_tail_integral(alpha, t, flat, cut, tail.amplitude, tail.exponent, 24)
    # certify on a subsample: every 32nd point plus the 64 points closest to the cut
    probe = np.union1d(np.arange(0, flat.size, 32), np.argsort(flat)[:64])
    lo = _power_tail_integral(alpha, t, flat[probe], cut, tail.amplitude, tail.exponent, 16)
    err = np.max(np.abs(hi[probe] - lo) / np.maximum(np.abs(hi[probe]), 1e-300))
    if err > 1e-6:
        raise kernels.QuadratureError("tail convolution did not converge", float(err))
    return hi.reshape(x.shape)


def apply_semigroup_quadrature(u: Field, t, alpha) -> Field:
    """Reference T_t u: trapezoid sum against sampled kernels plus tail integrals.

    The grid sum is evaluated as a zero-padded (non-periodic) linear
    convolution, so nothing wraps; the regions beyond the first and last node
    come from ``tail_convolution``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    g = u.grid
    n = g.N
    offsets = g.h * np.arange(-(n - 1), n)
    kern = kernels.pdf(alpha, t, offsets)
    # the trapezoid sum is meaningless once the kernel is narrower than a few cells
    mass = g.h * (kern.sum() - 0.5 * (kern[0] + kern[-1]))
    mismatch = abs(mass - (1.0 - 2.0 * float(kernels.upper_tail(alpha, t, offsets[-1]))))
    if mismatch > _KERNEL_MASS_TOL:
        raise kernels.QuadratureError(
            f"kernel under-resolved at t={t:g}: sampled mass off by {mismatch:.3g}", mismatch)
    weights = np.full(n, g.h)
    weights[[0, -1]] *= 0.5
    conv = signal.fftconvolve(kern, u.values * weights, mode="full")[n - 1:2 * n - 1]
    x = g.x
    out = (conv + tail_convolution(u.left_tail, alpha, t, x, g.L)
           + tail_convolution(u.right_tail, alpha, t, x, g.L - g.h))
    left, right = retail(g, out, u.left_tail, u.right_tail, alpha)
    return Field(g, out, left, right, u.time_stamp + t)


# ---------------------------------------------------------------------------
# Pointwise convolution on the whole line and semigroup bounds

def convolve_quad(alpha, t, x, datum, breakpoints=()):
    """(p(t, .) * datum)(x) by adaptive quadrature on the real line.

    ``breakpoints`` lists kinks of the datum.  The kernel peak at y = x is
    added automatically; the two outer pieces run to +-infinity.
    """
    width = t ** (0.5 / alpha)
    pts = sorted(set([float(b) for b in breakpoints]
                     + [x - 4.0 * width, x, x + 4.0 * width]))

    def integrand(y):
        return float(kernels.pdf(alpha, t, x - y)) * datum(y)

    opts = dict(epsabs=0.0, epsrel=1e-11, limit=400)
    total = integrate.quad(integrand, -np.inf, pts[0], **opts)[0]
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(integrand, a, b, **opts)[0]
    total += integrate.quad(integrand, pts[-1], np.inf, **opts)[0]
    return total


@dataclass
class BoundReport:
    """Measured constants of a two-sided semigroup bound over a probe set."""

    upper_constant: float
    lower_constant: float
    probes: list
    upper_ratios: list = field(repr=False)
    lower_ratios: list = field(repr=False)
    values: list = field(repr=False)

    @property
    def finite(self):
        return (math.isfinite(self.upper_constant) and math.isfinite(self.lower_constant)
                and self.lower_constant > 0)


def _bound_report(probes, values, upper_ref, lower_ref):
    up = [v / r for v, r in zip(values, upper_ref) if r is not None]
    low = [v / r for v, r in zip(values, lower_ref) if r is not None]
    return BoundReport(max(up) if up else math.nan, min(low) if low else math.nan,
                       list(probes), up, low, list(values))


def _grid_probes(t_probes, x_probes):
    return [(float(t), float(x)) for t in t_probes for x in x_probes]


def check_hr_bounds(alpha, a0=1.0, r0=1.0, t_probes=(1.0, 2.0, 4.0, 8.0),
                    x_probes=(10.0, 30.0, 100.0), n=1) -> BoundReport:
    """Measured C and c for the truncated power datum v0.

    v0 = a0 |x|^(-1-2 alpha) for |x| >= r0 and a0 r0^(-1-2 alpha) inside.
    Upper ratio: T_t v0 / ((1 + r0^(-2 alpha) t) a0 |x|^(-1-2 alpha)).
    Lower ratio: T_t v0 / (t/(t^(1/(2 alpha)+1) + 1) a0 |x|^(-1-2 alpha)), |x| >= r0 only.
    """
    if n != 1:
        raise ValueError("pointwise semigroup bounds are evaluated for n = 1")
    if r0 < 1:
        raise ValueError("r0 must be at least 1")
    beta = 1.0 + 2.0 * alpha

    def v0(y):
        return a0 * max(abs(y), r0) ** -beta

    probes = _grid_probes(t_probes, x_probes)
    values, upper, lower = [], [], []
    for t, x in probes:
        values.append(convolve_quad(alpha, t, x, v0, (-r0, r0)))
        envelope = a0 * abs(x) ** -beta
        upper.append((1.0 + r0 ** (-2.0 * alpha) * t) * envelope)
        lower.append(t / (t ** (0.5 / alpha + 1.0) + 1.0) * envelope if abs(x) >= r0 else None)
    return _bound_report(probes, values, upper, lower)


def check_hi_bounds(alpha, a0=1.0, x0=-1.0, t_probes=(1.0, 2.0, 4.0, 8.0),
                    x_probes=(-10.0, -30.0, -100.0)) -> BoundReport:
    """Measured C and c for the nondecreasing datum V0.

    V0 = a0 |x|^(-2 alpha) for x <= x0 and a0 |x0|^(-2 alpha) for x >= x0.
    The upper ratio uses probes with x < 2 x0, the lower ratio probes with x < x0.
    """
    if x0 > -1:
        raise ValueError("x0 must be at most -1")
    beta = 2.0 * alpha

    def v0(y):
        return a0 * abs(min(y, x0)) ** -beta

    probes = _grid_probes(t_probes, x_probes)
    values, upper, lower = [], [], []
    for t, x in probes:
        values.append(convolve_quad(alpha, t, x, v0, (x0,)))
        envelope = a0 * abs(x) ** -beta
        upper.append((1.0 + abs(x0) ** -beta * t) * envelope if x < 2.0 * x0 else None)
        lower.append(t / (t ** (0.5 / alpha + 1.0) + 1.0) * envelope if x < x0 else None)
    return _bound_report(probes, values, upper, lower)


def check_w_gamma_bounds(alpha, gamma, t_probes=(0.5, 1.0, 2.0, 4.0),
                         x_probes=(0.0, 1.0, 3.0, 10.0, 30.0)) -> BoundReport:
    """Measured C_gamma, c_gamma for w(x) = |x|^gamma.

    Upper ratio T_t w / (|x|^gamma + t^(gamma/(2 alpha))) at every probe; lower
    ratio T_t w / |x|^gamma where |x| >= t^(1/(2 alpha)).
    """
    if not 0.0 < gamma < 2.0 * alpha:
        raise ValueError("gamma must lie in (0, 2 alpha) for T_t |x|^gamma to be finite")

    def w(y):
        return abs(y) ** gamma

    probes = _grid_probes(t_probes, x_probes)
    values, upper, lower = [], [], []
    for t, x in probes:
        values.append(convolve_quad(alpha, t, x, w, (0.0,)))
        upper.append(abs(x) ** gamma + t ** (gamma / (2.0 * alpha)))
        lower.append(abs(x) ** gamma if abs(x) >= t ** (0.5 / alpha) and x != 0 else None)
    return _bound_report(probes, values, upper, lower)


# ---------------------------------------------------------------------------
# Initial data

_GAUSS8 = np.polynomial.legendre.leggauss(8)


def _time_average(fn, x):
    """int_1^2 fn(s, x) ds by 8-point Gauss-Legendre in s."""
    nodes, weights = _GAUSS8
    s = 1.5 + 0.5 * nodes
    return sum(0.5 * w * fn(sk, x) for sk, w in zip(s, weights))


def canonical_decaying_datum(alpha, grid: GridSpec, n=1) -> Field:
    """u0 = int_1^2 p(s, .) ds: even, decreasing in |x|, decaying like |x|^(-1-2 alpha)."""
    if n != 1:
        raise ValueError("fields are one-dimensional")
    values = _time_average(lambda s, x: kernels.pdf(alpha, s, x), grid.x)
    if alpha < 1.0:
        beta = 1.0 + 2.0 * alpha
        tails = [TailModel.power(side, fit_power_amplitude(grid, values, side, beta), beta)
                 for side in (Side.LEFT, Side.RIGHT)]
    else:
        tails = [TailModel.constant(side, 0.0) for side in (Side.LEFT, Side.RIGHT)]
    return Field(grid, values, *tails)


def canonical_monotone_datum(alpha, grid: GridSpec) -> Field:
    """u0 = int_1^2 P(s, .) ds: nondecreasing, from 0 at -infinity to 1 at +infinity."""
    values = _time_average(lambda s, x: kernels.cdf(alpha, s, x), grid.x)
    if alpha < 1.0:
        beta = 2.0 * alpha
        left = TailModel.power(Side.LEFT, fit_power_amplitude(grid, values, Side.LEFT, beta), beta)
    else:
        left = TailModel.constant(Side.LEFT, 0.0)
    return Field(grid, values, left, TailModel.constant(Side.RIGHT, 1.0))


def heaviside_datum(grid: GridSpec) -> Field:
    """Unit step with the symmetric value 1/2 at the jump."""
    x = grid.x
    values = np.where(x > 0, 1.0, 0.0)
    values[x == 0] = 0.5
    return Field(grid, values, TailModel.constant(Side.LEFT, 0.0),
                 TailModel.constant(Side.RIGHT, 1.0))


def truncated_power_datum(alpha, a0, r0, grid: GridSpec, beta=None) -> Field:
    """a0 |x|^(-beta) outside [-r0, r0], flat a0 r0^(-beta) inside; beta defaults to 1 + 2 alpha."""
    beta = 1.0 + 2.0 * alpha if beta is None else beta
    values = a0 * np.maximum(np.abs(grid.x), r0) ** -beta
    return Field(grid, values, TailModel.power(Side.LEFT, a0, beta),
                 TailModel.power(Side.RIGHT, a0, beta))


def truncated_monotone_datum(alpha, a0, x0, grid: GridSpec) -> Field:
    """a0 |x|^(-2 alpha) for x <= x0 and the constant a0 |x0|^(-2 alpha) for x >= x0."""
    beta = 2.0 * alpha
    values = a0 * np.abs(np.minimum(grid.x, x0)) ** -beta
    return Field(grid, values, TailModel.power(Side.LEFT, a0, beta),
                 TailModel.constant(Side.RIGHT, a0 * abs(x0) ** -beta))


# ---------------------------------------------------------------------------

@dataclass
class RadialReport:
    preserved: bool
    precondition_ok: bool
    max_asymmetry: float
    max_increase: float
    reason: str = ""


def _radial_defects(values, mask):
    v = values[1:]
    m = mask[1:]
    asym = float(np.max(np.abs(v - v[::-1])[m]))
    half = v[v.size // 2:]  # x >= 0 (the node x = 0 is the first entry)
    mh = m[v.size // 2:]
    rise = np.diff(half)[mh[1:] & mh[:-1]]
    return asym, float(max(np.max(rise), 0.0))


def check_radial_monotone_preservation(u: Field, t, alpha, slack=1e-9) -> RadialReport:
    """Does T_t keep an even, radially nonincreasing field even and nonincreasing?"""
    mask = u.grid.interior_mask()
    asym0, rise0 = _radial_defects(u.values, mask)
    if asym0 > slack or rise0 > slack:
        return RadialReport(False, False, asym0, rise0, "input is not even and radially nonincreasing")
    out = apply_semigroup_spectral(u, t, alpha)
    asym, rise = _radial_defects(out.values, mask)
    ok = asym <= slack and rise <= slack
    return RadialReport(ok, True, asym, rise, "" if ok else "property lost after evolution")
