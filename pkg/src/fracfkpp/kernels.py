"""Symmetric alpha-stable transition densities and checks of their structural properties.

The density p(t, x) is the inverse Fourier transform of exp(-t |xi|^(2 alpha)).
Two members have closed forms: the Cauchy kernel (alpha = 1/2) and the
Gaussian heat kernel (alpha = 1).  Every other alpha is evaluated by
numerical Fourier inversion in one dimension.

Two evaluation paths exist for the general case.  ``eval_stable_kernel`` runs
the certified quadrature on every call and serves as the oracle.  The
``pdf``/``cdf``/``pdf_dx`` helpers go through a cached Chebyshev/series table
and are what the PDE code uses on grids with half a million points.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gamma

from fracfkpp import _stable
from fracfkpp._stable import QuadratureError, tail_constant, tail_constant_n

__all__ = [
    "Strategy",
    "KernelSpec",
    "ComparabilityReport",
    "QuadratureError",
    "eval_cauchy_kernel",
    "eval_gaussian_kernel",
    "eval_stable_kernel",
    "q_bound",
    "stable_cdf",
    "pdf",
    "pdf_dx",
    "cdf",
    "upper_tail",
    "verify_p3",
    "default_probes",
    "chapman_kolmogorov_residual",
    "normalization_error",
    "tail_limit_sequence",
    "tail_constant",
    "tail_constant_n",
    "absolute_moment",
]


class Strategy(enum.Enum):
    CAUCHY = "CauchyClosedForm"
    GAUSSIAN = "GaussianClosedForm"
    FOURIER = "FourierInversion"


@dataclass(frozen=True)
class KernelSpec:
    """Identifies one transition density: dimension, stability index, evaluation route."""

    n: int = 1
    alpha: float = 0.5
    strategy: Strategy = Strategy.FOURIER

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.n!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        strategy = Strategy(self.strategy)
        object.__setattr__(self, "strategy", strategy)
        if strategy is Strategy.CAUCHY and self.alpha != 0.5:
            raise ValueError("the Cauchy closed form requires alpha = 1/2")
        if strategy is Strategy.GAUSSIAN and self.alpha != 1.0:
            raise ValueError("the Gaussian closed form requires alpha = 1")
        if strategy is Strategy.FOURIER and self.n != 1:
            raise ValueError("Fourier inversion is implemented for n = 1 only")

    @classmethod
    def for_alpha(cls, alpha, n=1):
        """Pick the closed form when one exists, otherwise Fourier inversion."""
        if alpha == 0.5:
            return cls(n, 0.5, Strategy.CAUCHY)
        if alpha == 1.0:
            return cls(n, 1.0, Strategy.GAUSSIAN)
        return cls(n, float(alpha), Strategy.FOURIER)

    @property
    def scale_exponent(self):
        """1/(2 alpha): the kernel width grows like t**scale_exponent."""
        return 0.5 / self.alpha


@dataclass
class ComparabilityReport:
    """Outcome of probing B^-1 q <= p <= B q."""

    measured_B: float
    sample_grid: list = field(repr=False)
    max_upper_ratio: float
    min_lower_ratio: float
    ratios: np.ndarray = field(repr=False, default=None)


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("time must be strictly positive")
    return t


def _radius(x):
    return np.abs(np.asarray(x, dtype=float))


def eval_cauchy_kernel(t, x, n=1):
    """Closed-form alpha = 1/2 kernel B_n t / (t^2 + |x|^2)^((n+1)/2).

    For n >= 2, ``x`` is the distance |x| from the origin.
    """
    t = _check_time(t)
    r = _radius(x)
    b_n = gamma(0.5 * (n + 1)) * math.pi ** (-0.5 * (n + 1))
    return b_n * t / (t * t + r * r) ** (0.5 * (n + 1))


def eval_gaussian_kernel(t, x, n=1):
    """Heat kernel of the symbol exp(-t |xi|^2), i.e. variance 2t per coordinate."""
    t = _check_time(t)
    r = _radius(x)
    return (4.0 * math.pi * t) ** (-0.5 * n) * np.exp(-r * r / (4.0 * t))


def eval_stable_kernel(spec: KernelSpec, t, x):
    """p(t, x) for ``spec``; Fourier inversion is recomputed and certified on each call."""
    t = _check_time(t)
    if spec.strategy is Strategy.CAUCHY:
        return eval_cauchy_kernel(t, x, spec.n)
    if spec.strategy is Strategy.GAUSSIAN:
        return eval_gaussian_kernel(t, x, spec.n)
    r = _radius(x)
    t, r = np.broadcast_arrays(t, r)
    scale = t ** spec.scale_exponent
    vals = _stable.p1_quadrature(spec.alpha, (r / scale).ravel()).reshape(r.shape)
    out = vals / scale
    return out if out.ndim else float(out)


def q_bound(t, x, alpha, n=1):
    """Comparison profile q(t, x) = t / (t^(n/(2 alpha) + 1) + |x|^(n + 2 alpha))."""
    t = _check_time(t)
    r = _radius(x)
    return t / (t ** (0.5 * n / alpha + 1.0) + r ** (n + 2.0 * alpha))


# ---------------------------------------------------------------------------
# Table-backed fast evaluation (n = 1), used on simulation grids.

def pdf(alpha, t, x):
    """Vectorized one-dimensional p(t, x)."""
    if alpha == 0.5:
        return eval_cauchy_kernel(t, x)
    if alpha == 1.0:
        return eval_gaussian_kernel(t, x)
    s = float(t) ** (0.5 / alpha)
    return _stable.profile(alpha).pdf(np.asarray(x, dtype=float) / s) / s


def pdf_dx(alpha, t, x):
    """Spatial derivative of p(t, x)."""
    x = np.asarray(x, dtype=float)
    if alpha == 0.5:
        return -2.0 * t * x / (math.pi * (t * t + x * x) ** 2)
    if alpha == 1.0:
        return -x / (2.0 * t) * eval_gaussian_kernel(t, x)
    s = float(t) ** (0.5 / alpha)
    return _stable.profile(alpha).dpdf(x / s) / (s * s)


def upper_tail(alpha, t, x):
    """1 - P(t, x), computed without cancellation for large positive x."""
    x = np.asarray(x, dtype=float)
    if alpha == 0.5:
        # arctan complement: 1/2 - arctan(x/t)/pi = arctan(t/x)/pi for x > 0
        return np.where(x > 0, np.arctan2(t, x) / math.pi,
                        0.5 - np.arctan(x / t) / math.pi)
    if alpha == 1.0:
        return 0.5 * erfc(x / (2.0 * math.sqrt(t)))
    s = float(t) ** (0.5 / alpha)
    z = x / s
    prof = _stable.profile(alpha)
    up = prof.upper_tail(np.abs(z))
    return np.where(z >= 0, up, 1.0 - up)


def cdf(alpha, t, x):
    """P(t, x) = int_{-inf}^x p(t, y) dy, vectorized."""
    return upper_tail(alpha, t, -np.asarray(x, dtype=float))


def stable_cdf(spec: KernelSpec, t, x):
    """Cumulative distribution of the one-dimensional kernel."""
    if spec.n != 1:
        raise ValueError("the cumulative distribution is defined for n = 1")
    _check_time(t)
    out = cdf(spec.alpha, float(t), x)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Structural checks

def default_probes(t_range=(0.1, 10.0), x_max=100.0, n_t=9, n_x=25):
    """Log-spaced (t, x) probe grid including x = 0 and negative x."""
    ts = np.geomspace(*t_range, n_t)
    xs = np.geomspace(1e-2, x_max, n_x)
    xs = np.concatenate(([0.0], xs, -xs))
    return [(float(t), float(x)) for t in ts for x in xs]


def verify_p3(spec: KernelSpec, probes) -> ComparabilityReport:
    """Measure the smallest B with B^-1 q <= p <= B q over ``probes``."""
    probes = list(probes)
    if not probes:
        raise ValueError("at least one probe is required")
    ts = np.array([p[0] for p in probes], dtype=float)
    xs = np.array([p[1] for p in probes], dtype=float)
    _check_time(ts)
    p = np.array([eval_stable_kernel(spec, t, x) for t, x in zip(ts, xs)], dtype=float)
    q = q_bound(ts, xs, spec.alpha, spec.n)
    ratios = p / q
    upper = float(np.max(ratios))
    lower = float(np.min(ratios))
    measured = max(upper, 1.0 / lower) if lower > 0 else math.inf
    return ComparabilityReport(measured, probes, upper, lower, ratios)


def _kernel_vec(spec, t, x):
    """Oracle evaluation that accepts any array shape."""
    x = np.asarray(x, dtype=float)
    return np.asarray(eval_stable_kernel(spec, t, x.ravel()), dtype=float).reshape(x.shape)


def _graded_panels(center, width, levels=30):
    """Panel edges on [center - width, center + width], refined geometrically at ``center``."""
    h = width * 2.0 ** -np.arange(levels, -1, -1)
    return np.concatenate((center - h[::-1], [center], center + h))


def chapman_kolmogorov_residual(spec: KernelSpec, s, t, x):
    """|(p(t) * p(s))(x) - p(t + s, x)| for the one-dimensional kernel.

    The convolution is split into a core [-Y, Y], handled by Gauss-Legendre
    panels graded at the two peaks y = 0 and y = x, and two tails folded onto
    (0, 1] by y = Y/u.  The tail integrand behaves like u^(4 alpha) near u = 0,
    which is the analytic power-law decay of both factors.
    """
    if spec.n != 1:
        raise ValueError("the convolution check is one-dimensional")
    _check_time([s, t])
    x = float(x)
    width = max(s, t) ** spec.scale_exponent
    y_max = 60.0 * width + 2.0 * abs(x)

    edges = np.union1d(_graded_panels(0.0, 2.0 * width), _graded_panels(x, 2.0 * width))
    edges = np.union1d(edges, np.linspace(-y_max, y_max, 241))
    edges = edges[(edges >= -y_max) & (edges <= y_max)]
    yn, yw = _stable._panel_nodes(edges, 20)
    core = np.sum(yw * _kernel_vec(spec, t, x - yn) * _kernel_vec(spec, s, yn))

    un, uw = _stable._panel_nodes(np.concatenate(([0.0], 2.0 ** -np.arange(40, -1, -1))), 20)
    tails = 0.0
    for sign in (1.0, -1.0):
        y = sign * y_max / un
        jac = y_max / un ** 2
        tails += np.sum(uw * jac * _kernel_vec(spec, t, x - y) * _kernel_vec(spec, s, y))
    total = core + tails
    return abs(total - float(eval_stable_kernel(spec, s + t, x)))


def normalization_error(spec: KernelSpec, t):
    """|int p(t, x) dx - 1| for the one-dimensional kernel.

    Panels are geometric in |x| up to X = 1e4 t^(1/(2 alpha)).  Beyond X the
    density is replaced by a two-term power law c1 x^(-1-2a) + c2 x^(-1-4a)
    fitted at X and 2X and integrated exactly.
    """
    if spec.n != 1:
        raise ValueError("normalization is checked in one dimension")
    _check_time(t)
    a = spec.alpha
    width = t ** spec.scale_exponent
    x_max = (40.0 if a == 1.0 else 1e4) * width
    edges = np.concatenate(([0.0], width * 2.0 ** np.arange(-20, math.log2(x_max / width) + 1e-9)))
    edges = np.union1d(edges, np.linspace(0.0, 8.0 * width, 33))
    xn, xw = _stable._panel_nodes(edges, 20)
    mass = 2.0 * np.sum(xw * _kernel_vec(spec, t, xn))
    x_top = edges[-1]
    if a < 1.0:
        pts = np.array([x_top, 2.0 * x_top])
        vals = _kernel_vec(spec, t, pts)
        basis = np.column_stack((pts ** (-1.0 - 2.0 * a), pts ** (-1.0 - 4.0 * a)))
        c1, c2 = np.linalg.solve(basis, vals)
        mass += 2.0 * (c1 * x_top ** (-2.0 * a) / (2.0 * a) + c2 * x_top ** (-4.0 * a) / (4.0 * a))
    return abs(mass - 1.0)


def tail_limit_sequence(spec: KernelSpec, radii=(1e2, 1e3, 1e4)):
    """|x|^(n+2 alpha) p(1, x) at the given radii; tends to the tail constant."""
    r = np.asarray(radii, dtype=float)
    return r ** (spec.n + 2.0 * spec.alpha) * _kernel_vec(spec, 1.0, r)


def absolute_moment(alpha, gamma_exp, t=1.0):
    """E|X_t|^gamma for the one-dimensional law, finite for gamma < 2 alpha."""
    if not 0.0 <= gamma_exp < 2.0 * alpha:
        raise ValueError("moment of order gamma exists only for gamma < 2 alpha")
    g = gamma_exp
    base = (2.0 ** g * math.gamma(0.5 * (1.0 + g)) * math.gamma(1.0 - g / (2.0 * alpha))
            / (math.sqrt(math.pi) * math.gamma(1.0 - 0.5 * g)))
    return base * t ** (g / (2.0 * alpha))
