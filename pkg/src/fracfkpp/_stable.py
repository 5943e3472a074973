"""Numerics for the symmetric stable density with Fourier symbol exp(-|xi|^(2 alpha)).

Everything here works on the unit-time profile

    p1(z) = (1/pi) * int_0^inf cos(xi z) exp(-xi^(2 alpha)) dxi,

from which the kernel follows by scaling, p(t, x) = t^(-1/(2 alpha)) p1(x t^(-1/(2 alpha))).
"""

import functools
import math

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.special import gammaln


class QuadratureError(ArithmeticError):
    """Raised when a quadrature cannot certify its requested tolerance."""

    def __init__(self, message, bound):
        super().__init__(f"{message} (estimated error {bound:.3e})")
        self.bound = bound


# exp(-37) < 1e-16: truncation point of the symbol.
_SYMBOL_CUTOFF = 37.0
_QUAD_TOL = 1e-11
_RAY_SWITCH = 400.0


@functools.lru_cache(maxsize=None)
def _gl(n):
    return np.polynomial.legendre.leggauss(n)


def _panel_nodes(edges, n):
    """Composite Gauss-Legendre nodes/weights on consecutive panels given by ``edges``."""
    x, w = _gl(n)
    a = np.asarray(edges[:-1])[:, None]
    b = np.asarray(edges[1:])[:, None]
    half = 0.5 * (b - a)
    nodes = (a + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def _graded_edges(length, n_uniform, n_geometric):
    """Uniform panels on [0, length] with the first one split geometrically towards 0."""
    first = length / n_uniform
    geo = first * 2.0 ** -np.arange(n_geometric, -1, -1)
    return np.concatenate(([0.0], geo, first * np.arange(2, n_uniform + 1)))


def symbol_cutoff(alpha, t=1.0):
    """Frequency beyond which exp(-t xi^(2 alpha)) < 1e-16."""
    return (_SYMBOL_CUTOFF / t) ** (1.0 / (2.0 * alpha))


def _p1_real_axis(alpha, z, n):
    xi_max = symbol_cutoff(alpha)
    n_panels = max(16, int(math.ceil(np.max(z, initial=0.0) * xi_max / 2.0)))
    edges = _graded_edges(xi_max, n_panels, 52)
    nodes, weights = _panel_nodes(edges, n)
    integrand = np.exp(-nodes ** (2.0 * alpha)) * weights
    return np.cos(np.outer(z, nodes)) @ integrand / math.pi


def _ray_angle(alpha):
    return 0.8 * min(0.5 * math.pi, 0.25 * math.pi / alpha)


def _p1_ray(alpha, z, n):
    # Rotate the inversion contour to xi = r e^{i theta}; the z-oscillation turns into decay.
    # expm1 removes the i/z leading term, which carries no real part.
    theta = _ray_angle(alpha)
    rot = np.exp(1j * theta)
    rot2a = np.exp(2j * alpha * theta)
    # expm1(...) stays bounded, so only exp(i z xi) has to decay for truncation
    r_max = _SYMBOL_CUTOFF / (z * math.sin(theta))
    edges = _graded_edges(1.0, 24, 52)
    s, w = _panel_nodes(edges, n)
    r = r_max[:, None] * s[None, :]
    phase = 1j * z[:, None] * r * rot
    vals = np.exp(phase) * -np.expm1(-(r ** (2.0 * alpha)) * rot2a)
    # the exp(phase) factor alone integrates to i/z whose real part after rotation vanishes
    integral = -(vals @ w) * r_max * rot
    return integral.real / math.pi


def p1_quadrature(alpha, z, tol=_QUAD_TOL):
    """Unit-time stable density by Fourier inversion, vectorized over ``z``.

    Small arguments use a cosine transform on [0, Xi] with Gauss-Legendre
    panels graded towards the origin.  When |z| Xi > 400 the contour is rotated
    into the upper half plane, which replaces oscillation by exponential decay.
    Each value is computed at two orders; disagreement beyond ``tol`` raises
    QuadratureError.
    """
    z = np.abs(np.atleast_1d(np.asarray(z, dtype=float)))
    out = np.empty_like(z)
    xi_max = symbol_cutoff(alpha)
    near = z * xi_max <= _RAY_SWITCH
    for mask, fn in ((near, _p1_real_axis), (~near, _p1_ray)):
        if not mask.any():
            continue
        lo = fn(alpha, z[mask], 20)
        hi = fn(alpha, z[mask], 28)
        err = np.max(np.abs(hi - lo) / np.maximum(1.0, np.abs(hi)))
        if not np.isfinite(err) or err > tol:
            raise QuadratureError("Fourier inversion did not converge", float(err))
        out[mask] = hi
    return out


def tail_constant(alpha):
    """lim_{|y|->inf} |y|^(1+2 alpha) p1(y) for the one-dimensional stable law."""
    if alpha >= 1.0:
        return 0.0
    return math.gamma(1.0 + 2.0 * alpha) * math.sin(math.pi * alpha) / math.pi


def tail_constant_n(alpha, n):
    """Same limit in dimension n: alpha 4^alpha Gamma((n+2 alpha)/2) / (pi^(n/2) Gamma(1-alpha))."""
    if alpha >= 1.0:
        return 0.0
    return (alpha * 4.0 ** alpha * math.gamma(0.5 * (n + 2.0 * alpha))
            / (math.pi ** (0.5 * n) * math.gamma(1.0 - alpha)))


def series_coefficients(alpha, k_max):
    """Coefficients b_k of p1(z) ~ sum_k b_k z^(-1-2 alpha k) (Bergstrom expansion)."""
    k = np.arange(1, k_max + 1, dtype=float)
    log_mag = gammaln(2.0 * alpha * k + 1.0) - gammaln(k + 1.0)
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    return sign * np.exp(log_mag) * np.sin(math.pi * alpha * k) / math.pi


def _series_terms_needed(alpha, z, rel=1e-17, k_max=120, window=8):
    """Number of Bergstrom terms giving relative accuracy ``rel`` at ``z``, or None.

    The cut is placed where a whole window of following terms is negligible, so
    isolated zero coefficients (sin(pi alpha k) = 0) do not end the sum early.
    """
    b = series_coefficients(alpha, k_max + window)
    k = np.arange(1, k_max + window + 1)
    mag = np.abs(b) * z ** (-2.0 * alpha * k)
    lead = abs(b[0])
    if lead == 0.0:
        return None
    for kk in range(1, k_max):
        if np.all(mag[kk:kk + window] < rel * lead):
            return kk
    return None


class StableProfile:
    """Fast vectorized p1, its derivative and its CDF for one alpha in (0, 1).

    Piecewise Chebyshev interpolants of the quadrature values on [0, Z],
    Bergstrom tail series beyond Z.  Accuracy is ~1e-13 absolute.
    """

    def __init__(self, alpha, degree=40):
        if not 0.0 < alpha < 1.0:
            raise ValueError("StableProfile needs alpha in (0, 1)")
        self.alpha = alpha
        z_switch = 4.0
        while True:
            k = _series_terms_needed(alpha, z_switch)
            if k is not None and k <= 100:
                break
            z_switch *= 2.0
            if z_switch > 2.0 ** 14:
                raise QuadratureError("tail series never converges", float("inf"))
        self.z_switch = z_switch
        self.n_terms = k
        self.coef = series_coefficients(alpha, k)
        self.powers = 1.0 + 2.0 * alpha * np.arange(1, k + 1)

        edges = [0.0] + list(2.0 ** np.arange(-5, math.log2(z_switch) + 1))
        pieces = []
        for a, b in zip(edges[:-1], edges[1:]):
            pieces.extend(self._fit(a, b, degree))
        self.edges = np.array([p.domain[0] for p in pieces] + [pieces[-1].domain[1]])
        self.pdf_pieces = pieces
        self.dpdf_pieces = [p.deriv() for p in pieces]
        cdf = []
        acc = 0.5
        for p in pieces:
            anti = p.integ(lbnd=p.domain[0], k=acc)
            cdf.append(anti)
            acc = float(anti(p.domain[1]))
        self.cdf_pieces = cdf
        self._cdf_switch = acc

    def _fit(self, a, b, degree):
        fn = functools.partial(p1_quadrature, self.alpha)
        piece = Chebyshev.interpolate(fn, degree, domain=[a, b])
        scale = np.max(np.abs(piece.coef[:4]))
        if np.max(np.abs(piece.coef[-4:])) > 1e-13 * max(scale, 1e-3) and b - a > 1e-9:
            mid = 0.5 * (a + b)
            return self._fit(a, mid, degree) + self._fit(mid, b, degree)
        return [piece]

    def _piecewise(self, pieces, z):
        out = np.empty_like(z)
        idx = np.searchsorted(self.edges, z, side="right") - 1
        np.clip(idx, 0, len(pieces) - 1, out=idx)
        for j, piece in enumerate(pieces):
            sel = np.nonzero(idx == j)[0]
            if sel.size:
                out[sel] = piece(z[sel])
        return out

    def _series(self, z, extra_power=0.0, weights=None):
        """sum_k w_k z^(-1 - 2 alpha k - extra), by Horner's rule in z^(-2 alpha)."""
        w = self.coef if weights is None else weights
        u = z ** (-2.0 * self.alpha)
        acc = np.zeros_like(z)
        for c in w[::-1]:
            acc = acc * u + c
        return acc * u * z ** (-1.0 - extra_power)

    def pdf(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        flat = z.ravel()
        out = np.empty_like(flat)
        far = flat >= self.z_switch
        out[~far] = self._piecewise(self.pdf_pieces, flat[~far])
        out[far] = self._series(flat[far])
        return out.reshape(z.shape)

    def dpdf(self, z):
        """Derivative of p1 (odd in z)."""
        z = np.asarray(z, dtype=float)
        a = np.abs(z).ravel()
        out = np.empty_like(a)
        far = a >= self.z_switch
        out[~far] = self._piecewise(self.dpdf_pieces, a[~far])
        out[far] = self._series(a[far], 1.0, -self.coef * self.powers)
        return (np.sign(z).ravel() * out).reshape(z.shape)

    def upper_tail(self, z):
        """1 - P1(z) for z >= 0, accurate in the far tail."""
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        out = np.empty_like(flat)
        far = flat >= self.z_switch
        out[~far] = 1.0 - self._piecewise(self.cdf_pieces, flat[~far])
        out[far] = self._series(flat[far], -1.0, self.coef / (self.powers - 1.0))
        return out.reshape(z.shape)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        up = self.upper_tail(np.abs(z))
        return np.where(z >= 0, 1.0 - up, up)


@functools.lru_cache(maxsize=16)
def profile(alpha):
    return StableProfile(float(alpha))
