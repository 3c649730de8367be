"""Radial C-infinity bump, its Fourier transforms, and derived integral tables.

Every explicit construction downstream (tube families, collision densities,
sharpness integrands) reduces to a single scalar profile chi together with a
handful of transforms, marginals, and moments.  This module builds those
tables once, with quadrature accuracy far beyond the tolerances any consumer
asserts, and exposes them through two small table-backed objects:

  * BumpProfile -- chi(r) = exp(1 - 1/(1 - r^2)) on r < 1, its 1D/2D/3D
    radial Fourier transforms on a logarithmic frequency grid, plane/line
    marginals, and scalar moments.
  * TimeCutoff  -- the even plateau window (1 on |t| <= plateau, smooth ramp
    to 0 at plateau + ramp) and its cosine transform.

Fourier convention: f_hat(eta) = integral f(x) exp(-2 pi i x.eta) dx, the same
unitary convention the spectral grids use, so tables and grid transforms can
be mixed freely.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import j0

__all__ = [
    "BumpProfile",
    "TimeCutoff",
    "chi",
    "chi_prime",
    "default_bump",
    "default_cutoff",
    "gauss_on",
]


# ---------------------------------------------------------------------------
# The profile and elementary quadrature helpers
# ---------------------------------------------------------------------------

def chi(r) -> np.ndarray:
    """The radial bump exp(1 - 1/(1 - r^2)) for |r| < 1, zero outside.

    chi(0) = 1, chi is even, nonnegative, nonincreasing in |r|, and vanishes
    with all derivatives at |r| = 1 (it underflows to an exact 0.0 well before
    the edge, so support tests hold in floating point, not just in analysis).
    """
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape)
    inside = np.abs(r) < 1.0
    if np.any(inside):
        q = 1.0 - r[inside] ** 2
        out[inside] = np.exp(1.0 - 1.0 / q)
    return out


def chi_prime(r) -> np.ndarray:
    """d chi / dr (odd; equals -2r/(1-r^2)^2 * chi inside the support)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape)
    inside = np.abs(r) < 1.0
    if np.any(inside):
        ri = r[inside]
        q = 1.0 - ri**2
        out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * ri) / q**2
    return out


@lru_cache(maxsize=32)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def gauss_on(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b].

    Above 128 nodes the rule is assembled from 64-node panels (node finding
    is quadratic in the order, and a composite rule of the same total count
    is just as accurate for the smooth/oscillatory integrands used here).
    """
    if not b > a:
        raise ValueError("gauss_on needs b > a")
    n = int(n)
    if n <= 128:
        x, w = _legendre(n)
        half = 0.5 * (b - a)
        return a + half * (x + 1.0), half * w
    panels = -(-n // 64)
    edges = np.linspace(a, b, panels + 1)
    x, w = _legendre(64)
    half = 0.5 * (edges[1] - edges[0])
    nodes = (edges[:-1, None] + half * (x + 1.0)[None, :]).ravel()
    weights = np.broadcast_to(half * w, (panels, 64)).ravel().copy()
    return nodes, weights


# ---------------------------------------------------------------------------
# BumpProfile
# ---------------------------------------------------------------------------

class BumpProfile:
    """Tables for chi: radial transforms, marginals, and scalar moments.

    Attributes
    ----------
    r_grid, chi_table : the profile sampled on a uniform grid over [0, 1]
    rho_grid          : logarithmic frequency grid on [rho_min, rho_max]
    hat_tables        : dict dim -> transform values on rho_grid (dim=1,2,3)
    interp_order      : 3 (cubic spline between table nodes)
    integral_1d/2d/3d : integrals of chi over R^d (chi extended radially)
    l2sq_1d/2d/3d     : squared L^2 masses over R^d
    grad_l2sq_3d      : squared L^2 mass of the radial gradient over R^3
    sup_abs_grad      : max_r |chi'(r)|
    roundtrip_rel_error : sup-norm error of inverse-transforming the 3D table

    The transform pairs used (radial profiles, unitary e^{-2 pi i x.eta}):
        dim 1:  2  int chi(r) cos(2 pi rho r) dr
        dim 2:  2 pi int chi(r) J0(2 pi rho r) r dr
        dim 3:  4 pi int chi(r) sinc(2 rho r) r^2 dr      (numpy sinc)
    Below rho_min the transforms are evaluated by their even Taylor expansion
    about 0; beyond rho_max they are 0 (the tail is below 1e-12 there).
    """

    def __init__(self, n_radial: int = 512, rho_max: float = 64.0,
                 n_rho: int = 4096, quad_nodes: int = 2048):
        if rho_max < 16.0:
            raise ValueError("rho_max too small to reach the transform tail")
        self.interp_order = 3
        self.rho_min = 0.02
        self.rho_max = float(rho_max)

        self.r_grid = np.linspace(0.0, 1.0, int(n_radial))
        self.chi_table = chi(self.r_grid)

        rq, wq = gauss_on(0.0, 1.0, int(quad_nodes))
        cq = chi(rq)

        # moments ----------------------------------------------------------
        self.integral_1d = 2.0 * float(wq @ cq)
        self.integral_2d = 2.0 * np.pi * float(wq @ (cq * rq))
        self.integral_3d = 4.0 * np.pi * float(wq @ (cq * rq**2))
        self.l2sq_1d = 2.0 * float(wq @ cq**2)
        self.l2sq_2d = 2.0 * np.pi * float(wq @ (cq**2 * rq))
        self.l2sq_3d = 4.0 * np.pi * float(wq @ (cq**2 * rq**2))
        dq = chi_prime(rq)
        self.grad_l2sq_1d = 2.0 * float(wq @ dq**2)
        self.grad_l2sq_2d = 2.0 * np.pi * float(wq @ (dq**2 * rq))
        self.grad_l2sq_3d = 4.0 * np.pi * float(wq @ (dq**2 * rq**2))
        self.sup_abs_grad = float(np.max(np.abs(dq)))

        # transform tables ---------------------------------------------------
        self.rho_grid = np.exp(
            np.linspace(np.log(self.rho_min), np.log(self.rho_max), int(n_rho)))
        arg = np.outer(self.rho_grid, rq)  # (n_rho, quad)
        self.hat_tables = {
            1: 2.0 * (np.cos(2.0 * np.pi * arg) * cq) @ wq,
            2: 2.0 * np.pi * (j0(2.0 * np.pi * arg) * (cq * rq)) @ wq,
            3: 4.0 * np.pi * (np.sinc(2.0 * arg) * (cq * rq**2)) @ wq,
        }
        # Even Taylor data for rho < rho_min:  hat_d(rho) ~ zero_d - curv_d rho^2.
        four_pi2 = (2.0 * np.pi) ** 2
        self._hat_zero = {1: self.integral_1d, 2: self.integral_2d,
                          3: self.integral_3d}
        self._hat_curv = {
            1: four_pi2 * float(wq @ (cq * rq**2)),
            2: (four_pi2 / 4.0) * 2.0 * np.pi * float(wq @ (cq * rq**3)),
            3: (four_pi2 / 6.0) * 4.0 * np.pi * float(wq @ (cq * rq**4)),
        }
        logrho = np.log(self.rho_grid)
        self._hat_splines = {d: CubicSpline(logrho, self.hat_tables[d])
                             for d in (1, 2, 3)}

        # marginal tables ----------------------------------------------------
        # plane marginal of a radial 3D profile g: 2 pi int_{|s|}^1 g(w) w dw,
        # held as a right-cumulative table; line marginal by direct quadrature.
        rc = np.linspace(0.0, 1.0, 8192)
        gc = chi(rc)
        self._plane_grid = rc
        self._plane_cum = {
            False: 2.0 * np.pi * _right_cumtrapz(gc * rc, rc),
            True: 2.0 * np.pi * _right_cumtrapz(gc**2 * rc, rc),
        }
        s_grid = np.linspace(0.0, 1.0, 1024)
        self._line_grid = s_grid
        self._line_tables = {sq: _line_marginal_table(s_grid, sq)
                             for sq in (False, True)}

        self.roundtrip_rel_error = self._roundtrip_error()

    # -- evaluation -------------------------------------------------------

    def chi(self, r) -> np.ndarray:
        return chi(r)

    def hat(self, rho, dim: int = 3) -> np.ndarray:
        """Radial Fourier transform of chi over R^dim, interpolated."""
        if dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2, or 3")
        rho = np.abs(np.asarray(rho, dtype=float))
        out = np.zeros(rho.shape)
        small = rho < self.rho_min
        mid = (~small) & (rho <= self.rho_max)
        if np.any(small):
            out[small] = (self._hat_zero[dim]
                          - self._hat_curv[dim] * rho[small] ** 2)
        if np.any(mid):
            out[mid] = self._hat_splines[dim](np.log(rho[mid]))
        return out

    def plane_marginal(self, s, squared: bool = False) -> np.ndarray:
        """Integral of chi(|(s, u)|) (or chi^2) over u in R^2, as a function of s."""
        s = np.abs(np.asarray(s, dtype=float))
        table = self._plane_cum[bool(squared)]
        return np.interp(s, self._plane_grid, table, right=0.0)

    def line_marginal(self, s, squared: bool = False) -> np.ndarray:
        """Integral of chi(|(s, u)|) (or chi^2) over u in R^1."""
        s = np.abs(np.asarray(s, dtype=float))
        table = self._line_tables[bool(squared)]
        return np.interp(s, self._line_grid, table, right=0.0)

    # -- internal ----------------------------------------------------------

    def _roundtrip_error(self) -> float:
        """Sup-norm error of the inverse 3D transform of the table vs chi."""
        rho, w = gauss_on(0.0, self.rho_max, 4096)
        hat = self.hat(rho, dim=3)
        # inverse transform has the identical radial kernel
        kernel = np.sinc(2.0 * np.outer(self.r_grid, rho))
        rec = 4.0 * np.pi * (kernel * (hat * rho**2)) @ w
        return float(np.max(np.abs(rec - self.chi_table)))


def _right_cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Trapezoid-rule table of int_{x_i}^{x_end} y dx."""
    total = np.concatenate([[0.0], np.cumsum(
        0.5 * (y[1:] + y[:-1]) * np.diff(x))])
    return total[-1] - total


def _line_marginal_table(s_grid: np.ndarray, squared: bool) -> np.ndarray:
    out = np.zeros_like(s_grid)
    for i, s in enumerate(s_grid):
        span = 1.0 - s * s
        if span <= 0.0:
            continue
        u, w = gauss_on(0.0, np.sqrt(span), 96)
        g = chi(np.sqrt(s * s + u * u))
        if squared:
            g = g * g
        out[i] = 2.0 * float(w @ g)
    return out


@lru_cache(maxsize=1)
def default_bump() -> BumpProfile:
    """The shared default profile (built once per process)."""
    return BumpProfile()


# ---------------------------------------------------------------------------
# TimeCutoff
# ---------------------------------------------------------------------------

class TimeCutoff:
    """Even plateau window: 1 on |t| <= plateau, C-infinity ramp to 0.

    The ramp uses the same two-sided exponential step as the smooth dyadic
    projectors, so theta is identically 1 on the plateau and identically 0
    beyond plateau + ramp.  hat(a) tabulates the cosine transform
        2 int_0^inf theta(t) cos(2 pi a t) dt
    on [0, a_max] (theta is even, so this is the full Fourier transform).
    """

    def __init__(self, plateau: float = 1.0, ramp: float = 1.0,
                 a_max: float = 24.0, n_a: int = 2048):
        if plateau <= 0.0 or ramp <= 0.0:
            raise ValueError("plateau and ramp must be positive")
        self.plateau = float(plateau)
        self.ramp = float(ramp)
        self.a_max = float(a_max)
        t, w = gauss_on(0.0, self.plateau + self.ramp, 2048)
        th = self(t)
        self.a_grid = np.linspace(0.0, self.a_max, int(n_a))
        kernel = np.cos(2.0 * np.pi * np.outer(self.a_grid, t))
        self.hat_table = 2.0 * (kernel * (th * w)).sum(axis=1)
        self._hat_spline = CubicSpline(self.a_grid, self.hat_table)

    def __call__(self, t) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        u = (t - self.plateau) / self.ramp
        # falling C-inf step: 1 for u <= 0, 0 for u >= 1
        out = np.zeros(t.shape)
        lo = u <= 0.0
        hi = u >= 1.0
        mid = ~(lo | hi)
        out[lo] = 1.0
        if np.any(mid):
            um = u[mid]
            a = np.exp(-1.0 / (1.0 - um))
            b = np.exp(-1.0 / um)
            out[mid] = a / (a + b)
        return out

    def hat(self, a) -> np.ndarray:
        a = np.abs(np.asarray(a, dtype=float))
        out = np.zeros(a.shape)
        m = a <= self.a_max
        if np.any(m):
            out[m] = self._hat_spline(a[m])
        return out


@lru_cache(maxsize=1)
def default_cutoff() -> TimeCutoff:
    """The shared plateau window matching the sharpness integrand's cutoff."""
    return TimeCutoff()
