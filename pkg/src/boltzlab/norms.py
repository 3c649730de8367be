"""Weighted Sobolev, mixed Lebesgue, Z, Littlewood-Paley, space-time, and
cutoff modulation norms.

Weight conventions (fixed once, used consistently package-wide):

* Japanese brackets of spectral variables use the frequency in cycles:
  <eta> = sqrt(1 + |eta|^2), likewise <v>, and the modulation bracket
  <tau + eta.v> with tau in cycles.
* The spatial gradient grad_x is the honest derivative, symbol 2*pi*i*eta.
* Mixed Lebesgue norms are v-outer / x-inner, written "Lv{p}[,{r}]_Lx{q}"
  (e.g. "Lv2,1_Lx2" for the <v>-weighted L2_v of the L2_x norm, "Lv1_LxInf").
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from boltzlab.grids import (
    FieldTag,
    GridSpec,
    PhaseField,
    Trajectory,
    VSlicedField,
    transform,
)

Field = Union[PhaseField, VSlicedField]


# ---------------------------------------------------------------------------
# meshes and smooth steps
# ---------------------------------------------------------------------------

def eta_abs2(grid: GridSpec) -> np.ndarray:
    """|eta|^2 on the x-frequency block, shape grid.nx."""
    out = np.zeros(grid.nx)
    for a in range(3):
        e = grid.eta_axis(a)
        sh = [1, 1, 1]
        sh[a] = e.size
        out = out + (e**2).reshape(sh)
    return out


def xi_abs2(grid: GridSpec) -> np.ndarray:
    out = np.zeros(grid.nv)
    for a in range(3):
        e = grid.xi_axis(a)
        sh = [1, 1, 1]
        sh[a] = e.size
        out = out + (e**2).reshape(sh)
    return out


def v_abs2(grid: GridSpec) -> np.ndarray:
    out = np.zeros(grid.nv)
    for a in range(3):
        v = grid.v_axis(a)
        sh = [1, 1, 1]
        sh[a] = v.size
        out = out + (v**2).reshape(sh)
    return out


def smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity monotone step: 0 for t<=0, 1 for t>=1."""
    t = np.asarray(t, dtype=float)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~(lo | hi)
    out = np.where(hi, 1.0, 0.0)
    if np.any(mid):
        tm = t[mid]
        a = np.exp(-1.0 / tm)
        b = np.exp(-1.0 / (1.0 - tm))
        out[mid] = a / (a + b)
    return out


def plateau_window(u: np.ndarray, width: float) -> np.ndarray:
    """C-infinity window on [0,1]: 0 at the ends, 1 on [width, 1-width]."""
    if not 0.0 < width <= 0.5:
        raise ValueError("window width must lie in (0, 1/2]")
    u = np.asarray(u, dtype=float)
    return smoothstep(u / width) * smoothstep((1.0 - u) / width)


# ---------------------------------------------------------------------------
# Sobolev / homogeneous weighted norms
# ---------------------------------------------------------------------------

def _xhat_slices(field: Field):
    """Yield (v-index triple, x-spectral slice) pairs; streams VSliced fields."""
    if isinstance(field, PhaseField):
        spec = field.to(FieldTag.Spectral_eta_v)
        n1, n2, n3 = field.grid.nv
        for i in range(n1):
            for j in range(n2):
                for k in range(n3):
                    yield (i, j, k), spec.data[:, :, :, i, j, k]
    else:
        g = field.grid
        phase = np.ones(g.nx)
        for a in range(3):
            k = np.fft.fftfreq(g.nx[a], d=1.0 / g.nx[a]).astype(np.int64)
            sgn = np.where(k % 2 == 0, 1.0, -1.0)
            sh = [1, 1, 1]
            sh[a] = g.nx[a]
            phase = phase * sgn.reshape(sh)
        for iv, sl in field.iter_v():
            yield iv, np.fft.fftn(sl) * phase * g.cell_x


def _weighted_l2(field: Field, x_weight2: np.ndarray, v_weight2: np.ndarray) -> float:
    """sqrt( sum |fhat(eta,v)|^2 xw2(eta) vw2(v) d_eta^3 dv^3 )."""
    grid = field.grid
    if isinstance(field, PhaseField):
        spec = field.to(FieldTag.Spectral_eta_v)
        acc = np.einsum(
            "abcijk,abc,ijk->",
            np.abs(spec.data) ** 2, x_weight2, v_weight2, optimize=True)
    else:
        acc = 0.0
        for iv, xhat in _xhat_slices(field):
            acc += float(np.sum(np.abs(xhat) ** 2 * x_weight2)) * v_weight2[iv]
    return math.sqrt(float(acc) * grid.cell_eta * grid.cell_v)


def sobolev_norm(field: Field, s: float, r: float) -> float:
    """|| <eta>^s <v>^r fhat(eta, v) ||_{L2}  (spectral in x, physical in v)."""
    if not (np.isfinite(s) and np.isfinite(r)):
        raise ValueError("s and r must be finite")
    grid = field.grid
    xw2 = (1.0 + eta_abs2(grid)) ** s
    vw2 = (1.0 + v_abs2(grid)) ** r
    return _weighted_l2(field, xw2, vw2)


def homogeneous_norm(field: Field, s: float, r: float) -> float:
    """|| |eta|^s |v|^r fhat ||_{L2}: the scale-covariant counterpart.

    The zero mode carries zero weight for s > 0 (and weight one at s = 0).
    """
    if not (np.isfinite(s) and np.isfinite(r)):
        raise ValueError("s and r must be finite")
    grid = field.grid
    with np.errstate(divide="ignore"):
        xw2 = eta_abs2(grid) ** s
        vw2 = v_abs2(grid) ** r
    if s > 0:
        xw2[np.isnan(xw2)] = 0.0
        xw2[0, 0, 0] = 0.0
    if r > 0:
        vw2[np.isnan(vw2)] = 0.0
    return _weighted_l2(field, xw2, vw2)


def apply_bracket_weights(field: PhaseField, s: float, r: float) -> PhaseField:
    """The operator <grad_x>^s <v>^r (bracket symbol in cycles), physical output."""
    spec = field.to(FieldTag.Spectral_eta_v)
    xw = (1.0 + eta_abs2(field.grid)) ** (s / 2.0)
    vw = (1.0 + v_abs2(field.grid)) ** (r / 2.0)
    data = spec.data * xw[:, :, :, None, None, None] * vw[None, None, None, :, :, :]
    out = PhaseField(field.grid, data, FieldTag.Spectral_eta_v)
    return out.to(field.tag)


def grad_x_magnitude(field: PhaseField) -> PhaseField:
    """|grad_x f| pointwise (Euclidean length over the three x-derivatives)."""
    spec = field.to(FieldTag.Spectral_eta_v)
    acc = np.zeros(field.grid.shape)
    for a in range(3):
        eta = field.grid.eta_axis(a)
        sh = [1] * 6
        sh[a] = eta.size
        deriv = spec.data * (2j * np.pi) * eta.reshape(sh)
        comp = transform(PhaseField(field.grid, deriv, FieldTag.Spectral_eta_v),
                         "x", "inverse")
        acc += np.abs(comp.data) ** 2
    return PhaseField(field.grid, np.sqrt(acc).astype(complex), FieldTag.Physical_xv)


# ---------------------------------------------------------------------------
# mixed Lebesgue norms, v-outer / x-inner
# ---------------------------------------------------------------------------

_MIXED_RE = re.compile(
    r"^Lv(?P<p>Inf|\d+(?:\.\d+)?)(?:,(?P<r>-?\d+(?:\.\d+)?))?"
    r"_Lx(?P<q>Inf|\d+(?:\.\d+)?)$")


def parse_mixed_order(order: str) -> tuple[float, float, float]:
    """-> (p, r, q) with inf for 'Inf'; raises on anything else."""
    m = _MIXED_RE.match(order)
    if not m:
        raise ValueError(f"unsupported mixed norm order {order!r}; "
                         "expected 'Lv{p}[,{r}]_Lx{q}' like 'Lv2,1_Lx2'")
    p = np.inf if m["p"] == "Inf" else float(m["p"])
    q = np.inf if m["q"] == "Inf" else float(m["q"])
    r = float(m["r"]) if m["r"] else 0.0
    if p < 1 or q < 1:
        raise ValueError(f"unsupported mixed norm order {order!r}: exponents must be >= 1")
    return p, r, q


def mixed_norm(field: Field, order: str) -> float:
    """Discrete  || <v>^r  || f(x, v) ||_{Lx^q}  ||_{Lv^p}  with cell weights."""
    p, r, q = parse_mixed_order(order)
    grid = field.grid

    def inner(xslab: np.ndarray) -> float:
        m = np.abs(xslab)
        if q == np.inf:
            return float(m.max())
        return float(np.sum(m**q) * grid.cell_x) ** (1.0 / q)

    vw2 = (1.0 + v_abs2(grid)) ** (r / 2.0)

    if isinstance(field, PhaseField):
        if field.tag is not FieldTag.Physical_xv:
            field = field.to(FieldTag.Physical_xv)
        slick = field.data
        inner_vals = np.empty(grid.nv)
        n1, n2, n3 = grid.nv
        for i in range(n1):
            for j in range(n2):
                for k in range(n3):
                    inner_vals[i, j, k] = inner(slick[:, :, :, i, j, k])
    else:
        inner_vals = np.empty(grid.nv)
        for iv, sl in field.iter_v():
            inner_vals[iv] = inner(sl)

    weighted = vw2 * inner_vals
    if p == np.inf:
        return float(weighted.max())
    return float(np.sum(weighted**p) * grid.cell_v) ** (1.0 / p)


def z_norm(field: PhaseField, M: float) -> float:
    """M ||f||_{Lv^{2,1}Lx^2} + ||grad_x f||_{Lv^{2,1}Lx^2}
       + ||f||_{Lv^1Lx^inf} + M^{-1} ||grad_x f||_{Lv^1Lx^inf}."""
    if not M >= 1:
        raise ValueError("Z norm requires M >= 1")
    g = grad_x_magnitude(field)
    return (M * mixed_norm(field, "Lv2,1_Lx2")
            + mixed_norm(g, "Lv2,1_Lx2")
            + mixed_norm(field, "Lv1_LxInf")
            + mixed_norm(g, "Lv1_LxInf") / M)


# ---------------------------------------------------------------------------
# Littlewood-Paley projectors
# ---------------------------------------------------------------------------

def _cumulative_step(u: np.ndarray, k: int) -> np.ndarray:
    """S_k: C-inf step rising across the half-octave [k - 3/4, k - 1/4] in log2."""
    return smoothstep((u - (k - 0.75)) * 2.0)


def _lp_multiplier(abs2: np.ndarray, dyad: int, label: str) -> np.ndarray:
    if dyad < 1 or (dyad & (dyad - 1)):
        raise ValueError(f"dyad must be a power of two, got {dyad}")
    fmax = math.sqrt(float(abs2.max()))
    k = dyad.bit_length() - 1  # dyad = 2^k
    if k >= 1 and 2.0 ** (k - 0.75) >= fmax:
        raise ValueError(
            f"dyad {dyad} outside resolved range of the {label} axis "
            f"(annulus starts above the grid's max frequency {fmax:.3g})")
    with np.errstate(divide="ignore"):
        u = 0.5 * np.log2(np.where(abs2 > 0, abs2, 1.0))
    u = np.where(abs2 > 0, u, -np.inf)
    if k == 0:
        return 1.0 - _cumulative_step(u, 1)
    return _cumulative_step(u, k) - _cumulative_step(u, k + 1)


def lp_dyads(grid: GridSpec, axis: str) -> list[int]:
    """The dyadic labels {1, 2, 4, ...} forming an exact partition on this grid.

    Only dyads whose annulus reaches into the resolved frequency range are
    listed; the first excluded step function vanishes identically on the grid,
    so the listed projections still telescope exactly to the identity.
    """
    abs2 = eta_abs2(grid) if axis == "x" else xi_abs2(grid)
    fmax = math.sqrt(float(abs2.max()))
    out = [1]
    k = 1
    while 2.0 ** (k - 0.75) < fmax:
        out.append(2**k)
        k += 1
    return out


def lp_project(field: PhaseField, axis: str, dyad: int) -> PhaseField:
    """Smooth dyadic frequency projector on the x (axis='x') or v-dual
    (axis='xi') frequencies; dyad=1 is the low block.  Projections over
    lp_dyads() sum exactly to the identity (telescoping steps)."""
    if axis not in ("x", "xi"):
        raise ValueError("axis must be 'x' or 'xi'")
    grid = field.grid
    if axis == "x":
        mult = _lp_multiplier(eta_abs2(grid), dyad, "x")
        spec = field.to(_tag_with_x_spectral(field.tag))
        data = spec.data * mult[:, :, :, None, None, None]
        out = PhaseField(grid, data, spec.tag)
    else:
        mult = _lp_multiplier(xi_abs2(grid), dyad, "xi")
        spec = field.to(_tag_with_v_spectral(field.tag))
        data = spec.data * mult[None, None, None, :, :, :]
        out = PhaseField(grid, data, spec.tag)
    return out.to(field.tag)


def _tag_with_x_spectral(tag: FieldTag) -> FieldTag:
    return FieldTag.Spectral_eta_xi if tag.v_spectral else FieldTag.Spectral_eta_v


def _tag_with_v_spectral(tag: FieldTag) -> FieldTag:
    return FieldTag.Spectral_eta_xi if tag.x_spectral else FieldTag.Spectral_x_xi


# ---------------------------------------------------------------------------
# space-time norms
# ---------------------------------------------------------------------------

def _check_uniform(traj: Trajectory) -> float:
    t = traj.times
    if len(t) < 2:
        return 0.0
    dts = np.diff(t)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * max(abs(dts[0]), 1e-300):
        raise ValueError("trajectory must be uniformly sampled in time")
    return float(dts[0])


def spacetime_norm(traj: Trajectory, q: float, p: float, r: float | None = None) -> float:
    """L^q in t of the L^p norm over (x, xi).

    With r given, the xi exponent differs from the x exponent (the
    scaling-degenerate variant used to demonstrate failure of p != r).
    Snapshot norms are taken in the (x, xi) representation; time uses the
    composite trapezoid rule (q=inf takes the max over snapshots).
    """
    if not (q >= 1 and p >= 1 and (r is None or r >= 1)):
        raise ValueError("exponents must lie in [1, inf]")
    grid = traj.fields[0].grid

    def snap(field: PhaseField) -> float:
        fx = field.to(FieldTag.Spectral_x_xi)
        m = np.abs(fx.data)
        if r is None or r == p:
            if p == np.inf:
                return float(m.max())
            return float(np.sum(m**p) * grid.cell_x * grid.cell_xi) ** (1.0 / p)
        # inner x with exponent p, outer xi with exponent r
        if p == np.inf:
            inner = m.max(axis=(0, 1, 2))
        else:
            inner = (np.sum(m**p, axis=(0, 1, 2)) * grid.cell_x) ** (1.0 / p)
        if r == np.inf:
            return float(inner.max())
        return float(np.sum(inner**r) * grid.cell_xi) ** (1.0 / r)

    vals = np.array([snap(f) for f in traj.fields])
    if q == np.inf or len(traj) == 1:
        return float(vals.max())
    return float(np.trapezoid(vals**q, traj.times)) ** (1.0 / q)


def xsb_norm(traj: Trajectory, s: float, b: float, cutoff_width: float = 0.25) -> float:
    """Cutoff modulation norm || <tau + eta.v>^b <eta>^s <v>^s (theta f)^ ||_{L2}.

    The trajectory is multiplied by the plateau window theta((t-t0)/T), FFT'd
    in time per (eta, v) mode, and weighted.  This is the computable proxy for
    the restricted-infimum definition (an upper bound).
    """
    dt = _check_uniform(traj)
    nt = len(traj)
    if nt < 2:
        raise ValueError("modulation norm needs at least 2 snapshots")
    T = traj.times[-1] - traj.times[0] + dt  # window period for the DFT
    if cutoff_width * nt < 4:
        raise ValueError(
            "window too short for cutoff: fewer than 4 samples in the taper")

    grid = traj.fields[0].grid
    u = (traj.times - traj.times[0]) / (traj.times[-1] - traj.times[0])
    theta = plateau_window(u, cutoff_width)

    stack = np.stack([f.to(FieldTag.Spectral_eta_v).data for f in traj.fields])
    stack *= theta.reshape((-1,) + (1,) * 6)
    fhat = np.fft.fft(stack, axis=0) * dt
    tau = np.fft.fftfreq(nt, d=dt)

    etav = np.zeros(grid.nx + grid.nv)
    for a in range(3):
        e = grid.eta_axis(a)
        v = grid.v_axis(a)
        sh = [1] * 6
        sh[a] = e.size
        sh[3 + a] = v.size
        etav = etav + np.outer(e, v).reshape(sh)

    xw2 = (1.0 + eta_abs2(grid)) ** s
    vw2 = (1.0 + v_abs2(grid)) ** s
    acc = 0.0
    for k in range(nt):  # stream over tau to bound memory
        mod2 = (1.0 + (tau[k] + etav) ** 2) ** b
        w2 = mod2 * xw2[:, :, :, None, None, None] * vw2[None, None, None, :, :, :]
        acc += float(np.sum(np.abs(fhat[k]) ** 2 * w2))
    dtau = 1.0 / T
    return math.sqrt(acc * dtau * grid.cell_eta * grid.cell_v)


# ---------------------------------------------------------------------------
# NormSpec dispatcher
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    """A named norm with parameters; evaluate() dispatches to the functions above."""

    kind: str
    params: tuple

    @classmethod
    def sobolev(cls, s: float, r: float) -> "NormSpec":
        if not (np.isfinite(s) and np.isfinite(r)):
            raise ValueError("s and r must be finite")
        return cls("sobolev", (float(s), float(r)))

    @classmethod
    def mixed(cls, order: str) -> "NormSpec":
        parse_mixed_order(order)  # validate eagerly
        return cls("mixed", (order,))

    @classmethod
    def z(cls, M: float) -> "NormSpec":
        if not M >= 1:
            raise ValueError("Z norm requires M >= 1")
        return cls("z", (float(M),))

    @classmethod
    def spacetime(cls, q: float, p: float) -> "NormSpec":
        if not (q >= 1 and p >= 1):
            raise ValueError("exponents must lie in [1, inf]")
        return cls("spacetime", (float(q), float(p)))

    @classmethod
    def xsb(cls, s: float, b: float, cutoff_width: float = 0.25) -> "NormSpec":
        if not (np.isfinite(s) and np.isfinite(b)):
            raise ValueError("s and b must be finite")
        if not 0 < cutoff_width <= 0.5:
            raise ValueError("cutoff width must lie in (0, 1/2]")
        return cls("xsb", (float(s), float(b), float(cutoff_width)))

    def evaluate(self, obj) -> float:
        if self.kind == "sobolev":
            return sobolev_norm(obj, *self.params)
        if self.kind == "mixed":
            return mixed_norm(obj, *self.params)
        if self.kind == "z":
            return z_norm(obj, *self.params)
        if self.kind == "spacetime":
            return spacetime_norm(obj, *self.params)
        if self.kind == "xsb":
            return xsb_norm(obj, *self.params)
        raise ValueError(f"unknown norm kind {self.kind!r}")
