"""Phase-space grids, fields, spectral transforms, free transport, rescaling.

Conventions
-----------
Physical boxes are periodic: x in [-Lx, Lx)^3, v in [-Lv, Lv)^3, with uniform
grids starting at the left edge.  The forward Fourier transform carries the
2*pi in the exponent,

    fhat(eta) = integral f(x) exp(-2*pi*i x.eta) dx,

discretized so that spectral samples equal the continuum transform of the
periodized field (cell-volume scaling plus the (-1)^k edge phase).  With dual
spacing  d_eta = 1/(2L)  the weighted Plancherel identity

    sum |fhat|^2 d_eta^3 = sum |f|^2 dx^3

holds exactly, which is what "unitary" means throughout this package.

Free transport f0(x - v t, v) is the exact multiplier exp(-2*pi*i t eta.v) on
the (eta, v) representation; the same multiplier realizes the hyperbolic
Schrodinger group exp(i t grad_xi . grad_x) on the (x, xi) side.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_FULL_CAP = 24**6  # max total sample count for in-RAM Full storage


class FieldTag(enum.Enum):
    """Which axis groups of a PhaseField are in Fourier space."""

    Physical_xv = 0
    Spectral_eta_v = 1   # x -> eta
    Spectral_x_xi = 2    # v -> xi
    Spectral_eta_xi = 3  # both

    @property
    def x_spectral(self) -> bool:
        return self in (FieldTag.Spectral_eta_v, FieldTag.Spectral_eta_xi)

    @property
    def v_spectral(self) -> bool:
        return self in (FieldTag.Spectral_x_xi, FieldTag.Spectral_eta_xi)


def _tag_from(x_spec: bool, v_spec: bool) -> FieldTag:
    if x_spec and v_spec:
        return FieldTag.Spectral_eta_xi
    if x_spec:
        return FieldTag.Spectral_eta_v
    if v_spec:
        return FieldTag.Spectral_x_xi
    return FieldTag.Physical_xv


class Storage(enum.Enum):
    Full = 0
    VSliced = 1


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the periodic phase-space box [-Lx,Lx)^3 x [-Lv,Lv)^3."""

    nx: tuple[int, int, int]
    nv: tuple[int, int, int]
    Lx: float
    Lv: float
    storage: Storage = Storage.Full
    full_cap: int = DEFAULT_FULL_CAP

    def __post_init__(self):
        nx = tuple(int(n) for n in self.nx)
        nv = tuple(int(n) for n in self.nv)
        object.__setattr__(self, "nx", nx)
        object.__setattr__(self, "nv", nv)
        if len(nx) != 3 or len(nv) != 3:
            raise ValueError("nx and nv must be triples")
        for n in nx + nv:
            if not _is_pow2(n):
                raise ValueError(f"grid resolutions must be powers of two, got {n}")
        if not (self.Lx > 0 and self.Lv > 0):
            raise ValueError("box half-widths must be positive")
        if self.storage is Storage.Full and self.total_points > self.full_cap:
            raise ValueError(
                f"Full storage needs {self.total_points} points > cap {self.full_cap}; "
                "use VSliced storage or raise full_cap"
            )

    # -- sizes ---------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.nx + self.nv

    @property
    def total_points(self) -> int:
        return int(np.prod(self.nx, dtype=np.int64) * np.prod(self.nv, dtype=np.int64))

    @property
    def dx(self) -> np.ndarray:
        return np.array([2 * self.Lx / n for n in self.nx])

    @property
    def dv(self) -> np.ndarray:
        return np.array([2 * self.Lv / n for n in self.nv])

    @property
    def cell_x(self) -> float:
        """x-cell volume."""
        return float(np.prod(self.dx))

    @property
    def cell_v(self) -> float:
        return float(np.prod(self.dv))

    @property
    def d_eta(self) -> np.ndarray:
        return np.array([1.0 / (2 * self.Lx)] * 3)

    @property
    def d_xi(self) -> np.ndarray:
        return np.array([1.0 / (2 * self.Lv)] * 3)

    @property
    def cell_eta(self) -> float:
        return float(np.prod(self.d_eta))

    @property
    def cell_xi(self) -> float:
        return float(np.prod(self.d_xi))

    # -- axes ----------------------------------------------------------------
    def x_axis(self, a: int) -> np.ndarray:
        n = self.nx[a]
        return -self.Lx + (2 * self.Lx / n) * np.arange(n)

    def v_axis(self, a: int) -> np.ndarray:
        n = self.nv[a]
        return -self.Lv + (2 * self.Lv / n) * np.arange(n)

    def eta_axis(self, a: int) -> np.ndarray:
        """Dual-to-x frequencies in FFT order (cycles per unit length)."""
        n = self.nx[a]
        return np.fft.fftfreq(n, d=2 * self.Lx / n)

    def xi_axis(self, a: int) -> np.ndarray:
        n = self.nv[a]
        return np.fft.fftfreq(n, d=2 * self.Lv / n)

    def x_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.x_axis(a) for a in range(3)], indexing="ij")

    def v_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.v_axis(a) for a in range(3)], indexing="ij")

    def v_points(self) -> np.ndarray:
        """All v grid points as an (Nv, 3) array (C order over the v axes)."""
        V = self.v_mesh()
        return np.stack([c.ravel() for c in V], axis=-1)

    def x_points(self) -> np.ndarray:
        X = self.x_mesh()
        return np.stack([c.ravel() for c in X], axis=-1)


@dataclass
class PhaseField:
    """Complex samples over the 6D grid, indexed (x triple, v triple)."""

    grid: GridSpec
    data: np.ndarray
    tag: FieldTag = FieldTag.Physical_xv

    def __post_init__(self):
        if self.grid.storage is not Storage.Full:
            raise ValueError("PhaseField requires Full storage (see VSlicedField)")
        self.data = np.ascontiguousarray(self.data, dtype=np.complex128)
        if self.data.shape != self.grid.shape:
            raise ValueError(f"data shape {self.data.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.data.view(np.float64))):
            raise ValueError("field contains non-finite samples")

    def copy(self) -> "PhaseField":
        return PhaseField(self.grid, self.data.copy(), self.tag)

    def to(self, tag: FieldTag) -> "PhaseField":
        """Return this field re-represented under `tag` (no-op if already there)."""
        out = self
        if tag.x_spectral != out.tag.x_spectral:
            out = transform(out, "x", "forward" if tag.x_spectral else "inverse")
        if tag.v_spectral != out.tag.v_spectral:
            out = transform(out, "v", "forward" if tag.v_spectral else "inverse")
        return out

    def l2(self) -> float:
        """Physically weighted L2 norm in the current representation."""
        w = _cell_weight(self.grid, self.tag)
        return math.sqrt(w * float(np.sum(np.abs(self.data) ** 2)))

    def __add__(self, other: "PhaseField") -> "PhaseField":
        _check_compatible(self, other)
        return PhaseField(self.grid, self.data + other.data, self.tag)

    def __sub__(self, other: "PhaseField") -> "PhaseField":
        _check_compatible(self, other)
        return PhaseField(self.grid, self.data - other.data, self.tag)

    def __mul__(self, c) -> "PhaseField":
        return PhaseField(self.grid, self.data * c, self.tag)

    __rmul__ = __mul__


class VSlicedField:
    """Streaming stand-in for PhaseField: one x-grid per v point, produced on demand.

    `slice_fn(iv)` receives a v-axis index triple and must return the complex
    x-grid (shape grid.nx) of the field at that v point.  Only physical-space
    streaming is supported; spectral collision work requires Full storage.
    """

    def __init__(self, grid: GridSpec, slice_fn: Callable[[tuple[int, int, int]], np.ndarray],
                 tag: FieldTag = FieldTag.Physical_xv):
        if tag is not FieldTag.Physical_xv:
            raise ValueError("VSlicedField only supports the physical representation")
        self.grid = grid
        self.tag = tag
        self._slice_fn = slice_fn

    def v_slice(self, iv: tuple[int, int, int]) -> np.ndarray:
        out = np.asarray(self._slice_fn(tuple(iv)), dtype=np.complex128)
        if out.shape != self.grid.nx:
            raise ValueError("v_slice returned wrong shape")
        return out

    def iter_v(self) -> Iterator[tuple[tuple[int, int, int], np.ndarray]]:
        n1, n2, n3 = self.grid.nv
        for i in range(n1):
            for j in range(n2):
                for k in range(n3):
                    yield (i, j, k), self.v_slice((i, j, k))

    def materialize(self) -> PhaseField:
        grid = replace(self.grid, storage=Storage.Full)
        data = np.empty(grid.shape, dtype=np.complex128)
        for (i, j, k), sl in self.iter_v():
            data[:, :, :, i, j, k] = sl
        return PhaseField(grid, data, self.tag)


def _check_compatible(a: PhaseField, b: PhaseField) -> None:
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    if a.tag != b.tag:
        raise ValueError(f"tag mismatch: {a.tag} vs {b.tag}")


def _cell_weight(grid: GridSpec, tag: FieldTag) -> float:
    wx = grid.cell_eta if tag.x_spectral else grid.cell_x
    wv = grid.cell_xi if tag.v_spectral else grid.cell_v
    return wx * wv


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered snapshots sharing one grid."""

    times: np.ndarray
    fields: tuple
    uniform_dt: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(self.fields) != t.size or t.size < 1:
            raise ValueError("times and fields must have equal length >= 1")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        g0 = self.fields[0].grid
        if any(f.grid != g0 for f in self.fields):
            raise ValueError("all snapshots must share one GridSpec")

    def __len__(self) -> int:
        return len(self.fields)


@dataclass(frozen=True)
class ScalingTransform:
    """f -> lam^(alpha+2*beta) f(lam^alpha x, lam^beta v)."""

    lam: float
    alpha: float
    beta_exp: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def _edge_phase(n: int) -> np.ndarray:
    # grid starts at -L: continuum FT sample = (-1)^k * DFT coefficient
    k = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
    return np.where(k % 2 == 0, 1.0, -1.0)


def _apply_axes_phase(data: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    for ax in axes:
        shape = [1] * data.ndim
        shape[ax] = data.shape[ax]
        data = data * _edge_phase(data.shape[ax]).reshape(shape)
    return data


def transform(field: PhaseField, axes: str, direction: str) -> PhaseField:
    """Forward/inverse FT on the x axes, the v axes, or both.

    Forward on x maps Physical -> Spectral_eta (samples of the continuum FT);
    inverse undoes it exactly.  Raises "redundant transform" if the requested
    axis group is already in the requested representation.
    """
    if axes not in ("x", "v", "both"):
        raise ValueError("axes must be 'x', 'v', or 'both'")
    if direction not in ("forward", "inverse"):
        raise ValueError("direction must be 'forward' or 'inverse'")
    if axes == "both":
        mid = transform(field, "x", direction)
        return transform(mid, "v", direction)

    grid = field.grid
    want_spec = direction == "forward"
    have_spec = field.tag.x_spectral if axes == "x" else field.tag.v_spectral
    if want_spec == have_spec:
        raise ValueError(f"redundant transform: {axes} axes already "
                         f"{'spectral' if have_spec else 'physical'}")

    ax_ids = (0, 1, 2) if axes == "x" else (3, 4, 5)
    cell = grid.cell_x if axes == "x" else grid.cell_v
    n3 = int(np.prod(grid.nx if axes == "x" else grid.nv))

    if direction == "forward":
        out = np.fft.fftn(field.data, axes=ax_ids)
        out = _apply_axes_phase(out, ax_ids)
        out *= cell
    else:
        out = _apply_axes_phase(field.data, ax_ids)
        out = np.fft.ifftn(out, axes=ax_ids)
        out *= n3 / (cell * n3)  # = 1/cell; ifftn already divides by n3

    new_tag = _tag_from(
        want_spec if axes == "x" else field.tag.x_spectral,
        want_spec if axes == "v" else field.tag.v_spectral,
    )
    return PhaseField(grid, out, new_tag)


# ---------------------------------------------------------------------------
# free transport / hyperbolic Schrodinger propagator
# ---------------------------------------------------------------------------

def transport_multiplier(grid: GridSpec, t: float) -> list[np.ndarray]:
    """Per-axis-pair factors of exp(-2*pi*i t eta.v) on the (eta, v) grid."""
    out = []
    for a in range(3):
        eta = grid.eta_axis(a)
        v = grid.v_axis(a)
        ph = np.exp(-2j * np.pi * t * np.outer(eta, v))
        out.append(ph)
    return out


def free_transport(field: PhaseField, t: float) -> PhaseField:
    """Exact propagator f(t, x, v) = f0(x - v t, v) (periodic wrap).

    Implemented as the unimodular multiplier exp(-2*pi*i t eta.v) in the
    (eta, v) representation; preserves every v-slice L2 norm to rounding.
    """
    if field.tag not in (FieldTag.Physical_xv, FieldTag.Spectral_eta_v):
        raise ValueError("free_transport expects Physical_xv or Spectral_eta_v input")
    if t == 0.0:
        return field.copy()
    spec = field.to(FieldTag.Spectral_eta_v)
    data = spec.data
    for a, ph in enumerate(transport_multiplier(field.grid, t)):
        shape = [1] * 6
        shape[a] = ph.shape[0]
        shape[3 + a] = ph.shape[1]
        data = data * ph.reshape(shape)
    out = PhaseField(field.grid, data, FieldTag.Spectral_eta_v)
    return out.to(field.tag)


def gaussian_oracle(grid: GridSpec,
                    centers: tuple[Sequence[float], Sequence[float]],
                    widths: tuple[Sequence[float], Sequence[float]],
                    t: float = 0.0,
                    amplitude: float = 1.0) -> PhaseField:
    """Closed-form transported Gaussian: the separable profile

        f0(x,v) = A prod_a exp(-(x_a-cx_a)^2/(2 wx_a^2)) exp(-(v_a-cv_a)^2/(2 wv_a^2))

    sampled exactly along characteristics as f(t,x,v) = f0(x - v t, v).
    Raises "box too small" unless all tails carry relative mass < 1e-10
    inside the box for the requested time.
    """
    cx, cv = (np.asarray(c, dtype=float) for c in centers)
    wx, wv = (np.asarray(w, dtype=float) for w in widths)
    if np.any(wx <= 0) or np.any(wv <= 0):
        raise ValueError("widths must be positive")
    # 6.8 sigma leaves ~5e-12 of 1D mass outside; demand it for x (including the
    # transport displacement of the moving support) and for v.
    k = 6.8
    reach_v = np.abs(cv) + k * wv
    reach_x = np.abs(cx) + k * wx + abs(t) * reach_v
    if np.any(reach_x >= grid.Lx) or np.any(reach_v >= grid.Lv):
        raise ValueError("box too small for Gaussian support (tail mass > 1e-10)")

    data = np.full(grid.shape, amplitude, dtype=np.complex128)
    for a in range(3):
        x = grid.x_axis(a)
        v = grid.v_axis(a)
        arg_x = (x[:, None] - v[None, :] * t - cx[a]) / wx[a]
        prof = np.exp(-0.5 * arg_x**2) * np.exp(-0.5 * ((v[None, :] - cv[a]) / wv[a]) ** 2)
        shape = [1] * 6
        shape[a] = x.size
        shape[3 + a] = v.size
        data *= prof.reshape(shape)
    return PhaseField(grid, data, FieldTag.Physical_xv)


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------

def _resample_axis_factor(m: float) -> tuple[int, int]:
    """Express a sampling stretch f(m*x) as (stride p, refine q): m = p/q with
    integer p, q and small q; raises if m is not a dyadic rational."""
    from fractions import Fraction

    fr = Fraction(m).limit_denominator(64)
    if abs(fr - m) > 1e-12:
        raise ValueError(f"scale factor {m} is not a small rational; unsupported")
    if fr.denominator & (fr.denominator - 1):
        raise ValueError(f"scale denominator {fr.denominator} not a power of two")
    return fr.numerator, fr.denominator


def _mass_outside(data: np.ndarray, grid: GridSpec, shrink_x: float, shrink_v: float) -> float:
    """Relative |f| mass the stretch would push past the box edge.

    The output at coordinate x reads the input at m*x, so for m < 1 the input
    region |s| >= m*L never lands inside the output box: mass there is lost.
    For m >= 1 nothing is lost (the check region lies outside the grid).
    """
    tot = float(np.sum(np.abs(data)))
    if tot == 0.0:
        return 0.0
    mask = np.zeros(grid.shape, dtype=bool)
    for a in range(3):
        x = grid.x_axis(a)
        bad = np.abs(x) >= grid.Lx * shrink_x
        if bad.any():
            sh = [1] * 6
            sh[a] = x.size
            mask |= bad.reshape(sh)
    for a in range(3):
        v = grid.v_axis(a)
        bad = np.abs(v) >= grid.Lv * shrink_v
        if bad.any():
            sh = [1] * 6
            sh[3 + a] = v.size
            mask |= bad.reshape(sh)
    return float(np.sum(np.abs(data)[mask])) / tot


def _refine_axes(data: np.ndarray, axes: Sequence[int], q: int) -> np.ndarray:
    """Trigonometric refinement by factor q along the given axes (zero-padding)."""
    if q == 1:
        return data
    out = data
    for ax in axes:
        n = out.shape[ax]
        spec = np.fft.fft(out, axis=ax)
        pad_shape = list(spec.shape)
        pad_shape[ax] = n * q
        padded = np.zeros(pad_shape, dtype=np.complex128)
        idx_lo = [slice(None)] * out.ndim
        idx_lo[ax] = slice(0, n // 2)
        idx_hi = [slice(None)] * out.ndim
        idx_hi[ax] = slice(-(n // 2), None)
        src_lo = [slice(None)] * out.ndim
        src_lo[ax] = slice(0, n // 2)
        src_hi = [slice(None)] * out.ndim
        src_hi[ax] = slice(-(n // 2), None)
        padded[tuple(idx_lo)] = spec[tuple(src_lo)]
        padded[tuple(idx_hi)] = spec[tuple(src_hi)]
        out = np.fft.ifft(padded, axis=ax) * q
    return out


def rescale(field: PhaseField, s: ScalingTransform) -> PhaseField:
    """lam^(alpha+2*beta) f(lam^alpha x, lam^beta v), exactly when the axis
    stretches are dyadic rationals (spectral refinement + integer stride);
    the support must fit the box after stretching."""
    if field.tag is not FieldTag.Physical_xv:
        raise ValueError("rescale expects the physical representation")
    mx = s.lam**s.alpha
    mv = s.lam**s.beta_exp
    if _mass_outside(field.data, field.grid, mx, mv) > 1e-10:
        raise ValueError("support escapes box under rescale")
    px, qx = _resample_axis_factor(mx)
    pv, qv = _resample_axis_factor(mv)

    data = field.data
    data = _refine_axes(data, (0, 1, 2), qx)
    data = _refine_axes(data, (3, 4, 5), qv)

    out = np.zeros(field.grid.shape, dtype=np.complex128)
    # index map on the refined grid: point m*x_j has refined index p*j - (p-q)*n_ref/2...
    # refined axis i <-> coordinate -L + i*(2L/(n*q)); target m*x_j = -L*m + j*m*2L/n.
    # i(j) = (m*x_j + L) * n*q/(2L) = p*j + (q - p) * n/2   (integer since n even).
    def axis_index(n: int, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
        j = np.arange(n)
        i = p * j + ((q - p) * n) // 2
        ok = (i >= 0) & (i < n * q)
        return j[ok], i[ok]

    jx, ix = zip(*[axis_index(field.grid.nx[a], px, qx) for a in range(3)])
    jv, iv = zip(*[axis_index(field.grid.nv[a], pv, qv) for a in range(3)])
    amp = s.lam ** (s.alpha + 2 * s.beta_exp)
    sub = data[np.ix_(ix[0], ix[1], ix[2], iv[0], iv[1], iv[2])]
    out[np.ix_(jx[0], jx[1], jx[2], jv[0], jv[1], jv[2])] = amp * sub
    return PhaseField(field.grid, out, FieldTag.Physical_xv)
