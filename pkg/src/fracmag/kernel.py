"""Interaction kernels K(x, y).

The closed form is the standard fractional Laplacian kernel
``c_{n,s} |x - y|^{-n-2s}``.  The heat-kernel route builds
``K = C int_0^inf p_t(x, y) t^{-1-s} dt`` with ``C = 1/|Gamma(-s)|`` from
either the exact Gaussian (M = identity) or an explicit finite-difference
heat solver for a diagonal, spatially varying coefficient M (experimental).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, gammaincc

from .quadrature import gauss01

KERNEL_MODES = ("closed_form", "heat_identity", "heat_numeric")


def fractional_constant(n: int, s: float) -> float:
    """``c_{n,s} = 4^s Gamma(n/2 + s) / (pi^{n/2} |Gamma(-s)|)``."""
    return 4.0 ** s * gamma(n / 2 + s) / (np.pi ** (n / 2) * abs(gamma(-s)))


@dataclass(frozen=True)
class KernelSpec:
    """Kernel description.

    ``constant`` overrides ``c_{n,s}`` (set it to 1 for the pure power kernel
    used by the Sobolev seminorms).  The ``m_*`` fields describe the diagonal
    coefficient ``M_ii(x) = m_base[i] * (1 + m_amp * bump(x))`` used by
    ``heat_numeric``.
    """

    mode: str = "closed_form"
    n: int = 1
    s: float = 0.5
    constant: float | None = None
    m_base: tuple[float, ...] = ()
    m_amp: float = 0.0
    m_center: tuple[float, ...] = ()
    m_radius: float = 1.0
    time_ratio_max: float = 1e8
    time_panels: int = 40
    t_min: float = 1e-3
    t_max: float = 2.0
    log_grid: int = 48
    dx: float = 0.05
    dt: float | None = None

    def __post_init__(self):
        if self.mode not in KERNEL_MODES:
            raise ValueError(f"kernel.mode: unknown mode {self.mode!r}")
        if not 0 < self.s < 1:
            raise ValueError("kernel.s must lie in (0, 1)")
        if self.n not in (1, 2):
            raise ValueError("kernel.n must be 1 or 2")
        if self.c <= 0:
            raise ValueError("kernel constant must be positive")
        if self.mode == "heat_numeric":
            if self.m_base and len(self.m_base) != self.n:
                raise ValueError("kernel.m_base needs one entry per dimension")
            if self.m_amp <= -1:
                raise ValueError("kernel.m_amp must exceed -1")

    @property
    def c(self) -> float:
        return fractional_constant(self.n, self.s) if self.constant is None else float(self.constant)

    @property
    def base(self) -> np.ndarray:
        return np.asarray(self.m_base or (1.0,) * self.n, dtype=float)

    @property
    def ellipticity(self) -> float:
        """Smallest ``C_M`` with ``C_M^{-1} <= M_ii <= C_M``."""
        lo = self.base.min() * min(1.0, 1.0 + self.m_amp)
        hi = self.base.max() * max(1.0, 1.0 + self.m_amp)
        return float(max(hi, 1.0 / lo))

    def m_diag(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.m_amp == 0.0:
            return np.broadcast_to(self.base, pts.shape).copy()
        c = np.asarray(self.m_center or (0.0,) * self.n)
        rho2 = np.sum((pts - c) ** 2, axis=1) / self.m_radius ** 2
        bump = np.zeros(len(pts))
        inside = rho2 < 1
        bump[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
        return self.base[None, :] * (1.0 + self.m_amp * bump)[:, None]


def _pairs(x, y, n):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0 or (x.ndim == 1 and n > 1 and x.shape[0] == n):
        x = x.reshape(1, -1) if x.ndim else x.reshape(1, 1)
    if y.ndim == 0 or (y.ndim == 1 and n > 1 and y.shape[0] == n):
        y = y.reshape(1, -1) if y.ndim else y.reshape(1, 1)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    return x, y


def _scalar_out(val, x, y):
    xa, ya = np.asarray(x), np.asarray(y)
    if xa.ndim <= 1 and ya.ndim <= 1 and val.size == 1:
        return float(val.reshape(-1)[0])
    return val


def power_kernel(dist: np.ndarray, n: int, s: float, c: float) -> np.ndarray:
    """``c * dist^{-n-2s}`` for distances already computed."""
    return c * dist ** (-(n + 2.0 * s))


def fractional_kernel(x, y, spec: KernelSpec):
    """Closed-form kernel; ``x`` and ``y`` are points or stacks of points."""
    xs, ys = _pairs(x, y, spec.n)
    d = np.linalg.norm(xs - ys, axis=-1)
    if np.any(d == 0):
        raise ValueError("fractional_kernel is singular at x = y")
    return _scalar_out(power_kernel(d, spec.n, spec.s, spec.c), x, y)


def heat_kernel_gaussian(x, y, t: float, n: int):
    """Heat kernel of the Laplacian: ``(4 pi t)^{-n/2} exp(-|x-y|^2 / 4t)``."""
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    xs, ys = _pairs(x, y, n)
    d2 = np.sum((xs - ys) ** 2, axis=-1)
    val = (4 * np.pi * t) ** (-n / 2) * np.exp(-d2 / (4 * t))
    return _scalar_out(val, x, y)


# ----------------------------------------------------------------------------
# Heat-kernel construction of K
# ----------------------------------------------------------------------------

@dataclass
class HeatKernelValue:
    value: float
    head: float
    body: float
    tail_bound: float

    @property
    def tail_fraction(self) -> float:
        return self.tail_bound / self.value


def _gaussian_head(d2eff: float, n: int, s: float, t0: float, prefactor: float) -> float:
    """``int_0^t0 pre (4 pi t)^{-n/2} exp(-d2eff/4t) t^{-1-s} dt`` in closed form."""
    a = n / 2 + s
    u0 = d2eff / (4.0 * t0)
    return prefactor * np.pi ** (-n / 2) * 4.0 ** s * d2eff ** (-a) * gamma(a) * gammaincc(a, u0)


def _log_time_rule(t0: float, t1: float, panels: int, q: int = 8):
    lo, hi = np.log(t0), np.log(t1)
    edges = np.linspace(lo, hi, panels + 1)
    g, w = gauss01(q)
    tau = (edges[:-1, None] + np.diff(edges)[:, None] * g[None, :]).ravel()
    wt = (np.diff(edges)[:, None] * w[None, :]).ravel()
    return np.exp(tau), wt


def _heat_identity_value(d: float, spec: KernelSpec) -> HeatKernelValue:
    n, s = spec.n, spec.s
    C = 1.0 / abs(gamma(-s))
    t0 = d * d
    t1 = spec.time_ratio_max * t0
    head = _gaussian_head(d * d, n, s, t0, 1.0)
    t, w = _log_time_rule(t0, t1, spec.time_panels)
    # d(log t): integrand p_t t^{-1-s} dt = p_t t^{-s} d(log t)
    pt = (4 * np.pi * t) ** (-n / 2) * np.exp(-d * d / (4 * t))
    body = float(np.sum(w * pt * t ** (-s)))
    tail = (4 * np.pi) ** (-n / 2) * t1 ** (-n / 2 - s) / (n / 2 + s)
    scale = C * spec.c / fractional_constant(n, s)
    return HeatKernelValue(scale * (head + body), scale * head, scale * body, scale * tail)


def kernel_from_heat(x, y, spec: KernelSpec, details: bool = False):
    """``K(x,y) = C int_0^inf p_t(x,y) t^{-1-s} dt`` with ``C = 1/|Gamma(-s)|``.

    For ``heat_identity`` the time integral is split at ``t0 = |x-y|^2``: the
    part below uses the closed-form Gaussian integral (an upper incomplete
    gamma function), the part above a log-spaced Gauss rule, and the part
    beyond the last time is bounded analytically.  Raises if that bound
    exceeds 1% of the value.
    """
    xs, ys = _pairs(x, y, spec.n)
    xs, ys = np.broadcast_arrays(xs, ys)
    out = []
    for xi, yi in zip(xs.reshape(-1, spec.n), ys.reshape(-1, spec.n)):
        d = float(np.linalg.norm(xi - yi))
        if d == 0:
            raise ValueError("kernel_from_heat is singular at x = y")
        if spec.mode == "heat_numeric":
            res = _heat_numeric_value(xi, yi, spec)
        else:
            res = _heat_identity_value(d, spec)
        if res.tail_fraction > 0.01:
            raise ValueError(f"time-integral tail {res.tail_fraction:.2%} exceeds 1% of K")
        out.append(res)
    if details:
        return out if len(out) > 1 else out[0]
    vals = np.array([r.value for r in out]).reshape(xs.shape[:-1])
    return _scalar_out(vals, x, y)


def fit_kernel_bounds(dists: np.ndarray, values: np.ndarray, n: int, s: float) -> tuple[float, float]:
    """Tightest ``C1, C2`` with ``C1 d^{-n-2s} <= K <= C2 d^{-n-2s}`` on the samples."""
    scaled = np.asarray(values) * np.asarray(dists) ** (n + 2 * s)
    return float(scaled.min()), float(scaled.max())


# ----------------------------------------------------------------------------
# Experimental finite-difference heat kernel for diagonal M
# ----------------------------------------------------------------------------

@dataclass
class _Lattice:
    origin: np.ndarray
    dx: float
    shape: tuple[int, ...]

    def interp_weights(self, p: np.ndarray) -> np.ndarray:
        """Multilinear interpolation weights of point ``p`` on the lattice."""
        t = (p - self.origin) / self.dx
        i0 = np.floor(t).astype(int)
        f = t - i0
        w = np.zeros(self.shape)
        for corner in np.ndindex(*(2,) * len(self.shape)):
            c = np.asarray(corner)
            idx = tuple(i0 + c)
            w[idx] += np.prod(np.where(c == 1, f, 1.0 - f))
        return w


def _lattice_for(x, y, spec: KernelSpec, t_end: float) -> _Lattice:
    spread = 6.0 * np.sqrt(spec.ellipticity * t_end) + 2 * spec.dx
    lo = np.minimum(x, y) - spread
    hi = np.maximum(x, y) + spread
    # symmetric in (x, y): depends only on min/max of the pair
    counts = np.ceil((hi - lo) / spec.dx).astype(int) + 1
    return _Lattice(lo, spec.dx, tuple(int(c) for c in counts))


def _face_coefficients(lat: _Lattice, spec: KernelSpec) -> list[np.ndarray]:
    axes = [lat.origin[d] + lat.dx * np.arange(lat.shape[d]) for d in range(len(lat.shape))]
    faces = []
    for d in range(len(lat.shape)):
        ax = list(axes)
        ax[d] = 0.5 * (axes[d][:-1] + axes[d][1:])
        grids = np.meshgrid(*ax, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        faces.append(spec.m_diag(pts)[:, d].reshape(grids[0].shape))
    return faces


def _heat_step(u: np.ndarray, faces: list[np.ndarray], dx: float, dt: float) -> np.ndarray:
    lap = np.zeros_like(u)
    for d, m in enumerate(faces):
        flux = m * np.diff(u, axis=d) / dx
        sl_hi = [slice(None)] * u.ndim
        sl_lo = [slice(None)] * u.ndim
        sl_hi[d] = slice(0, -1)
        sl_lo[d] = slice(1, None)
        lap[tuple(sl_hi)] += flux / dx
        lap[tuple(sl_lo)] -= flux / dx
    return u + dt * lap


def _stable_dt(spec: KernelSpec) -> float:
    bound = spec.dx ** 2 / (2 * spec.n * spec.ellipticity)
    dt = 0.9 * bound if spec.dt is None else spec.dt
    if dt > bound:
        raise ValueError(f"time step {dt} violates the stability bound {bound}")
    return dt


def heat_evolution(x, y, spec: KernelSpec, times) -> np.ndarray:
    """Finite-difference ``p_t(x, y)`` at increasing ``times`` (one solve)."""
    x = np.asarray(x, dtype=float).reshape(spec.n)
    y = np.asarray(y, dtype=float).reshape(spec.n)
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be positive and increasing")
    dt = _stable_dt(spec)
    lat = _lattice_for(x, y, spec, float(times[-1]))
    faces = _face_coefficients(lat, spec)
    wx = lat.interp_weights(x)
    wy = lat.interp_weights(y)
    u = wy / lat.dx ** spec.n
    t = 0.0
    out = np.empty(len(times))
    for k, target in enumerate(times):
        while t < target - 1e-15:
            step = min(dt, target - t)
            u = _heat_step(u, faces, lat.dx, step)
            t += step
        out[k] = float(np.sum(wx * u))
    return out


def heat_kernel_numeric(spec: KernelSpec, x, y, t: float) -> float:
    """Experimental FD approximation of the heat kernel of ``div(M grad)``."""
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    if not spec.t_min <= t <= spec.t_max:
        raise ValueError(f"t={t} outside [{spec.t_min}, {spec.t_max}]")
    return float(heat_evolution(x, y, spec, [t])[0])


def _heat_numeric_value(x, y, spec: KernelSpec) -> HeatKernelValue:
    n, s = spec.n, spec.s
    C = 1.0 / abs(gamma(-s))
    mid = spec.m_diag(0.5 * (x + y))[0]
    d2eff = float(np.sum((x - y) ** 2 / mid))
    pref = float(np.prod(mid) ** -0.5)
    # frozen-coefficient Gaussian below t_min
    head = _gaussian_head(d2eff, n, s, spec.t_min, pref)
    t = np.geomspace(spec.t_min, spec.t_max, spec.log_grid)
    p = heat_evolution(x, y, spec, t)
    logt = np.log(t)
    f = p * t ** (-s)
    body = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(logt)))
    cm = spec.ellipticity
    tail = (4 * np.pi / cm) ** (-n / 2) * spec.t_max ** (-n / 2 - s) / (n / 2 + s)
    scale = C * spec.c / fractional_constant(n, s)
    return HeatKernelValue(scale * (head + body), scale * head, scale * body, scale * tail)


@dataclass
class GaussianBoundFit:
    b1: float
    b2: float
    c1: float
    c2: float
    samples: int
    violations: int = 0

    def lower(self, d2, t, n):
        return self.c1 * np.exp(-self.b1 * d2 / t) * t ** (-n / 2)

    def upper(self, d2, t, n):
        return self.c2 * np.exp(-self.b2 * d2 / t) * t ** (-n / 2)


def fit_gaussian_bounds(d2: np.ndarray, t: np.ndarray, p: np.ndarray, n: int, cm: float) -> GaussianBoundFit:
    """Fit ``c1, c2`` with exponents ``b1 = C_M/4``, ``b2 = 1/(4 C_M)``.

    With these exponents the true heat kernel of a uniformly elliptic
    operator satisfies two-sided Gaussian bounds; the constants are the
    tightest ones consistent with the samples.
    """
    d2, t, p = map(np.asarray, (d2, t, p))
    b1, b2 = cm / 4.0, 1.0 / (4.0 * cm)
    scaled = p * t ** (n / 2)
    c1 = float(np.min(scaled * np.exp(b1 * d2 / t)))
    c2 = float(np.max(scaled * np.exp(b2 * d2 / t)))
    if c1 <= 0:
        warnings.warn("nonpositive heat-kernel sample; lower Gaussian bound fails")
    return GaussianBoundFit(b1, b2, c1, c2, len(p))
