"""Computational grid, domain shapes, windows and DOF classification.

The grid is a uniform tensor lattice over a box ``[-L, L]^n`` carrying the
piecewise (multi)linear nodal basis: hat functions in 1D, tensor-product
bilinear hats on squares in 2D.  Each hat is supported on the ``2^n`` cells
touching its node, i.e. on the closed box ``[x - h, x + h]^n``.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid problem configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _vec(values, n=None) -> tuple[float, ...]:
    if np.isscalar(values):
        values = [values] * (n or 1)
    return tuple(float(v) for v in values)


# ----------------------------------------------------------------------------
# Fields (magnetic potential A and electric potentials q)
# ----------------------------------------------------------------------------

FIELD_FAMILIES = ("zero", "constant_in_ball", "smooth_bump", "piecewise_cells")


@dataclass(frozen=True)
class FieldSpec:
    """Closed-form description of a scalar (q) or vector (A) field.

    ``constant_in_ball`` and ``smooth_bump`` vanish outside the open ball of
    the given radius; ``piecewise_cells`` splits the box ``[lower, upper]``
    into ``divisions`` equal cells per axis with row-major ``values``.
    """

    family: str = "zero"
    amplitude: tuple[float, ...] = (0.0,)
    center: tuple[float, ...] = ()
    radius: float = 0.0
    vector: bool = False
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    divisions: int = 1
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in FIELD_FAMILIES:
            raise ConfigError("family", f"unknown field family {self.family!r}")
        if self.family in ("constant_in_ball", "smooth_bump") and self.radius <= 0:
            raise ConfigError("radius", "must be positive")
        if self.family == "piecewise_cells":
            if self.vector:
                raise ConfigError("family", "piecewise_cells is scalar only")
            d = len(self.lower)
            if d == 0 or len(self.upper) != d:
                raise ConfigError("lower", "lower/upper must have matching dimension")
            if len(self.values) != self.divisions ** d:
                raise ConfigError("values", f"expected {self.divisions ** d} cell values")

    @classmethod
    def zero(cls, vector: bool = False, n: int = 1) -> "FieldSpec":
        return cls("zero", amplitude=(0.0,) * (n if vector else 1), vector=vector)

    @property
    def components(self) -> int:
        return len(self.amplitude) if self.vector else 1

    def is_zero(self) -> bool:
        if self.family == "zero":
            return True
        if self.family == "piecewise_cells":
            return not any(self.values)
        return not any(self.amplitude)

    def support_radius(self) -> float:
        """Radius of a centred ball containing the support (0 for zero fields)."""
        if self.is_zero():
            return 0.0
        if self.family == "piecewise_cells":
            corners = itertools.product(*zip(self.lower, self.upper))
            return max(float(np.linalg.norm(c)) for c in corners)
        return float(np.linalg.norm(self.center)) + self.radius

    def cell_edges(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, self.divisions + 1) for lo, hi in zip(self.lower, self.upper)]


def sample_field(spec: FieldSpec, points) -> np.ndarray:
    """Evaluate ``spec`` at ``points`` of shape ``(m, n)``.

    Returns shape ``(m,)`` for scalar fields and ``(m, k)`` for vector fields.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    amp = np.asarray(spec.amplitude, dtype=float)
    if spec.family == "zero" or spec.is_zero():
        prof = np.zeros(m)
    elif spec.family == "constant_in_ball":
        d2 = np.sum((pts - np.asarray(spec.center)) ** 2, axis=1)
        prof = (d2 < spec.radius ** 2).astype(float)
    elif spec.family == "smooth_bump":
        rho2 = np.sum((pts - np.asarray(spec.center)) ** 2, axis=1) / spec.radius ** 2
        prof = np.zeros(m)
        inside = rho2 < 1.0
        prof[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    else:
        lower = np.asarray(spec.lower)
        upper = np.asarray(spec.upper)
        width = (upper - lower) / spec.divisions
        idx = np.floor((pts - lower) / width).astype(int)
        inside = np.all((pts >= lower) & (pts < upper), axis=1)
        idx = np.clip(idx, 0, spec.divisions - 1)
        flat = np.ravel_multi_index(tuple(idx.T), (spec.divisions,) * len(spec.lower))
        vals = np.asarray(spec.values, dtype=float)
        out = np.where(inside, vals[flat], 0.0)
        return out
    if spec.vector:
        return prof[:, None] * amp[None, :]
    return prof * amp[0]


# ----------------------------------------------------------------------------
# Domain shapes and windows
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainShape:
    """Axis-aligned open box (``lower``, ``upper``) or open ball (``center``, ``radius``)."""

    kind: str
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0

    @classmethod
    def box(cls, lower, upper) -> "DomainShape":
        return cls("box", lower=_vec(lower), upper=_vec(upper))

    @classmethod
    def ball(cls, center, radius) -> "DomainShape":
        return cls("ball", center=_vec(center), radius=float(radius))

    @property
    def dim(self) -> int:
        return len(self.lower) if self.kind == "box" else len(self.center)

    def contains(self, points, closed: bool = False, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "box":
            lo, hi = np.asarray(self.lower), np.asarray(self.upper)
            if closed:
                return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
            return np.all((pts > lo + tol) & (pts < hi - tol), axis=1)
        d = np.linalg.norm(pts - np.asarray(self.center), axis=1)
        return d <= self.radius + tol if closed else d < self.radius - tol

    def closure_contains_box(self, lo, hi, tol: float) -> np.ndarray:
        """Vectorised test ``[lo, hi] subset of closure(shape)`` for boxes given row-wise."""
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        if self.kind == "box":
            return np.all((lo >= np.asarray(self.lower) - tol) & (hi <= np.asarray(self.upper) + tol), axis=1)
        # convex set: all corners suffice
        c = np.asarray(self.center)
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        return np.linalg.norm(far, axis=1) <= self.radius + tol

    def box_distance(self, lo, hi) -> np.ndarray:
        """Signed separation between boxes ``[lo, hi]`` and the shape.

        Positive values are true gaps; non-positive values mean the closed
        sets touch or overlap (for a box shape, the value is the largest
        per-axis gap, which is negative on overlap).
        """
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        if self.kind == "box":
            gaps = np.maximum(np.asarray(self.lower) - hi, lo - np.asarray(self.upper))
            return np.max(gaps, axis=1)
        c = np.asarray(self.center)
        nearest = np.clip(c, lo, hi)
        return np.linalg.norm(nearest - c, axis=1) - self.radius

    def max_norm(self) -> float:
        """Largest distance from the origin over the closure."""
        if self.kind == "box":
            corners = itertools.product(*zip(self.lower, self.upper))
            return max(float(np.linalg.norm(c)) for c in corners)
        return float(np.linalg.norm(self.center)) + self.radius

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "box":
            return np.asarray(self.lower), np.asarray(self.upper)
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class WindowSpec:
    """Open axis-aligned measurement window inside the exterior domain."""

    name: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts > np.asarray(self.lower)) & (pts < np.asarray(self.upper)), axis=1)

    def min_norm(self) -> float:
        """Distance from the origin to the window (0 if it contains the origin)."""
        nearest = np.clip(0.0, np.asarray(self.lower), np.asarray(self.upper))
        return float(np.linalg.norm(nearest))

    def max_norm(self) -> float:
        corners = itertools.product(*zip(self.lower, self.upper))
        return max(float(np.linalg.norm(c)) for c in corners)

    def reaches_beyond(self, radius: float) -> bool:
        """True if the window has a nonempty part outside the closed ball of ``radius``."""
        return self.max_norm() > radius

    def avoids_ball(self, radius: float) -> bool:
        """True if the window does not meet the open ball of ``radius``."""
        return self.min_norm() >= radius


# ----------------------------------------------------------------------------
# Problem configuration
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemConfig:
    n: int
    s: float
    r: float
    R: float
    h: float
    omega: DomainShape
    windows: tuple[WindowSpec, ...] = ()
    a_spec: FieldSpec = field(default_factory=lambda: FieldSpec.zero(vector=True))
    q_specs: tuple[FieldSpec, ...] = ()

    def window(self, name: str) -> WindowSpec:
        for w in self.windows:
            if w.name == name:
                return w
        raise KeyError(name)

    def replace(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        """Raise :class:`ConfigError` naming the first violated invariant."""
        if self.n not in (1, 2):
            raise ConfigError("problem.n", "dimension must be 1 or 2")
        if not 0.0 < self.s < 1.0:
            raise ConfigError("problem.s", f"fractional power must lie in (0, 1), got {self.s}")
        if self.r <= 0:
            raise ConfigError("problem.r", "support radius must be positive")
        if self.h <= 0:
            raise ConfigError("problem.h", "grid spacing must be positive")
        if self.h >= self.r:
            raise ConfigError("problem.h", "grid spacing must be smaller than r")
        if self.R < 3 * self.r + 2 * self.h - 1e-12:
            raise ConfigError("problem.box_halfwidth", f"need R >= 3r + 2h = {3 * self.r + 2 * self.h}")
        if self.omega.dim != self.n:
            raise ConfigError("problem.omega", "dimension mismatch")
        if self.omega.max_norm() >= self.r:
            raise ConfigError("problem.omega", "closure of omega must lie inside B_r(0)")
        if self.a_spec.vector and self.a_spec.components != self.n:
            raise ConfigError("magnetic.amplitude", f"need {self.n} components")
        if not _vanishes_outside(self.a_spec, self.r, self.R, self.n):
            raise ConfigError("magnetic", "support of A must lie inside B_r(0)")
        for w in self.windows:
            if len(w.lower) != self.n or len(w.upper) != self.n:
                raise ConfigError(f"windows.{w.name}", "dimension mismatch")
            if np.any(np.asarray(w.lower) >= np.asarray(w.upper)):
                raise ConfigError(f"windows.{w.name}", "empty window")
            if self.omega.box_distance(w.lower, w.upper)[0] < 0:
                raise ConfigError(f"windows.{w.name}", "window must lie in the exterior of omega")
        for k, q in enumerate(self.q_specs):
            if q.vector:
                raise ConfigError(f"electric.q{k + 1}", "q must be scalar")

    def require_far_windows(self, names: Sequence[str]) -> None:
        """Reconstruction hypothesis: every named window reaches beyond closure(B_3r)."""
        for name in names:
            if not self.window(name).reaches_beyond(3 * self.r):
                raise ConfigError(f"windows.{name}", "window lies inside closure(B_3r(0))")


def _vanishes_outside(spec: FieldSpec, r: float, R: float, n: int, samples: int = 4001) -> bool:
    if spec.is_zero():
        return True
    if n == 1:
        pts = np.linspace(-R, R, samples)[:, None]
    else:
        t = np.linspace(-R, R, int(np.sqrt(samples)) * 2 + 1)
        pts = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    outside = np.linalg.norm(pts, axis=1) >= r
    vals = sample_field(spec, pts[outside])
    return bool(np.all(vals == 0.0))


# ----------------------------------------------------------------------------
# Grid
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform lattice with ``m`` nodes per axis at ``(k - (m-1)/2) * h``."""

    n: int
    h: float
    m: int

    @classmethod
    def uniform(cls, n: int, R: float, h: float) -> "Grid":
        if h <= 0:
            raise ConfigError("problem.h", "grid spacing must be positive")
        m = int(np.floor(2 * R / h + 1e-9)) + 1
        if m < 3:
            raise ConfigError("problem.h", "grid needs at least three nodes per axis")
        return cls(n, float(h), m)

    @property
    def key(self) -> tuple:
        return (self.n, self.h, self.m)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.m - 1) * self.h

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def num_nodes(self) -> int:
        return self.m ** self.n

    @property
    def num_cells(self) -> int:
        return (self.m - 1) ** self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.m) - 0.5 * (self.m - 1)) * self.h

    @cached_property
    def multi_index(self) -> np.ndarray:
        return np.stack(np.unravel_index(np.arange(self.num_nodes), self.shape), axis=1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.axis[self.multi_index]

    @cached_property
    def on_box_boundary(self) -> np.ndarray:
        mi = self.multi_index
        return np.any((mi == 0) | (mi == self.m - 1), axis=1)

    @cached_property
    def cell_multi_index(self) -> np.ndarray:
        cshape = (self.m - 1,) * self.n
        return np.stack(np.unravel_index(np.arange(self.num_cells), cshape), axis=1)

    @cached_property
    def cell_lower(self) -> np.ndarray:
        return self.axis[self.cell_multi_index]

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return self.cell_lower + 0.5 * self.h

    @cached_property
    def local_offsets(self) -> np.ndarray:
        """Corner offsets (0/1 per axis) of a cell, in local node order."""
        return np.array(list(itertools.product((0, 1), repeat=self.n)), dtype=int)

    @cached_property
    def cells(self) -> np.ndarray:
        """Node indices of every cell, shape ``(num_cells, 2**n)``."""
        corners = self.cell_multi_index[:, None, :] + self.local_offsets[None, :, :]
        return np.ravel_multi_index(tuple(np.moveaxis(corners, -1, 0)), self.shape)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Cell index and local coordinates in ``[0, 1]^n`` of each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        t = (pts - self.axis[0]) / self.h
        ci = np.clip(np.floor(t).astype(int), 0, self.m - 2)
        local = t - ci
        flat = np.ravel_multi_index(tuple(ci.T), (self.m - 1,) * self.n)
        return flat, local

    def node_at(self, point) -> int:
        p = np.asarray(point, dtype=float).reshape(self.n)
        idx = np.rint((p - self.axis[0]) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.m) or not np.allclose(self.axis[idx], p, atol=1e-9 * self.h):
            raise ValueError(f"{p} is not a grid node")
        return int(np.ravel_multi_index(tuple(idx), self.shape))


def build_grid(config: ProblemConfig) -> Grid:
    if config.h >= config.r:
        raise ConfigError("problem.h", "grid spacing h >= r leaves the domain unresolved")
    return Grid.uniform(config.n, config.R, config.h)


def local_basis(local: np.ndarray) -> np.ndarray:
    """Values of the ``2^n`` cell-local multilinear shape functions.

    ``local`` has shape ``(..., n)`` with entries in ``[0, 1]``; the result
    has shape ``(..., 2^n)`` ordered like :attr:`Grid.local_offsets`.
    """
    n = local.shape[-1]
    offsets = np.array(list(itertools.product((0, 1), repeat=n)))
    vals = np.where(offsets == 1, local[..., None, :], 1.0 - local[..., None, :])
    return np.prod(vals, axis=-1)


# ----------------------------------------------------------------------------
# DOF partition
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DofPartition:
    """Disjoint node classes covering the whole grid.

    ``frozen`` holds hats held at zero: those straddling the boundary of the
    domain and those on the outer boundary of the computational box.
    """

    num_nodes: int
    interior: np.ndarray
    windows: tuple[np.ndarray, ...]
    window_names: tuple[str, ...]
    exterior_other: np.ndarray
    frozen: np.ndarray

    def window(self, name: str) -> np.ndarray:
        return self.windows[self.window_names.index(name)]

    @cached_property
    def exterior(self) -> np.ndarray:
        return np.sort(np.concatenate([*self.windows, self.exterior_other])).astype(int)

    @cached_property
    def active(self) -> np.ndarray:
        return np.sort(np.concatenate([self.interior, self.exterior])).astype(int)

    def sizes(self) -> dict[str, int]:
        out = {"interior": len(self.interior)}
        for name, w in zip(self.window_names, self.windows):
            out[f"window:{name}"] = len(w)
        out["exterior_other"] = len(self.exterior_other)
        out["frozen"] = len(self.frozen)
        return out


def classify_dofs(grid: Grid, config: ProblemConfig) -> DofPartition:
    tol = 1e-9 * grid.h
    x = grid.nodes
    lo, hi = x - grid.h, x + grid.h
    omega = config.omega
    box_edge = grid.on_box_boundary

    interior = omega.closure_contains_box(lo, hi, tol) & ~box_edge
    gap = omega.box_distance(lo, hi)
    exterior = (gap >= -tol) & ~box_edge & ~interior
    strictly_outside = gap > tol

    taken = interior.copy()
    win_sets = []
    for w in config.windows:
        member = w.contains(x) & strictly_outside & ~box_edge & ~taken
        taken |= member
        win_sets.append(np.flatnonzero(member))
    other = exterior & ~taken
    frozen = ~(interior | exterior)
    if not interior.any():
        raise ConfigError("problem.omega", "no interior degrees of freedom at this spacing")
    return DofPartition(
        num_nodes=grid.num_nodes,
        interior=np.flatnonzero(interior),
        windows=tuple(win_sets),
        window_names=tuple(w.name for w in config.windows),
        exterior_other=np.flatnonzero(other),
        frozen=np.flatnonzero(frozen),
    )
