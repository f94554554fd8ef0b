"""Magnetic phase factor ``E_A(x, y) = exp(i (x - y) . A((x + y) / 2))``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainShape, FieldSpec, WindowSpec, sample_field


@dataclass(frozen=True)
class PhaseContext:
    """Magnetic potential together with a sign selecting ``A`` or ``-A``."""

    a_spec: FieldSpec = field(default_factory=lambda: FieldSpec.zero(vector=True))
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def flipped(self) -> "PhaseContext":
        return PhaseContext(self.a_spec, -self.sign)

    @property
    def trivial(self) -> bool:
        return self.a_spec.is_zero()

    def potential(self, points) -> np.ndarray:
        """``sign * A`` at points, shape ``(m, n)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = sample_field(self.a_spec, pts)
        if a.ndim == 1:
            a = a[:, None]
        return a if self.sign == 1 else -a


def phase_angle(ctx: PhaseContext, x, y) -> np.ndarray:
    """``sign (x - y) . A((x + y) / 2)`` for stacked points of shape ``(m, n)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x, y = np.broadcast_arrays(x, y)
    if ctx.trivial:
        return np.zeros(x.shape[0])
    a = ctx.potential(0.5 * (x + y))
    return np.sum((x - y) * a, axis=1)


def cos_sin(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and sine with sine forced exactly odd in ``theta``.

    This makes the phase of ``-A`` the exact complex conjugate of the phase
    of ``A``, which the transpose-duality checks rely on.
    """
    a = np.abs(theta)
    return np.cos(a), np.sign(theta) * np.sin(a)


def phase_factor(ctx: PhaseContext, x, y):
    """``E_A(x, y)``; scalar for single points, array for stacked points."""
    c, s = cos_sin(phase_angle(ctx, x, y))
    out = c + 1j * s
    if np.asarray(x).ndim <= 1 and np.asarray(y).ndim <= 1 and out.size == 1:
        return complex(out[0])
    return out


@dataclass
class LocalityReport:
    applicable: bool
    max_deviation: float
    pairs: int
    violations: list = field(default_factory=list)
    reason: str = ""

    @property
    def passed(self) -> bool:
        return (not self.applicable) or self.max_deviation == 0.0

    def to_dict(self) -> dict:
        return {
            "applicable": self.applicable,
            "max_deviation": self.max_deviation,
            "pairs": self.pairs,
            "violations": [list(map(list, v)) for v in self.violations[:20]],
            "reason": self.reason,
            "passed": self.passed,
        }


def phase_locality_check(
    ctx: PhaseContext,
    window_points,
    omega_points,
    r: float,
    window: WindowSpec | None = None,
) -> LocalityReport:
    """Evaluate ``E_A`` on pairs (window point, domain point).

    For ``supp A`` inside ``B_r(0)``, ``|x| >= 3r`` and ``|y| <= r`` the
    midpoint has norm at least ``r``, so the phase is exactly one.  Only
    window points outside the open ball ``B_3r(0)`` are checked.  When
    there are none (the window lies inside ``closure(B_3r)``) the report is
    marked not applicable and the deviation over all given pairs is
    recorded instead.
    """
    xw = np.atleast_2d(np.asarray(window_points, dtype=float))
    yo = np.atleast_2d(np.asarray(omega_points, dtype=float))
    far = np.linalg.norm(xw, axis=1) >= 3 * r
    applicable = bool(far.any())
    if window is not None:
        applicable = applicable and window.reaches_beyond(3 * r)
    reason = "" if applicable else "window lies inside closure(B_3r(0))"
    if applicable:
        xw = xw[far]
    X = np.repeat(xw, len(yo), axis=0)
    Y = np.tile(yo, (len(xw), 1))
    E = phase_factor(ctx, X, Y)
    dev = np.abs(np.atleast_1d(E) - 1.0)
    bad = np.flatnonzero(dev > 0)
    violations = [(X[i], Y[i]) for i in bad[:20]]
    return LocalityReport(applicable, float(dev.max()) if dev.size else 0.0, len(dev), violations, reason)


def omega_shape_points(omega: DomainShape, spacing: float) -> np.ndarray:
    """Lattice sample of the closed domain, used by locality checks."""
    lo, hi = omega.bounding_box()
    axes = [np.arange(l, u + 0.5 * spacing, spacing) for l, u in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts[omega.contains(pts, closed=True)]
