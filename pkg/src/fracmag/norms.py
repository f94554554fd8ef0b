"""Fractional Sobolev seminorms, L2 norms and the magnetic norm-equivalence check."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import DEFAULT_ORDER, FormMatrix, GridFunction, full_form_matrix, mass_matrix
from .geometry import FieldSpec
from .magnetic import PhaseContext


def _quadratic(M: np.ndarray, u: GridFunction) -> float:
    val = np.real(np.conj(u.values) @ (M @ u.values))
    return float(max(val, 0.0))


def seminorm_HsA(u: GridFunction, ctx: PhaseContext, s: float, order: int = DEFAULT_ORDER) -> float:
    """``( int int |u(x) - E_A(x,y) u(y)|^2 |x - y|^{-n-2s} dx dy )^{1/2}``."""
    M = full_form_matrix(u.grid, s, 1.0, ctx, order, box_tail=True)
    return float(np.sqrt(_quadratic(M, u)))


def seminorm_Hs(u: GridFunction, s: float, order: int = DEFAULT_ORDER) -> float:
    M = full_form_matrix(u.grid, s, 1.0, None, order, box_tail=True)
    return float(np.sqrt(_quadratic(M, u)))


def norm_L2(u: GridFunction) -> float:
    return float(np.sqrt(_quadratic(mass_matrix(u.grid), u)))


def norm_Hs(u: GridFunction, s: float, order: int = DEFAULT_ORDER) -> float:
    return float(np.hypot(norm_L2(u), seminorm_Hs(u, s, order)))


def field_sup_norm(spec: FieldSpec) -> float:
    """``sup_x |A(x)|`` (Euclidean norm of the vector value)."""
    if spec.is_zero():
        return 0.0
    if spec.family == "piecewise_cells":
        return float(np.max(np.abs(spec.values)))
    # both ball families peak at the centre with the full amplitude
    return float(np.linalg.norm(spec.amplitude))


def equivalence_constant(a_sup: float, n: int, s: float) -> dict:
    """Explicit constant ``C'`` with ``|[u]_{H^s} - [u]_{H^s_A}| <= C' ||u||_{L^2}``.

    Uses ``|E_A - 1| <= min(2, |x - y| ||A||_inf)`` and integrates
    ``min(4, a^2 rho^2) rho^{-1-2s}`` radially over ``rho <= 1`` and
    ``rho >= 1``; ``C'^2`` is the sum times the measure of the unit sphere.
    """
    a = float(a_sup)
    sphere = 2.0 if n == 1 else 2.0 * np.pi

    def piece(lo, hi):
        # integral of min(4, a^2 rho^2) rho^{-1-2s} over [lo, hi]
        if a == 0.0:
            return 0.0
        knee = 2.0 / a
        total = 0.0
        lo_q, hi_q = lo, min(hi, knee)
        if hi_q > lo_q:
            total += a * a * (hi_q ** (2 - 2 * s) - lo_q ** (2 - 2 * s)) / (2 - 2 * s)
        lo_c = max(lo, knee)
        if hi > lo_c:
            upper = 0.0 if np.isinf(hi) else hi ** (-2 * s)
            total += 4.0 * (lo_c ** (-2 * s) - upper) / (2 * s)
        return total

    near, far = piece(0.0, 1.0), piece(1.0, np.inf)
    return {"near": sphere * near, "far": sphere * far, "C_prime": float(np.sqrt(sphere * (near + far)))}


@dataclass
class EquivalenceReport:
    C_prime: float
    max_ratio: float
    max_gap: float
    samples: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"C_prime": self.C_prime, "max_ratio": self.max_ratio, "max_gap": self.max_gap,
                "samples": self.samples, "violations": self.violations, "passed": self.passed}


def norm_equivalence_report(samples, ctx: PhaseContext, s: float, order: int = DEFAULT_ORDER,
                            raise_on_violation: bool = False) -> EquivalenceReport:
    """Check ``|[u]_{H^s} - [u]_{H^s_A}| <= C' ||u||_{L^2}`` on every sample.

    ``max_ratio`` is the largest observed ``gap / ||u||_{L^2}``.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    n = samples[0].grid.n
    C = equivalence_constant(field_sup_norm(ctx.a_spec), n, s)["C_prime"]
    ratio, gap_max, bad = 0.0, 0.0, []
    for k, u in enumerate(samples):
        gap = abs(seminorm_Hs(u, s, order) - seminorm_HsA(u, ctx, s, order))
        l2 = norm_L2(u)
        gap_max = max(gap_max, gap)
        if l2 > 0:
            ratio = max(ratio, gap / l2)
        if gap > C * l2 * (1 + 1e-12) + 1e-14:
            bad.append(k)
    rep = EquivalenceReport(C, ratio, gap_max, len(samples), bad)
    if bad and raise_on_violation:
        raise AssertionError(f"norm equivalence violated for samples {bad}")
    return rep


def boundedness_constant(B: FormMatrix, pairs, s: float, order: int = DEFAULT_ORDER) -> float:
    """Largest ``|b(u, v)| / (||u||_{H^s} ||v||_{H^s})`` over sample pairs."""
    best = 0.0
    for u, v in pairs:
        den = norm_Hs(u, s, order) * norm_Hs(v, s, order)
        if den > 0:
            best = max(best, abs(B.bilinear(u, v)) / den)
    return best


def random_grid_function(grid, dofs, rng: np.random.Generator, complex_values: bool = True) -> GridFunction:
    vals = rng.standard_normal(len(dofs))
    if complex_values:
        vals = vals + 1j * rng.standard_normal(len(dofs))
    return GridFunction.from_dofs(grid, dofs, vals)
