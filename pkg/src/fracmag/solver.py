"""Coercivity check, exterior Dirichlet solves, DN maps and the integral identity."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .assembly import DEFAULT_ORDER, FormMatrix, GridFunction, assemble_L, assemble_Q
from .geometry import DofPartition, FieldSpec, Grid, ProblemConfig, build_grid, classify_dofs
from .kernel import KernelSpec
from .magnetic import PhaseContext

COERCIVITY_TOL = 1e-12


class CoercivityWarning(UserWarning):
    pass


class CoercivityError(np.linalg.LinAlgError):
    pass


# ----------------------------------------------------------------------------
# Discretization bundle
# ----------------------------------------------------------------------------

@dataclass
class Model:
    """Grid, partition and cached form matrices for one configuration."""

    config: ProblemConfig
    kernel: KernelSpec | None = None
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.kernel is None:
            self.kernel = KernelSpec("closed_form", self.config.n, self.config.s)
        self._forms: dict = {}

    @cached_property
    def grid(self) -> Grid:
        return build_grid(self.config)

    @cached_property
    def partition(self) -> DofPartition:
        return classify_dofs(self.grid, self.config)

    def phase(self, sign: int = 1) -> PhaseContext:
        return PhaseContext(self.config.a_spec, sign)

    def L(self, sign: int = 1) -> FormMatrix:
        key = ("L", sign)
        if key not in self._forms:
            self._forms[key] = assemble_L(self.grid, self.partition, self.kernel, self.phase(sign), self.order)
        return self._forms[key]

    def Q(self, q_spec: FieldSpec) -> FormMatrix:
        key = ("Q", q_spec)
        if key not in self._forms:
            self._forms[key] = assemble_Q(self.grid, self.partition, q_spec, self.config.omega, self.order)
        return self._forms[key]

    def form(self, q_spec: FieldSpec, sign: int = 1) -> FormMatrix:
        key = ("B", q_spec, sign)
        if key not in self._forms:
            B = self.L(sign) + self.Q(q_spec)
            B.meta["sign"] = sign
            self._forms[key] = B
        return self._forms[key]

    def q(self, k: int) -> FieldSpec:
        return self.config.q_specs[k]


# ----------------------------------------------------------------------------
# Coercivity and factorization
# ----------------------------------------------------------------------------

def check_coercivity(B: FormMatrix) -> float:
    """Smallest eigenvalue of the Hermitian part of the interior block.

    Warns (does not raise) when it is not above ``1e-12``.
    """
    cache = _cache(B)
    if "coercivity" not in cache:
        BII = B.block("I", "I")
        H = 0.5 * (BII + BII.conj().T)
        cache["coercivity"] = float(np.linalg.eigvalsh(H)[0])
    val = cache["coercivity"]
    if val <= COERCIVITY_TOL:
        warnings.warn(f"form is not coercive on the interior space (min eigenvalue {val:.3e})",
                      CoercivityWarning, stacklevel=2)
    return val


_FACTOR_CACHE: dict = {}


def _cache(B: FormMatrix) -> dict:
    key = id(B)
    entry = _FACTOR_CACHE.get(key)
    if entry is None or entry[0] is not B:
        if len(_FACTOR_CACHE) > 16:
            _FACTOR_CACHE.clear()
        entry = (B, {})
        _FACTOR_CACHE[key] = entry
    return entry[1]


@dataclass
class InteriorFactor:
    lu: tuple
    rcond: float

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.lu, rhs)


def interior_factor(B: FormMatrix) -> InteriorFactor:
    cache = _cache(B)
    if "factor" in cache:
        return cache["factor"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoercivityWarning)
        lam = check_coercivity(B)
    if lam <= COERCIVITY_TOL:
        raise CoercivityError(f"refusing to solve: interior block not coercive (min eigenvalue {lam:.3e})")
    BII = B.block("I", "I")
    lu = sla.lu_factor(BII, check_finite=True)
    gecon = sla.get_lapack_funcs("gecon", (lu[0],))
    anorm = np.linalg.norm(BII, 1)
    rcond, info = gecon(lu[0], anorm, norm="1")
    if rcond < np.finfo(float).eps:
        raise np.linalg.LinAlgError(f"interior block numerically singular (condition estimate {1 / max(rcond, 1e-300):.3e})")
    fac = InteriorFactor(lu, float(rcond))
    cache["factor"] = fac
    return fac


# ----------------------------------------------------------------------------
# Dirichlet problem
# ----------------------------------------------------------------------------

@dataclass
class DirichletSolution:
    u: GridFunction
    g: GridFunction
    residual: float
    factorization: str
    condition: float


def _exterior_data(g, partition: DofPartition, grid: Grid) -> GridFunction:
    if not isinstance(g, GridFunction):
        g = GridFunction.from_dofs(grid, partition.exterior, g)
    bad = np.concatenate([partition.interior, partition.frozen])
    if np.any(g.values[bad] != 0):
        raise ValueError("exterior data must vanish on interior and frozen DOFs")
    return g


def solve_dirichlet(B: FormMatrix, partition: DofPartition | None, g) -> DirichletSolution:
    """``u_I = -B_II^{-1} B_IE g_E`` with ``u_E = g_E``."""
    partition = partition or B.partition
    grid_n = partition.num_nodes
    grid = g.grid if isinstance(g, GridFunction) else None
    if grid is None:
        raise ValueError("exterior data must be a GridFunction")
    g = _exterior_data(g, partition, grid)
    fac = interior_factor(B)
    gE = g.values[partition.exterior]
    rhs = -(B.block("I", "E") @ gE)
    uI = fac.solve(rhs)
    values = g.values.copy()
    values[partition.interior] = uI
    res = np.linalg.norm(B.block("I", "I") @ uI - rhs)
    den = np.linalg.norm(rhs)
    residual = float(res / den) if den > 0 else float(res)
    assert values.size == grid_n
    return DirichletSolution(GridFunction(grid, values), g, residual, "lu-partial-pivoting", 1.0 / fac.rcond)


def solve_many(B: FormMatrix, G: np.ndarray) -> np.ndarray:
    """Interior responses ``-B_II^{-1} B_IE G`` for columns of exterior data ``G``."""
    return interior_factor(B).solve(-(B.block("I", "E") @ G))


@dataclass
class DNMap:
    """Discrete DN map on the exterior DOFs; ``<Lambda g, h> = h^T Lambda g``.

    ``base`` and ``schur`` (optional) hold the exterior block and the Schur
    correction separately (``data = base - schur``); differences of maps
    with the same exterior block then subtract only the corrections.
    """

    data: np.ndarray
    dofs: np.ndarray
    meta: dict = field(default_factory=dict)
    base: np.ndarray | None = field(default=None, repr=False)
    schur: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> "DNMap":
        tr = (lambda a: None if a is None else a.T.copy())
        return DNMap(self.data.T.copy(), self.dofs, {**self.meta, "transposed": True}, tr(self.base), tr(self.schur))

    def __sub__(self, other: "DNMap") -> "DNMap":
        if not np.array_equal(self.dofs, other.dofs):
            raise ValueError("DN maps on different DOF sets")
        meta = {"difference": [self.meta, other.meta]}
        if (self.schur is not None and other.schur is not None
                and (self.base is other.base or np.array_equal(self.base, other.base))):
            return DNMap(other.schur - self.schur, self.dofs, meta)
        return DNMap(self.data - other.data, self.dofs, meta)

    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.data, 2))

    def vector(self, g) -> np.ndarray:
        if isinstance(g, GridFunction):
            return g.values[self.dofs]
        return np.asarray(g)

    def positions(self, idx) -> np.ndarray:
        return np.searchsorted(self.dofs, np.asarray(idx, dtype=int))


def dn_map(B: FormMatrix, partition: DofPartition | None = None) -> DNMap:
    """Schur complement ``B_EE - B_EI B_II^{-1} B_IE`` over the non-frozen exterior DOFs."""
    partition = partition or B.partition
    fac = interior_factor(B)
    X = fac.solve(B.block("I", "E"))
    base = B.block("E", "E")
    schur = B.block("E", "I") @ X
    meta = {k: v for k, v in B.meta.items() if not k.startswith("_")}
    return DNMap(base - schur, partition.exterior.copy(), meta, base, schur)


def dn_difference(B1: FormMatrix, B2: FormMatrix) -> DNMap:
    """``Lambda_1 - Lambda_2`` for forms differing only in the interior block.

    The shared exterior block cancels exactly; only the Schur corrections
    are subtracted.
    """
    return dn_map(B1) - dn_map(B2)


def dn_pair(lam: DNMap, g, h) -> complex:
    return complex(lam.vector(h) @ (lam.data @ lam.vector(g)))


# ----------------------------------------------------------------------------
# Integral identity
# ----------------------------------------------------------------------------

@dataclass
class IdentityRecord:
    lhs: complex
    rhs: complex
    residual: float

    def to_dict(self) -> dict:
        return {"lhs": [self.lhs.real, self.lhs.imag], "rhs": [self.rhs.real, self.rhs.imag],
                "residual": self.residual}


def relative_gap(a: complex, b: complex) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else float(abs(a - b) / scale)


def integral_identity_residual(model: Model, q1_spec: FieldSpec, q2_spec: FieldSpec, g1, g2) -> IdentityRecord:
    """Both sides of ``<(Lambda_{A,q1} - Lambda_{A,q2}) g1, g2> = int (q1 - q2) u1+ u2-``.

    ``u1+`` solves with ``(A, q1)`` and data ``g1``; ``u2-`` with ``(-A, q2)``
    and data ``g2``; the right side is the bilinear ``Q``-pairing of the two.
    """
    B1 = model.form(q1_spec, +1)
    B2 = model.form(q2_spec, +1)
    lam = dn_difference(B1, B2)
    lhs = dn_pair(lam, g1, g2)
    u1 = solve_dirichlet(B1, model.partition, g1).u
    u2 = solve_dirichlet(model.form(q2_spec, -1), model.partition, g2).u
    dQ = model.Q(q1_spec).data - model.Q(q2_spec).data
    act = model.partition.active
    rhs = complex(u2.values[act] @ (dQ @ u1.values[act]))
    return IdentityRecord(lhs, rhs, relative_gap(lhs, rhs))


def random_exterior_data(model: Model, window: str, rng: np.random.Generator) -> GridFunction:
    dofs = model.partition.window(window)
    vals = rng.standard_normal(len(dofs)) + 1j * rng.standard_normal(len(dofs))
    return GridFunction.from_dofs(model.grid, dofs, vals)
