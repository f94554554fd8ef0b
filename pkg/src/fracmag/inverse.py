"""Runge approximation from exterior windows and potential-contrast recovery.

Sources are the nodal hats of a window; their solutions restricted to the
domain span the discrete Runge space.  Oracle mode chooses window data so
that ``u1+ ~ f`` (a cell indicator) and ``u2- ~ 1`` and reads the cell
integral of ``q1 - q2`` from the DN-map difference.  Born mode linearises
the same identity around the background potential.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import FormMatrix, GridFunction, cell_quadrature, mass_matrix
from .geometry import FieldSpec, ProblemConfig, sample_field
from .solver import DNMap, Model, dn_pair, solve_many

DEFAULT_REG_SCALE = 1e-8


# ----------------------------------------------------------------------------
# Least squares
# ----------------------------------------------------------------------------

def tikhonov_solve(A: np.ndarray, b: np.ndarray, reg: float | None, reg_scale: float = DEFAULT_REG_SCALE):
    """``argmin ||A c - b||^2 + reg ||c||^2`` by SVD.

    ``reg=None`` uses ``reg_scale * sigma_max^2``; ``reg=0`` switches to a
    rank-revealing (pivoted QR) least-squares solve.  Returns the solution,
    the parameter used and the singular values.
    """
    U, sig, Vh = np.linalg.svd(A, full_matrices=False)
    if reg is None:
        reg = reg_scale * (sig[0] ** 2 if sig.size else 0.0)
    if reg == 0:
        c, *_ = sla.lstsq(A, b, lapack_driver="gelsy")
        return c, 0.0, sig
    filt = sig / (sig ** 2 + reg)
    c = Vh.conj().T @ (filt[:, None] * (U.conj().T @ b.reshape(len(b), -1)))
    return c.reshape((A.shape[1],) + b.shape[1:]), float(reg), sig


def _mass_factor(model: Model) -> np.ndarray:
    """Upper Cholesky factor of the interior mass matrix."""
    idx = model.partition.interior
    M = mass_matrix(model.grid)[np.ix_(idx, idx)]
    return np.linalg.cholesky(M).T


def _window_dofs(model: Model, window) -> np.ndarray:
    if isinstance(window, str):
        dofs = model.partition.window(window)
    else:
        dofs = np.asarray(window, dtype=int)
    if len(dofs) == 0:
        raise ValueError("window contains no degrees of freedom")
    return dofs


def source_responses(model: Model, B: FormMatrix, dofs: np.ndarray) -> np.ndarray:
    """Interior values of the solutions driven by each window hat (columns)."""
    ext = model.partition.exterior
    G = np.zeros((len(ext), len(dofs)))
    G[np.searchsorted(ext, dofs), np.arange(len(dofs))] = 1.0
    return solve_many(B, G)


def order_by_distance(model: Model, dofs: np.ndarray) -> np.ndarray:
    """Window DOFs sorted nearest-to-origin first (ties by index)."""
    d = np.linalg.norm(model.grid.nodes[dofs], axis=1)
    return dofs[np.lexsort((dofs, d))]


@dataclass
class RungeResult:
    target: GridFunction
    coefficients: GridFunction
    error: float
    reg: float
    sources: int
    approximation: GridFunction
    curve: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"error": self.error, "reg": self.reg, "sources": self.sources, "curve": self.curve.tolist()}


def runge_approximate(model: Model, target: GridFunction, window, B: FormMatrix,
                      reg: float | None = None, curve: bool = False,
                      reg_scale: float = DEFAULT_REG_SCALE) -> RungeResult:
    """Approximate ``target`` (an interior grid function) by window-driven solutions.

    Minimises ``||sum_k c_k (P g_k)|_Omega - f||^2_{L^2(Omega)} + reg ||c||^2``
    over the nodal hats ``g_k`` of the window.  The relative error is in
    ``L^2(Omega)``.  With ``curve=True`` the nested errors for the first
    ``m = 1..M`` sources (unregularised) are attached.
    """
    dofs = _window_dofs(model, window)
    part = model.partition
    U = source_responses(model, B, dofs)
    R = _mass_factor(model)
    f = target.values[part.interior]
    A = R @ U
    b = R @ f
    fn = np.linalg.norm(b)
    if fn == 0:
        c = np.zeros(len(dofs), dtype=complex)
        used = float(reg_scale * np.linalg.norm(A, 2) ** 2) if reg is None else float(reg)
        err = 0.0
    else:
        c, used, _ = tikhonov_solve(A, b, reg, reg_scale)
        err = float(np.linalg.norm(A @ c - b) / fn)
    coef = GridFunction.from_dofs(model.grid, dofs, c)
    approx = GridFunction.from_dofs(model.grid, part.interior, U @ c)
    approx.values[dofs] = c
    res = RungeResult(target, coef, err, used, len(dofs), approx)
    if curve:
        res.curve = nested_errors(A, b)
    return res


def nested_errors(A: np.ndarray, b: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Least-squares residuals ``min ||A[:, :m] c - b|| / ||b||`` for m = 1..M.

    Modified Gram-Schmidt with reorthogonalisation; columns numerically in
    the span of earlier ones are skipped, so the sequence is non-increasing
    up to rounding.
    """
    bn = np.linalg.norm(b)
    if bn == 0:
        return np.zeros(A.shape[1])
    r = b.astype(complex).copy()
    basis = []
    out = np.empty(A.shape[1])
    for m in range(A.shape[1]):
        v = A[:, m].astype(complex)
        vn = np.linalg.norm(v)
        for _ in range(2):
            for qv in basis:
                v = v - qv * (qv.conj() @ v)
        if np.linalg.norm(v) > tol * max(vn, 1e-300):
            qv = v / np.linalg.norm(v)
            basis.append(qv)
            r = r - qv * (qv.conj() @ r)
        out[m] = min(np.linalg.norm(r) / bn, out[m - 1] if m else np.inf)
    return out


# ----------------------------------------------------------------------------
# Contrast cells
# ----------------------------------------------------------------------------

@dataclass
class ContrastCells:
    """Partition of a box domain into ``divisions^n`` grid-aligned cells."""

    lower: np.ndarray
    upper: np.ndarray
    divisions: int

    @classmethod
    def for_config(cls, config: ProblemConfig, divisions: int) -> "ContrastCells":
        if config.omega.kind != "box":
            raise ValueError("reconstruction needs a box domain")
        return cls(np.asarray(config.omega.lower), np.asarray(config.omega.upper), int(divisions))

    @property
    def count(self) -> int:
        return self.divisions ** len(self.lower)

    @property
    def width(self) -> np.ndarray:
        return (self.upper - self.lower) / self.divisions

    @property
    def measure(self) -> float:
        return float(np.prod(self.width))

    def centers(self) -> np.ndarray:
        n = len(self.lower)
        idx = np.stack(np.unravel_index(np.arange(self.count), (self.divisions,) * n), axis=1)
        return self.lower + (idx + 0.5) * self.width

    def index_of(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        t = np.floor((pts - self.lower) / self.width).astype(int)
        inside = np.all((t >= 0) & (t < self.divisions), axis=1)
        t = np.clip(t, 0, self.divisions - 1)
        flat = np.ravel_multi_index(tuple(t.T), (self.divisions,) * len(self.lower))
        return np.where(inside, flat, -1)

    def field(self, values) -> FieldSpec:
        return FieldSpec("piecewise_cells", lower=tuple(self.lower), upper=tuple(self.upper),
                         divisions=self.divisions, values=tuple(float(v) for v in values))


def cell_operators(model: Model, cells: ContrastCells):
    """Per-cell interior mass matrices ``M_c`` and load vectors ``b_c = int_c phi_i``."""
    g = model.grid
    idx = model.partition.interior
    pts, w, B = cell_quadrature(g, 2)
    owner = cells.index_of(g.cell_centers)
    local_mass = np.einsum("ka,k,kb->ab", B, w, B)
    local_load = B.T @ w
    pos = -np.ones(g.num_nodes, dtype=int)
    pos[idx] = np.arange(len(idx))
    mats = np.zeros((cells.count, len(idx), len(idx)))
    loads = np.zeros((cells.count, len(idx)))
    for e in np.flatnonzero(owner >= 0):
        c = owner[e]
        p = pos[g.cells[e]]
        ok = p >= 0
        pp = p[ok]
        mats[c][np.ix_(pp, pp)] += local_mass[np.ix_(ok, ok)]
        loads[c][pp] += local_load[ok]
    return mats, loads


def cell_averages(func, cells: ContrastCells, q: int = 6) -> np.ndarray:
    """Cell averages of ``func(points)`` by subdivided tensor Gauss rules."""
    from .quadrature import tensor_gauss01
    n = len(cells.lower)
    xi, w = tensor_gauss01(q, n)
    sub = 8
    out = np.zeros(cells.count)
    corners = cells.centers() - 0.5 * cells.width
    for k in range(cells.count):
        tot = 0.0
        for off in np.ndindex(*(sub,) * n):
            lo = corners[k] + np.asarray(off) * cells.width / sub
            pts = lo + xi * cells.width / sub
            tot += np.sum(w * func(pts)) / sub ** n
        out[k] = tot
    return out


def sampled_sup(func, cells: ContrastCells) -> float:
    """``max |func|`` over a dense lattice of the reconstruction box."""
    n = len(cells.lower)
    t = [np.linspace(a, b, 801 if n == 1 else 121) for a, b in zip(cells.lower, cells.upper)]
    pts = np.stack(np.meshgrid(*t, indexing="ij"), axis=-1).reshape(-1, n)
    return float(np.max(np.abs(func(pts))))


# ----------------------------------------------------------------------------
# Reconstruction
# ----------------------------------------------------------------------------

@dataclass
class ReconstructionResult:
    mode: str
    centers: np.ndarray
    recovered: np.ndarray
    reference: np.ndarray | None
    rel_error: float | None
    imag_residue: float
    trace: dict = field(default_factory=dict)
    cell_measure: float = 1.0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "recovered": self.recovered.tolist(),
            "reference": None if self.reference is None else self.reference.tolist(),
            "rel_error": self.rel_error,
            "imag_residue": self.imag_residue,
            "trace": self.trace,
        }


def _rel_l2(rec, ref) -> float | None:
    if ref is None:
        return None
    den = np.linalg.norm(ref)
    num = np.linalg.norm(rec - ref)
    return float(num / den) if den > 0 else float(num)


def cell_targets(model: Model, cells: ContrastCells) -> tuple[np.ndarray, np.ndarray]:
    """Discrete cell indicators and the discrete constant ``1_h``.

    The indicator of cell ``c`` is the minimum-L2 interior function ``f_c``
    with moments ``int_{c_k} f_c 1_h = |c| delta_{kc}`` for every cell
    ``k``, so that ``sum_k dq_k int_{c_k} f_c 1_h / |c|`` returns ``dq_c``
    exactly for cell-wise constant contrasts.  Returns ``F`` (interior DOFs
    by cells) and the interior values of ``1_h``.
    """
    idx = model.partition.interior
    mats, _ = cell_operators(model, cells)
    ones = np.ones(len(idx))
    G = mats @ ones                     # (cells, dofs): int_{c_k} phi_i 1_h
    M = mass_matrix(model.grid)[np.ix_(idx, idx)]
    MiGt = np.linalg.solve(M, G.T)
    S = G @ MiGt
    if np.linalg.matrix_rank(S) < cells.count:
        raise ValueError("grid too coarse to resolve the contrast cells")
    F = MiGt @ np.linalg.solve(S, cells.measure * np.eye(cells.count))
    return F, ones


def recover_contrast_oracle(model: Model, lam1: DNMap, lam2: DNMap, q1: FieldSpec, q2: FieldSpec,
                            cells: ContrastCells, windows=("W1", "W2"), reg: float | None = None,
                            runge_tol: float = 1e-2, budget: int | None = None,
                            reg_scale: float = DEFAULT_REG_SCALE) -> ReconstructionResult:
    """Cell averages of ``q1 - q2`` from ``<(Lambda1 - Lambda2) g1, g2>``.

    For each cell, window data ``g1`` makes the ``(A, q1)`` solution
    approximate the discrete cell indicator and ``g2`` makes the ``(-A, q2)``
    solution approximate the constant 1.  ``budget`` caps the number of
    sources per window (nearest first).  The trace holds per-cell Runge
    errors and an error bound made of a Runge part, a discretisation part
    (non-constant contrast inside a cell) and a roundoff part, the gap
    between the DN readout and the direct integral ``int (q1 - q2) u1 u2``
    of the same approximants.  Cells whose Runge errors or roundoff exceed
    ``runge_tol`` are flagged untrusted.
    """
    model.config.require_far_windows(windows)
    idx = model.partition.interior
    src = []
    for w in windows:
        dofs = order_by_distance(model, _window_dofs(model, w))
        src.append(np.sort(dofs[:budget]) if budget else np.sort(dofs))
    F, ones = cell_targets(model, cells)
    M = mass_matrix(model.grid)[np.ix_(idx, idx)]
    B1 = model.form(q1, +1)
    one_h = GridFunction.from_dofs(model.grid, idx, ones)
    r2 = runge_approximate(model, one_h, src[1], model.form(q2, -1), reg, reg_scale=reg_scale)
    u2 = r2.approximation.values[idx]
    lam = lam1 - lam2
    dq = contrast_function(q1, q2)
    dq_sup = sampled_sup(dq, cells)
    dQ = model.Q(q1).block("I", "I") - model.Q(q2).block("I", "I")
    reference = cell_averages(dq, cells)
    meas = cells.measure
    e2 = np.sqrt(max(np.real((u2 - ones).conj() @ M @ (u2 - ones)), 0.0))
    rec = np.zeros(cells.count, dtype=complex)
    errs1 = np.zeros(cells.count)
    bound_runge = np.zeros(cells.count)
    bound_disc = np.zeros(cells.count)
    bound_round = np.zeros(cells.count)
    for c in range(cells.count):
        fc = F[:, c]
        r1 = runge_approximate(model, GridFunction.from_dofs(model.grid, idx, fc), src[0], B1, reg,
                              reg_scale=reg_scale)
        errs1[c] = r1.error
        rec[c] = dn_pair(lam, r1.coefficients, r2.coefficients) / meas
        u1 = r1.approximation.values[idx]
        e1 = np.sqrt(max(np.real((u1 - fc).conj() @ M @ (u1 - fc)), 0.0))
        fn = np.sqrt(np.real(fc @ M @ fc))
        bound_runge[c] = dq_sup * (e1 * np.sqrt(np.real(u2.conj() @ M @ u2)) + fn * e2) / meas
        bound_disc[c] = abs(ones @ dQ @ fc / meas - reference[c])
        direct = u2 @ dQ @ u1 / meas
        bound_round[c] = abs(rec[c] - direct)
    bounds = bound_runge + bound_disc + bound_round
    trusted = (errs1 <= runge_tol) & (r2.error <= runge_tol) & (bound_round <= runge_tol * max(dq_sup, 1.0))
    if not trusted.all():
        warnings.warn(f"{int((~trusted).sum())} of {cells.count} cells have untrusted estimates")
    trace = {"runge_error_f": errs1.tolist(), "runge_error_one": r2.error, "reg_one": r2.reg,
             "sources": [int(len(s_)) for s_ in src], "error_bound": bounds.tolist(),
             "bound_runge": bound_runge.tolist(), "bound_discretisation": bound_disc.tolist(),
             "bound_roundoff": bound_round.tolist(), "trusted": trusted.tolist(), "runge_tol": runge_tol}
    return ReconstructionResult("oracle", cells.centers(), rec.real, reference, _rel_l2(rec.real, reference),
                                float(np.max(np.abs(rec.imag))) if rec.size else 0.0, trace, meas)


def contrast_function(q1: FieldSpec, q2: FieldSpec):
    """Callable ``x -> q1(x) - q2(x)``."""
    return lambda pts: sample_field(q1, pts) - sample_field(q2, pts)


def born_forward(model: Model, cells: ContrastCells, q2: FieldSpec, windows=("W1", "W2")):
    """Linear map from cell contrasts to probe pairings around the background ``q2``.

    Row ``(j, k)`` holds ``int_c u_j u_k`` where ``u_j = P_{A,q2} g_j`` for
    hats ``g_j`` in the first window and ``u_k = P_{-A,q2} g_k`` in the
    second.  Returns the matrix ``(probes, cells)`` and the probe DOFs.
    """
    w1 = _window_dofs(model, windows[0])
    w2 = _window_dofs(model, windows[1])
    U1 = source_responses(model, model.form(q2, +1), w1)
    U2 = source_responses(model, model.form(q2, -1), w2)
    mats, _ = cell_operators(model, cells)
    F = np.einsum("ik,cij,jl->klc", U2, mats, U1, optimize=True)
    # row (k, l): second-window hat k, first-window hat l
    return F.reshape(len(w2) * len(w1), cells.count), w1, w2


def born_reconstruct(model: Model, lam_diff: DNMap, q2: FieldSpec, cells: ContrastCells,
                     windows=("W1", "W2"), reg: float | None = None,
                     reference_q1: FieldSpec | None = None,
                     reg_scale: float = DEFAULT_REG_SCALE) -> ReconstructionResult:
    """Tikhonov solve of the linearised identity for the cell contrasts."""
    F, w1, w2 = born_forward(model, cells, q2, windows)
    pos1 = lam_diff.positions(w1)
    pos2 = lam_diff.positions(w2)
    d = lam_diff.data[np.ix_(pos2, pos1)].reshape(-1)
    if F.shape[0] < cells.count:
        warnings.warn("fewer probes than unknown cells")
    A = np.concatenate([F.real, F.imag])
    b = np.concatenate([d.real, d.imag])
    scale = np.linalg.norm(A, 2)
    x, used, sig = tikhonov_solve(A, b, reg, reg_scale)
    eff_rank = int(np.sum(sig ** 2 > used)) if used > 0 else int(np.sum(sig > sig[0] * 1e-15))
    reference = None
    if reference_q1 is not None:
        reference = cell_averages(contrast_function(reference_q1, q2), cells)
    resid = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
    trace = {"reg": used, "effective_rank": eff_rank, "singular_values": sig.tolist(),
             "probes": int(F.shape[0]), "data_residual": resid, "operator_norm": float(scale)}
    return ReconstructionResult("born", cells.centers(), x, reference, _rel_l2(x, reference), 0.0, trace,
                                cells.measure)
