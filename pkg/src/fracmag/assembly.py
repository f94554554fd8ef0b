"""Galerkin assembly of the magnetic fractional form and the potential term.

Every entry is a positively weighted sum over quadrature point pairs of

    K(x, y) (phi_j(x) - E phi_j(y)) (phi_i(x) - conj(E) phi_i(y)),

so the assembled matrix is Hermitian positive semidefinite by construction
and the matrix for ``-A`` is its exact transpose.  Element pairs are split
into far pairs (tensor Gauss on both cells), touching or identical pairs
(singularity-adapted reference rules) and the unbounded complement of the
computational box (closed-form radial tail of the kernel).
"""
from __future__ import annotations

import itertools
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import beta as beta_fn, betainc

from .geometry import DofPartition, FieldSpec, Grid, local_basis, sample_field
from .kernel import KernelSpec
from .magnetic import PhaseContext, cos_sin, phase_angle
from .quadrature import pair_rule, tensor_gauss01

DEFAULT_ORDER = 4
# cell pairs with max offset <= NEAR_SPAN use pair rules, the rest plain tensor Gauss
NEAR_SPAN = 2


# ----------------------------------------------------------------------------
# Grid functions and form matrices
# ----------------------------------------------------------------------------

@dataclass
class GridFunction:
    """Nodal coefficients (complex) of a continuous piecewise-(multi)linear function."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)
        if self.values.size != self.grid.num_nodes:
            raise ValueError(f"expected {self.grid.num_nodes} coefficients, got {self.values.size}")

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.num_nodes, dtype=complex))

    @classmethod
    def from_dofs(cls, grid: Grid, dofs, values) -> "GridFunction":
        out = np.zeros(grid.num_nodes, dtype=complex)
        out[np.asarray(dofs, dtype=int)] = values
        return cls(grid, out)

    @classmethod
    def interpolate(cls, grid: Grid, func, dofs=None) -> "GridFunction":
        """Nodal interpolant of ``func``; entries outside ``dofs`` are set to zero."""
        vals = np.asarray(func(grid.nodes), dtype=complex).reshape(-1)
        if dofs is not None:
            keep = np.zeros(grid.num_nodes, dtype=bool)
            keep[np.asarray(dofs, dtype=int)] = True
            vals = np.where(keep, vals, 0.0)
        return cls(grid, vals)

    def restrict(self, dofs) -> np.ndarray:
        return self.values[np.asarray(dofs, dtype=int)]

    def respects(self, partition: DofPartition) -> bool:
        return bool(np.all(self.values[partition.frozen] == 0))

    def evaluate(self, points) -> np.ndarray:
        """Point values; zero outside the computational box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cell, local = self.grid.locate(pts)
        vals = np.sum(local_basis(local) * self.values[self.grid.cells[cell]], axis=1)
        L = self.grid.half_width
        outside = np.any(np.abs(pts) > L, axis=1)
        return np.where(outside, 0.0, vals)

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "GridFunction":
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class FormMatrix:
    """Dense complex matrix over the active DOFs of a partition.

    The bilinear pairing is ``b(u, v) = v^T M u``; the sesquilinear one is
    ``B(u, v) = v^H M u``.  Both use the same matrix because the nodal basis
    is real.
    """

    data: np.ndarray
    partition: DofPartition
    meta: dict = field(default_factory=dict)

    @property
    def dofs(self) -> np.ndarray:
        return self.partition.active

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def positions(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        pos = np.searchsorted(self.dofs, idx)
        if np.any(pos >= len(self.dofs)) or np.any(self.dofs[np.minimum(pos, len(self.dofs) - 1)] != idx):
            raise KeyError("index set contains non-active DOFs")
        return pos

    def _index(self, which) -> np.ndarray:
        if isinstance(which, str):
            if which == "I":
                return self.partition.interior
            if which == "E":
                return self.partition.exterior
            if which.startswith("W:"):
                return self.partition.window(which[2:])
            raise KeyError(which)
        return np.asarray(which, dtype=int)

    def block(self, rows, cols) -> np.ndarray:
        """Sub-matrix for DOF sets given as ``'I'``, ``'E'``, ``'W:<name>'`` or index arrays."""
        r = self.positions(self._index(rows))
        c = self.positions(self._index(cols))
        return self.data[np.ix_(r, c)]

    def vector(self, u: GridFunction) -> np.ndarray:
        return u.values[self.dofs]

    def bilinear(self, u: GridFunction, v: GridFunction) -> complex:
        return complex(self.vector(v) @ (self.data @ self.vector(u)))

    def sesquilinear(self, u: GridFunction, v: GridFunction) -> complex:
        return complex(np.conj(self.vector(v)) @ (self.data @ self.vector(u)))

    def __add__(self, other: "FormMatrix") -> "FormMatrix":
        if not np.array_equal(self.dofs, other.dofs):
            raise ValueError("form matrices live on different DOF sets")
        meta = {**self.meta, **{k: v for k, v in other.meta.items() if k not in self.meta}}
        meta["parts"] = self.meta.get("parts", [self.meta.get("kind")]) + other.meta.get("parts", [other.meta.get("kind")])
        meta["kind"] = "B"
        return FormMatrix(self.data + other.data, self.partition, meta)

    def transpose(self) -> "FormMatrix":
        return FormMatrix(self.data.T.copy(), self.partition, {**self.meta, "transposed": True})


# ----------------------------------------------------------------------------
# Quadrature helpers shared with pointwise evaluation and norms
# ----------------------------------------------------------------------------

def cell_quadrature(grid: Grid, q: int):
    """Global tensor-Gauss points, weights and basis values.

    Returns ``points (C, Q, n)``, ``weights (Q,)`` (physical, same for all
    cells) and ``basis (Q, 2^n)``.
    """
    xi, w = tensor_gauss01(q, grid.n)
    pts = grid.cell_lower[:, None, :] + grid.h * xi[None, :, :]
    return pts, w * grid.h ** grid.n, local_basis(xi)


def box_tail_density(points, half_width: float, n: int, s: float, c: float) -> np.ndarray:
    """``kappa(x) = int_{y outside [-L, L]^n} c |x - y|^{-n-2s} dy`` in closed form.

    In 2D each side of the box contributes
    ``d^{-2s} / (2s) * int (1 + u^2)^{-1-s} du`` over the side seen from x,
    where ``d`` is the distance to that side; the u-integral is an incomplete
    beta function.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    L = half_width
    if n == 1:
        return c / (2 * s) * ((L - x[:, 0]) ** (-2 * s) + (L + x[:, 0]) ** (-2 * s))
    total = np.zeros(len(x))
    half_b = 0.5 * beta_fn(0.5, s + 0.5)

    def side_integral(U):
        v = U * U / (1 + U * U)
        return half_b * betainc(0.5, s + 0.5, v)

    for axis in range(2):
        other = 1 - axis
        for sgn in (1.0, -1.0):
            d = L - sgn * x[:, axis]
            up = (L - x[:, other]) / d
            dn = (L + x[:, other]) / d
            total += d ** (-2 * s) * (side_integral(up) + side_integral(dn))
    return c / (2 * s) * total


def _near_offsets(n: int):
    """Cell offsets handled by pair rules: touching pairs and pairs one cell apart."""
    return itertools.product(range(-NEAR_SPAN, NEAR_SPAN + 1), repeat=n)


def _offset_grid(n: int, span: int) -> np.ndarray:
    rng = np.arange(-span, span + 1)
    return np.array(list(itertools.product(rng, repeat=n)), dtype=int)


def _box_sums(table: np.ndarray, span: int, m1: int) -> np.ndarray:
    """For every cell c, sum ``table[o]`` over offsets with ``c + o`` a valid cell.

    ``table`` has shape ``(2*span+1,)*n + (Q,)``; the result ``(m1^n, Q)``.
    """
    n = table.ndim - 1
    cs = table
    for axis in range(n):
        cs = np.cumsum(cs, axis=axis)
        pad = [(0, 0)] * cs.ndim
        pad[axis] = (1, 0)
        cs = np.pad(cs, pad)
    cells = np.stack(np.unravel_index(np.arange(m1 ** n), (m1,) * n), axis=1)
    lo = span - cells  # offset index of o = -c
    hi = lo + m1  # exclusive
    out = np.zeros((len(cells), table.shape[-1]))
    for corner in itertools.product((0, 1), repeat=n):
        idx = tuple(np.where(np.array(corner) == 1, hi, lo).T)
        sign = (-1) ** (n - sum(corner))
        out += sign * cs[idx]
    return out


# ----------------------------------------------------------------------------
# Engine
# ----------------------------------------------------------------------------

class _Engine:
    def __init__(self, grid: Grid, s: float, c: float, q: int, box_tail: bool):
        if q < 2:
            raise ValueError("quadrature order must be at least 2")
        self.grid, self.s, self.c, self.q, self.box_tail = grid, s, c, q, box_tail
        self.n = grid.n
        self.m1 = grid.m - 1
        self.nloc = 2 ** self.n
        self.cell_idx = grid.cell_multi_index
        self.pts, self.w, self.B = cell_quadrature(grid, q)
        self.xi_ref, _ = tensor_gauss01(q, self.n)

    def kernel_of_dist(self, d):
        return self.c * d ** (-(self.n + 2.0 * self.s))

    # --- real (A-independent) part -------------------------------------
    def real_part(self) -> np.ndarray:
        g = self.grid
        n, h, N = self.n, g.h, g.num_nodes
        M = np.zeros((N, N))
        span = self.m1 - 1
        offsets = _offset_grid(n, span)
        far = np.max(np.abs(offsets), axis=1) > NEAR_SPAN
        xi = self.xi_ref
        Q = len(xi)
        W = self.w
        # K between Gauss points k (cell 0) and l (cell o)
        diff = offsets[far][:, None, None, :] + xi[None, None, :, :] - xi[None, :, None, :]
        Kloc = self.kernel_of_dist(h * np.linalg.norm(diff, axis=-1))
        G = np.zeros((len(offsets), self.nloc, self.nloc))
        G[far] = np.einsum("ka,k,okl,l,lb->oab", self.B, W, Kloc, W, self.B, optimize=True)
        gk = np.zeros((len(offsets), Q))
        gk[far] = np.einsum("okl,l->ok", Kloc, W)
        del Kloc, diff
        table = gk.reshape((2 * span + 1,) * n + (Q,))
        d = _box_sums(table, span, self.m1)
        if self.box_tail:
            d = d + box_tail_density(self.pts.reshape(-1, n), g.half_width, n, self.s, self.c).reshape(d.shape)
        diag_blocks = 2.0 * np.einsum("ka,k,ck,kb->cab", self.B, W, d, self.B, optimize=True)
        cells = g.cells
        for a in range(self.nloc):
            for b in range(self.nloc):
                np.add.at(M, (cells[:, a], cells[:, b]), diag_blocks[:, a, b])
        # far cross terms: block for the cell pair (c1, c2) is -2 G(c2 - c1)
        oidx = self._offset_index(span)
        for a in range(self.nloc):
            ra = cells[:, a]
            for b in range(self.nloc):
                cb = cells[:, b]
                vals = -2.0 * G[:, a, b][oidx]
                M[np.ix_(ra, cb)] += vals
        # near pairs by reference rules, scattered over all valid cells
        for o, blk in self.near_reference().items():
            c1, c2 = self._cell_pairs(np.array(o))
            self._scatter_pair_block(M, c1, c2, blk)
        return M

    def _offset_index(self, span: int) -> np.ndarray:
        """Matrix of flat offset indices for all ordered cell pairs."""
        ci = self.cell_idx
        o = ci[None, :, :] - ci[:, None, :] + span
        return np.ravel_multi_index(tuple(np.moveaxis(o, -1, 0)), (2 * span + 1,) * self.n)

    def _cell_pairs(self, o: np.ndarray):
        ci = self.cell_idx
        c2 = ci + o
        ok = np.all((c2 >= 0) & (c2 < self.m1), axis=1)
        c1 = np.flatnonzero(ok)
        c2f = np.ravel_multi_index(tuple(c2[ok].T), (self.m1,) * self.n)
        return c1, c2f

    def _scatter_pair_block(self, M, c1, c2, blk):
        """Add ``blk`` (2*nloc square, or stacked per pair) over cell pairs."""
        cells = self.grid.cells
        nodes = np.concatenate([cells[c1], cells[c2]], axis=1)
        per_pair = blk.ndim == 3
        for a in range(2 * self.nloc):
            for b in range(2 * self.nloc):
                v = blk[:, a, b] if per_pair else blk[a, b]
                np.add.at(M, (nodes[:, a], nodes[:, b]), v)

    def near_rule(self, o):
        rule = pair_rule(tuple(int(v) for v in o), self.s, self.q)
        h, n = self.grid.h, self.n
        K = self.kernel_of_dist(h * np.linalg.norm(rule.z, axis=1))
        wk = rule.weight * h ** (2 * n) * K
        return rule, wk, local_basis(rule.xi), local_basis(rule.eta)

    def near_reference(self) -> dict:
        out = {}
        for o in _near_offsets(self.n):
            rule, wk, Bx, By = self.near_rule(o)
            A = np.concatenate([Bx, -By], axis=1)
            out[o] = A.T @ (wk[:, None] * A)
        return out

    # --- magnetic corrections ------------------------------------------
    def magnetic_part(self, ctx: PhaseContext, real: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (Re, Im) including the corrections for the phase."""
        g = self.grid
        n, h, N = self.n, g.h, g.num_nodes
        RA = ctx.a_spec.support_radius()
        Re = real.copy()
        Im = np.zeros((N, N))
        # near pairs whose hull meets supp A are recomputed with the phase
        ref = self.near_reference()
        for o in _near_offsets(n):
            c1, c2 = self._cell_pairs(np.array(o))
            lo = np.minimum(g.cell_lower[c1], g.cell_lower[c2])
            hi = np.maximum(g.cell_lower[c1], g.cell_lower[c2]) + h
            dist = np.linalg.norm(np.clip(0.0, lo, hi), axis=1)
            hit = dist < RA
            if not hit.any():
                continue
            c1h, c2h = c1[hit], c2[hit]
            rule, wk, Bx, By = self.near_rule(o)
            blk_re = np.empty((len(c1h), 2 * self.nloc, 2 * self.nloc))
            blk_im = np.empty_like(blk_re)
            for k0 in range(0, len(c1h), 64):
                sl = slice(k0, k0 + 64)
                x = g.cell_lower[c1h[sl]][:, None, :] + h * rule.xi[None]
                y = g.cell_lower[c1h[sl]][:, None, :] + h * (np.array(o) + rule.eta)[None]
                th = phase_angle(ctx, x.reshape(-1, n), y.reshape(-1, n)).reshape(x.shape[:2])
                C, S = cos_sin(th)
                nb = x.shape[0]
                Ar = np.concatenate([np.broadcast_to(Bx, (nb,) + Bx.shape), -C[..., None] * By[None]], axis=2)
                Ai = np.concatenate([np.zeros((nb,) + Bx.shape), -S[..., None] * By[None]], axis=2)
                WAr = wk[None, :, None] * Ar
                WAi = wk[None, :, None] * Ai
                blk_re[sl] = np.einsum("pka,pkb->pab", Ar, WAr) + np.einsum("pka,pkb->pab", Ai, WAi)
                blk_im[sl] = np.einsum("pka,pkb->pab", Ar, WAi) - np.einsum("pka,pkb->pab", Ai, WAr)
            self._scatter_pair_block(Re, c1h, c2h, blk_re - ref[o][None])
            self._scatter_pair_block(Im, c1h, c2h, blk_im)
        # far cell pairs whose averaged box meets the support ball; the
        # phase is exactly one on every other far pair
        span = self.m1 - 1
        ci = self.cell_idx
        xi, W, B = self.xi_ref, self.w, self.B
        axis0 = g.axis[0]
        acc_re = np.zeros((N, N))
        acc_im = np.zeros((N, N))
        # midpoints depend on c1 + c2 only: tabulate sign*A there
        sums = _offset_grid(n, span) + span  # all values of c1 + c2
        ksum = xi[:, None, :] + xi[None, :, :]
        mids = axis0 + 0.5 * h * (sums[:, None, None, :] + ksum[None])
        mlo = axis0 + 0.5 * h * sums
        reach = np.linalg.norm(np.clip(0.0, mlo, mlo + h), axis=1) < RA
        Amid = np.zeros(mids.shape)
        Amid[reach] = ctx.potential(mids[reach].reshape(-1, n)).reshape(mids[reach].shape)
        sum_shape = (2 * span + 1,) * n
        for c1 in range(g.num_cells):
            c2 = np.arange(g.num_cells)
            o = ci[c2] - ci[c1]
            sm = ci[c2] + ci[c1]
            sidx = np.ravel_multi_index(tuple(sm.T), sum_shape)
            keep = (np.max(np.abs(o), axis=1) > NEAR_SPAN) & reach[sidx]
            if not keep.any():
                continue
            c2, o, sidx = c2[keep], o[keep], sidx[keep]
            # x - y for Gauss points k in c1, l in c2
            dxy = -h * (o[:, None, None, :] + xi[None, None, :, :] - xi[None, :, None, :])
            th = np.sum(dxy * Amid[sidx], axis=-1)
            C, S = cos_sin(th)
            om = W[None, :, None] * W[None, None, :] * self.kernel_of_dist(np.linalg.norm(dxy, axis=-1))
            gre = B.T @ ((om * (C - 1.0)) @ B)
            gim = B.T @ ((om * S) @ B)
            rows = g.cells[c1]
            cols = g.cells[c2]
            for a in range(self.nloc):
                for b in range(self.nloc):
                    acc_re[rows[a], cols[:, b]] += gre[:, a, b]
                    acc_im[rows[a], cols[:, b]] += gim[:, a, b]
        Re -= 2.0 * acc_re
        Im -= 2.0 * acc_im
        return Re, Im

    def _phi_matrix(self) -> sp.csr_matrix:
        g = self.grid
        Q = len(self.w)
        rows = np.repeat(np.arange(g.num_cells * Q), self.nloc)
        cols = np.repeat(g.cells, Q, axis=0).ravel()
        vals = np.tile(self.B, (g.num_cells, 1)).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(g.num_cells * Q, g.num_nodes))


_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_CACHE_SIZE = 24


def _cached(key, build):
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    val = build()
    val.setflags(write=False)
    _CACHE[key] = val
    if len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return val


def clear_cache() -> None:
    _CACHE.clear()


def _real_matrix(grid: Grid, s: float, c: float, q: int, box_tail: bool) -> np.ndarray:
    key = ("real", grid.key, s, c, q, box_tail)

    def build():
        M = _Engine(grid, s, c, q, box_tail).real_part()
        return 0.5 * (M + M.T)

    return _cached(key, build)


def full_form_matrix(grid: Grid, s: float, c: float, ctx: PhaseContext | None, q: int = DEFAULT_ORDER,
                     box_tail: bool = True) -> np.ndarray:
    """Form matrix over all grid nodes (complex)."""
    real = _real_matrix(grid, s, c, q, box_tail)
    if ctx is None or ctx.trivial:
        return real.astype(complex)
    key = ("mag", grid.key, s, c, q, box_tail, ctx.a_spec, ctx.sign)

    def build():
        Re, Im = _Engine(grid, s, c, q, box_tail).magnetic_part(ctx, np.asarray(real))
        Re = 0.5 * (Re + Re.T)
        Im = 0.5 * (Im - Im.T)
        return Re + 1j * Im

    return _cached(key, build)


def _check_kernel(grid: Grid, kernel: KernelSpec):
    if kernel.mode != "closed_form":
        raise ValueError("assembly supports the closed_form kernel only; heat modes are for kernel checks")
    if kernel.n != grid.n:
        raise ValueError("kernel dimension does not match the grid")


def assemble_fractional_laplacian(grid: Grid, partition: DofPartition, kernel: KernelSpec,
                                  order: int = DEFAULT_ORDER, box_tail: bool = True) -> FormMatrix:
    """Form of ``2 (-Delta)^s`` (the A = 0 operator) on the active DOFs."""
    _check_kernel(grid, kernel)
    full = full_form_matrix(grid, kernel.s, kernel.c, None, order, box_tail)
    act = partition.active
    meta = {"kind": "L", "s": kernel.s, "kernel_mode": kernel.mode, "a_spec": "zero",
            "sign": 1, "quadrature_order": order, "box_tail": box_tail}
    return FormMatrix(full[np.ix_(act, act)], partition, meta)


def assemble_L(grid: Grid, partition: DofPartition, kernel: KernelSpec, ctx: PhaseContext,
               order: int = DEFAULT_ORDER, box_tail: bool = True) -> FormMatrix:
    """Form matrix of ``<L^s_A u, v>`` on the active DOFs."""
    if ctx.trivial:
        fm = assemble_fractional_laplacian(grid, partition, kernel, order, box_tail)
        return FormMatrix(fm.data, partition, {**fm.meta, "a_spec": field_hash(ctx.a_spec), "sign": ctx.sign})
    _check_kernel(grid, kernel)
    full = full_form_matrix(grid, kernel.s, kernel.c, ctx, order, box_tail)
    if not np.all(np.isfinite(full)):
        raise FloatingPointError("kernel evaluation produced non-finite values")
    act = partition.active
    meta = {"kind": "L", "s": kernel.s, "kernel_mode": kernel.mode, "a_spec": field_hash(ctx.a_spec),
            "sign": ctx.sign, "quadrature_order": order, "box_tail": box_tail}
    return FormMatrix(full[np.ix_(act, act)], partition, meta)


def field_hash(spec: FieldSpec) -> str:
    import hashlib
    return hashlib.sha256(repr(spec).encode()).hexdigest()[:16]


def assemble_Q(grid: Grid, partition: DofPartition, q_spec: FieldSpec, omega=None,
               order: int = DEFAULT_ORDER) -> FormMatrix:
    """Potential term ``int_Omega q u v`` restricted to interior DOFs.

    Piecewise-constant potentials aligned with the grid are integrated
    exactly by the per-cell Gauss rule.
    """
    pts, w, B = cell_quadrature(grid, max(order, 2))
    C, Q, n = pts.shape
    flat = pts.reshape(-1, n)
    qv = sample_field(q_spec, flat)
    if omega is not None:
        qv = np.where(omega.contains(flat), qv, 0.0)
    qv = qv.reshape(C, Q)
    blocks = np.einsum("ka,k,ck,kb->cab", B, w, qv, B, optimize=True)
    N = grid.num_nodes
    M = np.zeros((N, N))
    for a in range(B.shape[1]):
        for b in range(B.shape[1]):
            np.add.at(M, (grid.cells[:, a], grid.cells[:, b]), blocks[:, a, b])
    mask = np.zeros(N, dtype=bool)
    mask[partition.interior] = True
    M[~mask, :] = 0.0
    M[:, ~mask] = 0.0
    act = partition.active
    meta = {"kind": "Q", "q_spec": field_hash(q_spec), "quadrature_order": order}
    return FormMatrix(M[np.ix_(act, act)].astype(complex), partition, meta)


def mass_matrix(grid: Grid) -> np.ndarray:
    """Exact mass matrix of the nodal basis over the whole box (all nodes)."""
    key = ("mass", grid.key)

    def build():
        pts, w, B = cell_quadrature(grid, 2)
        blk = np.einsum("ka,k,kb->ab", B, w, B)
        N = grid.num_nodes
        M = np.zeros((N, N))
        for a in range(B.shape[1]):
            for b in range(B.shape[1]):
                np.add.at(M, (grid.cells[:, a], grid.cells[:, b]), blk[a, b])
        return M

    return _cached(key, build)


def assemble_form(grid: Grid, partition: DofPartition, kernel: KernelSpec, ctx: PhaseContext,
                  q_spec: FieldSpec, omega=None, order: int = DEFAULT_ORDER) -> FormMatrix:
    """Full form ``B = L + Q``."""
    return assemble_L(grid, partition, kernel, ctx, order) + assemble_Q(grid, partition, q_spec, omega, order)
