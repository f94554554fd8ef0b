"""Pointwise principal-value evaluation of ``L^s_A u``.

``L u(x) = 2 lim_{eps -> 0} int_{|y - x| > eps} (u(x) - E_A(x, y) u(y)) K(x, y) dy``

The integral over ``|y - x| > eps`` is assembled from an outer part
(``|y - x| >= h`` inside the box), geometric shells
``eps_{k+1} <= |y - x| <= eps_k`` with ``eps_k = h / 2^k`` and the closed-form
contribution of the complement of the box (where ``u = 0``).  The limit is
extrapolated from the last three shell values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import GridFunction, box_tail_density
from .geometry import Grid
from .kernel import KernelSpec
from .magnetic import PhaseContext, cos_sin, phase_angle
from .quadrature import gauss01, interval_gauss

SHELLS = 6


@dataclass
class PointwiseResult:
    value: complex
    error: float
    eps: np.ndarray
    partial: np.ndarray
    ratio: float


def _as_callable(u, grid: Grid):
    if isinstance(u, GridFunction):
        return u.evaluate
    L = grid.half_width

    def f(points):
        pts = np.atleast_2d(points)
        vals = np.asarray(u(pts), dtype=complex).reshape(-1)
        return np.where(np.any(np.abs(pts) > L, axis=1), 0.0, vals)

    return f


def _integrand(f, ux, x, y, ctx: PhaseContext, kernel: KernelSpec):
    d = np.linalg.norm(y - x, axis=1)
    C, S = cos_sin(phase_angle(ctx, np.broadcast_to(x, y.shape), y))
    K = kernel.c * d ** (-(kernel.n + 2 * kernel.s))
    return (ux - (C + 1j * S) * f(y)) * K


def _panels_1d(x: float, a: float, b: float, grid: Grid, sign: float, q: int):
    """Gauss points for ``t`` in ``[a, b]`` with ``y = x + sign t``, split at grid nodes."""
    nodes = np.abs(grid.axis - x)
    cuts = np.unique(np.concatenate([[a, b], nodes[(nodes > a) & (nodes < b)]]))
    ts, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        t, w = interval_gauss(lo, hi, q)
        ts.append(t)
        ws.append(w)
    t = np.concatenate(ts)
    return x + sign * t, np.concatenate(ws)


def _region_1d(f, ux, x, a, b, grid, ctx, kernel, q):
    total = 0j
    for sign in (1.0, -1.0):
        edge = grid.half_width - sign * x
        hi = min(b, edge)
        if hi <= a:
            continue
        y, w = _panels_1d(x, a, hi, grid, sign, q)
        total += np.sum(w * _integrand(f, ux, np.array([x]), y[:, None], ctx, kernel))
    return total


def _sector_rule(q_theta: int):
    t, w = gauss01(q_theta)
    theta = (np.arange(8)[:, None] + t[None, :]).ravel() * (np.pi / 4)
    return theta, np.tile(w * np.pi / 4, 8)


def _annulus_2d(f, ux, x, r0, r1, ctx, kernel, q):
    """Polar rule on ``r0 <= rho <= r1`` (full circle, 8 sectors)."""
    theta, wt = _sector_rule(2 * q)
    rho, wr = interval_gauss(r0, r1, q)
    R, T = np.meshgrid(rho, theta, indexing="ij")
    W = np.outer(wr, wt) * R
    y = x + np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    return np.sum(W.ravel() * _integrand(f, ux, x[None], y, ctx, kernel))


def _square_minus_disc(f, ux, x, h, ctx, kernel, q):
    """``[x-h, x+h]^2`` minus the disc of radius h, in polar coordinates."""
    theta, wt = _sector_rule(2 * q)
    # distance to the square boundary along each ray
    rmax = h / np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta)))
    t, w = gauss01(q)
    R = h + (rmax - h)[None, :] * t[:, None]
    W = (rmax - h)[None, :] * w[:, None] * wt[None, :] * R
    T = np.broadcast_to(theta[None, :], R.shape)
    y = x + np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    return np.sum(W.ravel() * _integrand(f, ux, x[None], y, ctx, kernel))


def _outer_cells_2d(f, ux, x, grid: Grid, ctx, kernel, q):
    """Cells not touching the node ``x``; the next ring is subdivided 2x2."""
    lower = grid.cell_lower
    rel = np.rint((lower - x) / grid.h).astype(int)
    adjacent = np.all((rel >= -1) & (rel <= 0), axis=1)
    ring = np.all((rel >= -2) & (rel <= 1), axis=1) & ~adjacent
    t, w = gauss01(q)
    total = 0j
    for sel, sub in ((ring, 2), (~adjacent & ~ring, 1)):
        if not sel.any():
            continue
        ts = ((np.arange(sub)[:, None] + t[None, :]) / sub).ravel()
        ws = np.tile(w / sub, sub)
        P = np.stack(np.meshgrid(ts, ts, indexing="ij"), axis=-1).reshape(-1, 2)
        Wl = np.outer(ws, ws).ravel() * grid.h ** 2
        y = (lower[sel][:, None, :] + grid.h * P[None]).reshape(-1, 2)
        wy = np.tile(Wl, int(sel.sum()))
        total += np.sum(wy * _integrand(f, ux, x[None], y, ctx, kernel))
    return total


def _aitken(a0, a1, a2):
    d1, d2 = a1 - a0, a2 - a1
    den = d2 - d1
    if den == 0 or abs(d2) == 0:
        return a2
    return a2 - d2 * d2 / den


def apply_pointwise(u, x, ctx: PhaseContext, kernel: KernelSpec, grid: Grid | None = None,
                    shells: int = SHELLS, order: int = 12) -> PointwiseResult:
    """Principal-value evaluation of ``L^s_A u`` at ``x``.

    ``u`` is a :class:`GridFunction` or a callable taking ``(m, n)`` points
    (then ``grid`` is required); in 2D ``x`` must be a grid node.  Returns
    the extrapolated value, an error estimate (difference of two successive
    extrapolants plus a roundoff floor) and the partial values.
    """
    if isinstance(u, GridFunction):
        grid = u.grid
    if grid is None:
        raise ValueError("a grid is required for callable input")
    n = grid.n
    x = np.asarray(x, dtype=float).reshape(n)
    if n == 2:
        grid.node_at(x)
    f = _as_callable(u, grid)
    ux = complex(f(x[None])[0])
    h = grid.h
    eps = h / 2.0 ** np.arange(shells + 1)
    tail = ux * box_tail_density(x[None], grid.half_width, n, kernel.s, kernel.c)[0]
    if n == 1:
        outer = _region_1d(f, ux, x[0], h, 2 * grid.half_width + h, grid, ctx, kernel, order)
        shell_vals = [_region_1d(f, ux, x[0], eps[k + 1], eps[k], grid, ctx, kernel, order) for k in range(shells)]
    else:
        outer = _outer_cells_2d(f, ux, x, grid, ctx, kernel, order) + _square_minus_disc(f, ux, x, h, ctx, kernel, order)
        shell_vals = [_annulus_2d(f, ux, x, eps[k + 1], eps[k], ctx, kernel, order) for k in range(shells)]
    partial = 2.0 * (outer + tail + np.concatenate([[0.0], np.cumsum(shell_vals)]))
    d = np.abs(np.diff(partial[-4:]))
    d_last, d_prev = d[-1], d[-2]
    scale = max(abs(partial[-1]), abs(2 * tail), 1e-300)
    floor = 1e-12 * scale
    ratio = float(d_last / d_prev) if d_prev > floor else 0.0
    # two geometric modes can nearly cancel in one shell, so a single ratio
    # above one is not divergence; shells that never shrink are
    slack = 1.0 - 1e-6  # equal shells (logarithmic divergence) up to rounding
    if d_last > floor and d_last >= slack * d_prev and d_prev >= slack * d[-3]:
        raise ArithmeticError(f"principal value does not stabilise (shell ratio {ratio:.3f})")
    if ratio == 0.0:
        value = partial[-1]
        err = abs(d_last) + floor
    else:
        value = _aitken(*partial[-3:])
        prev = _aitken(*partial[-4:-1])
        err = abs(value - prev) + floor
    return PointwiseResult(complex(value), float(err), eps, partial, ratio)
