"""Quadrature rules on the unit interval, tensor cells and singular element pairs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = roots_legendre(q)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi01(q: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Rule for ``int_0^1 rho^beta f(rho) d rho`` (beta > -1)."""
    x, w = roots_jacobi(q, 0.0, beta)
    return 0.5 * (x + 1.0), w * 2.0 ** (-beta - 1.0)


@lru_cache(maxsize=None)
def tensor_gauss01(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on ``[0, 1]^n``; points ``(q^n, n)``."""
    x, w = gauss01(q)
    pts = np.array(list(itertools.product(x, repeat=n)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1)
    return pts, wts


def interval_gauss(a: float, b: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss01(q)
    return a + (b - a) * x, (b - a) * w


def graded_panels(a: float, b: float, grading: float) -> list[tuple[float, float]]:
    """Split ``[a, b]`` (0 < a < b) into geometrically growing panels."""
    edges = [a]
    while edges[-1] * grading < b:
        edges.append(edges[-1] * grading)
    edges.append(b)
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


@dataclass(frozen=True)
class PairRule:
    """Quadrature over ``[0,1]^n x [0,1]^n`` for two cells offset by ``offset``.

    Points are ``xi`` (in the first cell) and ``eta`` (in the second),
    ``z = offset + eta - xi`` is stored separately so that distances are free
    of cancellation.  Weights are in reference units and already divided by
    nothing: the caller multiplies by ``h^(2n)`` and the kernel value.
    """

    offset: tuple[int, ...]
    xi: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    weight: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weight)


def _xbox_rule(o: np.ndarray, z: np.ndarray, q: int):
    """Gauss rule for xi over ``{xi in [0,1]^n : o + eta - xi = z, eta in [0,1]^n}``."""
    lo = np.maximum(0.0, o - z)
    hi = np.minimum(1.0, 1.0 + o - z)
    t, w = tensor_gauss01(q, len(o))
    xi = lo[:, None, :] + (hi - lo)[:, None, :] * t[None, :, :]
    wx = w[None, :] * np.prod(hi - lo, axis=1)[:, None]
    return xi, wx


@lru_cache(maxsize=None)
def pair_rule(offset: tuple[int, ...], s: float, q: int) -> PairRule:
    """Rule for the kernel-weighted integral over a cell pair at offset ``o``.

    Used for touching and identical pairs and for pairs one cell apart.
    The difference variable ``z`` ranges over ``[o-1, o+1]^n``; it is split
    per axis at ``o_d``.  Sub-boxes having ``z = 0`` as a vertex are mapped
    to polar-type coordinates with a Gauss-Jacobi radial rule absorbing the
    ``rho^(1 + k - 2s)`` behaviour of the integrand, where ``k`` counts the
    axes with nonzero offset (the x-overlap shrinks like ``rho`` there).
    The remaining sub-boxes get a tensor Gauss rule of order ``2q`` since
    the kernel is still steep there.
    """
    n = len(offset)
    o = np.asarray(offset, dtype=float)
    pieces = []
    for od in offset:
        if od == 0:
            pieces.append([(-1.0, 0.0, True), (0.0, 1.0, True)])
        elif od == 1:
            pieces.append([(0.0, 1.0, True), (1.0, 2.0, False)])
        elif od == -1:
            pieces.append([(-2.0, -1.0, False), (-1.0, 0.0, True)])
        else:
            pieces.append([(od - 1.0, float(od), False), (float(od), od + 1.0, False)])
    k = int(np.count_nonzero(o))
    beta = 1.0 + k - 2.0 * s
    zs, ws = [], []
    for combo in itertools.product(*pieces):
        if all(p[2] for p in combo):
            sign = np.array([1.0 if p[0] == 0.0 else -1.0 for p in combo])
            rho, wr = gauss_jacobi01(q, beta)
            wr = wr * rho ** (-beta)
            if n == 1:
                w_abs = rho[:, None]
                wz = wr
            else:
                t, wt = gauss01(q)
                R, T = np.meshgrid(rho, t, indexing="ij")
                WR, WT = np.meshgrid(wr, wt, indexing="ij")
                R, T, WR, WT = R.ravel(), T.ravel(), WR.ravel(), WT.ravel()
                tri1 = np.stack([R, R * T], axis=1)
                tri2 = np.stack([R * T, R], axis=1)
                w_abs = np.concatenate([tri1, tri2])
                wz = np.concatenate([WR * WT * R, WR * WT * R])
            zs.append(w_abs * sign)
            ws.append(wz)
        else:
            lo = np.array([p[0] for p in combo])
            hi = np.array([p[1] for p in combo])
            t, w = tensor_gauss01(2 * q, n)
            zs.append(lo + (hi - lo) * t)
            ws.append(w * np.prod(hi - lo))
    z = np.concatenate(zs)
    wz = np.concatenate(ws)
    xi, wx = _xbox_rule(o, z, q)
    m = xi.shape[1]
    xi = xi.reshape(-1, n)
    zz = np.repeat(z, m, axis=0)
    weight = (wz[:, None] * wx).ravel()
    eta = zz - o + xi
    keep = weight > 0
    return PairRule(tuple(offset), xi[keep], np.clip(eta[keep], 0.0, 1.0), zz[keep], weight[keep])
