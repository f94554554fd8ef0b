import numpy as np
import pytest
from scipy import integrate

from fracmag.assembly import GridFunction
from fracmag.geometry import FieldSpec, Grid
from fracmag.magnetic import PhaseContext
from fracmag.norms import (
    equivalence_constant,
    norm_equivalence_report,
    norm_L2,
    random_grid_function,
    seminorm_Hs,
    seminorm_HsA,
)

from conftest import bump


@pytest.fixture(scope="module")
def grid():
    return Grid.uniform(1, 2.5, 0.125)


def interior_dofs(grid, half=0.5):
    return np.flatnonzero(np.abs(grid.nodes[:, 0]) < half - 1e-12)


def test_zero_function_norms(grid):
    u = GridFunction.zeros(grid)
    ctx = PhaseContext(bump())
    assert seminorm_HsA(u, ctx, 0.5) == 0
    assert seminorm_Hs(u, 0.5) == 0
    assert norm_L2(u) == 0


def test_zero_potential_seminorm_coincides(grid, rng):
    u = random_grid_function(grid, interior_dofs(grid), rng)
    assert seminorm_HsA(u, PhaseContext(FieldSpec.zero(True)), 0.4) == seminorm_Hs(u, 0.4)


def test_seminorm_homogeneous(grid, rng):
    u = random_grid_function(grid, interior_dofs(grid), rng)
    ctx = PhaseContext(bump())
    assert seminorm_HsA(u * 2, ctx, 0.6) == pytest.approx(2 * seminorm_HsA(u, ctx, 0.6), rel=1e-13)


def test_l2_norm_of_hat(grid):
    u = GridFunction.from_dofs(grid, [grid.node_at([0.0])], [1.0])
    assert norm_L2(u) == pytest.approx(np.sqrt(2 * grid.h / 3), rel=1e-14)


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_seminorm_translation_invariant(grid, s):
    u0 = GridFunction.from_dofs(grid, [grid.node_at([0.0]), grid.node_at([0.125])], [1.0, 0.5])
    u1 = GridFunction.from_dofs(grid, [grid.node_at([0.25]), grid.node_at([0.375])], [1.0, 0.5])
    assert seminorm_Hs(u1, s) == pytest.approx(seminorm_Hs(u0, s), rel=1e-8)


def test_hat_seminorm_adaptive_oracle(grid):
    # [phi]^2 = 2 int_0^inf G(z) z^{-1-2s} dz with G the autocorrelation defect of the hat
    s, h = 0.25, grid.h
    u = GridFunction.from_dofs(grid, [grid.node_at([0.0])], [1.0])
    phi = lambda t: max(0.0, 1 - abs(t) / h)  # noqa: E731

    def G(z):
        f = lambda x: (phi(x + z) - phi(x)) ** 2  # noqa: E731
        pts = sorted({-h - z, -z, h - z, -h, 0.0, h})
        return integrate.quad(f, -h - z, h, points=pts, limit=200, epsabs=1e-15)[0]

    near = integrate.quad(lambda z: G(z) * z ** (-1 - 2 * s), 0, 2 * h, points=[h], limit=200, epsabs=1e-14)[0]
    far = (4 * h / 3) * (2 * h) ** (-2 * s) / (2 * s)  # G = 2 ||phi||^2 once supports separate
    assert seminorm_Hs(u, s) ** 2 == pytest.approx(2 * (near + far), rel=1e-6)


def test_equivalence_constant_zero_field():
    assert equivalence_constant(0.0, 1, 0.5)["C_prime"] == 0.0


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("a", [0.3, 1.5, 10.0])
def test_equivalence_constant_radial_integral(n, a):
    # C'^2 = int_{R^n} min(4, a^2 |z|^2) |z|^{-n-2s} dz with |E - 1| <= min(2, a |x - y|)
    s = 0.4
    sphere = 2.0 if n == 1 else 2 * np.pi
    f = lambda r: min(4.0, a * a * r * r) * r ** (-1 - 2 * s)  # noqa: E731
    knee = 2 / a
    total = integrate.quad(f, 0, knee, limit=200)[0] + integrate.quad(f, knee, np.inf, limit=200)[0]
    assert equivalence_constant(a, n, s)["C_prime"] == pytest.approx(np.sqrt(sphere * total), rel=1e-8)


def test_equivalence_zero_field_gap_zero(grid, rng):
    samples = [random_grid_function(grid, interior_dofs(grid), rng) for _ in range(5)]
    rep = norm_equivalence_report(samples, PhaseContext(FieldSpec.zero(True)), 0.5)
    assert rep.max_gap == 0 and rep.C_prime == 0 and rep.passed


@pytest.mark.parametrize("s", [0.3, 0.8])
def test_equivalence_bound_holds(grid, rng, s):
    ctx = PhaseContext(bump(4.0, 0.0, 0.55))
    samples = [random_grid_function(grid, np.arange(1, grid.num_nodes - 1), rng) for _ in range(25)]
    rep = norm_equivalence_report(samples, ctx, s, raise_on_violation=True)
    assert rep.passed and 0 < rep.max_ratio <= rep.C_prime


def test_equivalence_needs_samples():
    with pytest.raises(ValueError):
        norm_equivalence_report([], PhaseContext(), 0.5)
