import warnings

import numpy as np
import pytest
import scipy.linalg as sla

from fracmag.assembly import GridFunction
from fracmag.norms import norm_L2
from fracmag.solver import (
    CoercivityError,
    CoercivityWarning,
    Model,
    check_coercivity,
    dn_difference,
    dn_map,
    dn_pair,
    integral_identity_residual,
    random_exterior_data,
    solve_dirichlet,
    solve_many,
)

from conftest import bump, cells_q, config_1d, config_2d, const_q


def random_exterior(m, rng, complex_values=True):
    e = m.partition.exterior
    vals = rng.standard_normal(len(e)) + (1j * rng.standard_normal(len(e)) if complex_values else 0)
    return GridFunction.from_dofs(m.grid, e, vals)


# ----------------------------------------------------------------------------
# Coercivity
# ----------------------------------------------------------------------------

def test_coercive_with_unit_potential(model_1d_zero):
    assert check_coercivity(model_1d_zero.form(const_q(1.0))) > 0


def test_nonnegative_without_potential(model_1d_zero):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoercivityWarning)
        assert check_coercivity(model_1d_zero.form(const_q(0.0))) >= -1e-12


@pytest.fixture(scope="module")
def smallest_generalized_eigenvalue(model_1d_zero):
    # oracle: L_II v = mu M_II v, with M_II the interior block of the q = 1 term
    m = model_1d_zero
    LII = m.L().block("I", "I").real
    MII = m.Q(const_q(1.0)).block("I", "I").real
    return sla.eigh(LII, MII, eigvals_only=True)[0]


def test_negative_potential_below_spectrum_detected(model_1d_zero, smallest_generalized_eigenvalue):
    m = model_1d_zero
    mu = smallest_generalized_eigenvalue
    with pytest.warns(CoercivityWarning):
        val = check_coercivity(m.form(const_q(-1.5 * mu)))
    assert val < 0
    with pytest.raises(CoercivityError):
        solve_dirichlet(m.form(const_q(-1.5 * mu)), m.partition, random_exterior_data(m, "W1", np.random.default_rng(0)))
    with warnings.catch_warnings():
        warnings.simplefilter("error", CoercivityWarning)
        assert check_coercivity(m.form(const_q(-0.5 * mu))) > 0


# ----------------------------------------------------------------------------
# Dirichlet solve
# ----------------------------------------------------------------------------

def test_zero_data_gives_zero(model_1d_magnetic):
    m = model_1d_magnetic
    sol = solve_dirichlet(m.form(m.q(0)), m.partition, GridFunction.zeros(m.grid))
    assert np.all(sol.u.values == 0)


def test_exterior_block_equals_data(model_1d_magnetic, rng):
    m = model_1d_magnetic
    g = random_exterior(m, rng)
    sol = solve_dirichlet(m.form(m.q(0)), m.partition, g)
    assert np.array_equal(sol.u.values[m.partition.exterior], g.values[m.partition.exterior])
    assert sol.residual <= 1e-12


def test_linearity(model_1d_magnetic, rng):
    m = model_1d_magnetic
    B = m.form(m.q(0))
    g1, g2 = random_exterior(m, rng), random_exterior(m, rng)
    u12 = solve_dirichlet(B, m.partition, g1 + g2).u.values
    u1 = solve_dirichlet(B, m.partition, g1).u.values
    u2 = solve_dirichlet(B, m.partition, g2).u.values
    assert np.max(np.abs(u12 - u1 - u2)) <= 1e-10 * np.max(np.abs(u12))


def test_data_on_interior_rejected(model_1d_zero):
    m = model_1d_zero
    g = GridFunction.from_dofs(m.grid, m.partition.interior[:1], [1.0])
    with pytest.raises(ValueError):
        solve_dirichlet(m.form(m.q(0)), m.partition, g)


def test_single_hat_matches_dense_bordered_solve(model_1d_zero):
    # second path: the full active system with identity rows on the exterior
    m = model_1d_zero
    B = m.form(const_q(1.0))
    e = m.partition.window("W1")[0]
    g = GridFunction.from_dofs(m.grid, [e], [1.0])
    sol = solve_dirichlet(B, m.partition, g)
    act = m.partition.active
    ext = np.isin(act, m.partition.exterior)
    S = B.data.copy()
    S[ext] = 0
    S[ext, ext] = 1
    rhs = np.where(ext, g.values[act], 0)
    dense = np.linalg.solve(S, rhs)
    assert np.max(np.abs(dense - sol.u.values[act])) <= 1e-10 * np.max(np.abs(dense))
    BI = B.block("I", "I") @ sol.u.values[m.partition.interior] + B.block("I", "E") @ g.values[m.partition.exterior]
    assert np.linalg.norm(BI) <= 1e-10 * np.linalg.norm(B.block("I", "E") @ g.values[m.partition.exterior])


def test_solution_operator_bounded(model_1d_magnetic, rng):
    m = model_1d_magnetic
    B = m.form(m.q(0))
    ratios = []
    for _ in range(20):
        g = random_exterior(m, rng)
        ratios.append(norm_L2(solve_dirichlet(B, m.partition, g).u) / norm_L2(g))
    P = solve_many(B, np.eye(len(m.partition.exterior)))
    assert np.isfinite(max(ratios)) and max(ratios) >= 1.0
    assert np.linalg.norm(P, 2) < np.inf


# ----------------------------------------------------------------------------
# DN map
# ----------------------------------------------------------------------------

def test_dn_map_ignores_interior_values(model_1d_magnetic, rng):
    m = model_1d_magnetic
    lam = dn_map(m.form(m.q(0)))
    g = random_exterior(m, rng)
    bumped = g.values.copy()
    bumped[m.partition.interior] = rng.standard_normal(len(m.partition.interior))
    assert np.array_equal(lam.data @ lam.vector(g), lam.data @ lam.vector(GridFunction(m.grid, bumped)))


def test_dn_map_symmetric_without_field(model_1d_zero):
    lam = dn_map(model_1d_zero.form(const_q(1.0)))
    assert np.max(np.abs(lam.data - lam.data.T)) <= 1e-10 * max(1.0, np.abs(lam.data).max())


@pytest.mark.parametrize("n", [1, 2])
def test_dn_duality(n, model_1d_magnetic, model_2d_magnetic):
    m = model_1d_magnetic if n == 1 else model_2d_magnetic
    lp = dn_map(m.form(m.q(0), +1))
    lm = dn_map(m.form(m.q(0), -1))
    assert np.max(np.abs(lp.T.data - lm.data)) <= 1e-10


def test_dn_map_bounded(model_1d_magnetic):
    norm = dn_map(model_1d_magnetic.form(model_1d_magnetic.q(0))).spectral_norm()
    assert 0 < norm < np.inf


def test_dn_pair_matches_form_on_solution(model_1d_magnetic, rng):
    m = model_1d_magnetic
    B = m.form(m.q(0))
    lam = dn_map(B)
    for _ in range(20):
        g, h = random_exterior(m, rng), random_exterior(m, rng)
        u = solve_dirichlet(B, m.partition, g).u
        ref = B.bilinear(u, h)
        assert abs(dn_pair(lam, g, h) - ref) <= 1e-10 * max(1.0, abs(ref))


def test_dn_pair_bilinear_and_zero(model_1d_magnetic, rng):
    m = model_1d_magnetic
    lam = dn_map(m.form(m.q(0)))
    g1, g2, h = (random_exterior(m, rng) for _ in range(3))
    a, b = 0.3 - 1.2j, 2.1
    lhs = dn_pair(lam, g1 * a + g2 * b, h)
    assert lhs == pytest.approx(a * dn_pair(lam, g1, h) + b * dn_pair(lam, g2, h), rel=1e-12)
    rhs = dn_pair(lam, h, g1 * a + g2 * b)
    assert rhs == pytest.approx(a * dn_pair(lam, h, g1) + b * dn_pair(lam, h, g2), rel=1e-12)
    zero = GridFunction.zeros(m.grid)
    assert dn_pair(lam, zero, h) == 0 and dn_pair(lam, g1, zero) == 0


# ----------------------------------------------------------------------------
# Integral identity
# ----------------------------------------------------------------------------

def test_identity_equal_potentials_zero(model_1d_magnetic, rng):
    m = model_1d_magnetic
    g1, g2 = random_exterior_data(m, "W1", rng), random_exterior_data(m, "W2", rng)
    rec = integral_identity_residual(m, m.q(0), m.q(0), g1, g2)
    assert rec.lhs == 0 and rec.rhs == 0 and rec.residual == 0
    assert dn_difference(m.form(m.q(0)), m.form(m.q(0))).spectral_norm() == 0


def _cell_integral(u1, u2, a, b, q=6):
    # P1 x P1 is quadratic on each element; Gauss is exact
    x, w = np.polynomial.legendre.leggauss(q)
    h = u1.grid.h
    total = 0j
    for c in np.arange(a, b - 1e-12, h):
        pts = c + 0.5 * h * (x + 1)
        total += 0.5 * h * np.sum(w * u1.evaluate(pts[:, None]) * u2.evaluate(pts[:, None]))
    return total


def test_identity_single_cell_contrast(model_1d_zero, rng):
    m = model_1d_zero
    q1, q2 = cells_q([1, 1, 1.5, 1]), cells_q([1, 1, 1, 1])
    g1, g2 = random_exterior_data(m, "W1", rng), random_exterior_data(m, "W2", rng)
    u1 = solve_dirichlet(m.form(q1, +1), m.partition, g1).u
    u2 = solve_dirichlet(m.form(q2, -1), m.partition, g2).u
    direct = 0.5 * _cell_integral(u1, u2, 0.0, 0.25)
    rec = integral_identity_residual(m, q1, q2, g1, g2)
    assert abs(rec.rhs - direct) <= 1e-12 * abs(direct)
    assert abs(rec.lhs - direct) <= 1e-8 * abs(direct)


@pytest.mark.parametrize("n", [1, 2])
def test_identity_random_pairs(n, rng):
    cfg = config_1d(a_spec=bump(), q_specs=(cells_q([1, 2, 0.5, 1]), const_q(1.0))) if n == 1 else \
        config_2d(a_spec=bump((1.0, -0.7), (0.1, 0.0), 0.6, n=2),
                  q_specs=(cells_q([1, 2, 0.5, 1], (-0.5, -0.5), (0.5, 0.5)), const_q(1.0, 0.65, 2)))
    m = Model(cfg)
    for _ in range(10):
        g1, g2 = random_exterior_data(m, "W1", rng), random_exterior_data(m, "W2", rng)
        assert integral_identity_residual(m, m.q(0), m.q(1), g1, g2).residual <= 1e-8
