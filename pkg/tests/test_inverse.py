import warnings

import numpy as np
import pytest

from fracmag.assembly import GridFunction
from fracmag.geometry import ConfigError, WindowSpec
from fracmag.inverse import (
    ContrastCells,
    born_forward,
    born_reconstruct,
    nested_errors,
    recover_contrast_oracle,
    runge_approximate,
    source_responses,
    tikhonov_solve,
)
from fracmag.solver import DNMap, Model, dn_map

from conftest import bump, cells_q, config_1d

BASE = cells_q([1, 1, 1, 1])
SINGLE = cells_q([1, 1, 1.5, 1])


def interior_ones(m):
    return GridFunction.from_dofs(m.grid, m.partition.interior, np.ones(len(m.partition.interior)))


# ----------------------------------------------------------------------------
# Least squares helpers
# ----------------------------------------------------------------------------

def test_tikhonov_shrinks_with_larger_parameter(rng):
    A = rng.standard_normal((30, 10)) @ np.diag(np.logspace(0, -8, 10))
    b = rng.standard_normal(30)
    norms = [np.linalg.norm(tikhonov_solve(A, b, lam)[0]) for lam in (1e-12, 1e-8, 1e-4, 1.0)]
    assert all(a >= b_ for a, b_ in zip(norms, norms[1:]))


def test_tikhonov_default_parameter(rng):
    A = rng.standard_normal((8, 4))
    _, used, sig = tikhonov_solve(A, rng.standard_normal(8), None)
    assert used == pytest.approx(1e-8 * sig[0] ** 2, rel=1e-14)


def test_nested_errors_match_lstsq(rng):
    A = rng.standard_normal((12, 6)) + 1j * rng.standard_normal((12, 6))
    b = rng.standard_normal(12)
    curve = nested_errors(A, b)
    for m in range(1, 7):
        c, *_ = np.linalg.lstsq(A[:, :m], b, rcond=None)
        assert curve[m - 1] == pytest.approx(np.linalg.norm(A[:, :m] @ c - b) / np.linalg.norm(b), abs=1e-12)


# ----------------------------------------------------------------------------
# Runge approximation
# ----------------------------------------------------------------------------

def test_target_in_span_is_reproduced(model_1d_magnetic):
    m = model_1d_magnetic
    B = m.form(m.q(0))
    g = m.partition.window("W1")[3]
    u = GridFunction.from_dofs(m.grid, m.partition.interior, source_responses(m, B, np.array([g]))[:, 0])
    res = runge_approximate(m, u, "W1", B, reg=0)
    assert res.error <= 1e-8


def test_zero_target_gives_zero_coefficients(model_1d_magnetic):
    m = model_1d_magnetic
    res = runge_approximate(m, GridFunction.zeros(m.grid), "W1", m.form(m.q(0)), reg=1e-6)
    assert res.error == 0 and np.all(res.coefficients.values == 0)


def test_coefficients_supported_in_window(model_1d_magnetic):
    m = model_1d_magnetic
    res = runge_approximate(m, interior_ones(m), "W1", m.form(m.q(0)))
    outside = np.setdiff1d(np.arange(m.grid.num_nodes), m.partition.window("W1"))
    assert np.all(res.coefficients.values[outside] == 0)


@pytest.mark.parametrize("sign", [+1, -1])
def test_runge_curve_non_increasing(model_1d_magnetic, sign):
    m = model_1d_magnetic
    res = runge_approximate(m, interior_ones(m), "W2", m.form(m.q(0), sign), curve=True)
    assert len(res.curve) == len(m.partition.window("W2"))
    assert np.all(np.diff(res.curve) <= 1e-12)
    assert res.curve[-1] < 1


def test_empty_window_rejected(model_1d_magnetic):
    m = model_1d_magnetic
    with pytest.raises(ValueError):
        runge_approximate(m, interior_ones(m), np.array([], dtype=int), m.form(m.q(0)))


# ----------------------------------------------------------------------------
# Oracle reconstruction
# ----------------------------------------------------------------------------

def _oracle(m, q1, q2, windows=("W1", "W2"), sign=+1):
    cells = ContrastCells.for_config(m.config, 4)
    lam1, lam2 = dn_map(m.form(q1, sign)), dn_map(m.form(q2, sign))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return recover_contrast_oracle(m, lam1, lam2, q1, q2, cells, windows=windows, reg=0)


def test_oracle_equal_potentials_zero(model_1d_magnetic):
    res = _oracle(model_1d_magnetic, SINGLE, SINGLE)
    assert np.max(np.abs(res.recovered)) <= 1e-6


def test_oracle_single_cell_zero_field(model_1d_zero):
    res = _oracle(model_1d_zero, SINGLE, BASE)
    assert max(res.trace["runge_error_f"]) <= 1e-2 and res.trace["runge_error_one"] <= 1e-2
    assert res.recovered[2] == pytest.approx(0.5, rel=0.05)
    # the error bound covers the gap to the cell-averaged truth
    assert np.all(np.abs(res.recovered - res.reference) <= np.array(res.trace["error_bound"]) + 1e-9)


def test_oracle_window_swap_with_reversed_field(model_1d_magnetic):
    m = model_1d_magnetic
    flipped = Model(m.config.replace(a_spec=bump(-1.5)))
    a = _oracle(m, SINGLE, BASE)
    b = _oracle(flipped, SINGLE, BASE, windows=("W2", "W1"))
    assert a.recovered[2] == pytest.approx(0.5, rel=0.05)
    assert np.max(np.abs(a.recovered - b.recovered)) <= 0.05 * 0.5


def test_oracle_rejects_near_windows():
    near = (WindowSpec("W1", (0.65,), (1.2,)), WindowSpec("W2", (-1.2,), (-0.65,)))
    m = Model(config_1d(windows=near))
    with pytest.raises(ConfigError):
        _oracle(m, SINGLE, BASE)


# ----------------------------------------------------------------------------
# Born reconstruction
# ----------------------------------------------------------------------------

def test_born_zero_data(model_1d_magnetic):
    m = model_1d_magnetic
    cells = ContrastCells.for_config(m.config, 4)
    lam = dn_map(m.form(BASE))
    zero = DNMap(np.zeros_like(lam.data), lam.dofs)
    assert np.all(born_reconstruct(m, zero, BASE, cells).recovered == 0)


def test_born_small_contrast(model_1d_magnetic):
    m = model_1d_magnetic
    cells = ContrastCells.for_config(m.config, 4)
    q1 = cells_q([1, 1.05, 1, 1])
    lam = dn_map(m.form(q1)) - dn_map(m.form(BASE))
    res = born_reconstruct(m, lam, BASE, cells, reference_q1=q1)
    assert res.rel_error <= 0.3
    assert res.trace["effective_rank"] >= 1


def test_born_shrinks_with_parameter(model_1d_magnetic):
    m = model_1d_magnetic
    cells = ContrastCells.for_config(m.config, 4)
    lam = dn_map(m.form(cells_q([1, 1.05, 0.9, 1]))) - dn_map(m.form(BASE))
    norms = [np.linalg.norm(born_reconstruct(m, lam, BASE, cells, reg=r).recovered) for r in (1e-10, 2e-10, 1e-6, 2e-6)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_born_forward_linear(model_1d_magnetic, rng):
    m = model_1d_magnetic
    cells = ContrastCells.for_config(m.config, 4)
    F, w1, w2 = born_forward(m, cells, BASE)
    assert F.shape == (len(w1) * len(w2), 4)
    x, y = rng.standard_normal(4), rng.standard_normal(4)
    np.testing.assert_allclose(F @ (2 * x - y), 2 * (F @ x) - F @ y, atol=1e-13 * np.abs(F).max())


def test_born_warns_with_few_probes(model_1d_magnetic):
    m = model_1d_magnetic
    cells = ContrastCells.for_config(m.config, 4)
    lam = dn_map(m.form(BASE)) - dn_map(m.form(BASE))
    probes = (m.partition.window("W1")[:1], m.partition.window("W2")[:2])
    with pytest.warns(UserWarning, match="fewer probes"):
        born_reconstruct(m, lam, BASE, cells, windows=probes)


def test_born_forward_matches_exact_difference_to_first_order(model_1d_zero):
    # d/de of the DN difference at e = 0 is the Born matrix
    m = model_1d_zero
    cells = ContrastCells.for_config(m.config, 4)
    F, w1, w2 = born_forward(m, cells, BASE)
    base = dn_map(m.form(BASE))
    eps = 1e-4
    lam = dn_map(m.form(cells_q([1, 1 + eps, 1, 1]))) - base
    d = lam.data[np.ix_(lam.positions(w2), lam.positions(w1))].reshape(-1)
    assert np.max(np.abs(d / eps - F[:, 1])) <= 1e-3 * np.abs(F[:, 1]).max()

