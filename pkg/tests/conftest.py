"""Small shared configurations for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from fracmag.geometry import DomainShape, FieldSpec, ProblemConfig, WindowSpec
from fracmag.solver import Model

# Coarse 1D problem used by most solver/inverse tests: Omega = (-0.5, 0.5),
# windows on both sides reaching beyond 3r.
OMEGA_1D = DomainShape.box([-0.5], [0.5])
WINDOWS_1D = (WindowSpec("W1", (0.65,), (2.45,)), WindowSpec("W2", (-2.45,), (-0.65,)))


def bump(amp=1.5, center=0.1, radius=0.5, n=1):
    amp = (amp,) if np.isscalar(amp) else tuple(amp)
    center = (center,) * n if np.isscalar(center) else tuple(center)
    return FieldSpec("smooth_bump", amplitude=amp, center=center, radius=radius, vector=True)


def cells_q(values, lower=(-0.5,), upper=(0.5,)):
    d = round(len(values) ** (1 / len(lower)))
    return FieldSpec("piecewise_cells", lower=tuple(lower), upper=tuple(upper), divisions=d,
                     values=tuple(float(v) for v in values))


def const_q(value=1.0, radius=0.55, n=1):
    return FieldSpec("constant_in_ball", amplitude=(float(value),), center=(0.0,) * n, radius=radius)


def config_1d(s=0.5, a_spec=None, q_specs=None, h=0.125, R=2.5, r=0.6, windows=WINDOWS_1D,
              omega=OMEGA_1D) -> ProblemConfig:
    cfg = ProblemConfig(
        n=1, s=s, r=r, R=R, h=h, omega=omega, windows=windows,
        a_spec=a_spec if a_spec is not None else FieldSpec.zero(vector=True),
        q_specs=tuple(q_specs) if q_specs is not None else (const_q(), const_q()),
    )
    cfg.validate()
    return cfg


def config_2d(s=0.5, a_spec=None, q_specs=None, h=0.25, R=2.75, r=0.75) -> ProblemConfig:
    omega = DomainShape.box([-0.5, -0.5], [0.5, 0.5])
    windows = (WindowSpec("W1", (2.1, -0.6), (2.6, 0.6)), WindowSpec("W2", (-2.6, -0.6), (-2.1, 0.6)))
    cfg = ProblemConfig(
        n=2, s=s, r=r, R=R, h=h, omega=omega, windows=windows,
        a_spec=a_spec if a_spec is not None else FieldSpec.zero(vector=True, n=2),
        q_specs=tuple(q_specs) if q_specs is not None else (const_q(1.0, 0.65, 2),) * 2,
    )
    cfg.validate()
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def model_1d_magnetic():
    return Model(config_1d(a_spec=bump()))


@pytest.fixture(scope="session")
def model_1d_zero():
    return Model(config_1d())


@pytest.fixture(scope="session")
def model_2d_magnetic():
    return Model(config_2d(a_spec=bump((1.0, -0.7), (0.1, 0.0), 0.6, n=2)))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
