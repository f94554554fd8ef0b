from pathlib import Path

import pytest

from fracmag.config import ConfigFileError, load_config, parse_config
from fracmag.geometry import ConfigError

EXAMPLES = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
[problem]
n = 1
s = 0.5
r = 0.6
box_halfwidth = 2.5
h = 0.125
omega = { kind = "box", lower = [-0.5], upper = [0.5] }

[electric.q1]
family = "constant_in_ball"
amplitude = [1.0]
center = [0.0]
radius = 0.55

[windows]
W1 = { lower = [0.65], upper = [2.45] }
W2 = { lower = [-2.45], upper = [-0.65] }
"""


@pytest.mark.parametrize("name", ["example_1d.toml", "example_2d.toml"])
def test_bundled_examples_parse(name):
    rc = load_config(EXAMPLES / name)
    rc.problem.validate()
    assert rc.digest and len(rc.problem.q_specs) == 2


def test_minimal_defaults():
    rc = parse_config(MINIMAL)
    assert rc.problem.a_spec.is_zero()
    assert rc.problem.q_specs[0] == rc.problem.q_specs[1]
    assert rc.kernel.mode == "closed_form" and rc.order == 4
    assert rc.solver.identity_pairs == 20 and rc.inverse.reg is None


def test_invalid_s_reports_field_and_line():
    with pytest.raises(ConfigFileError) as err:
        parse_config(MINIMAL.replace("s = 0.5", "s = 1.2"), "bad.toml")
    assert err.value.field == "problem.s"
    assert err.value.line == 3
    assert "bad.toml:3" in str(err.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL.replace("h = 0.125", "h = 0.125\nspacing = 1"))
    assert "spacing" in str(err.value)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[plotting]\ncolor = 1\n")


def test_missing_required_section():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("[windows]", "[solver]").replace("W1 = ", "x1 = ").replace("W2 = ", "x2 = "))


def test_wrong_vector_length():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("center = [0.0]", "center = [0.0, 1.0]"))


def test_malformed_toml_is_config_error():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[problem\n")


def test_digest_tracks_source():
    assert parse_config(MINIMAL).digest != parse_config(MINIMAL + "\n# comment\n").digest
