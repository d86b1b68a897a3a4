from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from blowuplab.config import ConfigError, canonical, fmt, parse_config, render

MINIMAL = """
[problem]
n = 1
p = 3
mu = 1
beta = 2
eps = 0.3
"""


def test_minimal_config_gets_grid_defaults():
    m = parse_config(MINIMAL, command="simulate")
    g = m.values["grid"]
    assert g["dr"] == 0.01 and g["t_max"] == 10.0 and g["stride"] == 10
    assert g["cfl"] == 0.95
    assert g["r_max"] == pytest.approx(10.0 + 1.0 + 0.04)
    assert m.problem.eps == 0.3
    assert m.grid.npoints > 1000


def test_cfl_default_depends_on_dimension():
    m = parse_config(MINIMAL.replace("n = 1", "n = 3"), command="simulate")
    assert m.values["grid"]["cfl"] == 0.8


def test_beta_one_rejected_for_scattering_sweep():
    text = MINIMAL.replace("beta = 2", "beta = 1.0")
    with pytest.raises(ConfigError, match="beta > 1"):
        parse_config(text, command="sweep", overrides={"theorem": 1})


def test_super_strauss_rejected_for_general_sweep():
    text = MINIMAL.replace("n = 1", "n = 2").replace("p = 3", "p = 3.7")
    with pytest.raises(ConfigError, match=r"p < p_S\(2\) ≈ 3\.5616"):
        parse_config(text, command="sweep", overrides={"theorem": 1})


@pytest.mark.parametrize("theorem,edit,msg", [
    (2, ("n = 1", "n = 3"), "n = 2"),
    (3, ("n = 1", "n = 2"), "n = 1"),
    (3, ("eps", "eps"), "int g"),
])
def test_sweep_hypotheses_named(theorem, edit, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(MINIMAL.replace(*edit), command="sweep", overrides={"theorem": theorem})


@pytest.mark.parametrize("text,msg", [
    (MINIMAL + "colour = red\n", "unknown key"),
    (MINIMAL + "[plots]\n", "unknown section"),
    (MINIMAL + "n = 2\n", "duplicate"),
    ("[problem]\np = 2\n", "missing required key"),
    (MINIMAL + "garbage\n", "key = value"),
    (MINIMAL.replace("eps = 0.3", "eps = abc"), "bad value"),
])
def test_malformed_configs(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text, command="simulate")


def test_missing_damping_for_simulate():
    with pytest.raises(ConfigError, match="mu"):
        parse_config("[problem]\nn = 1\np = 3\n", command="simulate")
    parse_config("[problem]\nn = 1\np = 3\n", command="exponents")


def test_scattering_regime_required():
    with pytest.raises(ConfigError, match="beta > 1"):
        parse_config(MINIMAL.replace("beta = 2", "beta = 0.5"), command="iterate")


def test_overrides_win_and_ambiguity_is_an_error():
    m = parse_config(MINIMAL, command="simulate", overrides={"eps": 0.2, "grid.t_max": 3.0})
    assert m.problem.eps == 0.2 and m.grid.t_max == 3.0
    with pytest.raises(ConfigError, match="ambiguous"):
        parse_config(MINIMAL, command="simulate", overrides={"t_max": 3.0})


def test_comments_and_whitespace():
    m = parse_config("# header\n[problem]  \n n=1 # one\np= 3\nmu =1\nbeta= 2\n", command="simulate")
    assert m.values["problem"]["n"] == 1


def test_round_trip():
    m = parse_config(MINIMAL + "[sweep]\ntheorem = 3\neps_values = 0.4, 0.3, 0.2, 0.1\n",
                     command="catalog")
    again = parse_config(render(m))
    assert again == m


@given(st.floats(1e-6, 1e6, allow_nan=False))
def test_round_trip_of_floats(eps):
    m = parse_config(MINIMAL, command="simulate", overrides={"eps": eps})
    assert parse_config(render(m)) == m
    assert m.problem.eps == canonical(eps)


def test_twelve_significant_digits():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(2.0) == "2"
    assert fmt(1.23456789012345e-7) == "1.23456789012e-07"
    assert fmt(True) == "true"
