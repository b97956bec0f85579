import math

import pytest

from mecoffload.config import (ConfigError, NetworkConfig, exponential_bin_gains, load_network_config,
                               network_from_mapping)


def test_defaults_are_valid(cfg):
    assert cfg.M == 2 and cfg.K == 2 and cfg.L == 8
    assert cfg.R_cap == pytest.approx(10 * cfg.tau0)
    assert len(cfg.gain_levels) == 8
    assert cfg.n_assignments == 4


def test_bin_gains_average_to_exponential_mean():
    g = exponential_bin_gains(8, 1.0)
    # equal-probability bins: mean of the conditional means is the exponential mean
    assert sum(g) / 8 == pytest.approx(1.0, rel=1e-12)
    assert all(b > a for a, b in zip(g, g[1:]))


def test_bin_gains_scale_with_g0():
    assert exponential_bin_gains(4, 2e-5)[2] == pytest.approx(2e-5 * exponential_bin_gains(4, 1.0)[2])


@pytest.mark.parametrize("field,value", [
    ("L", 1), ("M", 0), ("K", 0), ("B", 0.0), ("N0", -1.0), ("rho", 1.0),
    ("C_spread", 1.0), ("E_max_mec", 0.0), ("tau0", math.inf),
])
def test_invalid_fields_name_the_bound(field, value):
    with pytest.raises(ConfigError, match=field):
        NetworkConfig(**{field: value})


def test_gain_levels_must_increase():
    with pytest.raises(ConfigError, match="increasing"):
        NetworkConfig(L=3, gain_levels=(1.0, 1.0, 2.0))


def test_replace_recomputes_derived_fields(cfg):
    c2 = cfg.replace(tau0=2e-3, L=4)
    assert c2.R_cap == pytest.approx(2e-2)
    assert len(c2.gain_levels) == 4


def test_task_rate_converts_to_c_mean():
    c = network_from_mapping({"task_rate": 2.7e6})
    assert c.C_mean == pytest.approx(2700.0)


def test_mapping_rejects_unknown_and_conflicting_keys():
    with pytest.raises(ConfigError, match="unknown"):
        network_from_mapping({"bandwidth": 1.0})
    with pytest.raises(ConfigError, match="either"):
        network_from_mapping({"task_rate": 1e6, "C_mean": 10.0})


def test_load_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[network]\nK = 3\nrho = 0.5\n")
    c = load_network_config(p)
    assert c.K == 3 and c.rho == 0.5 and c.M == 2


def test_load_toml_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_network_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[network\n")
    with pytest.raises(ConfigError, match="malformed"):
        load_network_config(bad)
