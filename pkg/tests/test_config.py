import pytest
from hypothesis import given, settings, strategies as st

from crystalsym.config import ConfigError, RunConfig, dump_config, load_config, parse_config


def test_defaults_validate_and_round_trip():
    cfg = RunConfig()
    cfg.validate()
    assert parse_config(dump_config(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(st.floats(0.001, 0.06), st.floats(0, 100), st.floats(-5, 5), st.integers(0, 2 ** 63),
       st.one_of(st.none(), st.floats(0.001, 0.1)), st.sampled_from(["pair", "tile"]))
def test_round_trip_is_identity(eps, sigma, m, seed, step, mult):
    cfg = RunConfig()
    cfg.params.eps, cfg.params.sigma, cfg.params.m = eps, sigma, m
    cfg.params.tilde_multiplicity = mult
    cfg.sampler.seed, cfg.sampler.step_scale = seed, step
    text = dump_config(cfg)
    back = parse_config(text)
    assert back == cfg
    assert dump_config(back) == text


def test_partial_config_keeps_defaults():
    cfg = parse_config("[sampler]\nseed = 7\nsteps = 50\nburn_in = 10\n")
    assert cfg.sampler.seed == 7 and cfg.sampler.steps == 50
    assert cfg.params == RunConfig().params


@pytest.mark.parametrize("text", [
    "[params]\nbogus = 1\n",
    "[nowhere]\nx = 1\n",
    "[params]\neps = abc\n",
    "not an ini file",
])
def test_rejects_malformed(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("section,key,value", [
    ("params", "eps", 0.2),
    ("params", "rho", 0.9),
    ("params", "sigma", -1.0),
    ("sampler", "burn_in", 10 ** 6),
    ("sampler", "initial", "random"),
    ("sampler", "move_probs", (0.5, 0.5, 0.5)),
    ("model", "N", 0),
    ("rigidity", "resolution", 8.0),
    ("rigidity", "ps", (0.5,)),
])
def test_validation_errors(section, key, value):
    cfg = RunConfig()
    setattr(getattr(cfg, section), key, value)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
