import pytest

from cocycle_lab.config import ConfigError, parse_config

BASE = """\
experiment: t
seed: 3
measures:
  srw: {backend: {kind: free_group, rank: 2}, family: srw}
params:
  measure: srw
"""


def test_valid_config_builds_measures():
    cfg, params = parse_config(BASE, "lazy-check")
    assert params.n_max == 4
    assert cfg.measure("srw").pmf(cfg.measure("srw").backend.element("a")) == 0.25


def test_unknown_top_level_key_names_line():
    text = BASE + "colour: blue\n"
    with pytest.raises(ConfigError, match=r"line 7: colour: unknown key"):
        parse_config(text, "lazy-check")


def test_unknown_param_key_names_line():
    text = BASE + "  n_maxx: 3\n"
    with pytest.raises(ConfigError, match=r"line 7: params.n_maxx: unknown key"):
        parse_config(text, "lazy-check")


def test_unknown_nested_measure_key():
    text = BASE.replace("family: srw}", "family: srw, temperature: 2}")
    with pytest.raises(ConfigError, match=r"line 4: measures.srw.temperature: unknown key"):
        parse_config(text, "lazy-check")


def test_missing_measure_parameter():
    text = BASE.replace("family: srw}", "family: geometric}")
    with pytest.raises(ConfigError, match="needs 'p'"):
        parse_config(text, "lazy-check")


def test_suite_mismatch_and_unknown_suite():
    with pytest.raises(ConfigError):
        parse_config("suite: clt\n" + BASE, "lazy-check")
    with pytest.raises(ConfigError):
        parse_config(BASE, "nope")


def test_fingerprint_ignores_workers_and_output():
    a, _ = parse_config(BASE, "lazy-check")
    b, _ = parse_config(BASE + "workers: 8\noutput: {dir: elsewhere}\n", "lazy-check")
    c, _ = parse_config(BASE.replace("seed: 3", "seed: 4"), "lazy-check")
    assert a.fingerprint() == b.fingerprint() != c.fingerprint()


def test_unknown_measure_reference():
    cfg, _ = parse_config(BASE, "lazy-check")
    with pytest.raises(ConfigError):
        cfg.measure("missing")


def test_not_yaml_mapping():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")
