import dataclasses

import pytest

from rescross.config import SECTIONS, RunConfig, from_dict, load_config, reference_text, validate
from rescross.errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def test_defaults_validate():
    cfg = RunConfig()
    validate(cfg)
    assert cfg.spec.h_ast == 1 and cfg.spec.h_pl == -3
    assert cfg.t1 - cfg.t0 == pytest.approx(100 * 365.25)


def test_reference_round_trip():
    text = reference_text()
    data = tomllib.loads(text)
    assert set(data) == set(SECTIONS)
    cfg = from_dict(data)
    assert cfg.as_dict() == RunConfig().as_dict()


def test_partial_file_overrides(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('[integrator]\nspan_yr = 3.0\n[planets]\nnames = ["Mars", "Jupiter"]\n')
    cfg = load_config(p)
    assert cfg.integrator.span_yr == 3.0
    assert cfg.integrator.step_yr == RunConfig().integrator.step_yr
    assert cfg.planets.names == ["Mars", "Jupiter"]


@pytest.mark.parametrize("data, path", [
    ({"integratr": {"span_yr": 1.0}}, "integratr"),
    ({"integrator": {"span": 1.0}}, "integrator.span"),
    ({"integrator": {"span_yr": "long"}}, "integrator.span_yr"),
    ({"planets": {"names": ["Earth"], "resonant": "Jupiter"}}, "planets.resonant"),
    ({"asteroid": {"e": 1.5}}, "asteroid.e"),
    ({"resonance": {"h": 2, "h_prime": -4}}, "resonance"),
])
def test_errors_name_the_field(data, path):
    with pytest.raises(ConfigError) as exc:
        validate(from_dict(data))
    assert path in str(exc.value)


def test_content_hash_tracks_values():
    a, b = RunConfig(), RunConfig()
    assert a.content_hash() == b.content_hash()
    c = dataclasses.replace(a, asteroid=dataclasses.replace(a.asteroid, e=0.3))
    assert c.content_hash() != a.content_hash()
