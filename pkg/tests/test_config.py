from pathlib import Path

import numpy as np
import pytest

from tubelab.config import IDENTITIES, ScenarioConfig, config_from_dict, parse_config
from tubelab.errors import ConfigurationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
horizon = 0.5

[box]
x1 = [-1.0, 1.0]
x2 = [-1.0, 1.0]
x3 = [0.0, 1.0]

[grid]
n1 = 16
n2 = 16
n3 = 8

[field]
name = "zero"

[tube]
shape = "cylinder"
"""


def write(tmp_path, text, name="case.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert isinstance(cfg, ScenarioConfig)
    assert cfg.name == "case"
    assert cfg.cfl == 0.4 and cfg.margin == 0.25
    t = cfg.tolerances
    assert (t.eps_grad, t.eps_sigma, t.tol_mono, t.tol_final) == (1e-3, 1e-6, 1e-4, 1e-2)
    assert cfg.run.envelope_scale == 1.0
    assert cfg.outputs.directory == "out" and cfg.outputs.snapshot_every == 0 and cfg.outputs.vtk is False
    assert cfg.verify.test_functions == ("1", "x1")
    assert cfg.velocity().name == "zero"


@pytest.mark.parametrize("value", ["1.5", "0", "1.0"])
def test_cfl_out_of_range_names_cfl(tmp_path, value):
    with pytest.raises(ConfigurationError, match="cfl"):
        parse_config(write(tmp_path, f"cfl = {value}\n" + MINIMAL))


def test_unknown_field_lists_builtins(tmp_path):
    with pytest.raises(ConfigurationError) as exc:
        parse_config(write(tmp_path, MINIMAL.replace('"zero"', '"abz"')))
    msg = str(exc.value)
    assert "abz" in msg
    for name in ("abc", "axial-strain", "rigid-rotation", "uniform", "zero"):
        assert name in msg


@pytest.mark.parametrize(
    "extra, key",
    [
        ("tol_mon = 1e-4\n", "tol_mon"),
        ("[tolerances]\ntol_mon = 1e-4\n", "tolerances.tol_mon"),
        ("[outputs]\nvtkk = true\n", "outputs.vtkk"),
    ],
)
def test_unknown_keys_are_rejected_by_name(tmp_path, extra, key):
    text = extra + MINIMAL if not extra.startswith("[") else MINIMAL + extra
    with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
        parse_config(write(tmp_path, text))


def test_unknown_field_parameter(tmp_path):
    with pytest.raises(ConfigurationError, match=r"field\.beta"):
        parse_config(write(tmp_path, MINIMAL.replace('name = "zero"', 'name = "axial-strain"\nbeta = 1.0')))


@pytest.mark.parametrize(
    "mutate, key",
    [
        (lambda s: s.replace("horizon = 0.5", ""), "horizon"),
        (lambda s: s.replace("n3 = 8", "n3 = 4"), "grid.n3"),
        (lambda s: s.replace("n3 = 8", "n3 = 8.5"), "grid.n3"),
        (lambda s: s.replace('x3 = [0.0, 1.0]', 'x3 = [1.0, 0.0]'), "box.x3"),
        (lambda s: s + "[tolerances]\neps_grad = -1.0\n", "tolerances.eps_grad"),
        (lambda s: "margin = 1.2\n" + s, "margin"),
        (lambda s: s.replace('"cylinder"', '"cube"'), "tube.shape"),
    ],
)
def test_validation_errors_name_the_key(tmp_path, mutate, key):
    with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
        parse_config(write(tmp_path, mutate(MINIMAL)))


def test_tube_needs_exactly_one_kind(tmp_path):
    with pytest.raises(ConfigurationError, match="exactly one"):
        parse_config(write(tmp_path, MINIMAL.replace('shape = "cylinder"', 'shape = "cylinder"\ngraph = "sine-sheet"')))


def test_malformed_and_missing_files(tmp_path):
    with pytest.raises(ConfigurationError, match="malformed"):
        parse_config(write(tmp_path, "horizon = = 1"))
    with pytest.raises(ConfigurationError, match="cannot read"):
        parse_config(tmp_path / "nope.toml")


def test_potential_field(tmp_path):
    text = MINIMAL.replace('name = "zero"', 'potential = ["0", "0", "-(x1**2 + x2**2)/2"]')
    field = parse_config(write(tmp_path, text)).velocity()
    np.testing.assert_allclose(field(np.array([[0.3, 0.4, 0.5]]), 0.0), [[-0.4, 0.3, 0.0]], atol=1e-14)


def test_graph_config_needs_no_field():
    cfg = config_from_dict(
        {
            "horizon": 1.0,
            "box": {"x1": [-1.0, 1.0], "x2": [-1.0, 1.0], "x3": [0.0, 1.0]},
            "grid": {"n1": 16, "n2": 16, "n3": 8},
            "tube": {"graph": "sine-sheet", "speed": 0.05},
        }
    )
    assert cfg.scenario().graph is not None
    assert cfg.velocity().name == "uniform"


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = parse_config(path)
    assert cfg.name == path.stem


def test_identity_names():
    assert IDENTITIES == ("14", "15", "23", "25", "flux")
