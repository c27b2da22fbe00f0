"""Scenario configuration files.

A configuration is a TOML document.  Every table has a fixed set of keys
and anything else is rejected, so a misspelled tolerance cannot silently
fall back to its default.  Example::

    horizon = 1.0
    cfl = 0.4
    margin = 0.25

    [box]
    x1 = [-1.0, 1.0]
    x2 = [-1.0, 1.0]
    x3 = [0.0, 1.0]

    [grid]
    n1 = 96
    n2 = 96
    n3 = 64

    [field]
    name = "axial-strain"
    alpha = 0.5

    [tube]
    shape = "cylinder"
    radius = 0.3
"""

from __future__ import annotations

import inspect
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigurationError
from .flow_fields import BUILTIN_FIELDS, Box3, VectorPotential, VelocityField, builtin_field, curl_of_potential
from .graph_oracle import GRAPHS, graph_tube
from .scenarios import SHAPES, Scenario, compose, graph_scenario, tube_shape
from .slice_geometry import TEST_FUNCTIONS
from .tube_levelset import GridSpec

IDENTITIES = ("14", "15", "23", "25", "flux")


@dataclass(frozen=True)
class FieldConfig:
    name: str | None = None
    params: dict = field(default_factory=dict)
    potential: tuple[str, str, str] | None = None

    def build(self) -> VelocityField:
        if self.potential is not None:
            return curl_of_potential(VectorPotential.from_expressions(list(self.potential)))
        return builtin_field(self.name, self.params)


@dataclass(frozen=True)
class TubeConfig:
    shape: str | None = None
    graph: str | None = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    envelope_scale: float = 1.0
    sampling: int = 64
    min_steps: int = 10


@dataclass(frozen=True)
class Tolerances:
    eps_grad: float = 1e-3
    eps_sigma: float = 1e-6
    tol_mono: float = 1e-4
    tol_final: float = 1e-2
    identity: float = 1e-3
    sigma_relation: float = 1e-12
    surface: float = 1e-2
    flux: float = 1e-3


@dataclass(frozen=True)
class VerifyConfig:
    x3: float | None = None
    t: float | None = None
    dt_fd: float = 1e-3
    refinements: int = 2
    test_functions: tuple[str, ...] = ("1", "x1")
    interval: tuple[float, float] | None = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    snapshot_every: int = 0
    vtk: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    box: Box3
    grid: GridSpec
    field: FieldConfig
    tube: TubeConfig
    horizon: float
    cfl: float = 0.4
    margin: float = 0.25
    run: RunConfig = RunConfig()
    tolerances: Tolerances = Tolerances()
    verify: VerifyConfig = VerifyConfig()
    outputs: OutputConfig = OutputConfig()
    name: str = "scenario"

    def velocity(self) -> VelocityField:
        if self.tube.graph is not None and self.field.name is None and self.field.potential is None:
            return self.scenario().field
        return self.field.build()

    def scenario(self) -> Scenario:
        """Initial tube and field, with the closed-form solution when one exists."""
        if self.tube.graph is not None:
            sc = graph_scenario(self.tube.graph, graph_tube(self.tube.graph, self.tube.params))
            if self.field.name is None and self.field.potential is None:
                return sc
            return Scenario(sc.name, self.field.build(), sc.initial, None, graph=sc.graph)
        return compose(self.tube.shape, tube_shape(self.tube.shape, self.tube.params), self.field.build())


# -- validation helpers --------------------------------------------------------


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key!r} must be a number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise ConfigurationError(f"{key!r} must be finite")
    return float(value)


def _positive(value, key: str) -> float:
    v = _number(value, key)
    if v <= 0:
        raise ConfigurationError(f"{key!r} must be strictly positive, got {v}")
    return v


def _integer(value, key: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{key!r} must be an integer")
    if value < minimum:
        raise ConfigurationError(f"{key!r} must be at least {minimum}, got {value}")
    return value


def _string(value, key: str) -> str:
    if not isinstance(value, str):
        raise ConfigurationError(f"{key!r} must be a string")
    return value


def _pair(value, key: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigurationError(f"{key!r} must be a two-element array [lo, hi]")
    lo, hi = (_number(v, key) for v in value)
    if hi <= lo:
        raise ConfigurationError(f"{key!r} must satisfy lo < hi, got {value}")
    return lo, hi


def _table(doc: dict, key: str, required: bool = False) -> dict:
    if key not in doc:
        if required:
            raise ConfigurationError(f"missing required table [{key}]")
        return {}
    value = doc[key]
    if not isinstance(value, dict):
        raise ConfigurationError(f"{key!r} must be a table")
    return value


def _reject_unknown(table: dict, allowed, where: str):
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        dotted = ", ".join(f"{where}.{k}" if where else k for k in unknown)
        raise ConfigurationError(f"unknown key(s): {dotted}")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigurationError(f"missing required key {where}.{key}" if where else f"missing required key {key}")
    return table[key]


# -- sections ------------------------------------------------------------------

_TOP = {"horizon", "cfl", "margin", "name", "box", "grid", "field", "tube", "run", "tolerances", "verify", "outputs"}


def _parse_field(t: dict) -> FieldConfig:
    if "potential" in t:
        _reject_unknown(t, {"potential"}, "field")
        pot = t["potential"]
        if not isinstance(pot, list) or len(pot) != 3 or not all(isinstance(c, str) for c in pot):
            raise ConfigurationError("'field.potential' must be an array of three expression strings")
        return FieldConfig(potential=tuple(pot))
    if not t:
        return FieldConfig()
    name = _string(_require(t, "name", "field"), "field.name")
    if name not in BUILTIN_FIELDS:
        raise ConfigurationError(f"unknown field {name!r} in 'field.name'; valid builtins: {', '.join(sorted(BUILTIN_FIELDS))}")
    allowed = BUILTIN_FIELDS[name][1]
    params = {k: v for k, v in t.items() if k != "name"}
    _reject_unknown(params, allowed, "field")
    return FieldConfig(name=name, params={k: _number(v, f"field.{k}") for k, v in params.items()})


def _parse_tube(t: dict) -> TubeConfig:
    if ("shape" in t) == ("graph" in t):
        raise ConfigurationError("[tube] needs exactly one of 'tube.shape' or 'tube.graph'")
    kind = "shape" if "shape" in t else "graph"
    name = _string(t[kind], f"tube.{kind}")
    registry = SHAPES if kind == "shape" else GRAPHS
    if name not in registry:
        raise ConfigurationError(f"unknown {kind} {name!r} in 'tube.{kind}'; valid: {', '.join(sorted(registry))}")
    allowed = inspect.signature(registry[name]).parameters
    params = {k: v for k, v in t.items() if k != kind}
    _reject_unknown(params, allowed, "tube")
    params = {k: _number(v, f"tube.{k}") for k, v in params.items()}
    return TubeConfig(**{kind: name}, params=params)


def _parse_run(t: dict) -> RunConfig:
    _reject_unknown(t, RunConfig.__dataclass_fields__, "run")
    d = RunConfig()
    return RunConfig(
        envelope_scale=_positive(t.get("envelope_scale", d.envelope_scale), "run.envelope_scale"),
        sampling=_integer(t.get("sampling", d.sampling), "run.sampling", 2),
        min_steps=_integer(t.get("min_steps", d.min_steps), "run.min_steps", 1),
    )


def _parse_tolerances(t: dict) -> Tolerances:
    _reject_unknown(t, Tolerances.__dataclass_fields__, "tolerances")
    d = Tolerances()
    return Tolerances(**{k: _positive(t.get(k, getattr(d, k)), f"tolerances.{k}") for k in Tolerances.__dataclass_fields__})


def _parse_verify(t: dict) -> VerifyConfig:
    _reject_unknown(t, VerifyConfig.__dataclass_fields__, "verify")
    d = VerifyConfig()
    fns = t.get("test_functions", list(d.test_functions))
    if not isinstance(fns, list) or not all(isinstance(f, str) for f in fns):
        raise ConfigurationError("'verify.test_functions' must be an array of strings")
    bad = [f for f in fns if f not in TEST_FUNCTIONS]
    if bad:
        raise ConfigurationError(f"unknown test function(s) {bad} in 'verify.test_functions'; valid: {list(TEST_FUNCTIONS)}")
    return VerifyConfig(
        x3=_number(t["x3"], "verify.x3") if "x3" in t else None,
        t=_number(t["t"], "verify.t") if "t" in t else None,
        dt_fd=_positive(t.get("dt_fd", d.dt_fd), "verify.dt_fd"),
        refinements=_integer(t.get("refinements", d.refinements), "verify.refinements", 1),
        test_functions=tuple(fns),
        interval=_pair(t["interval"], "verify.interval") if "interval" in t else None,
    )


def _parse_outputs(t: dict) -> OutputConfig:
    _reject_unknown(t, OutputConfig.__dataclass_fields__, "outputs")
    d = OutputConfig()
    vtk = t.get("vtk", d.vtk)
    if not isinstance(vtk, bool):
        raise ConfigurationError("'outputs.vtk' must be true or false")
    return OutputConfig(
        directory=_string(t.get("directory", d.directory), "outputs.directory"),
        snapshot_every=_integer(t.get("snapshot_every", d.snapshot_every), "outputs.snapshot_every", 0),
        vtk=vtk,
    )


def config_from_dict(doc: dict[str, Any], name: str = "scenario") -> ScenarioConfig:
    """Validate a parsed document and fill in defaults."""
    _reject_unknown(doc, _TOP, "")

    bt = _table(doc, "box", required=True)
    _reject_unknown(bt, {"x1", "x2", "x3"}, "box")
    box = Box3(*(_pair(_require(bt, k, "box"), f"box.{k}") for k in ("x1", "x2", "x3")))

    gt = _table(doc, "grid", required=True)
    _reject_unknown(gt, {"n1", "n2", "n3"}, "grid")
    grid = GridSpec(*(_integer(_require(gt, k, "grid"), f"grid.{k}", 8) for k in ("n1", "n2", "n3")))

    tube = _parse_tube(_table(doc, "tube", required=True))
    ft = _table(doc, "field", required=tube.graph is None)
    fld = _parse_field(ft)

    horizon = _positive(_require(doc, "horizon", ""), "horizon")
    cfl = _number(doc.get("cfl", 0.4), "cfl")
    if not 0 < cfl < 1:
        raise ConfigurationError(f"'cfl' must lie in (0, 1), got {cfl}")
    margin = _number(doc.get("margin", 0.25), "margin")
    if not 0 < margin < 1:
        raise ConfigurationError(f"'margin' must lie in (0, 1), got {margin}")

    cfg = ScenarioConfig(
        box=box,
        grid=grid,
        field=fld,
        tube=tube,
        horizon=horizon,
        cfl=cfl,
        margin=margin,
        run=_parse_run(_table(doc, "run")),
        tolerances=_parse_tolerances(_table(doc, "tolerances")),
        verify=_parse_verify(_table(doc, "verify")),
        outputs=_parse_outputs(_table(doc, "outputs")),
        name=_string(doc.get("name", name), "name"),
    )
    # build once so bad shape or graph parameters surface at parse time
    cfg.scenario()
    return cfg


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    return config_from_dict(doc, name=path.stem)
