"""Initial tube shapes and named test scenarios.

A scenario pairs an initial level-set function with a velocity field.
When the field has a closed-form inverse flow map the exact solution is
``theta(x, t) = theta0(backward_map(x, t))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .flow_fields import VelocityField, builtin_field
from .graph_oracle import GraphTube, graph_tube

Theta0 = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
ThetaT = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


def cylinder(radius: float = 0.25, c1: float = 0.0, c2: float = 0.0) -> Theta0:
    r2 = radius * radius
    return lambda x1, x2, x3: (x1 - c1) ** 2 + (x2 - c2) ** 2 - r2 + 0.0 * x3


def ellipse(a1: float = 0.3, a2: float = 0.2, c1: float = 0.0, c2: float = 0.0) -> Theta0:
    # scaled so |grad theta| is O(1) on the zero set, like the cylinder
    s = a1 * a2
    return lambda x1, x2, x3: s * (((x1 - c1) / a1) ** 2 + ((x2 - c2) / a2) ** 2 - 1.0) + 0.0 * x3


def two_cylinders(radius: float = 0.2, separation: float = 0.8) -> Theta0:
    h = 0.5 * separation
    left = cylinder(radius, -h, 0.0)
    right = cylinder(radius, h, 0.0)
    return lambda x1, x2, x3: np.minimum(left(x1, x2, x3), right(x1, x2, x3))


def constant(value: float = 1.0) -> Theta0:
    return lambda x1, x2, x3: np.full(np.broadcast(x1, x2, x3).shape, float(value))


SHAPES: dict[str, Callable[..., Theta0]] = {
    "cylinder": cylinder,
    "ellipse": ellipse,
    "two-cylinders": two_cylinders,
    "constant": constant,
}


def tube_shape(name: str, params=None) -> Theta0:
    try:
        factory = SHAPES[name]
    except KeyError:
        raise ConfigurationError(f"unknown tube shape {name!r}; valid shapes: {sorted(SHAPES)}") from None
    try:
        return factory(**{k: float(v) for k, v in (params or {}).items()})
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for tube shape {name!r}: {exc}") from None


@dataclass(frozen=True)
class Scenario:
    name: str
    field: VelocityField
    initial: Theta0 = field(repr=False)
    theta: ThetaT | None = field(default=None, repr=False)
    graph: GraphTube | None = None

    @property
    def has_exact(self) -> bool:
        return self.theta is not None


def compose(name: str, initial: Theta0, velocity: VelocityField) -> Scenario:
    back = velocity.backward_map
    theta = None
    if back is not None:

        def theta(x1, x2, x3, t):
            x = np.stack(np.broadcast_arrays(x1, x2, x3), axis=-1)
            X = back(x, t)
            return initial(X[..., 0], X[..., 1], X[..., 2])

    return Scenario(name, velocity, initial, theta)


def graph_scenario(name: str, tube: GraphTube) -> Scenario:
    """Scenario whose boundary is the graph; carried by ``u = (psi_t, 0, 0)``.

    The field only transports the graph when ``psi_t`` is constant, which
    holds for every registered graph family.
    """
    speed = tube.param_dict.get("speed", 0.0)
    velocity = builtin_field("uniform", {"c1": speed})

    def theta(x1, x2, x3, t):
        return x1 - tube.psi(x2, x3, t)

    return Scenario(name, velocity, lambda x1, x2, x3: theta(x1, x2, x3, 0.0), theta, graph=tube)


def _registry():
    return {
        "static-cylinder": lambda: compose("static-cylinder", cylinder(0.25), builtin_field("zero")),
        "translating-cylinder": lambda: compose(
            "translating-cylinder", cylinder(0.25), builtin_field("uniform", {"c1": 0.2})
        ),
        "axial-strain": lambda: compose("axial-strain", cylinder(0.3), builtin_field("axial-strain", {"alpha": 0.5})),
        "rotating-cylinder": lambda: compose(
            "rotating-cylinder", cylinder(0.2, 0.3, 0.0), builtin_field("rigid-rotation", {"omega": 1.0})
        ),
        "centered-rotation": lambda: compose(
            "centered-rotation", cylinder(0.25), builtin_field("rigid-rotation", {"omega": 1.0})
        ),
        "graph-sheet": lambda: graph_scenario(
            "graph-sheet", graph_tube("sine-sheet", {"speed": 0.05, "amplitude": 0.1, "slope": 0.2})
        ),
        "abc-cylinder": lambda: compose("abc-cylinder", cylinder(0.2), builtin_field("abc")),
    }


SCENARIOS = tuple(_registry())


def get_scenario(name: str) -> Scenario:
    try:
        return _registry()[name]()
    except KeyError:
        raise ConfigurationError(f"unregistered scenario {name!r}; known: {list(SCENARIOS)}") from None
