"""Grid-sampled level-set function of a tube and its transport.

The tube at time ``t`` is ``{x in Q : theta(x, t) < 0}``.  Values live on
the nodes of a uniform grid that includes the box faces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigurationError, DomainError, InputError, PreconditionError, StepSizeError
from .flow_fields import Box3, VelocityField, sup_speed
from .weno import ssprk3_step

logger = logging.getLogger(__name__)

DEFAULT_EPS_GRAD = 1e-3
DEFAULT_CFL = 0.4


@dataclass(frozen=True)
class GridSpec:
    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        for n in self.shape:
            if int(n) != n or n < 8:
                raise ConfigurationError(f"grid needs at least 8 integer points per axis, got {self.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    def spacings(self, box: Box3) -> np.ndarray:
        return box.extents / (np.array(self.shape) - 1)

    def axes(self, box: Box3) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(box.lower, box.upper, self.shape)]


@dataclass(frozen=True, eq=False)
class LevelSetState:
    grid: GridSpec
    box: Box3
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise InputError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError("level-set values must be finite at every node")
        if not math.isfinite(self.time) or self.time < 0:
            raise InputError(f"state time must be finite and non-negative, got {self.time}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return self.grid.axes(self.box)

    @cached_property
    def spacing(self) -> np.ndarray:
        return self.grid.spacings(self.box)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def gradient(self) -> np.ndarray:
        """Nodal central-difference gradient, shape ``grid.shape + (3,)``."""
        g = np.gradient(self.values, *self.spacing, edge_order=2)
        return np.stack(g, axis=-1)

    @cached_property
    def _theta_interp(self):
        return RegularGridInterpolator(self.axes, self.values, method="linear")

    @cached_property
    def _grad_interp(self):
        return RegularGridInterpolator(self.axes, self.gradient, method="linear")

    def with_values(self, values: np.ndarray, time: float) -> "LevelSetState":
        return LevelSetState(self.grid, self.box, values, time)


# -- construction ------------------------------------------------------------

ScalarFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def init_levelset(theta0: ScalarFn, grid: GridSpec, box: Box3) -> LevelSetState:
    """Sample ``theta0(x1, x2, x3)`` at the grid nodes at time 0."""
    X1, X2, X3 = np.meshgrid(*grid.axes(box), indexing="ij")
    values = np.broadcast_to(np.asarray(theta0(X1, X2, X3), dtype=float), grid.shape)
    if not np.all(np.isfinite(values)):
        raise InputError("initial level-set function produced non-finite samples")
    return LevelSetState(grid, box, values, 0.0)


def exact_levelset(scenario, t: float, grid: GridSpec, box: Box3) -> LevelSetState:
    """Sample a registered closed-form ``theta(x, t)``.

    ``scenario`` is a :class:`tubelab.scenarios.Scenario` or a registered
    scenario name.
    """
    from .scenarios import Scenario, get_scenario

    if not isinstance(scenario, Scenario):
        scenario = get_scenario(scenario)
    if scenario.theta is None:
        raise ConfigurationError(f"scenario {scenario.name!r} has no closed-form level set")
    X1, X2, X3 = np.meshgrid(*grid.axes(box), indexing="ij")
    values = np.broadcast_to(np.asarray(scenario.theta(X1, X2, X3, t), dtype=float), grid.shape)
    return LevelSetState(grid, box, values, t)


# -- transport ---------------------------------------------------------------


def max_stable_dt(state: LevelSetState, speed: float, cfl: float = DEFAULT_CFL) -> float:
    return cfl * float(np.min(state.spacing)) / max(1e-12, speed)


def advect(
    state: LevelSetState,
    field: VelocityField,
    dt: float,
    cfl: float = DEFAULT_CFL,
    speed: float | None = None,
    nodal_velocity: np.ndarray | None = None,
) -> LevelSetState:
    """Advance ``theta_t + u . grad theta = 0`` by one SSP-RK3/WENO5 step.

    ``speed`` is the sup of ``|u|`` at the current time; computed by
    sampling when not supplied.  For a steady field the velocity at the
    grid nodes may be passed in ``nodal_velocity`` to skip re-evaluation.
    """
    if not isinstance(state, LevelSetState):
        raise PreconditionError("advect needs a LevelSetState")
    if not dt > 0:
        raise StepSizeError(f"time step must be positive, got {dt}")
    if speed is None:
        speed = sup_speed(field, state.box, state.time)
    limit = max_stable_dt(state, speed, cfl)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt = {dt:.6g} exceeds the CFL limit {limit:.6g} (cfl = {cfl})")
    if nodal_velocity is not None:
        if not field.steady:
            raise PreconditionError("precomputed nodal velocities are only valid for steady fields")
        velocity = lambda tt: nodal_velocity  # noqa: E731
    else:
        nodes = state.nodes
        velocity = lambda tt: field(nodes, tt)  # noqa: E731
    new = ssprk3_step(state.values, state.time, dt, velocity, state.spacing)
    return state.with_values(new, state.time + dt)


# -- validity ----------------------------------------------------------------


@dataclass(frozen=True)
class ValidityReport:
    min_slice_gradient: float
    empty_slices: tuple[int, ...]
    boundary_contact: bool
    eps_grad: float

    @property
    def is_regular(self) -> bool:
        return (
            self.min_slice_gradient >= self.eps_grad
            and not self.empty_slices
            and not self.boundary_contact
        )

    def summary(self) -> dict:
        return {
            "min_slice_gradient": self.min_slice_gradient,
            "empty_slices": list(self.empty_slices),
            "boundary_contact": self.boundary_contact,
            "is_regular": self.is_regular,
        }


def crossing_cells(values: np.ndarray) -> np.ndarray:
    """Mask of in-slice cells (axes 0, 1) whose corners change sign.

    ``values`` has shape ``(n1, n2, ...)``; the mask has shape
    ``(n1 - 1, n2 - 1, ...)``.
    """
    neg = values < 0
    c = [neg[:-1, :-1], neg[1:, :-1], neg[1:, 1:], neg[:-1, 1:]]
    any_neg = c[0] | c[1] | c[2] | c[3]
    all_neg = c[0] & c[1] & c[2] & c[3]
    return any_neg & ~all_neg


def validate_regular_tube(state: LevelSetState, eps_grad: float = DEFAULT_EPS_GRAD) -> ValidityReport:
    v = state.values
    cross = crossing_cells(v)

    g1, g2 = np.gradient(v, *state.spacing[:2], axis=(0, 1), edge_order=2)
    gmag = np.hypot(g1, g2)
    near = np.zeros(v.shape, dtype=bool)
    near[:-1, :-1] |= cross
    near[1:, :-1] |= cross
    near[1:, 1:] |= cross
    near[:-1, 1:] |= cross
    min_grad = float(gmag[near].min()) if near.any() else math.inf

    empty = tuple(int(k) for k in np.flatnonzero(~np.any(v < 0, axis=(0, 1))))

    ring = np.zeros(cross.shape[:2], dtype=bool)
    ring[[0, -1], :] = True
    ring[:, [0, -1]] = True
    wall = np.zeros(v.shape[:2], dtype=bool)
    wall[[0, -1], :] = True
    wall[:, [0, -1]] = True
    contact = bool(np.any(cross[ring]) or np.any(v[wall] < 0))

    report = ValidityReport(min_grad, empty, contact, eps_grad)
    if math.isfinite(min_grad) and min_grad < 2 * eps_grad:
        logger.warning("min slice gradient %.3g is within a factor 2 of eps_grad %.3g", min_grad, eps_grad)
    return report


# -- interpolation -----------------------------------------------------------


def _check_inside(state: LevelSetState, x: np.ndarray):
    if not np.all(state.box.contains(x)):
        raise DomainError("interpolation point outside the box")


def _clip(state: LevelSetState, x: np.ndarray) -> np.ndarray:
    return np.clip(x, state.box.lower, state.box.upper)


def interp_theta(state: LevelSetState, x) -> np.ndarray:
    """Trilinear interpolation of theta at points ``x`` of shape ``(..., 3)``."""
    x = np.asarray(x, dtype=float)
    _check_inside(state, x)
    return state._theta_interp(_clip(state, x))


def interp_gradient(state: LevelSetState, x) -> np.ndarray:
    """Trilinear interpolation of the nodal central-difference gradient."""
    x = np.asarray(x, dtype=float)
    _check_inside(state, x)
    return state._grad_interp(_clip(state, x))


# -- output ------------------------------------------------------------------


def write_vtk(state: LevelSetState, path) -> Path:
    """Write theta as a legacy-VTK ASCII STRUCTURED_POINTS file.

    Header: ``DIMENSIONS n1 n2 n3``, ``ORIGIN`` the lower box corner,
    ``SPACING h1 h2 h3``, then ``POINT_DATA`` with one double scalar field
    named ``theta``, x1 varying fastest.
    """
    path = Path(path)
    n1, n2, n3 = state.grid.shape
    lo = state.box.lower
    h = state.spacing
    lines = [
        "# vtk DataFile Version 3.0",
        f"tubelab theta t={state.time:.17g}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n1} {n2} {n3}",
        f"ORIGIN {lo[0]:.17g} {lo[1]:.17g} {lo[2]:.17g}",
        f"SPACING {h[0]:.17g} {h[1]:.17g} {h[2]:.17g}",
        f"POINT_DATA {n1 * n2 * n3}",
        "SCALARS theta double 1",
        "LOOKUP_TABLE default",
    ]
    flat = state.values.ravel(order="F")
    body = "\n".join(f"{v:.17g}" for v in flat)
    path.write_text("\n".join(lines) + "\n" + body + "\n")
    return path
