"""Divergence-free velocity fields on a rectangular box.

Fields are evaluated in vectorized form: ``field(x, t)`` takes points of
shape ``(..., 3)`` and returns velocities of the same shape.  Builtin
fields have closed-form expressions; arbitrary fields can be built as the
curl of a vector potential with analytic partial derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigurationError, DomainError

ArrayFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class Box3:
    """Closed box ``I1 x I2 x I3``; ``[a, b]`` is the axial interval ``I3``."""

    i1: tuple[float, float]
    i2: tuple[float, float]
    i3: tuple[float, float]

    def __post_init__(self):
        for name in ("i1", "i2", "i3"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
                raise ConfigurationError(f"box interval {name} must have positive length, got ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))

    @property
    def a(self) -> float:
        return self.i3[0]

    @property
    def b(self) -> float:
        return self.i3[1]

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.i1[0], self.i2[0], self.i3[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.i1[1], self.i2[1], self.i3[1]])

    @property
    def extents(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        slack = tol * np.maximum(1.0, np.abs(self.extents))
        return np.all((x >= self.lower - slack) & (x <= self.upper + slack), axis=-1)


@dataclass(frozen=True)
class VelocityField:
    """An evaluable velocity field ``u(x, t)``.

    ``backward_map``, when present, is the closed-form inverse flow map
    ``x -> X`` with ``X`` the position at time 0 of the particle found at
    ``x`` at time ``t``.  It lets exact level-set solutions be composed.
    ``steady`` marks fields that do not depend on ``t``.
    """

    kind: str
    name: str
    params: tuple[tuple[str, float], ...]
    func: ArrayFn = dc_field(repr=False, compare=False)
    backward_map: ArrayFn | None = dc_field(default=None, repr=False, compare=False)
    steady: bool = False

    def __call__(self, x, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 3:
            raise DomainError(f"points must have trailing dimension 3, got shape {x.shape}")
        return self.func(x, float(t))

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)


def eval_velocity(field: VelocityField, x, t: float, box: Box3 | None = None) -> np.ndarray:
    """Evaluate ``field`` at ``x``; with ``box`` given, points outside it are rejected."""
    x = np.asarray(x, dtype=float)
    if box is not None and not np.all(box.contains(x)):
        raise DomainError("evaluation point outside the box")
    return field(x, t)


# -- builtins ---------------------------------------------------------------


def _zero(params):
    def func(x, t):
        return np.zeros_like(x)

    def back(x, t):
        return np.array(x, dtype=float, copy=True)

    return func, back


def _uniform(params):
    c = np.array([params.get("c1", 0.0), params.get("c2", 0.0), params.get("c3", 0.0)])

    def func(x, t):
        return np.broadcast_to(c, x.shape).copy()

    def back(x, t):
        return x - c * t

    return func, back


def _axial_strain(params):
    alpha = params.get("alpha", 0.5)

    def func(x, t):
        u = np.empty_like(x)
        u[..., 0] = -alpha * x[..., 0]
        u[..., 1] = -alpha * x[..., 1]
        u[..., 2] = 2.0 * alpha * x[..., 2]
        return u

    def back(x, t):
        s = np.exp(alpha * t)
        X = np.empty_like(x)
        X[..., 0] = x[..., 0] * s
        X[..., 1] = x[..., 1] * s
        X[..., 2] = x[..., 2] / (s * s)
        return X

    return func, back


def _rigid_rotation(params):
    # rotation about the x3 axis through the origin
    omega = params.get("omega", 1.0)

    def func(x, t):
        u = np.zeros_like(x)
        u[..., 0] = -omega * x[..., 1]
        u[..., 1] = omega * x[..., 0]
        return u

    def back(x, t):
        c, s = np.cos(omega * t), np.sin(omega * t)
        X = np.array(x, dtype=float, copy=True)
        X[..., 0] = c * x[..., 0] + s * x[..., 1]
        X[..., 1] = -s * x[..., 0] + c * x[..., 1]
        return X

    return func, back


def _abc(params):
    A = params.get("A", 1.0)
    B = params.get("B", 1.0)
    C = params.get("C", 1.0)

    def func(x, t):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack(
            [
                A * np.sin(x3) + C * np.cos(x2),
                B * np.sin(x1) + A * np.cos(x3),
                C * np.sin(x2) + B * np.cos(x1),
            ],
            axis=-1,
        )

    return func, None


BUILTIN_FIELDS: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "zero": (_zero, ()),
    "uniform": (_uniform, ("c1", "c2", "c3")),
    "axial-strain": (_axial_strain, ("alpha",)),
    "rigid-rotation": (_rigid_rotation, ("omega",)),
    "abc": (_abc, ("A", "B", "C")),
}


def builtin_field(name: str, params: Mapping[str, float] | None = None) -> VelocityField:
    """Return one of the builtin divergence-free fields.

    >>> builtin_field("axial-strain", {"alpha": 0.5})([1.0, 1.0, 1.0], 0.0)
    array([-0.5, -0.5,  1. ])
    """
    params = dict(params or {})
    try:
        factory, allowed = BUILTIN_FIELDS[name]
    except KeyError:
        valid = ", ".join(sorted(BUILTIN_FIELDS))
        raise ConfigurationError(f"unknown field {name!r}; valid builtins: {valid}") from None
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigurationError(
            f"unknown parameter(s) {sorted(unknown)} for field {name!r}; allowed: {list(allowed)}"
        )
    params = {k: float(v) for k, v in params.items()}
    func, back = factory(params)
    return VelocityField(
        kind="builtin-analytic",
        name=name,
        params=tuple(sorted(params.items())),
        func=func,
        backward_map=back,
        steady=True,
    )


# -- curl of a vector potential ---------------------------------------------


@dataclass(frozen=True)
class VectorPotential:
    """Vector potential ``A(x, t)`` together with its spatial Jacobian.

    ``jacobian(x, t)[..., i, j]`` is the partial of ``A_i`` with respect to
    ``x_j``.
    """

    value: ArrayFn
    jacobian: ArrayFn
    label: str = "potential"
    steady: bool = False

    @classmethod
    def from_expressions(cls, components) -> "VectorPotential":
        """Build a potential from three sympy-parsable strings in x1, x2, x3, t.

        Partials are taken symbolically so the resulting curl is exactly
        divergence-free up to rounding.
        """
        import sympy as sp

        x1, x2, x3, t = sp.symbols("x1 x2 x3 t")
        syms = {"x1": x1, "x2": x2, "x3": x3, "t": t, "pi": sp.pi}
        if len(components) != 3:
            raise ConfigurationError("a vector potential needs exactly three components")
        try:
            exprs = [sp.sympify(c, locals=syms) for c in components]
        except (sp.SympifyError, TypeError) as exc:
            raise ConfigurationError(f"cannot parse potential component: {exc}") from None
        free = set().union(*(e.free_symbols for e in exprs)) - {x1, x2, x3, t}
        if free:
            raise ConfigurationError(f"potential uses unknown symbols {sorted(map(str, free))}")
        jac = [[sp.diff(e, v) for v in (x1, x2, x3)] for e in exprs]
        f_val = sp.lambdify((x1, x2, x3, t), exprs, "numpy")
        f_jac = sp.lambdify((x1, x2, x3, t), jac, "numpy")

        def _bcast(rows, shape):
            return np.stack([np.broadcast_to(np.asarray(r, dtype=float), shape) for r in rows], axis=-1)

        def value(x, tt):
            shape = x.shape[:-1]
            return _bcast(f_val(x[..., 0], x[..., 1], x[..., 2], tt), shape)

        def jacobian(x, tt):
            shape = x.shape[:-1]
            rows = f_jac(x[..., 0], x[..., 1], x[..., 2], tt)
            return np.stack([_bcast(r, shape) for r in rows], axis=-2)

        steady = not any(e.has(t) for e in exprs)
        return cls(value=value, jacobian=jacobian, label=", ".join(str(e) for e in exprs), steady=steady)


def curl_of_potential(potential: VectorPotential) -> VelocityField:
    """Velocity field ``u = curl A``; divergence-free by construction."""

    def func(x, t):
        J = np.asarray(potential.jacobian(x, t), dtype=float)
        return np.stack(
            [
                J[..., 2, 1] - J[..., 1, 2],
                J[..., 0, 2] - J[..., 2, 0],
                J[..., 1, 0] - J[..., 0, 1],
            ],
            axis=-1,
        )

    return VelocityField(
        kind="curl-of-potential", name=potential.label, params=(), func=func, steady=potential.steady
    )


def divergence(field: VelocityField, x, t: float, h: float = 1e-3, order: int = 2) -> np.ndarray:
    """Central-difference divergence of ``field`` at points ``x``."""
    x = np.asarray(x, dtype=float)
    div = np.zeros(x.shape[:-1])
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        if order == 2:
            d = (field(x + e, t)[..., k] - field(x - e, t)[..., k]) / (2 * h)
        elif order == 4:
            d = (
                -field(x + 2 * e, t)[..., k]
                + 8 * field(x + e, t)[..., k]
                - 8 * field(x - e, t)[..., k]
                + field(x - 2 * e, t)[..., k]
            ) / (12 * h)
        else:
            raise ValueError("order must be 2 or 4")
        div += d
    return div


# -- sup-norm machinery -----------------------------------------------------


def _box_grid(lo, hi, n):
    axes = [np.linspace(lo[k], hi[k], n) for k in range(3)]
    return axes, np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def sup_speed(field: VelocityField, box: Box3, t: float, sampling: int = 64, refine: int = 8) -> float:
    """Max of ``|u(., t)|`` over a uniform sample of the box.

    After the coarse pass the neighbourhood of the coarse argmax (one cell
    either side, clipped to the box) is resampled ``refine`` times denser.
    The result is never below the coarse maximum.
    """
    if sampling < 2:
        raise ValueError("sampling density must be at least 2 points per axis")
    lo, hi = box.lower, box.upper
    axes, pts = _box_grid(lo, hi, sampling)
    speed = np.linalg.norm(field(pts, t), axis=-1)
    idx = np.unravel_index(int(np.argmax(speed)), speed.shape)
    best = float(speed[idx])
    if refine > 1:
        h = (hi - lo) / (sampling - 1)
        centre = np.array([axes[k][idx[k]] for k in range(3)])
        flo = np.maximum(lo, centre - h)
        fhi = np.minimum(hi, centre + h)
        _, fine = _box_grid(flo, fhi, 2 * refine + 1)
        best = max(best, float(np.max(np.linalg.norm(field(fine, t), axis=-1))))
    return best


@dataclass(frozen=True)
class SpeedEnvelope:
    """Sup speed per time and its tail integral from ``t`` to the horizon."""

    times: np.ndarray
    sup_speeds: np.ndarray
    cumulative_tail: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def tail_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.cumulative_tail))

    def speed_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.sup_speeds))

    def scaled(self, factor: float) -> "SpeedEnvelope":
        """Envelope with speeds and tails multiplied by ``factor``.

        Only useful for negative controls: a factor below one breaks the
        domination the window construction relies on.
        """
        return SpeedEnvelope(self.times, self.sup_speeds * factor, self.cumulative_tail * factor)


def tail_integral(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Trapezoid integral of ``values`` from each time to the last one."""
    seg = 0.5 * (values[1:] + values[:-1]) * np.diff(times)
    tail = np.zeros_like(values, dtype=float)
    tail[:-1] = np.cumsum(seg[::-1])[::-1]
    return tail


def speed_envelope(
    field: VelocityField, box: Box3, horizon: float, times=None, sampling: int = 64
) -> SpeedEnvelope:
    times = np.asarray(times if times is not None else np.linspace(0.0, horizon, 101), dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly ascending with at least two points")
    if abs(times[0]) > 1e-12 or abs(times[-1] - horizon) > 1e-12 * max(1.0, horizon):
        raise ValueError("time grid must cover [0, T]")
    if field.steady:
        sups = np.full(times.size, sup_speed(field, box, 0.0, sampling))
    else:
        sups = np.array([sup_speed(field, box, t, sampling) for t in times])
    return SpeedEnvelope(times=times, sup_speeds=sups, cumulative_tail=tail_integral(times, sups))
