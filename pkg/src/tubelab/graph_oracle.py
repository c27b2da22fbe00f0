"""Closed forms for a tube boundary written as a graph ``x1 = psi(x2, x3, t)``.

The tube is ``{x1 < psi}``, so the outward normal points toward
increasing ``x1``.  Everything here is evaluated from ``psi`` and its exact
partial derivatives and serves as ground truth for the grid pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError
from .flow_fields import Box3
from .tube_levelset import GridSpec, LevelSetState

GraphFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class GraphTube:
    """``psi`` with its partials ``psi_t``, ``psi_x2``, ``psi_x3``."""

    name: str
    params: tuple[tuple[str, float], ...]
    psi: GraphFn = field(repr=False)
    psi_t: GraphFn = field(repr=False)
    psi_x2: GraphFn = field(repr=False)
    psi_x3: GraphFn = field(repr=False)

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)


def sine_sheet(
    offset: float = 0.0,
    speed: float = 0.0,
    slope: float = 0.0,
    amplitude: float = 0.0,
    frequency: float = 1.0,
    curvature: float = 0.0,
) -> GraphTube:
    """``psi = offset + speed t + slope x2 + amplitude sin(pi frequency x3) + curvature x3^2``."""
    k = np.pi * frequency

    def _full(x2, x3):
        return np.broadcast(np.asarray(x2, dtype=float), np.asarray(x3, dtype=float)).shape

    def psi(x2, x3, t):
        return offset + speed * t + slope * x2 + amplitude * np.sin(k * x3) + curvature * x3**2

    def psi_t(x2, x3, t):
        return np.full(_full(x2, x3), float(speed))

    def psi_x2(x2, x3, t):
        return np.full(_full(x2, x3), float(slope))

    def psi_x3(x2, x3, t):
        return np.broadcast_to(amplitude * k * np.cos(k * x3) + 2.0 * curvature * x3, _full(x2, x3)).astype(float)

    params = dict(
        offset=offset, speed=speed, slope=slope, amplitude=amplitude, frequency=frequency, curvature=curvature
    )
    return GraphTube("sine-sheet", tuple(sorted(params.items())), psi, psi_t, psi_x2, psi_x3)


GRAPHS = {"sine-sheet": sine_sheet}


def graph_tube(name: str, params=None) -> GraphTube:
    try:
        factory = GRAPHS[name]
    except KeyError:
        raise ConfigurationError(f"unknown graph {name!r}; registered: {sorted(GRAPHS)}") from None
    try:
        return factory(**{k: float(v) for k, v in (params or {}).items()})
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for graph {name!r}: {exc}") from None


def graph_normals(tube: GraphTube, x2, x3, t) -> tuple[np.ndarray, np.ndarray]:
    """Surface normal and in-slice normal of the graph, both unit, shape ``(..., 3)``."""
    p2 = np.asarray(tube.psi_x2(x2, x3, t), dtype=float)
    p3 = np.asarray(tube.psi_x3(x2, x3, t), dtype=float)
    one = np.ones_like(p2)
    nu = np.stack([one, -p2, -p3], axis=-1) / np.sqrt(1.0 + p2**2 + p3**2)[..., None]
    nu_t = np.stack([one, -p2, np.zeros_like(p2)], axis=-1) / np.sqrt(1.0 + p2**2)[..., None]
    return nu, nu_t


def graph_sigma(tube: GraphTube, x2, x3, t) -> np.ndarray:
    p2, p3 = tube.psi_x2(x2, x3, t), tube.psi_x3(x2, x3, t)
    return tube.psi_t(x2, x3, t) / np.sqrt(1.0 + p2**2 + p3**2)


def graph_sigma_tilde(tube: GraphTube, x2, x3, t) -> np.ndarray:
    p2 = tube.psi_x2(x2, x3, t)
    return tube.psi_t(x2, x3, t) / np.sqrt(1.0 + p2**2)


def nu_dot_nu_tilde(tube: GraphTube, x2, x3, t) -> np.ndarray:
    """Closed quotient ``sqrt(1 + psi2^2) / sqrt(1 + psi2^2 + psi3^2)``."""
    p2, p3 = tube.psi_x2(x2, x3, t), tube.psi_x3(x2, x3, t)
    return np.sqrt(1.0 + p2**2) / np.sqrt(1.0 + p2**2 + p3**2)


def check_sigma_relation(tube: GraphTube, x2, x3, t) -> float:
    """Max of ``|sigma - sigma_tilde (nu . nu_tilde)|`` over the samples."""
    x2, x3, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x2, x3, t)))
    nu, nu_t = graph_normals(tube, x2, x3, t)
    dot = np.sum(nu * nu_t, axis=-1)
    res = graph_sigma(tube, x2, x3, t) - graph_sigma_tilde(tube, x2, x3, t) * dot
    return float(np.max(np.abs(res))) if res.size else 0.0


def graph_to_levelset(tube: GraphTube, grid: GridSpec, box: Box3, t: float) -> LevelSetState:
    """Sample ``theta = x1 - psi(x2, x3, t)``; the graph must stay inside ``I1``."""
    X1, X2, X3 = np.meshgrid(*grid.axes(box), indexing="ij")
    psi = tube.psi(X2[0], X3[0], t)
    lo, hi = box.i1
    if np.any(psi <= lo) or np.any(psi >= hi):
        raise DomainError(f"graph {tube.name!r} leaves the interior of I1 at t = {t}")
    return LevelSetState(grid, box, X1 - psi[None, :, :], t)


# -- closed-form slice integrals ---------------------------------------------


def _gauss(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def graph_slice_integrals(tube: GraphTube, x2_range, x3_range, t, F=None, order: int = 64) -> dict[str, float]:
    """Slice-by-slice surface integrals of ``F`` evaluated from closed forms.

    Returns the co-area form (integrand ``F / (nu . nu_tilde)``) and the
    speed-ratio form (integrand ``F sigma_tilde / sigma``), both integrated
    along each slice curve ``x1 = psi`` and then across ``x3``, on the same
    Gauss-Legendre nodes.
    """
    F = F or (lambda x1, x2, x3: np.ones_like(x1))
    g2, w2 = _gauss(*x2_range, order)
    g3, w3 = _gauss(*x3_range, order)
    X2, X3 = np.meshgrid(g2, g3, indexing="ij")
    W = np.outer(w2, w3)
    psi = tube.psi(X2, X3, t)
    dl = np.sqrt(1.0 + tube.psi_x2(X2, X3, t) ** 2)
    f = F(psi, X2, X3)
    nu, nu_t = graph_normals(tube, X2, X3, t)
    dot = np.sum(nu * nu_t, axis=-1)
    ratio = graph_sigma_tilde(tube, X2, X3, t) / graph_sigma(tube, X2, X3, t)
    return {
        "sliced": float(np.sum(W * f / dot * dl)),
        "weighted": float(np.sum(W * f * ratio * dl)),
    }


def graph_surface_integral(tube: GraphTube, x2_range, x3_range, t, F=None, epsabs=1e-12, epsrel=1e-12) -> float:
    """Adaptive quadrature of ``F dA`` over the graph, parameterized by ``(x2, x3)``."""
    F = F or (lambda x1, x2, x3: 1.0)

    def integrand(x3, x2):
        p2 = float(tube.psi_x2(x2, x3, t))
        p3 = float(tube.psi_x3(x2, x3, t))
        return float(F(float(tube.psi(x2, x3, t)), x2, x3)) * np.sqrt(1.0 + p2 * p2 + p3 * p3)

    val, _ = integrate.dblquad(integrand, x2_range[0], x2_range[1], x3_range[0], x3_range[1], epsabs=epsabs, epsrel=epsrel)
    return float(val)
