"""Residual tables for the slice-calculus identities.

Each identity is evaluated on a scenario with a closed-form level set at
the configured grid and at successively halved spacings.  Rows carry the
two sides, their relative error and the observed convergence order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import IDENTITIES, ScenarioConfig
from .errors import ConfigurationError, NearStationaryError
from .flow_fields import Box3, sup_speed
from .graph_oracle import check_sigma_relation, graph_slice_integrals, graph_surface_integral
from .slice_geometry import (
    TEST_FUNCTIONS,
    check_identity_14,
    slice_contour,
    surface_integral_sliced,
    surface_integral_weighted,
    surface_samples,
)
from .theorem_harness import TubeWindow, divergence_flux_residual
from .tube_levelset import GridSpec, exact_levelset

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("identity", "resolution", "lhs", "rhs", "rel_error", "measured_order")

# errors below this are rounding noise; no convergence order is reported
ORDER_NOISE_FLOOR = 1e-10


@dataclass(frozen=True)
class ResidualRow:
    identity: str
    resolution: str
    lhs: float
    rhs: float
    rel_error: float
    measured_order: float
    tolerance: float
    spacing: float = math.nan

    @property
    def passed(self) -> bool:
        return math.isfinite(self.rel_error) and self.rel_error <= self.tolerance

    def row(self) -> list:
        return [getattr(self, c) for c in TABLE_COLUMNS]


def parse_which(text: str | None) -> tuple[str, ...]:
    if text is None or not text.strip():
        return ()
    items = [w.strip() for w in text.split(",") if w.strip()]
    bad = [w for w in items if w not in IDENTITIES]
    if bad:
        raise ConfigurationError(f"unknown identity {bad}; choose from {', '.join(IDENTITIES)}")
    return tuple(dict.fromkeys(items))


def refined_grids(grid: GridSpec, count: int) -> list[GridSpec]:
    """``grid`` followed by ``count - 1`` grids of halved spacing."""
    out = [grid]
    for _ in range(count - 1):
        g = out[-1]
        out.append(GridSpec(2 * g.n1 - 1, 2 * g.n2 - 1, 2 * g.n3 - 1))
    return out


def _label(g: GridSpec) -> str:
    return f"{g.n1}x{g.n2}x{g.n3}"


def _rel(lhs: float, rhs: float, scale: float = 0.0) -> float:
    denom = max(abs(lhs), abs(rhs), scale)
    return abs(lhs - rhs) / denom if denom > 1e-300 else abs(lhs - rhs)


def _with_orders(rows: list[ResidualRow]) -> list[ResidualRow]:
    out = []
    for k, r in enumerate(rows):
        order = math.nan
        if k > 0:
            e0, e1 = rows[k - 1].rel_error, r.rel_error
            h0, h1 = rows[k - 1].spacing, r.spacing
            if min(e0, e1) > ORDER_NOISE_FLOOR and math.isfinite(e0) and math.isfinite(e1):
                order = math.log(e0 / e1) / math.log(h0 / h1)
        out.append(ResidualRow(r.identity, r.resolution, r.lhs, r.rhs, r.rel_error, order, r.tolerance, r.spacing))
    return out


def marching_cubes_surface_integral(scenario, box: Box3, interval, t: float, F, spacing: float) -> float:
    """Independent wall integral of ``F`` from a triangulated zero set.

    The closed-form theta is sampled at ``spacing`` on the part of the box
    above ``interval`` (trimmed to the tube's in-slice bounding box) and
    triangulated by marching cubes; ``F`` is taken at triangle centroids.
    """
    from skimage import measure

    lo3, hi3 = interval
    n3 = max(3, int(math.ceil((hi3 - lo3) / spacing)) + 1)
    z = np.linspace(lo3, hi3, n3)
    # coarse pass to find the in-slice extent of the tube
    c1 = np.linspace(*box.i1, 129)
    c2 = np.linspace(*box.i2, 129)
    C1, C2, C3 = np.meshgrid(c1, c2, z[:: max(1, n3 // 16)], indexing="ij")
    inside = np.any(scenario.theta(C1, C2, C3, t) < 0, axis=2)
    if not inside.any():
        return 0.0
    ii, jj = np.nonzero(inside)
    d1, d2 = c1[1] - c1[0], c2[1] - c2[0]
    lo1, hi1 = max(box.i1[0], c1[ii.min()] - 2 * d1), min(box.i1[1], c1[ii.max()] + 2 * d1)
    lo2, hi2 = max(box.i2[0], c2[jj.min()] - 2 * d2), min(box.i2[1], c2[jj.max()] + 2 * d2)
    x = np.linspace(lo1, hi1, max(3, int(math.ceil((hi1 - lo1) / spacing)) + 1))
    y = np.linspace(lo2, hi2, max(3, int(math.ceil((hi2 - lo2) / spacing)) + 1))
    X1, X2, X3 = np.meshgrid(x, y, z, indexing="ij")
    vol = scenario.theta(X1, X2, X3, t)
    h = (x[1] - x[0], y[1] - y[0], z[1] - z[0])
    verts, faces, _, _ = measure.marching_cubes(vol, level=0.0, spacing=h)
    verts = verts + np.array([x[0], y[0], z[0]])
    tri = verts[faces]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    c = tri.mean(axis=1)
    return float(np.sum(area * F(c[:, 0], c[:, 1], c[:, 2])))


class IdentitySuite:
    """Evaluates identity rows for one oracle-capable configuration."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.scenario = config.scenario()
        if not self.scenario.has_exact:
            raise ConfigurationError(
                f"scenario {config.name!r} has no closed-form level set; identity checks need an oracle scenario"
            )
        v = config.verify
        box = config.box
        self.box = box
        self.x3 = v.x3 if v.x3 is not None else 0.5 * (box.a + box.b)
        self.t = v.t if v.t is not None else 0.5 * config.horizon
        self.interval = v.interval if v.interval is not None else box.i3
        self.grids = refined_grids(config.grid, v.refinements)
        self.tests = {name: TEST_FUNCTIONS[name] for name in v.test_functions}
        self.tol = config.tolerances
        self.graph = self.scenario.graph

    def _state(self, g, t):
        return exact_levelset(self.scenario, t, g, self.box)

    def _h(self, g) -> float:
        return float(np.max(g.spacings(self.box)[:2]))

    def rows(self, which) -> list[ResidualRow]:
        out: list[ResidualRow] = []
        for ident in which:
            out.extend(getattr(self, "_rows_" + ident)())
        return out

    # identity 14: rate of change of a cross-section integral
    def _rows_14(self):
        rows = []
        for fname, F in self.tests.items():
            series = []
            for g in self.grids:
                r = check_identity_14(
                    self.scenario, self.x3, self.t, F, self.config.verify.dt_fd, g, self.box, self.tol.eps_grad
                )
                series.append(
                    ResidualRow(f"14[F={fname}]", _label(g), r.lhs, r.rhs, r.rel_error, math.nan, self.tol.identity, self._h(g))
                )
            rows.extend(_with_orders(series))
        return rows

    # identity 15: wall integral by slices vs an independent quadrature
    def _reference(self, F):
        lo, hi = self.interval
        if self.graph is not None:
            return graph_surface_integral(self.graph, self.box.i2, (lo, hi), self.t, F)
        h = 0.5 * self._h(self.grids[-1])
        return marching_cubes_surface_integral(self.scenario, self.box, (lo, hi), self.t, F, h)

    def _wall(self, g, F, weighted: bool):
        open_ = self.graph is not None
        st = self._state(g, self.t)
        if not weighted:
            return surface_integral_sliced(st, self.interval, F, self.scenario.field, open_, self.tol.eps_grad)
        dt = self.config.verify.dt_fd
        eps_sigma = self.tol.eps_sigma * max(1e-300, sup_speed(self.scenario.field, self.box, self.t))
        return surface_integral_weighted(
            st,
            self._state(g, self.t - dt),
            self._state(g, self.t + dt),
            self.interval,
            F,
            self.scenario.field,
            open_,
            self.tol.eps_grad,
            eps_sigma,
        )

    def _scale(self, g, F):
        # odd integrands on symmetric tubes integrate to zero; measure errors against int |F|
        return abs(self._wall(g, lambda a, b, c: np.abs(F(a, b, c)), weighted=False))

    def _rows_15(self):
        rows = []
        for fname, F in self.tests.items():
            ref = self._reference(F)
            series = []
            for g in self.grids:
                val = self._wall(g, F, weighted=False)
                rel = _rel(val, ref, self._scale(g, F))
                series.append(ResidualRow(f"15[F={fname}]", _label(g), val, ref, rel, math.nan, self.tol.surface, self._h(g)))
            rows.extend(_with_orders(series))
        return rows

    # identity 25: speed-ratio weights
    def _rows_25(self):
        rows = []
        for fname, F in self.tests.items():
            ref = self._reference(F)
            series, pair = [], []
            for g in self.grids:
                try:
                    w = self._wall(g, F, weighted=True)
                except NearStationaryError as exc:
                    logger.warning("identity 25 skipped at %s: %s", _label(g), exc)
                    w = math.nan
                s = self._wall(g, F, weighted=False)
                scale = self._scale(g, F)
                series.append(
                    ResidualRow(f"25[F={fname}]", _label(g), w, ref, _rel(w, ref, scale), math.nan, self.tol.surface, self._h(g))
                )
                pair.append(ResidualRow(f"25-vs-15[F={fname}]", _label(g), w, s, _rel(w, s, scale), math.nan, 1e-10, self._h(g)))
            rows.extend(_with_orders(series))
            rows.extend(pair)
            if self.graph is not None:
                lo, hi = self.interval
                cf = graph_slice_integrals(self.graph, self.box.i2, (lo, hi), self.t, F)
                cs = graph_slice_integrals(self.graph, self.box.i2, (lo, hi), self.t, lambda a, b, c: np.abs(F(a, b, c)))
                rel = _rel(cf["weighted"], cf["sliced"], cs["sliced"])
                rows.append(
                    ResidualRow(
                        f"25-vs-15-closed-form[F={fname}]", "closed-form", cf["weighted"], cf["sliced"], rel, math.nan, 1e-10
                    )
                )
        return rows

    # identity 23: sigma = sigma_tilde (nu . nu_tilde)
    def _rows_23(self):
        rows = []
        if self.graph is not None:
            x2 = np.linspace(*self.box.i2, 50)
            x3 = np.linspace(*self.box.i3, 50)
            tt = np.linspace(0.0, self.config.horizon, 10)
            X2, X3, TT = np.meshgrid(x2, x3, tt, indexing="ij")
            res = check_sigma_relation(self.graph, X2, X3, TT)
            rows.append(ResidualRow("23-closed-form", "50x50x10", res, 0.0, res, math.nan, self.tol.sigma_relation))
        dt = self.config.verify.dt_fd
        for g in self.grids:
            st, prev, nxt = (self._state(g, s) for s in (self.t, self.t - dt, self.t + dt))
            contour = slice_contour(st, self.x3, allow_open=self.graph is not None)
            s = surface_samples(st, prev, nxt, self.scenario.field, contour, self.tol.eps_grad)
            res = float(np.max(np.abs(s.sigma - s.sigma_tilde * s.nu_dot))) if len(s) else 0.0
            scale = float(np.max(np.abs(s.sigma))) if len(s) else 0.0
            rows.append(ResidualRow("23-grid", _label(g), res, 0.0, _rel(res, 0.0, scale) if scale > 0 else res, math.nan, self.tol.sigma_relation, self._h(g)))
        return rows

    # divergence theorem over Omega_t(J_t)
    def _rows_flux(self):
        if self.graph is not None:
            logger.warning("flux identity skipped: a graph tube is not closed inside the slices")
            return []
        lo, hi = self.interval
        series = []
        for g in self.grids:
            st = self._state(g, self.t)
            res, parts = divergence_flux_residual(st, self.scenario.field, TubeWindow(self.t, lo, hi), self.tol.eps_grad)
            series.append(
                ResidualRow("flux", _label(g), parts["lateral"], parts["bottom"] - parts["top"], res, math.nan, self.tol.flux, self._h(g))
            )
        return _with_orders(series)


def verify_identities(config: ScenarioConfig, which) -> list[ResidualRow]:
    which = parse_which(which) if isinstance(which, str) or which is None else tuple(which)
    if not which:
        return []
    return IdentitySuite(config).rows(which)
