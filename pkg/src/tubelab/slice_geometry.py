"""Cross-sections of a tube, their boundary curves, and slice integrals.

Slices are horizontal planes ``x3 = const``.  Boundary curves come from
marching squares with linear edge interpolation; saddle cells are resolved
with the sign of the mean of the four corners.  Every segment is oriented
with the region ``theta < 0`` on its left, so closed loops run
counter-clockwise around the tube and the in-slice outward normal is the
right-hand perpendicular of the tangent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ContourError, DegeneracyError, DomainError, NearStationaryError, PreconditionError
from .flow_fields import Box3, VelocityField
from .tube_levelset import DEFAULT_EPS_GRAD, GridSpec, LevelSetState, exact_levelset, interp_gradient, interp_theta

TestFunction = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

TEST_FUNCTIONS: dict[str, TestFunction] = {
    "1": lambda x1, x2, x3: np.ones(np.broadcast(x1, x2, x3).shape),
    "x1": lambda x1, x2, x3: np.broadcast_to(x1, np.broadcast(x1, x2, x3).shape).astype(float),
    "x3": lambda x1, x2, x3: np.broadcast_to(x3, np.broadcast(x1, x2, x3).shape).astype(float),
    "sin(pi x1) cos(pi x3)": lambda x1, x2, x3: np.sin(np.pi * x1) * np.cos(np.pi * x3) + 0.0 * x2,
}

DEFAULT_EPS_SIGMA = 1e-6


# -- marching squares tables ---------------------------------------------------
#
# corners: c0 = (i, j), c1 = (i+1, j), c2 = (i+1, j+1), c3 = (i, j+1)
# edge k joins corner k and corner k+1 (mod 4)

_CORNER_XY = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
_EDGE_MID = np.array([(0.5, 0.0), (1.0, 0.5), (0.5, 1.0), (0.0, 0.5)])


def _orient(ea, eb, corner, corner_inside):
    pa, pb = _EDGE_MID[ea], _EDGE_MID[eb]
    d, c = pb - pa, _CORNER_XY[corner] - pa
    left = d[0] * c[1] - d[1] * c[0] > 0
    return (ea, eb) if left == corner_inside else (eb, ea)


def _build_table():
    # index: case + 16 * centre_inside; entries (slot, from/to edge), -1 = unused
    table = -np.ones((32, 2, 2), dtype=np.int64)
    for case in range(16):
        inside = [bool((case >> k) & 1) for k in range(4)]
        crossing = [k for k in range(4) if inside[k] != inside[(k + 1) % 4]]
        for centre in (0, 1):
            if len(crossing) == 2:
                corner = inside.index(True)
                segs = [_orient(crossing[0], crossing[1], corner, True)]
            elif len(crossing) == 4:
                segs = []
                for k in range(4):
                    if inside[k] != bool(centre):
                        segs.append(_orient((k - 1) % 4, k, k, inside[k]))
            else:
                segs = []
            for s, (ea, eb) in enumerate(segs):
                table[case + 16 * centre, s] = (ea, eb)
    return table


_TABLE = _build_table()


def _cell_cases(v: np.ndarray) -> np.ndarray:
    neg = v < 0
    c0, c1, c2, c3 = neg[:-1, :-1], neg[1:, :-1], neg[1:, 1:], neg[:-1, 1:]
    case = c0.astype(np.int64) | (c1.astype(np.int64) << 1) | (c2.astype(np.int64) << 2) | (c3.astype(np.int64) << 3)
    saddle = (case == 5) | (case == 10)
    centre = (v[:-1, :-1] + v[1:, :-1] + v[1:, 1:] + v[:-1, 1:]) < 0
    return case + 16 * (saddle & centre)


@dataclass
class _Segments:
    cells: tuple[np.ndarray, ...]
    cell_of: np.ndarray
    pa: np.ndarray
    pb: np.ndarray
    ea: np.ndarray
    eb: np.ndarray


def _crossing_segments(v: np.ndarray, ax1: np.ndarray, ax2: np.ndarray) -> _Segments:
    """Oriented boundary segments of ``{v < 0}`` for every crossing cell.

    ``v`` has shape ``(n1, n2)`` or ``(n1, n2, n3)``; in the latter case each
    slab is contoured independently.  Edge ids are only unique within one
    slab.
    """
    n1, n2 = v.shape[:2]
    ext = _cell_cases(v)
    has = _TABLE[ext, 0, 0] >= 0
    cells = np.nonzero(has)
    i, j = cells[0], cells[1]
    c0 = v[:-1, :-1][cells]
    c1 = v[1:, :-1][cells]
    c2 = v[1:, 1:][cells]
    c3 = v[:-1, 1:][cells]
    x_lo, x_hi, y_lo, y_hi = ax1[i], ax1[i + 1], ax2[j], ax2[j + 1]

    # each global edge is interpolated from its low-index to its high-index
    # node, so neighbouring cells produce bit-identical points
    with np.errstate(divide="ignore", invalid="ignore"):
        s0 = c0 / (c0 - c1)
        s1 = c1 / (c1 - c2)
        s2 = c3 / (c3 - c2)
        s3 = c0 / (c0 - c3)
    E = np.empty((i.size, 4, 2))
    E[:, 0, 0] = x_lo + s0 * (x_hi - x_lo)
    E[:, 0, 1] = y_lo
    E[:, 1, 0] = x_hi
    E[:, 1, 1] = y_lo + s1 * (y_hi - y_lo)
    E[:, 2, 0] = x_lo + s2 * (x_hi - x_lo)
    E[:, 2, 1] = y_hi
    E[:, 3, 0] = x_lo
    E[:, 3, 1] = y_lo + s3 * (y_hi - y_lo)

    nh = (n1 - 1) * n2
    gid = np.stack([i * n2 + j, nh + (i + 1) * (n2 - 1) + j, i * n2 + j + 1, nh + i * (n2 - 1) + j], axis=1)

    tab = _TABLE[ext[cells]]  # (m, 2, 2)
    cell_of, slot = np.nonzero(tab[:, :, 0] >= 0)
    ea_loc = tab[cell_of, slot, 0]
    eb_loc = tab[cell_of, slot, 1]
    return _Segments(
        cells=cells,
        cell_of=cell_of,
        pa=E[cell_of, ea_loc],
        pb=E[cell_of, eb_loc],
        ea=gid[cell_of, ea_loc],
        eb=gid[cell_of, eb_loc],
    )


# -- contours ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SliceContour:
    """Boundary of one cross-section.

    ``loops`` are closed polylines (first vertex repeated at the end);
    ``curves`` are open polylines ending on the slice boundary, present
    only when contouring was asked to accept them.
    """

    x3: float
    t: float
    loops: tuple[np.ndarray, ...]
    curves: tuple[np.ndarray, ...] = ()

    @property
    def polylines(self) -> tuple[np.ndarray, ...]:
        return self.loops + self.curves

    @property
    def is_empty(self) -> bool:
        return not self.loops and not self.curves


def plane_values(state: LevelSetState, x3: float) -> np.ndarray:
    """theta on the plane ``x3``, linear in ``x3`` between grid slabs."""
    ax3 = state.axes[2]
    if not (ax3[0] - 1e-12 <= x3 <= ax3[-1] + 1e-12):
        raise DomainError(f"slice x3 = {x3} outside I3 = [{ax3[0]}, {ax3[-1]}]")
    k = int(np.clip(np.searchsorted(ax3, x3, side="right") - 1, 0, ax3.size - 2))
    w = (x3 - ax3[k]) / (ax3[k + 1] - ax3[k])
    if w <= 0.0:
        return np.asarray(state.values[:, :, k])
    if w >= 1.0:
        return np.asarray(state.values[:, :, k + 1])
    return (1.0 - w) * state.values[:, :, k] + w * state.values[:, :, k + 1]


def _assemble(seg: _Segments, allow_open: bool):
    succ = dict(zip(seg.ea.tolist(), seg.eb.tolist()))
    point = dict(zip(seg.ea.tolist(), seg.pa))
    point.update(zip(seg.eb.tolist(), seg.pb))
    heads = set(succ) - set(seg.eb.tolist())
    if heads and not allow_open:
        raise ContourError(
            f"{len(heads)} open polyline(s) after contour assembly; the zero set reaches the slice boundary"
        )
    curves = []
    for h in sorted(heads):
        chain = [h]
        while chain[-1] in succ:
            chain.append(succ.pop(chain[-1]))
        curves.append(np.array([point[e] for e in chain]))
    loops = []
    while succ:
        start = min(succ)
        chain = [start]
        while True:
            nxt = succ.pop(chain[-1])
            chain.append(nxt)
            if nxt == start:
                break
            if nxt not in succ:
                raise ContourError("contour assembly found a broken loop")
        loops.append(np.array([point[e] for e in chain]))
    return tuple(loops), tuple(curves)


def slice_contour(state: LevelSetState, x3: float, allow_open: bool = False) -> SliceContour:
    plane = plane_values(state, x3)
    seg = _crossing_segments(plane, state.axes[0], state.axes[1])
    loops, curves = _assemble(seg, allow_open)
    return SliceContour(float(x3), state.time, loops, curves)


def _shoelace(p: np.ndarray) -> float:
    return 0.5 * float(np.sum(p[:-1, 0] * p[1:, 1] - p[1:, 0] * p[:-1, 1]))


def slice_area(contour: SliceContour) -> float:
    """Area of ``{theta < 0}`` enclosed by the contour loops."""
    if contour.curves:
        raise ContourError("slice area is undefined for a contour with open curves")
    return float(sum(_shoelace(loop) for loop in contour.loops))


def boundary_length(contour: SliceContour) -> float:
    return float(sum(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)) for p in contour.polylines))


def slab_areas(state: LevelSetState) -> np.ndarray:
    """``slice_area`` of every grid slab at once (Green's theorem on segments)."""
    ax1, ax2, _ = state.axes
    seg = _crossing_segments(np.asarray(state.values), ax1, ax2)
    o = np.array([0.5 * (ax1[0] + ax1[-1]), 0.5 * (ax2[0] + ax2[-1])])
    a, b = seg.pa - o, seg.pb - o
    contrib = 0.5 * (a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1])
    return np.bincount(seg.cells[2][seg.cell_of], weights=contrib, minlength=state.grid.n3)


def _interp_on_axis(ax: np.ndarray, values: np.ndarray, x: float) -> float:
    return float(np.interp(x, ax, values))


def _check_interval(state: LevelSetState, interval) -> tuple[float, float]:
    lo, hi = float(interval[0]), float(interval[1])
    a, b = state.box.i3
    tol = 1e-12 * (b - a)
    if lo < a - tol or hi > b + tol or hi < lo:
        raise DomainError(f"interval [{lo}, {hi}] is not inside I3 = [{a}, {b}]")
    return max(lo, a), min(hi, b)


def _trapezoid_over(ax3: np.ndarray, values: np.ndarray, lo: float, hi: float) -> float:
    """Trapezoid integral over ``[lo, hi]`` of nodal data, ends by linear interpolation."""
    inner = (ax3 > lo) & (ax3 < hi)
    xs = np.concatenate([[lo], ax3[inner], [hi]])
    ys = np.concatenate([[_interp_on_axis(ax3, values, lo)], values[inner], [_interp_on_axis(ax3, values, hi)]])
    return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))


def tube_volume(state: LevelSetState, interval=None) -> float:
    """Volume of the tube between two heights, by trapezoid quadrature of slab areas."""
    lo, hi = _check_interval(state, interval if interval is not None else state.box.i3)
    return _trapezoid_over(state.axes[2], slab_areas(state), lo, hi)


def write_contour_csv(contour: SliceContour, path) -> Path:
    """One row per vertex; closed loops are written without the repeated first vertex."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["loop_id", "vertex_id", "x1", "x2"])
        polys = [loop[:-1] for loop in contour.loops] + list(contour.curves)
        for lid, poly in enumerate(polys):
            for vid, (x1, x2) in enumerate(poly):
                w.writerow([lid, vid, f"{x1:.17g}", f"{x2:.17g}"])
    return path


# -- region quadrature ---------------------------------------------------------


def _clipped_cell(corners_xy, vals, edge_pts, centre_inside):
    """Polygons making up ``{theta < 0}`` inside one cell."""
    inside = vals < 0
    crossing = [inside[k] != inside[(k + 1) % 4] for k in range(4)]
    saddle = sum(crossing) == 4
    if saddle and not centre_inside:
        return [
            np.array([corners_xy[k], edge_pts[k], edge_pts[(k - 1) % 4]]) for k in range(4) if inside[k]
        ]
    ring = []
    for k in range(4):
        if inside[k]:
            ring.append(corners_xy[k])
        if crossing[k]:
            ring.append(edge_pts[k])
    return [np.array(ring)]


def _polygon_area_centroid(p):
    q = np.roll(p, -1, axis=0)
    cr = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    area = 0.5 * cr.sum()
    if area == 0.0:
        return 0.0, p.mean(axis=0)
    cx = ((p[:, 0] + q[:, 0]) * cr).sum() / (6 * area)
    cy = ((p[:, 1] + q[:, 1]) * cr).sum() / (6 * area)
    return area, np.array([cx, cy])


def region_integral(plane: np.ndarray, ax1: np.ndarray, ax2: np.ndarray, F2) -> float:
    """Integral of ``F2(x1, x2)`` over ``{plane < 0}``.

    Interior cells use the cell-centre value; cut cells use the exact area
    and centroid of the piecewise-linear inside part.  Exact for affine
    integrands.
    """
    v = plane
    neg = v < 0
    full = neg[:-1, :-1] & neg[1:, :-1] & neg[1:, 1:] & neg[:-1, 1:]
    cx = 0.5 * (ax1[:-1] + ax1[1:])
    cy = 0.5 * (ax2[:-1] + ax2[1:])
    area = np.outer(np.diff(ax1), np.diff(ax2))
    fi, fj = np.nonzero(full)
    total = float(np.sum(np.asarray(F2(cx[fi], cy[fj]), dtype=float) * area[fi, fj]))

    anyneg = neg[:-1, :-1] | neg[1:, :-1] | neg[1:, 1:] | neg[:-1, 1:]
    pi, pj = np.nonzero(anyneg & ~full)
    if pi.size == 0:
        return total
    pts, wts = [], []
    for i, j in zip(pi.tolist(), pj.tolist()):
        vals = np.array([v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1]])
        xy = np.array([(ax1[i], ax2[j]), (ax1[i + 1], ax2[j]), (ax1[i + 1], ax2[j + 1]), (ax1[i], ax2[j + 1])])
        ends = ((0, 1), (1, 2), (3, 2), (0, 3))
        epts = []
        for lo, hi in ends:
            d = vals[lo] - vals[hi]
            s = vals[lo] / d if d != 0 else 0.5
            epts.append(xy[lo] + s * (xy[hi] - xy[lo]))
        for poly in _clipped_cell(xy, vals, epts, vals.mean() < 0):
            a, c = _polygon_area_centroid(poly)
            if a > 0:
                pts.append(c)
                wts.append(a)
    if pts:
        pts = np.array(pts)
        total += float(np.sum(np.asarray(F2(pts[:, 0], pts[:, 1]), dtype=float) * np.array(wts)))
    return total


def slice_region_integral(state: LevelSetState, x3: float, F: TestFunction) -> float:
    """Integral of ``F`` over the cross-section ``{theta(., x3) < 0}``."""
    ax1, ax2, _ = state.axes
    return region_integral(plane_values(state, x3), ax1, ax2, lambda a, b: F(a, b, np.full_like(a, x3)))


def slice_region_points(state: LevelSetState, x3: float, contour: SliceContour | None = None) -> np.ndarray:
    """Grid nodes inside the cross-section plus its boundary vertices, as 3D points."""
    plane = plane_values(state, x3)
    ax1, ax2, _ = state.axes
    ii, jj = np.nonzero(plane < 0)
    pts = [np.column_stack([ax1[ii], ax2[jj]])]
    contour = contour or slice_contour(state, x3, allow_open=True)
    pts.extend(contour.polylines)
    xy = np.concatenate(pts) if pts else np.empty((0, 2))
    return np.column_stack([xy, np.full(len(xy), x3)])


# -- high-accuracy cross-section integrals -------------------------------------------

# 7-point degree-5 rule on the reference triangle (barycentric coordinates)
_TRI_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [0.059715871789770, 0.470142064105115, 0.470142064105115],
        [0.470142064105115, 0.059715871789770, 0.470142064105115],
        [0.470142064105115, 0.470142064105115, 0.059715871789770],
        [0.797426985353087, 0.101286507323456, 0.101286507323456],
        [0.101286507323456, 0.797426985353087, 0.101286507323456],
        [0.101286507323456, 0.101286507323456, 0.797426985353087],
    ]
)
_TRI_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def polygon_integral(loops, F2) -> float:
    """Integral of ``F2(x1, x2)`` over the region bounded by oriented closed loops.

    Each loop is fanned into signed triangles from its vertex mean, so
    non-convex loops and holes (clockwise loops) are handled.
    """
    total = 0.0
    for loop in loops:
        p = loop[:-1] if np.array_equal(loop[0], loop[-1]) else loop
        q = np.roll(p, -1, axis=0)
        c = p.mean(axis=0)
        area = 0.5 * ((p[:, 0] - c[0]) * (q[:, 1] - c[1]) - (q[:, 0] - c[0]) * (p[:, 1] - c[1]))
        pts = (
            _TRI_BARY[None, :, 0, None] * c[None, None, :]
            + _TRI_BARY[None, :, 1, None] * p[:, None, :]
            + _TRI_BARY[None, :, 2, None] * q[:, None, :]
        )
        vals = np.asarray(F2(pts[..., 0], pts[..., 1]), dtype=float)
        total += float(np.sum(area[:, None] * _TRI_W[None, :] * vals))
    return total


def _project(points, theta2, grad2, iters):
    p = points.copy()
    for _ in range(iters):
        g = grad2(p[:, 0], p[:, 1])
        p -= (theta2(p[:, 0], p[:, 1]) / np.sum(g * g, axis=1))[:, None] * g
    return p


def refine_loops(loops, theta2, levels: int = 3, iters: int = 4, h: float = 1e-6):
    """Pull loop vertices onto the zero set of ``theta2`` and subdivide.

    ``theta2(x1, x2)`` is a smooth in-plane level-set function (closed form
    or spline); Newton steps along its gradient, taken by central
    differences of step ``h``, move every vertex onto the curve.  Each level
    inserts projected midpoints, shrinking the chord error fourfold.
    """

    def grad2(x1, x2):
        return np.column_stack(
            [
                (theta2(x1 + h, x2) - theta2(x1 - h, x2)) / (2 * h),
                (theta2(x1, x2 + h) - theta2(x1, x2 - h)) / (2 * h),
            ]
        )

    out = []
    for loop in loops:
        p = _project(loop[:-1], theta2, grad2, iters)
        for _ in range(levels):
            mid = 0.5 * (p + np.roll(p, -1, axis=0))
            mid = _project(mid, theta2, grad2, iters)
            p = np.stack([p, mid], axis=1).reshape(-1, 2)
        out.append(np.vstack([p, p[:1]]))
    return tuple(out)


def exact_region_integral(scenario, x3: float, t: float, F: TestFunction, seed: SliceContour) -> float:
    """Cross-section integral of ``F`` from a scenario's closed-form theta.

    ``seed`` supplies the loop topology; its vertices are projected onto the
    exact zero set before integrating.
    """

    def theta2(a, b):
        return scenario.theta(a, b, np.full_like(a, x3), t)

    loops = refine_loops(seed.loops, theta2)
    return polygon_integral(loops, lambda a, b: F(a, b, np.full_like(a, x3)))


# -- surface samples -------------------------------------------------------------


@dataclass(frozen=True)
class SurfaceSample:
    position: np.ndarray
    nu: np.ndarray
    nu_tilde: np.ndarray
    sigma: float
    sigma_tilde: float
    velocity: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """Per-vertex surface data along one slice contour, stored column-wise.

    ``sigma``/``sigma_tilde`` are NaN when no neighbouring snapshots were
    given, ``velocity`` is NaN without a field.
    """

    position: np.ndarray
    nu: np.ndarray
    nu_tilde: np.ndarray
    sigma: np.ndarray
    sigma_tilde: np.ndarray
    velocity: np.ndarray
    weight: np.ndarray
    grad: np.ndarray = field(repr=False)
    theta_t: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.weight)

    def __getitem__(self, k) -> SurfaceSample:
        return SurfaceSample(
            self.position[k],
            self.nu[k],
            self.nu_tilde[k],
            float(self.sigma[k]),
            float(self.sigma_tilde[k]),
            self.velocity[k],
            float(self.weight[k]),
        )

    @property
    def nu_dot(self) -> np.ndarray:
        return np.sum(self.nu * self.nu_tilde, axis=-1)


def _vertices_and_weights(contour: SliceContour):
    pts, wts = [], []
    for loop in contour.loops:
        p = loop[:-1]
        seg = np.linalg.norm(np.diff(loop, axis=0), axis=1)
        pts.append(p)
        wts.append(0.5 * (seg + np.roll(seg, 1)))
    for curve in contour.curves:
        seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
        w = np.zeros(len(curve))
        w[:-1] += 0.5 * seg
        w[1:] += 0.5 * seg
        pts.append(curve)
        wts.append(w)
    if not pts:
        return np.empty((0, 2)), np.empty(0)
    return np.concatenate(pts), np.concatenate(wts)


def surface_samples(
    state: LevelSetState,
    state_prev: LevelSetState | None,
    state_next: LevelSetState | None,
    field: VelocityField | None,
    contour: SliceContour,
    eps_grad: float = DEFAULT_EPS_GRAD,
) -> SurfaceSamples:
    """Normals, normal speeds and quadrature weights at the contour vertices.

    The time derivative of theta is the central difference of the two
    neighbouring snapshots, which must be equally spaced around ``state``.
    """
    xy, w = _vertices_and_weights(contour)
    pos = np.column_stack([xy, np.full(len(xy), contour.x3)])
    grad = interp_gradient(state, pos) if len(pos) else np.empty((0, 3))
    g12 = np.hypot(grad[:, 0], grad[:, 1])
    if np.any(g12 < eps_grad):
        k = int(np.argmin(g12))
        raise DegeneracyError(
            f"in-slice gradient {g12[k]:.3g} < eps_grad {eps_grad:.3g} at {pos[k].tolist()}; the slice is degenerate"
        )
    gmag = np.linalg.norm(grad, axis=1)
    nu = grad / gmag[:, None]
    nu_t = np.column_stack([grad[:, 0] / g12, grad[:, 1] / g12, np.zeros(len(g12))])

    if state_prev is not None and state_next is not None:
        dt_a = state.time - state_prev.time
        dt_b = state_next.time - state.time
        if not (dt_a > 0 and dt_b > 0) or abs(dt_a - dt_b) > 1e-9 * max(dt_a, dt_b):
            raise PreconditionError("snapshots must be consecutive with uniform spacing in time")
        theta_t = (interp_theta(state_next, pos) - interp_theta(state_prev, pos)) / (dt_a + dt_b)
        sigma = -theta_t / gmag
        sigma_t = -theta_t / g12
    else:
        theta_t = sigma = sigma_t = np.full(len(pos), np.nan)

    vel = field(pos, state.time) if field is not None else np.full(pos.shape, np.nan)
    return SurfaceSamples(pos, nu, nu_t, sigma, sigma_t, vel, w, grad, theta_t)


Integrand = Callable[[SurfaceSamples], np.ndarray]


def boundary_integral(contour: SliceContour, samples: SurfaceSamples, integrand: Integrand) -> float:
    """Vertex-weighted trapezoid sum of ``integrand(samples)`` along the contour."""
    if len(samples) == 0:
        return 0.0
    values = np.asarray(integrand(samples), dtype=float)
    return float(np.sum(values * samples.weight))


def of_position(F: TestFunction) -> Integrand:
    """Lift a test function of position to an integrand on samples."""
    return lambda s: F(s.position[:, 0], s.position[:, 1], s.position[:, 2])


def sliced_integral(
    state: LevelSetState,
    interval,
    integrand: Integrand,
    *,
    state_prev: LevelSetState | None = None,
    state_next: LevelSetState | None = None,
    field: VelocityField | None = None,
    allow_open: bool = False,
    eps_grad: float = DEFAULT_EPS_GRAD,
) -> float:
    """Integrate slice boundary integrals of ``integrand`` over ``x3`` in ``interval``.

    Inner integrals are computed on the grid slabs; values at non-grid
    interval ends are interpolated linearly between the two nearest slabs.
    """
    lo, hi = _check_interval(state, interval)
    ax3 = state.axes[2]
    kmin = int(np.clip(np.searchsorted(ax3, lo, side="right") - 1, 0, ax3.size - 1))
    kmax = int(np.clip(np.searchsorted(ax3, hi, side="left"), 0, ax3.size - 1))
    inner = np.zeros(ax3.size)
    for k in range(kmin, kmax + 1):
        contour = slice_contour(state, float(ax3[k]), allow_open=allow_open)
        samples = surface_samples(state, state_prev, state_next, field, contour, eps_grad)
        inner[k] = boundary_integral(contour, samples, integrand)
    return _trapezoid_over(ax3, inner, lo, hi)


def surface_integral_sliced(
    state: LevelSetState,
    interval,
    F: TestFunction,
    field: VelocityField | None = None,
    allow_open: bool = False,
    eps_grad: float = DEFAULT_EPS_GRAD,
) -> float:
    """Surface integral of ``F`` over the part of the tube wall above ``interval``,
    as an ``x3``-integral of slice integrals of ``F / (nu . nu_tilde)``."""
    return sliced_integral(
        state,
        interval,
        lambda s: of_position(F)(s) / s.nu_dot,
        field=field,
        allow_open=allow_open,
        eps_grad=eps_grad,
    )


def surface_integral_weighted(
    state: LevelSetState,
    state_prev: LevelSetState,
    state_next: LevelSetState,
    interval,
    F: TestFunction,
    field: VelocityField | None = None,
    allow_open: bool = False,
    eps_grad: float = DEFAULT_EPS_GRAD,
    eps_sigma: float = DEFAULT_EPS_SIGMA,
) -> float:
    """Same surface integral with slice weight ``sigma_tilde / sigma``.

    Refuses near-stationary walls, where ``sigma`` is too small to divide by.
    """

    def integrand(s: SurfaceSamples):
        small = np.abs(s.sigma) < eps_sigma
        if np.any(small):
            k = int(np.argmax(small))
            raise NearStationaryError(
                f"|sigma| = {abs(s.sigma[k]):.3g} < eps_sigma = {eps_sigma:.3g} at {s.position[k].tolist()}"
            )
        return of_position(F)(s) * s.sigma_tilde / s.sigma

    return sliced_integral(
        state,
        interval,
        integrand,
        state_prev=state_prev,
        state_next=state_next,
        field=field,
        allow_open=allow_open,
        eps_grad=eps_grad,
    )


# -- identity checks ---------------------------------------------------------------


@dataclass(frozen=True)
class IdentityReport:
    name: str
    lhs: float
    rhs: float
    scale: float
    details: dict = field(default_factory=dict)

    @property
    def abs_error(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_error(self) -> float:
        """Error relative to ``max(|lhs|, |rhs|, scale)``; absolute when all vanish."""
        denom = max(abs(self.lhs), abs(self.rhs), self.scale)
        return self.abs_error / denom if denom > 1e-300 else self.abs_error


def slab_box(grid: GridSpec, box: Box3, x3: float, nodes: int = 8) -> tuple[GridSpec, Box3]:
    """Grid and box restricted to ``nodes`` slabs of ``grid`` around ``x3``.

    The sub-grid nodes coincide with nodes of the full grid, so sampling it
    is the same as sampling the full grid near the slice.
    """
    a, b = box.i3
    h3 = (b - a) / (grid.n3 - 1)
    k0 = int(np.clip(math.floor((x3 - a) / h3) - nodes // 2 + 1, 0, grid.n3 - nodes))
    sub = Box3(box.i1, box.i2, (a + k0 * h3, a + (k0 + nodes - 1) * h3))
    return GridSpec(grid.n1, grid.n2, nodes), sub


def check_identity_14(
    scenario,
    x3: float,
    t: float,
    F: TestFunction,
    dt_fd: float,
    grid: GridSpec,
    box: Box3,
    eps_grad: float = DEFAULT_EPS_GRAD,
) -> IdentityReport:
    """Rate of change of ``int F dArea`` over a cross-section vs. ``int F sigma_tilde dl``.

    The right side runs the grid pipeline on exact level-set snapshots at
    ``t - dt_fd``, ``t`` and ``t + dt_fd``.  The left side differentiates
    cross-section integrals taken on the closed-form zero set: marching
    squares polygons carry an area offset that jitters as the curve crosses
    grid nodes, and differencing that jitter in time does not converge.
    Cross-sections cut open by the slice boundary (graph tubes) fall back
    to the cell quadrature of the sampled states.
    """
    from .scenarios import Scenario, get_scenario

    if not isinstance(scenario, Scenario):
        scenario = get_scenario(scenario)
    if t - dt_fd < 0:
        raise PreconditionError("t - dt_fd must be non-negative")
    g, bx = slab_box(grid, box, x3)
    prev, cur, nxt = (exact_levelset(scenario, s, g, bx) for s in (t - dt_fd, t, t + dt_fd))
    contour = slice_contour(cur, x3, allow_open=True)

    def area_integral(st):
        seed = slice_contour(st, x3, allow_open=True)
        if seed.curves:
            return slice_region_integral(st, x3, F)
        return exact_region_integral(scenario, x3, st.time, F, seed)

    lhs = (area_integral(nxt) - area_integral(prev)) / (2 * dt_fd)
    samples = surface_samples(cur, prev, nxt, scenario.field, contour, eps_grad)
    f = of_position(F)(samples)
    rhs = boundary_integral(contour, samples, lambda s: f * s.sigma_tilde)
    scale = boundary_integral(contour, samples, lambda s: np.abs(f * s.sigma_tilde))
    return IdentityReport("14", lhs, rhs, scale, {"x3": x3, "t": t, "n1": grid.n1, "n2": grid.n2})


def measured_order(errors, spacings) -> np.ndarray:
    """Observed convergence orders between successive resolutions."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
