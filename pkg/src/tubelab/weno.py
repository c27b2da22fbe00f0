"""Fifth-order WENO upwind derivatives and SSP-RK3 time stepping for
the linear transport equation ``theta_t + u . grad theta = 0``.

The WENO reconstruction is the Hamilton-Jacobi variant of Jiang & Peng
(2000): one-sided derivatives are assembled from the five undivided
differences on the upwind side.  At box faces three ghost layers are
filled by odd reflection (linear extrapolation), which degrades the
stencil to lower order there.
"""

from __future__ import annotations

import numba
import numpy as np

GHOST = 3


def _weno_combine(v1, v2, v3, v4, v5):
    p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0
    p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0
    p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0

    s1 = 13.0 / 12.0 * (v1 - 2 * v2 + v3) ** 2 + 0.25 * (v1 - 4 * v2 + 3 * v3) ** 2
    s2 = 13.0 / 12.0 * (v2 - 2 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    s3 = 13.0 / 12.0 * (v3 - 2 * v4 + v5) ** 2 + 0.25 * (3 * v3 - 4 * v4 + v5) ** 2

    vmax = np.maximum.reduce([v1 * v1, v2 * v2, v3 * v3, v4 * v4, v5 * v5])
    eps = 1e-6 * vmax + 1e-40
    a1 = 0.1 / (s1 + eps) ** 2
    a2 = 0.6 / (s2 + eps) ** 2
    a3 = 0.3 / (s3 + eps) ** 2
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


def weno5_derivatives(phi: np.ndarray, h: float, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Left- and right-biased derivatives of ``phi`` along ``axis``."""
    phi = np.moveaxis(phi, axis, 0)
    pad = [(GHOST, GHOST)] + [(0, 0)] * (phi.ndim - 1)
    g = np.pad(phi, pad, mode="reflect", reflect_type="odd")
    # d[j] = (g[j+1] - g[j]) / h, so node i (padded index i+3) has
    # backward difference d[i+2] and forward difference d[i+3]
    d = np.diff(g, axis=0) / h
    n = phi.shape[0]

    def sl(k):
        return d[k : k + n]

    minus = _weno_combine(sl(0), sl(1), sl(2), sl(3), sl(4))
    plus = _weno_combine(sl(5), sl(4), sl(3), sl(2), sl(1))
    return np.moveaxis(minus, 0, axis), np.moveaxis(plus, 0, axis)


@numba.njit(cache=True, inline="always", error_model="numpy")
def _combine(v1, v2, v3, v4, v5):
    # same algebra as _weno_combine with the weight divisions merged
    p1 = 0.3333333333333333 * v1 - 1.1666666666666667 * v2 + 1.8333333333333333 * v3
    p2 = -0.16666666666666666 * v2 + 0.8333333333333334 * v3 + 0.3333333333333333 * v4
    p3 = 0.3333333333333333 * v3 + 0.8333333333333334 * v4 - 0.16666666666666666 * v5
    e1 = v1 - 2.0 * v2 + v3
    e2 = v2 - 2.0 * v3 + v4
    e3 = v3 - 2.0 * v4 + v5
    f1 = v1 - 4.0 * v2 + 3.0 * v3
    f2 = v2 - v4
    f3 = 3.0 * v3 - 4.0 * v4 + v5
    vmax = max(v1 * v1, v2 * v2, v3 * v3, v4 * v4, v5 * v5)
    eps = 1e-6 * vmax + 1e-40
    q1 = 1.0833333333333333 * e1 * e1 + 0.25 * f1 * f1 + eps
    q2 = 1.0833333333333333 * e2 * e2 + 0.25 * f2 * f2 + eps
    q3 = 1.0833333333333333 * e3 * e3 + 0.25 * f3 * f3 + eps
    q1 *= q1
    q2 *= q2
    q3 *= q3
    a1 = 0.1 * q2 * q3
    a2 = 0.6 * q1 * q3
    a3 = 0.3 * q1 * q2
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


@numba.njit(cache=True, inline="always", error_model="numpy")
def _ghost(m, n):
    # reflected index and reflection flag for odd-reflection ghost nodes
    if m < 0:
        return -m, 0
    if m > n - 1:
        return 2 * (n - 1) - m, n - 1
    return m, -1


@numba.njit(cache=True, inline="always", error_model="numpy")
def _upwind(vals, u, rh):
    d0 = (vals[1] - vals[0]) * rh
    d1 = (vals[2] - vals[1]) * rh
    d2 = (vals[3] - vals[2]) * rh
    d3 = (vals[4] - vals[3]) * rh
    d4 = (vals[5] - vals[4]) * rh
    d5 = (vals[6] - vals[5]) * rh
    if u > 0.0:
        return _combine(d0, d1, d2, d3, d4)
    return _combine(d5, d4, d3, d2, d1)


@numba.njit(cache=True, error_model="numpy")
def _rhs_kernel(phi, vel, h1, h2, h3):
    n1, n2, n3 = phi.shape
    out = np.zeros_like(phi)
    vals = np.empty(7)
    r1, r2, r3 = 1.0 / h1, 1.0 / h2, 1.0 / h3
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                acc = 0.0
                u = vel[i, j, k, 0]
                if u != 0.0:
                    for o in range(7):
                        m, e = _ghost(i + o - 3, n1)
                        v = phi[m, j, k]
                        vals[o] = v if e < 0 else 2.0 * phi[e, j, k] - v
                    acc += u * _upwind(vals, u, r1)
                u = vel[i, j, k, 1]
                if u != 0.0:
                    for o in range(7):
                        m, e = _ghost(j + o - 3, n2)
                        v = phi[i, m, k]
                        vals[o] = v if e < 0 else 2.0 * phi[i, e, k] - v
                    acc += u * _upwind(vals, u, r2)
                u = vel[i, j, k, 2]
                if u != 0.0:
                    for o in range(7):
                        m, e = _ghost(k + o - 3, n3)
                        v = phi[i, j, m]
                        vals[o] = v if e < 0 else 2.0 * phi[i, j, e] - v
                    acc += u * _upwind(vals, u, r3)
                out[i, j, k] = -acc
    return out


def transport_rhs_reference(phi: np.ndarray, vel: np.ndarray, spacing) -> np.ndarray:
    """Vectorized numpy form of :func:`transport_rhs` (no inflow freezing)."""
    rhs = np.zeros_like(phi)
    for k in range(3):
        uk = vel[..., k]
        minus, plus = weno5_derivatives(phi, spacing[k], k)
        rhs -= np.where(uk > 0, uk * minus, uk * plus)
    return rhs


def transport_rhs(phi: np.ndarray, vel: np.ndarray, spacing) -> np.ndarray:
    """``-u . grad phi`` with upwinded WENO5 derivatives.

    ``vel`` has shape ``phi.shape + (3,)``.  Nodes on a box face where the
    velocity points into the box (inflow) get a zero right-hand side, i.e.
    they keep their current values.
    """
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    vel = np.ascontiguousarray(vel, dtype=np.float64)
    rhs = _rhs_kernel(phi, vel, float(spacing[0]), float(spacing[1]), float(spacing[2]))
    frozen = np.zeros(phi.shape, dtype=bool)
    for k in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[k] = 0
        hi[k] = -1
        frozen[tuple(lo)] |= vel[tuple(lo)][..., k] > 0
        frozen[tuple(hi)] |= vel[tuple(hi)][..., k] < 0
    rhs[frozen] = 0.0
    return rhs


def ssprk3_step(phi: np.ndarray, t: float, dt: float, velocity, spacing) -> np.ndarray:
    """One step of the three-stage, third-order SSP Runge-Kutta scheme.

    ``velocity(t)`` returns nodal velocities.  Written in increment form so
    a vanishing right-hand side leaves ``phi`` bit-for-bit unchanged.
    """
    k1 = transport_rhs(phi, velocity(t), spacing)
    k2 = transport_rhs(phi + dt * k1, velocity(t + dt), spacing)
    k3 = transport_rhs(phi + 0.25 * dt * (k1 + k2), velocity(t + 0.5 * dt), spacing)
    return phi + (dt / 6.0) * (k1 + k2 + 4.0 * k3)
