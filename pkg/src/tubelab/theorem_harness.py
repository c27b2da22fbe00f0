"""Shrinking-window volume experiment.

The window ``J_t = [A(t), B(t)]`` has ``A = a + tail(t)`` and
``B = b - tail(t)``, where ``tail(t)`` integrates the sup speed of the
field from ``t`` to the horizon ``T``.  Its endpoints move at
``B' = -A' = max |u|``, faster than any fluid particle can cross them, so
the tube volume inside the window cannot drop.  The harness advances the
level set, records that volume, and checks the mechanism term by term.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import HypothesisError, PreconditionError
from .flow_fields import Box3, SpeedEnvelope, VelocityField, speed_envelope, sup_speed
from .slice_geometry import (
    DEFAULT_EPS_GRAD,
    IdentityReport,
    plane_values,
    region_integral,
    slab_areas,
    slice_region_points,
    sliced_integral,
    _trapezoid_over,
)
from .tube_levelset import LevelSetState, ValidityReport, advect, init_levelset, validate_regular_tube

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TubeWindow:
    t: float
    A: float
    B: float
    t0: float = math.nan
    margin: float = math.nan

    @property
    def length(self) -> float:
        return self.B - self.A


def window_endpoints(envelope: SpeedEnvelope, box: Box3, t: float) -> TubeWindow:
    tail = envelope.tail_at(t)
    return TubeWindow(float(t), box.a + tail, box.b - tail)


def pick_t0(envelope: SpeedEnvelope, box: Box3, T: float, margin: float) -> float:
    """Earliest envelope time whose window keeps a gap of ``margin * (b - a)``."""
    if not 0 < margin < 1:
        raise PreconditionError(f"margin must lie in (0, 1), got {margin}")
    width = box.b - box.a
    gap = width - 2.0 * envelope.cumulative_tail
    ok = (gap >= margin * width * (1 - 1e-12)) & (envelope.times < T)
    if not np.any(ok):
        raise HypothesisError(
            f"no time before T = {T} leaves a window of relative width {margin}; "
            f"tail(0) = {envelope.cumulative_tail[0]:.6g}, tail at last step = {envelope.cumulative_tail[-2]:.6g}"
        )
    # the tail is non-increasing, so every later time qualifies too
    return float(envelope.times[int(np.argmax(ok))])


# -- endpoint speeds -----------------------------------------------------------


@dataclass(frozen=True)
class EndpointCheck:
    ok: bool
    endpoint_speed: float
    max_u3: float
    margin: float
    violating_point: tuple[float, float, float] | None = None


def endpoint_speed_check(
    envelope: SpeedEnvelope, state: LevelSetState, field: VelocityField, window: TubeWindow
) -> EndpointCheck:
    """Is ``B' = -A' = sup speed`` at least ``|u3|`` on both end cross-sections?"""
    speed = envelope.speed_at(window.t)
    pts = np.concatenate([slice_region_points(state, x3) for x3 in (window.A, window.B)])
    if len(pts) == 0:
        return EndpointCheck(True, speed, 0.0, speed)
    u3 = np.abs(field(pts, window.t)[:, 2])
    k = int(np.argmax(u3))
    top = float(u3[k])
    ok = speed >= top
    return EndpointCheck(ok, speed, top, speed - top, None if ok else tuple(float(v) for v in pts[k]))


# -- volume and flux balances ----------------------------------------------------


def window_volume(state: LevelSetState, window: TubeWindow, areas: np.ndarray | None = None) -> float:
    areas = slab_areas(state) if areas is None else areas
    return _trapezoid_over(state.axes[2], areas, window.A, window.B)


def _cap_integral(state: LevelSetState, x3: float, f: Callable) -> float:
    ax1, ax2, _ = state.axes
    return region_integral(plane_values(state, x3), ax1, ax2, lambda p, q: f(np.stack([p, q, np.full_like(p, x3)], -1)))


def endpoint_terms(state: LevelSetState, field: VelocityField, window: TubeWindow, speed: float) -> tuple[float, float]:
    """The two cap terms of the volume rate, each non-negative when the endpoints dominate.

    Returns ``int_{Omega(B)} (B' - u3)`` and ``-int_{Omega(A)} (A' - u3)``
    with ``B' = -A' = speed``.
    """
    t = window.t
    top = _cap_integral(state, window.B, lambda x: speed - field(x, t)[..., 2])
    bottom = _cap_integral(state, window.A, lambda x: speed + field(x, t)[..., 2])
    return top, bottom


def volume_balance_residual(
    states: tuple[LevelSetState, LevelSetState, LevelSetState],
    field: VelocityField,
    windows: tuple[TubeWindow, TubeWindow, TubeWindow],
    envelope: SpeedEnvelope,
) -> IdentityReport:
    """Central difference of the window volume against the cap-term formula.

    ``states`` and ``windows`` are at three uniformly spaced times; the
    formula is evaluated at the middle one.
    """
    prev, cur, nxt = states
    dt_a, dt_b = cur.time - prev.time, nxt.time - cur.time
    if not (dt_a > 0 and dt_b > 0) or abs(dt_a - dt_b) > 1e-9 * max(dt_a, dt_b):
        raise PreconditionError("states must be consecutive with uniform time spacing")
    lhs = (window_volume(nxt, windows[2]) - window_volume(prev, windows[0])) / (dt_a + dt_b)
    top, bottom = endpoint_terms(cur, field, windows[1], envelope.speed_at(cur.time))
    rhs = top + bottom
    return IdentityReport("volume-balance", lhs, rhs, abs(top) + abs(bottom), {"t": cur.time, "top": top, "bottom": bottom})


def divergence_flux_residual(
    state: LevelSetState, field: VelocityField, window: TubeWindow, eps_grad: float = DEFAULT_EPS_GRAD
) -> tuple[float, dict]:
    """Net outward flux of ``u`` through the wall and the two caps of ``Omega_t(J_t)``.

    The wall flux is a slice integral of ``(u . nu) / (nu . nu_tilde)``.
    """
    lateral = sliced_integral(
        state,
        (window.A, window.B),
        lambda s: np.sum(s.velocity * s.nu, axis=1) / s.nu_dot,
        field=field,
        eps_grad=eps_grad,
    )
    t = state.time
    top = _cap_integral(state, window.B, lambda x: field(x, t)[..., 2])
    bottom = _cap_integral(state, window.A, lambda x: field(x, t)[..., 2])
    residual = abs(lateral + top - bottom)
    return residual, {"lateral": lateral, "top": top, "bottom": bottom}


# -- the experiment ------------------------------------------------------------------

CSV_COLUMNS = (
    "t",
    "A",
    "B",
    "vol_Jt",
    "area_A",
    "area_B",
    "dvol_lhs",
    "dvol_rhs",
    "balance_residual",
    "min_slice_gradient",
    "regular",
)


@dataclass(frozen=True)
class TimeSeriesRecord:
    t: float
    A: float
    B: float
    vol_Jt: float
    area_A: float
    area_B: float
    dvol_lhs: float
    dvol_rhs: float
    balance_residual: float
    min_slice_gradient: float
    regular: bool
    vol_full: float = field(default=math.nan, repr=False)
    validity: dict = field(default_factory=dict, repr=False)

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class ExperimentResult:
    verdict: str
    records: list[TimeSeriesRecord]
    t0: float
    vol_t0: float
    final_vol: float
    max_monotonicity_violation: float
    details: dict

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "t0": self.t0,
            "Vol_t0": self.vol_t0,
            "final_vol": self.final_vol,
            "max_monotonicity_violation": self.max_monotonicity_violation,
            **self.details,
        }


def time_grid(field: VelocityField, box: Box3, spacing: np.ndarray, T: float, cfl: float, sampling: int, min_steps: int):
    """Uniform step count for ``[0, T]`` meeting the CFL bound at every step.

    Sup speeds of unsteady fields are sampled on the step grid itself; the
    grid is refined until it is consistent with them.
    """
    probe = np.linspace(0.0, T, 9)
    top = max(sup_speed(field, box, t, sampling) for t in (probe[:1] if field.steady else probe))
    for _ in range(5):
        dt_max = cfl * float(np.min(spacing)) / max(1e-12, top)
        n = max(min_steps, math.ceil(T / dt_max * (1 + 1e-12)))
        times = np.linspace(0.0, T, n + 1)
        env = speed_envelope(field, box, T, times, sampling)
        if env.sup_speeds.max() <= top * (1 + 1e-12):
            return times, env
        top = float(env.sup_speeds.max())
    return times, env


def run_noncollapse_experiment(config, on_state: Callable[[int, LevelSetState], None] | None = None) -> ExperimentResult:
    """Advance the tube to the last step before ``T`` and audit the window volume.

    ``config`` is a :class:`tubelab.config.ScenarioConfig`.  ``on_state`` is
    called with every computed state (used for snapshot output).
    """
    tol = config.tolerances
    box = config.box
    field_ = config.velocity()
    scenario = config.scenario()
    state = init_levelset(scenario.initial, config.grid, box)
    T = config.horizon

    times, true_env = time_grid(field_, box, state.spacing, T, config.cfl, config.run.sampling, config.run.min_steps)
    envelope = true_env.scaled(config.run.envelope_scale)
    dt = float(times[1] - times[0])

    details: dict = {
        "scenario": config.name,
        "horizon": T,
        "dt": dt,
        "steps": len(times) - 1,
        "last_time": float(times[-2]),
        "gap_to_horizon": float(T - times[-2]),
        "envelope_scale": config.run.envelope_scale,
        "sup_speed_max": float(true_env.sup_speeds.max()),
    }

    def finish(verdict, records, t0, reason, **extra):
        vols = [r.vol_Jt for r in records]
        viol = float(max([0.0] + [a - b for a, b in zip(vols[:-1], vols[1:])]))
        details.update(reason=reason, **extra)
        return ExperimentResult(
            verdict, records, t0, vols[0] if vols else math.nan, vols[-1] if vols else math.nan, viol, details
        )

    try:
        t0 = pick_t0(envelope, box, T, config.margin)
    except HypothesisError as exc:
        return finish("abort", [], math.nan, str(exc))
    details["t0_closed_form"] = 1.0 - (1.0 - config.margin) * (box.b - box.a) / (
        2.0 * float(envelope.sup_speeds.max())
    ) if envelope.sup_speeds.max() > 0 else 0.0

    k0 = int(np.searchsorted(times, t0 - 1e-12 * max(1.0, T)))
    last = len(times) - 2
    # keep three consecutive states around each recorded step
    history: dict[int, tuple[LevelSetState, np.ndarray, ValidityReport]] = {}
    pending: list[int] = []
    records: list[TimeSeriesRecord] = []
    endpoint_failures: list[dict] = []
    uncertified = 0
    first_bad = None

    def measure(k: int) -> TimeSeriesRecord:
        nonlocal uncertified, first_bad
        st, areas, rep = history[k]
        w = window_endpoints(envelope, box, times[k])
        vol = window_volume(st, w, areas)
        lo = k - 1 if k - 1 in history else k
        hi = k + 1 if k + 1 in history else k
        if hi == lo:
            lhs = math.nan
        else:
            w_lo = window_endpoints(envelope, box, times[lo])
            w_hi = window_endpoints(envelope, box, times[hi])
            lhs = (window_volume(history[hi][0], w_hi, history[hi][1]) - window_volume(history[lo][0], w_lo, history[lo][1])) / (
                times[hi] - times[lo]
            )
        speed = envelope.speed_at(times[k])
        top, bottom = endpoint_terms(st, field_, w, speed)
        rhs = top + bottom
        denom = max(abs(lhs), abs(rhs), abs(top) + abs(bottom))
        resid = abs(lhs - rhs) / denom if denom > 1e-300 else abs(lhs - rhs)
        chk = endpoint_speed_check(envelope, st, field_, w)
        if not chk.ok:
            uncertified += 1
            if first_bad is None:
                first_bad = float(times[k])
            endpoint_failures.append({"t": float(times[k]), **asdict(chk)})
        ax3 = st.axes[2]
        return TimeSeriesRecord(
            t=float(times[k]),
            A=w.A,
            B=w.B,
            vol_Jt=vol,
            area_A=float(np.interp(w.A, ax3, areas)),
            area_B=float(np.interp(w.B, ax3, areas)),
            dvol_lhs=float(lhs),
            dvol_rhs=float(rhs),
            balance_residual=float(resid),
            min_slice_gradient=rep.min_slice_gradient,
            regular=rep.is_regular,
            vol_full=window_volume(st, TubeWindow(w.t, box.a, box.b), areas),
            validity=rep.summary(),
        )

    nodal = field_(state.nodes, 0.0) if field_.steady else None
    for k in range(0, last + 1):
        if k > 0:
            state = advect(state, field_, dt, config.cfl, speed=true_env.sup_speeds[k - 1], nodal_velocity=nodal)
        if on_state is not None:
            on_state(k, state)
        rep = validate_regular_tube(state, tol.eps_grad)
        if not rep.is_regular:
            records.extend(measure(j) for j in pending)
            return finish(
                "abort",
                records,
                t0,
                "tube lost regularity",
                offending_time=float(times[k]),
                validity=rep.summary(),
                checks={"regular": False},
            )
        if k >= k0:
            history[k] = (state, slab_areas(state), rep)
            pending.append(k)
        # a record needs its successor for the central difference
        while pending and (pending[0] + 1 in history or pending[0] == last):
            j = pending.pop(0)
            records.append(measure(j))
            history.pop(j - 1, None)

    vol_t0 = records[0].vol_Jt
    vols = np.array([r.vol_Jt for r in records])
    drops = np.maximum(0.0, vols[:-1] - vols[1:])
    mono_ok = bool(np.all(drops <= tol.tol_mono * vol_t0))
    contained = bool(all(r.vol_full >= r.vol_Jt * (1 - 1e-12) for r in records))
    final_ok = bool(vols[-1] >= (1 - tol.tol_final) * vol_t0)
    certified = uncertified == 0
    checks = {
        "monotone": mono_ok,
        "endpoint_domination": certified,
        "window_inside_tube_volume": contained,
        "final_volume": final_ok,
        "regular": True,
    }
    verdict = "pass" if all(checks.values()) else "fail"
    reasons = [k for k, v in checks.items() if not v]
    return finish(
        verdict,
        records,
        t0,
        "all checks passed" if verdict == "pass" else "failed: " + ", ".join(reasons),
        checks=checks,
        monotonicity={
            "observed_ok": mono_ok,
            "certified_ok": certified,
            "uncertified_steps": uncertified,
            "first_uncertified_t": first_bad,
            "tol_mono": tol.tol_mono * vol_t0,
        },
        endpoint_failures=endpoint_failures[:5],
        max_balance_residual=float(max(r.balance_residual for r in records if math.isfinite(r.balance_residual)))
        if any(math.isfinite(r.balance_residual) for r in records)
        else math.nan,
    )
