import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs
from scipy.special import ellipe

from tubelab.errors import ContourError, DegeneracyError, DomainError, NearStationaryError, PreconditionError
from tubelab.flow_fields import Box3, builtin_field
from tubelab.graph_oracle import graph_surface_integral, graph_tube, nu_dot_nu_tilde
from tubelab.scenarios import cylinder, ellipse, get_scenario, two_cylinders
from tubelab.slice_geometry import (
    TEST_FUNCTIONS,
    SliceContour,
    boundary_integral,
    boundary_length,
    check_identity_14,
    measured_order,
    of_position,
    polygon_integral,
    slab_areas,
    slice_area,
    slice_contour,
    slice_region_integral,
    surface_integral_sliced,
    surface_integral_weighted,
    surface_samples,
    tube_volume,
    write_contour_csv,
)
from tubelab.tube_levelset import GridSpec, exact_levelset, init_levelset, interp_theta

R = 0.25


@pytest.fixture(scope="module")
def box():
    return Box3((-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0))


def circle_state(box, n=96, n3=8, r=R):
    return init_levelset(cylinder(r), GridSpec(n, n, n3), box)


def axial_triplet(box, t=0.5, dt=1e-3, grid=GridSpec(96, 96, 64)):
    return tuple(exact_levelset("axial-strain", s, grid, box) for s in (t - dt, t, t + dt))


# -- contouring --------------------------------------------------------------------


@pytest.mark.parametrize("x3", [0.0, 0.37, 1.0])
def test_circle_contour_radial_deviation(box, x3):
    st = circle_state(box)
    c = slice_contour(st, x3)
    assert len(c.loops) == 1 and not c.curves
    loop = c.loops[0]
    assert np.array_equal(loop[0], loop[-1])
    h = float(st.spacing[0])
    assert np.max(np.abs(np.hypot(loop[:, 0], loop[:, 1]) - R)) <= h * h / (2 * R)


def test_loops_are_counter_clockwise_with_outward_normal(box):
    st = circle_state(box)
    loop = slice_contour(st, 0.5).loops[0]
    tangent = np.diff(loop, axis=0)
    mid = 0.5 * (loop[1:] + loop[:-1])
    outward = np.column_stack([tangent[:, 1], -tangent[:, 0]])  # right-hand perpendicular
    assert np.all(np.sum(outward * mid, axis=1) > 0)


def test_outward_convention_on_samples(box):
    st = circle_state(box)
    c = slice_contour(st, 0.5)
    s = surface_samples(st, None, None, None, c)
    h = float(st.spacing[0])
    probe = s.position + 0.25 * h * s.nu_tilde
    assert np.all(interp_theta(st, probe) > 0)
    assert np.all(s.nu_dot > 0)


def test_empty_contour(box):
    st = init_levelset(lambda a, b, c: 1.0 + a * 0, GridSpec(16, 16, 8), box)
    c = slice_contour(st, 0.5)
    assert c.is_empty
    assert slice_area(c) == 0.0 and boundary_length(c) == 0.0


def test_two_cylinders_give_two_consistent_loops(box):
    st = init_levelset(two_cylinders(0.2, 0.8), GridSpec(96, 96, 8), box)
    c = slice_contour(st, 0.5)
    assert len(c.loops) == 2
    areas = [slice_area(SliceContour(0.5, 0.0, (lp,))) for lp in c.loops]
    assert all(a > 0 for a in areas)
    np.testing.assert_allclose(areas, math.pi * 0.04, rtol=5e-3)
    centres = sorted(float(lp[:-1, 0].mean()) for lp in c.loops)
    np.testing.assert_allclose(centres, [-0.4, 0.4], atol=1e-3)


def test_open_curves_are_refused_unless_allowed(box):
    st = init_levelset(lambda a, b, c: a - 0.1 + 0 * b, GridSpec(16, 16, 8), box)
    with pytest.raises(ContourError):
        slice_contour(st, 0.5)
    c = slice_contour(st, 0.5, allow_open=True)
    assert len(c.curves) == 1 and not c.loops
    with pytest.raises(ContourError):
        slice_area(c)
    assert boundary_length(c) == pytest.approx(2.0, abs=1e-12)


def test_slice_outside_interval(box):
    with pytest.raises(DomainError):
        slice_contour(circle_state(box), 1.5)


def test_saddle_uses_cell_mean():
    # corners +,-,+,- with positive mean: the two negative corners stay separate
    box = Box3((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    vals = np.ones((8, 8, 8))
    vals[3, 3, :] = -1.0
    vals[4, 4, :] = -1.0
    st = init_levelset(lambda a, b, c: 0 * a + 1.0, GridSpec(8, 8, 8), box)
    st = type(st)(st.grid, st.box, vals, 0.0)
    assert len(slice_contour(st, 0.5).loops) == 2
    vals[3, 4, :] = 0.2
    vals[4, 3, :] = 0.2
    vals[3, 3, :] = vals[4, 4, :] = -2.0  # mean of the saddle cell is now negative
    st = type(st)(st.grid, st.box, vals, 0.0)
    assert len(slice_contour(st, 0.5).loops) == 1


# -- areas, lengths, volumes -------------------------------------------------------


def test_circle_area_at_h_1_48(box):
    st = circle_state(box, n=97)
    assert abs(slice_area(slice_contour(st, 0.5)) - math.pi * R * R) <= 1e-3


def test_circle_area_order():
    box = Box3((-0.5, 0.5), (-0.5, 0.5), (0.0, 1.0))
    errs, hs = [], []
    for n in (32, 64, 128):
        st = init_levelset(cylinder(R), GridSpec(n, n, 8), box)
        errs.append(abs(slice_area(slice_contour(st, 0.5)) - math.pi * R * R))
        hs.append(float(st.spacing[0]))
    assert np.all(measured_order(errs, hs) >= 1.8)


def test_axial_strain_area_at_half(box):
    st = exact_levelset("axial-strain", 0.5, GridSpec(96, 96, 8), box)
    assert slice_area(slice_contour(st, 0.3)) == pytest.approx(math.pi * 0.09 * math.exp(-0.5), abs=1e-3)


def test_circle_circumference(box):
    st = circle_state(box, n=96)
    assert boundary_length(slice_contour(st, 0.5)) == pytest.approx(2 * math.pi * R, rel=1e-2)


def test_ellipse_perimeter(box):
    exact = 4 * 0.3 * ellipe(1 - (0.2 / 0.3) ** 2)  # 1.58654...
    st = init_levelset(ellipse(0.3, 0.2), GridSpec(96, 96, 8), box)
    assert boundary_length(slice_contour(st, 0.5)) == pytest.approx(exact, rel=2e-3)


def test_slab_areas_match_slice_area(box):
    st = exact_levelset("axial-strain", 0.3, GridSpec(48, 48, 10), box)
    fast = slab_areas(st)
    slow = [slice_area(slice_contour(st, float(x))) for x in st.axes[2]]
    np.testing.assert_allclose(fast, slow, rtol=1e-12)


def test_tube_volume_static_cylinder(box):
    st = circle_state(box, n=96, n3=64)
    assert tube_volume(st) == pytest.approx(math.pi * R * R, abs=1e-3)
    assert tube_volume(st, (0.25, 0.75)) == pytest.approx(math.pi * R * R * 0.5, abs=1e-3)
    assert tube_volume(st, (0.3, 0.3)) == 0.0


def test_tube_volume_axial_strain(box):
    st = exact_levelset("axial-strain", 0.5, GridSpec(96, 96, 64), box)
    assert tube_volume(st, (0.2, 0.8)) == pytest.approx(0.10290, abs=1e-3)


def test_tube_volume_interval_checks(box):
    st = circle_state(box)
    with pytest.raises(DomainError):
        tube_volume(st, (-0.1, 0.5))
    with pytest.raises(DomainError):
        tube_volume(st, (0.6, 0.5))


def test_region_integrals(box):
    st = exact_levelset("translating-cylinder", 0.5, GridSpec(96, 96, 8), box)
    area = slice_region_integral(st, 0.5, TEST_FUNCTIONS["1"])
    moment = slice_region_integral(st, 0.5, TEST_FUNCTIONS["x1"])
    assert area == pytest.approx(math.pi * R * R, abs=1e-3)
    assert moment / area == pytest.approx(0.1, abs=1e-4)


def test_polygon_integral_is_exact_for_quadratics():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
    assert polygon_integral((square,), lambda a, b: a * a + b) == pytest.approx(1 / 3 + 1 / 2, abs=1e-14)


# -- surface samples ---------------------------------------------------------------


def test_static_cylinder_normal_speeds_vanish(box):
    g = GridSpec(48, 48, 8)
    states = [exact_levelset("static-cylinder", s, g, box) for s in (0.4, 0.5, 0.6)]
    c = slice_contour(states[1], 0.5)
    s = surface_samples(states[1], states[0], states[2], builtin_field("zero"), c)
    assert np.all(s.sigma == 0.0) and np.all(s.sigma_tilde == 0.0)
    assert np.all(s.velocity == 0.0)


def test_axial_strain_normal_speeds(box):
    prev, cur, nxt = axial_triplet(box)
    c = slice_contour(cur, 0.5)
    s = surface_samples(cur, prev, nxt, builtin_field("axial-strain", {"alpha": 0.5}), c)
    r = np.hypot(s.position[:, 0], s.position[:, 1])
    np.testing.assert_allclose(s.sigma, -0.5 * r, atol=2e-3)
    np.testing.assert_allclose(s.sigma_tilde, -0.5 * r, atol=2e-3)
    radial = s.position[:, :2] / r[:, None]
    np.testing.assert_allclose(s.nu[:, :2], radial, atol=1e-3)
    np.testing.assert_allclose(s.nu_tilde[:, :2], radial, atol=1e-3)
    # sigma = u . nu on the wall
    np.testing.assert_allclose(s.sigma, np.sum(s.velocity * s.nu, axis=1), atol=2e-3)
    sample = s[0]
    assert sample.weight > 0 and sample.position.shape == (3,)


def test_graph_tube_nu_dot_matches_closed_form(box):
    tube = graph_tube("sine-sheet", {"amplitude": 0.1, "slope": 0.0, "speed": 0.0})
    st = init_levelset(lambda a, b, c: a - tube.psi(b, c, 0.0), GridSpec(96, 96, 64), box)
    h = float(st.spacing.max())
    for x3 in (0.1, 0.5, 0.8):
        c = slice_contour(st, x3, allow_open=True)
        s = surface_samples(st, None, None, None, c)
        exact = nu_dot_nu_tilde(tube, s.position[:, 1], s.position[:, 2], 0.0)
        assert np.max(np.abs(s.nu_dot - exact)) <= 5 * h * h


def test_degenerate_slice_refused(box):
    st = init_levelset(lambda a, b, c: 1e-4 * (a * a + b * b - 0.09) + 0 * c, GridSpec(48, 48, 8), box)
    c = slice_contour(st, 0.5)
    with pytest.raises(DegeneracyError):
        surface_samples(st, None, None, None, c)


def test_snapshots_must_be_uniform(box):
    g = GridSpec(32, 32, 8)
    a, b, c = (exact_levelset("axial-strain", s, g, box) for s in (0.1, 0.2, 0.4))
    with pytest.raises(PreconditionError):
        surface_samples(b, a, c, None, slice_contour(b, 0.5))


def test_boundary_integral_examples(box):
    prev, cur, nxt = axial_triplet(box, t=0.0 + 1e-3)
    c = slice_contour(cur, 0.5)
    s = surface_samples(cur, prev, nxt, None, c)
    assert boundary_integral(c, s, lambda q: np.ones(len(q))) == pytest.approx(2 * math.pi * 0.3, rel=1e-2)
    assert boundary_integral(c, s, lambda q: q.sigma_tilde) == pytest.approx(-0.09 * math.pi, rel=5e-3)
    assert boundary_integral(c, s, lambda q: np.zeros(len(q))) == 0.0
    empty = SliceContour(0.5, 0.0, ())
    assert boundary_integral(empty, surface_samples(cur, None, None, None, empty), lambda q: q.weight) == 0.0


# -- surface integrals -------------------------------------------------------------


def test_lateral_area_static_cylinder(box):
    st = circle_state(box, n=96, n3=16)
    assert surface_integral_sliced(st, (0.0, 1.0), TEST_FUNCTIONS["1"]) == pytest.approx(2 * math.pi * R, rel=1e-2)
    assert surface_integral_sliced(st, (0.0, 1.0), lambda a, b, c: 0 * a) == 0.0


def test_lateral_area_graph_tube(box):
    tube = graph_tube("sine-sheet", {"amplitude": 0.1, "slope": 0.2, "speed": 0.05})
    st = init_levelset(lambda a, b, c: a - tube.psi(b, c, 0.0), GridSpec(96, 96, 64), box)
    got = surface_integral_sliced(st, (0.0, 1.0), TEST_FUNCTIONS["1"], allow_open=True)
    ref = graph_surface_integral(tube, box.i2, box.i3, 0.0)
    assert got == pytest.approx(ref, rel=1e-2)


def test_weighted_equals_sliced_on_axial_strain(box):
    prev, cur, nxt = axial_triplet(box)
    one = TEST_FUNCTIONS["1"]
    a = surface_integral_sliced(cur, (0.2, 0.8), one)
    b = surface_integral_weighted(cur, prev, nxt, (0.2, 0.8), one)
    assert abs(a - b) <= 1e-10 * abs(a)
    assert surface_integral_weighted(cur, prev, nxt, (0.2, 0.8), lambda x1, x2, x3: 0 * x1) == 0.0


def test_weighted_equals_sliced_on_moving_graph(box):
    sc = get_scenario("graph-sheet")
    g = GridSpec(96, 96, 64)
    prev, cur, nxt = (exact_levelset(sc, s, g, box) for s in (0.499, 0.5, 0.501))
    one = TEST_FUNCTIONS["1"]
    a = surface_integral_sliced(cur, (0.0, 1.0), one, allow_open=True)
    b = surface_integral_weighted(cur, prev, nxt, (0.0, 1.0), one, allow_open=True, eps_sigma=1e-6 * 0.05)
    h = float(cur.spacing.max())
    assert abs(a - b) <= h * h * abs(a)


def test_weighted_refuses_stationary_wall(box):
    g = GridSpec(32, 32, 8)
    prev, cur, nxt = (exact_levelset("static-cylinder", s, g, box) for s in (0.4, 0.5, 0.6))
    with pytest.raises(NearStationaryError):
        surface_integral_weighted(cur, prev, nxt, (0.0, 1.0), TEST_FUNCTIONS["1"])


# -- identity 14 -------------------------------------------------------------------


@pytest.mark.parametrize("F", list(TEST_FUNCTIONS))
def test_identity_14_zero_field(box, F):
    rep = check_identity_14("static-cylinder", 0.5, 0.5, TEST_FUNCTIONS[F], 1e-3, GridSpec(48, 48, 16), box)
    assert abs(rep.lhs) <= 1e-10 and abs(rep.rhs) <= 1e-10


def test_identity_14_axial_strain(box):
    rep = check_identity_14("axial-strain", 0.5, 0.5, TEST_FUNCTIONS["1"], 1e-3, GridSpec(96, 96, 64), box)
    expected = -math.pi * 0.09 * math.exp(-0.5)
    assert rep.lhs == pytest.approx(expected, rel=2e-4)
    assert rep.rhs == pytest.approx(expected, rel=1e-3)
    assert rep.rel_error <= 1e-3


def test_identity_14_translating_centroid(box):
    rep = check_identity_14("translating-cylinder", 0.5, 0.5, TEST_FUNCTIONS["x1"], 1e-3, GridSpec(96, 96, 64), box)
    assert rep.lhs == pytest.approx(math.pi * R * R * 0.2, abs=1e-5)
    assert rep.rhs == pytest.approx(math.pi * R * R * 0.2, rel=5e-3)


def test_identity_14_needs_nonnegative_times(box):
    with pytest.raises(PreconditionError):
        check_identity_14("axial-strain", 0.5, 0.0, TEST_FUNCTIONS["1"], 1e-3, GridSpec(16, 16, 16), box)


# -- export ------------------------------------------------------------------------


def test_contour_csv(tmp_path, box):
    st = init_levelset(two_cylinders(), GridSpec(48, 48, 8), box)
    c = slice_contour(st, 0.5)
    path = write_contour_csv(c, tmp_path / "contour.csv")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["loop_id", "vertex_id", "x1", "x2"]
    assert {r["loop_id"] for r in rows} == {"0", "1"}
    assert len(rows) == sum(len(lp) - 1 for lp in c.loops)
    first = [r for r in rows if r["loop_id"] == "0"][0]
    np.testing.assert_allclose([float(first["x1"]), float(first["x2"])], c.loops[0][0], rtol=1e-15)


@settings(max_examples=40, deadline=None)
@given(r=hs.floats(0.1, 0.4), c1=hs.floats(-0.3, 0.3), c2=hs.floats(-0.3, 0.3))
def test_circle_area_property(r, c1, c2):
    # vertices sit within h^2/(2r) of the circle and chords cut at most h^2/(4r) more
    box = Box3((-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0))
    a = init_levelset(cylinder(r, c1, c2), GridSpec(64, 64, 8), box)
    h = float(a.spacing[0])
    c = slice_contour(a, 0.5)
    assert len(c.loops) == 1
    assert abs(slice_area(c) - math.pi * r * r) <= 2 * math.pi * h * h
