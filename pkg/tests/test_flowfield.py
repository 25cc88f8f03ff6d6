import dataclasses

import numpy as np
import pytest

from dldml.errors import ConfigurationError, OutOfDomainError, ParseError, SolverError
from dldml.flowfield import (FlowField, FluidProperties, SolverConfig, divergence_norm,
                             flow_rate_profile, inlet_velocity_from_reynolds, read_field_csv,
                             sample_velocity, solve_steady_flow, speed_magnitude,
                             write_field_csv)
from dldml.geometry import DldDesign, build_post_array, empty_channel

WATER = FluidProperties()


# --------------------------------------------------------------------------
# inlet scale


def test_inlet_velocity_examples():
    u1 = inlet_velocity_from_reynolds(1.0, WATER, 45.0)
    assert u1 == pytest.approx(1e-3 / (1000 * 45e-6), rel=1e-12)
    assert round(u1, 6) == 0.022222
    assert inlet_velocity_from_reynolds(0.0, WATER, 45.0) == 0.0
    assert inlet_velocity_from_reynolds(2.0, WATER, 45.0) == 2 * u1


def test_inlet_velocity_rejects_negative_reynolds():
    with pytest.raises(ConfigurationError):
        inlet_velocity_from_reynolds(-1.0, WATER, 45.0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(cells_per_gap=7)
    with pytest.raises(ConfigurationError):
        SolverConfig(tolerance=0.0)
    with pytest.raises(ConfigurationError):
        FluidProperties(viscosity=0.0)


# --------------------------------------------------------------------------
# sampling and divergence on analytic fields


def _linear_field(periodic=False):
    # u = 1 + 2x + 3y, v = 4 - 2y (divergence-free), x, y in um
    return FlowField.from_functions(20, 10, 1.0, lambda x, y: 1 + 2 * x + 3 * y,
                                    lambda x, y: 4 - 2 * y + 0 * x, periodic_y=periodic)


def test_sample_at_a_face_returns_the_stored_value():
    f = _linear_field()
    # u lives at (i h, (j + 1/2) h)
    ux, _ = sample_velocity(f, (7.0, 3.5))
    assert ux == pytest.approx(f.u[7, 3], rel=1e-12)
    _, vy = sample_velocity(f, (7.5, 4.0))
    assert vy == pytest.approx(f.v[7, 4], rel=1e-12)


def test_sample_midway_is_the_mean():
    f = FlowField.from_functions(10, 4, 1.0, lambda x, y: x * x, lambda x, y: 0 * x)
    ux, _ = sample_velocity(f, (3.5, 1.5))
    assert ux == pytest.approx(0.5 * (9 + 16), rel=1e-12)


def test_bilinear_is_exact_for_linear_fields():
    f = _linear_field()
    rng = np.random.default_rng(3)
    for x, y in rng.uniform([1, 1], [19, 9], size=(50, 2)):
        ux, vy = sample_velocity(f, (x, y))
        assert ux == pytest.approx(1 + 2 * x + 3 * y, rel=1e-10)
        assert vy == pytest.approx(4 - 2 * y, rel=1e-10, abs=1e-10)


def test_sample_inside_solid_is_zero():
    solid = np.zeros((20, 10), dtype=bool)
    solid[8:12, 3:7] = True
    f = FlowField.from_functions(20, 10, 1.0, lambda x, y: 1 + 0 * x, lambda x, y: 1 + 0 * x,
                                 solid=solid)
    np.testing.assert_array_equal(sample_velocity(f, (10.0, 5.0)), [0.0, 0.0])


def test_sample_outside_domain():
    f = _linear_field()
    for p in [(-0.1, 5.0), (20.1, 5.0), (5.0, -0.5), (5.0, 10.5)]:
        with pytest.raises(OutOfDomainError):
            sample_velocity(f, p)
    # periodic in y: any lateral coordinate is fine
    sample_velocity(_linear_field(periodic=True), (5.0, 37.0))


def test_divergence_of_simple_fields():
    uniform = FlowField.from_functions(8, 8, 1.0, lambda x, y: 2 + 0 * x, lambda x, y: 1 + 0 * x)
    assert divergence_norm(uniform) == 0.0
    shear = FlowField.from_functions(8, 8, 1.0, lambda x, y: 5.0 * y, lambda x, y: 0 * x)
    assert divergence_norm(shear) == 0.0
    assert divergence_norm(_linear_field()) == pytest.approx(0.0, abs=1e-12)
    # u = a x has divergence a (1/s with x in um: a * 1e6), normalised by U/G
    a = 1e-3
    src = FlowField.from_functions(8, 8, 1.0, lambda x, y: a * x, lambda x, y: 0 * x,
                                   inlet_velocity=1.0, length_scale_um=8.0)
    assert divergence_norm(src) == pytest.approx(a * 1e6 / (1.0 / 8e-6), rel=1e-12)


# --------------------------------------------------------------------------
# solver


def _poiseuille(cpg):
    H = 45.0
    ch = empty_channel(12 * H, H)
    return solve_steady_flow(ch, WATER, SolverConfig(cells_per_gap=cpg), length_scale_um=H), H


def test_channel_develops_parabolic_profile():
    flow, H = _poiseuille(16)
    U = flow.inlet_velocity
    i = int(0.75 * flow.nx)  # well past the entrance length at Re = 1
    y = (np.arange(flow.ny) + 0.5) * flow.h_um
    exact = 6 * U * (y / H) * (1 - y / H)
    np.testing.assert_allclose(flow.u[i], exact, atol=0.01 * U)
    assert divergence_norm(flow) <= 1e-6


def test_channel_flux_is_conserved():
    flow, H = _poiseuille(16)
    q = flow_rate_profile(flow)
    q_in = flow.inlet_velocity * H * 1e-6
    np.testing.assert_allclose(q, q_in, rtol=1e-6)


def test_zero_reynolds_gives_rest():
    ch = empty_channel(200, 40)
    flow = solve_steady_flow(ch, WATER, SolverConfig(reynolds=0.0), length_scale_um=40)
    assert not flow.u.any() and not flow.v.any()


def test_non_convergence_reports_the_residual():
    ch = empty_channel(400, 45)
    with pytest.raises(SolverError) as info:
        solve_steady_flow(ch, WATER, SolverConfig(max_iterations=2), length_scale_um=45)
    assert info.value.residual > 1e-6 and info.value.iterations == 2
    assert info.value.exit_code == 3


def test_postless_channel_needs_a_length_scale():
    with pytest.raises(ConfigurationError):
        solve_steady_flow(empty_channel(200, 40), WATER, SolverConfig())


def test_post_array_solution(n6_flow, n6_design):
    flow = n6_flow
    assert flow.report["converged"]
    assert divergence_norm(flow) <= SolverConfig().tolerance
    # no-slip: every face touching a solid cell carries zero velocity
    s = flow.solid
    u_touch = np.zeros_like(flow.u, dtype=bool)
    u_touch[:-1] |= s
    u_touch[1:] |= s
    assert np.abs(flow.u[u_touch]).max() == 0.0
    v_touch = s | np.roll(s, 1, axis=1)
    assert np.abs(flow.v[v_touch]).max() == 0.0
    # net lateral flux through the array balanced to the requested tolerance
    hist = flow.report["lateral_balance"]
    assert abs(hist[-1][1]) <= SolverConfig().balance_tolerance or len(hist) == 1


def test_flux_through_every_transect(n6_flow, n6_design):
    q = flow_rate_profile(n6_flow)
    q_in = n6_flow.inlet_velocity * n6_design.height_um * 1e-6
    assert np.max(np.abs(q / q_in - 1.0)) < 0.01


def test_mid_gap_faster_than_near_post(n6_flow, n6_design):
    # vertical transect through the gap of row 0: post centre at y = 0 (periodic)
    arr = build_post_array(n6_design)
    x = arr.row_x[0]
    r = arr.radius_um
    y_mid = r + n6_design.gap_um / 2
    mid = np.hypot(*sample_velocity(n6_flow, (x, y_mid)))
    near = np.hypot(*sample_velocity(n6_flow, (x, r + 3.0)))
    assert mid > near > 0.0
    assert mid > n6_flow.inlet_velocity


def _mid_gap_speed(cpg):
    d = DldDesign(period=4)
    arr = build_post_array(d)
    flow = solve_steady_flow(arr, WATER, SolverConfig(cells_per_gap=cpg))
    x = arr.row_x[1]
    y = float(arr.centers[arr.rows == 1, 1][0]) + arr.radius_um + d.gap_um / 2
    return np.hypot(*sample_velocity(flow, (x, y % d.height_um)))


def test_grid_refinement_changes_mid_gap_speed_little():
    coarse, fine = _mid_gap_speed(16), _mid_gap_speed(32)
    assert abs(fine - coarse) / fine < 0.03


def test_unshifted_array_is_mirror_symmetric():
    # two posts per row, all rows aligned, side walls half a pitch away
    d = DldDesign(period=3, n_columns=2, n_rows=3, lateral="wall")
    arr = build_post_array(d)
    lam = d.pitch_um
    centers = arr.centers.copy()
    centers[:, 1] = lam / 2 + np.tile([0.0, lam], 3)
    arr = dataclasses.replace(arr, centers=centers)
    flow = solve_steady_flow(arr, WATER, SolverConfig(cells_per_gap=12, tolerance=1e-8))
    scale = flow.inlet_velocity
    np.testing.assert_allclose(flow.u, flow.u[:, ::-1], atol=1e-6 * scale)
    np.testing.assert_allclose(flow.v, -flow.v[:, ::-1], atol=1e-6 * scale)


def test_field_csv_round_trip(tmp_path, n6_flow):
    p = tmp_path / "flow.csv"
    write_field_csv(n6_flow, p)
    h, speed, solid = read_field_csv(p)
    assert h == pytest.approx(n6_flow.h_um)
    np.testing.assert_array_equal(speed, speed_magnitude(n6_flow))
    np.testing.assert_array_equal(solid, n6_flow.solid)


def test_field_csv_errors_name_the_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x_um,y_um,u_mps,v_mps,p_pa,solid\n0.5,0.5,1,0,0,0\n0.5,1.5,oops,0,0,0\n")
    with pytest.raises(ParseError, match="line 3"):
        read_field_csv(p)
    p.write_text("x_um,y_um,u_mps\n")
    with pytest.raises(ParseError, match="line 1"):
        read_field_csv(p)
