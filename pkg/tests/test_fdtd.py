"""Solver tests: config validation, medium, sponge, source, stepping."""

import math

import numpy as np
import pytest

from waverom import (
    SimulationConfig,
    build_medium,
    courant_dt,
    run_simulation,
    snapshot_times,
    source_amplitude,
    sponge_profile,
    step,
)
from waverom.errors import InstabilityError, ValidationError
from waverom.fdtd import DampingGrid, FieldState, MediumGrid, sponge_max, source_mask


def desk_config(**kw):
    base = dict(
        sphere_radius=2.0,
        sphere_index=1.1,
        resolution=4,
        snapshot_interval=0.125,
        duration=5.0,
    )
    base.update(kw)
    return SimulationConfig(**base)


# ---------------------------------------------------------------------------
# configuration


def test_grid_points_full_scale_and_desk():
    full_scale = SimulationConfig(sphere_radius=3.0, sphere_index=1.5, resolution=16)
    assert full_scale.grid_points == 193
    assert desk_config().grid_points == 49


@pytest.mark.parametrize(
    "overrides",
    [
        {"resolution": 0},
        {"resolution": -4},
        {"boundary_width": 0.0},
        {"boundary_width": 6.0},
        {"sphere_radius": 4.5},  # overlaps the absorbing layer
        {"sphere_index": 0.9},
        {"courant_safety": 0.0},
        {"courant_safety": 1.0},
        {"snapshot_interval": 0.0},
        {"duration": -1.0},
        {"wavelength": 0.0},
        {"source_position": -7.0},
    ],
)
def test_config_validation_rejects(overrides):
    with pytest.raises(ValidationError):
        desk_config(**overrides)


def test_config_from_dict_rejects_unknown_and_missing_keys():
    good = desk_config().to_dict()
    with pytest.raises(ValidationError):
        SimulationConfig.from_dict({**good, "wavelenght": 1.0})
    bad = dict(good)
    del bad["sphere_index"]
    with pytest.raises(ValidationError):
        SimulationConfig.from_dict(bad)


def test_config_dict_round_trip():
    cfg = desk_config(source_stop_time=2.0)
    assert SimulationConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------------------
# medium


def test_medium_center_and_corner():
    cfg = desk_config(sphere_radius=2.0, sphere_index=1.5)
    grid = build_medium(cfg).inverse_speed_squared
    mid = cfg.grid_points // 2
    assert grid[mid, mid, mid] == pytest.approx(2.25)
    assert grid[0, 0, 0] == 1.0


def test_medium_sphere_volume_fraction():
    # voxel count inside the sphere vs the analytic ball volume
    cfg = desk_config(sphere_radius=3.0)
    grid = build_medium(cfg).inverse_speed_squared
    voxel_volume = np.count_nonzero(grid > 1.0) * cfg.dx**3
    analytic = (4.0 / 3.0) * math.pi * 3.0**3
    assert voxel_volume == pytest.approx(analytic, rel=0.02)


# ---------------------------------------------------------------------------
# time step and sponge


def test_courant_dt_values():
    assert courant_dt(desk_config(snapshot_interval=0.5)) == pytest.approx(
        0.9 * 0.25 / math.sqrt(3.0), abs=1e-9
    )
    full_scale = SimulationConfig(sphere_radius=3.0, sphere_index=1.5, resolution=16)
    # unclamped 0.9*(1/16)/sqrt(3) ~ 0.032476 exceeds the snapshot interval
    assert courant_dt(full_scale) == pytest.approx(0.03125)
    assert courant_dt(
        desk_config(courant_safety=0.5, snapshot_interval=0.5)
    ) == pytest.approx(0.072169, abs=1e-5)


def test_sponge_profile_interior_face_halfway():
    cfg = desk_config()
    sigma = sponge_profile(cfg).sigma
    mid = cfg.grid_points // 2
    s_max = sponge_max(cfg)
    assert s_max == pytest.approx(4.0 * math.log(1e3) / 4.0)
    assert sigma[mid, mid, mid] == 0.0
    assert sigma[0, mid, mid] == pytest.approx(s_max, rel=1e-6)
    # one unit into the two-unit layer: (1/2)^3 of the peak
    ih = int(round(1.0 * cfg.resolution))
    assert sigma[ih, mid, mid] == pytest.approx(s_max / 8.0, rel=1e-6)


def test_sponge_zero_strictly_inside_interior():
    cfg = desk_config()
    sigma = sponge_profile(cfg).sigma
    w = int(cfg.boundary_width * cfg.resolution)
    assert np.all(sigma[w + 1 : -w - 1, w + 1 : -w - 1, w + 1 : -w - 1] == 0.0)


# ---------------------------------------------------------------------------
# source


def test_source_amplitude_ramp_and_carrier():
    assert source_amplitude(0.0, 1.0) == 0.0
    assert source_amplitude(0.25, 1.0) == pytest.approx(0.25)
    assert source_amplitude(2.25, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        source_amplitude(-0.1, 1.0)


def test_source_mask_plane_and_extent():
    cfg = desk_config()
    ix, mask = source_mask(cfg)
    assert ix == int(round((-4.0 + 6.0) * 4))
    # transverse extent 8 units at 4 points per unit: 33 points per axis
    assert mask.sum() == 33 * 33


# ---------------------------------------------------------------------------
# stepping


def _zero_state(cfg):
    shape = (cfg.grid_points,) * 3
    return FieldState(
        e_curr=np.zeros(shape, dtype=np.float64),
        e_prev=np.zeros(shape, dtype=np.float64),
        step_index=0,
        dt=courant_dt(cfg),
    )


def test_step_zero_field_stays_zero(tiny_config):
    cfg = SimulationConfig.from_dict(
        {**tiny_config.to_dict(), "source_enabled": False}
    )
    st = _zero_state(cfg)
    st = step(st, build_medium(cfg), sponge_profile(cfg), cfg)
    assert np.all(st.e_curr == 0.0)


def test_step_is_linear_with_source_disabled(tiny_config):
    cfg = SimulationConfig.from_dict(
        {**tiny_config.to_dict(), "source_enabled": False}
    )
    med, damp = build_medium(cfg), sponge_profile(cfg)
    rng = np.random.default_rng(3)
    shape = (cfg.grid_points,) * 3
    st = FieldState(
        e_curr=rng.normal(size=shape),
        e_prev=rng.normal(size=shape),
        step_index=0,
        dt=courant_dt(cfg),
    )
    st2 = FieldState(
        e_curr=2.0 * st.e_curr, e_prev=2.0 * st.e_prev, step_index=0, dt=st.dt
    )
    a = step(st, med, damp, cfg).e_curr
    b = step(st2, med, damp, cfg).e_curr
    assert np.allclose(b, 2.0 * a, rtol=1e-6, atol=1e-12)


def test_step_single_impulse_matches_stencil(tiny_config):
    # hand-evaluated 7-point stencil: with zero damping and n = 1, one step
    # sends (dt/dx)^2 to each face neighbor and leaves 2 - 6 (dt/dx)^2
    cfg = SimulationConfig.from_dict(
        {**tiny_config.to_dict(), "source_enabled": False, "sphere_index": 1.0}
    )
    st = _zero_state(cfg)
    mid = cfg.grid_points // 2
    st.e_curr[mid, mid, mid] = 1.0
    med = build_medium(cfg)
    damp = DampingGrid(sigma=np.zeros_like(med.inverse_speed_squared))
    out = step(st, med, damp, cfg).e_curr
    c2 = (st.dt / cfg.dx) ** 2
    expected = np.zeros_like(out)
    expected[mid, mid, mid] = 2.0 - 6.0 * c2
    for di, dj, dk in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]:
        expected[mid + di, mid + dj, mid + dk] = c2
    assert np.max(np.abs(out - expected)) <= 1e-6 * max(1.0, np.abs(expected).max())


def test_step_shape_mismatch_raises(tiny_config):
    cfg = tiny_config
    st = _zero_state(cfg)
    bad = MediumGrid(inverse_speed_squared=np.ones((3, 3, 3)))
    with pytest.raises(ValidationError):
        step(st, bad, sponge_profile(cfg), cfg)


def test_oversized_dt_triggers_instability_error(tiny_config):
    cfg = SimulationConfig.from_dict(
        {**tiny_config.to_dict(), "source_enabled": False}
    )
    med, damp = build_medium(cfg), sponge_profile(cfg)
    st = _zero_state(cfg)
    st = FieldState(e_curr=st.e_curr, e_prev=st.e_prev, step_index=0, dt=1.0)
    mid = cfg.grid_points // 2
    st.e_curr[mid, mid, mid] = 1.0
    with pytest.raises(InstabilityError):
        for _ in range(200):
            st = step(st, med, damp, cfg)


# ---------------------------------------------------------------------------
# snapshot schedule and full runs


def test_snapshot_counts():
    full_scale = SimulationConfig(sphere_radius=3.0, sphere_index=1.5, resolution=16)
    assert len(snapshot_times(full_scale)) == 321
    assert len(snapshot_times(desk_config())) == 41
    assert snapshot_times(desk_config())[1] == pytest.approx(0.125)


def test_run_simulation_snapshot_labels_and_initial_state(tiny_config):
    vols = run_simulation(tiny_config)
    assert len(vols) == 9
    assert vols[0].time == 0.0
    assert np.all(vols[0].data == 0.0)
    assert vols[-1].time == pytest.approx(2.0)
    assert vols[0].params == (tiny_config.sphere_radius, tiny_config.sphere_index)


def test_causality_voxel_ahead_of_front_is_zero():
    # source at x = -4; a voxel at x = 0 cannot see anything before t = 4
    cfg = desk_config(sphere_index=1.0, duration=2.0)
    vols = run_simulation(cfg)
    mid = cfg.grid_points // 2
    assert all(v.data[mid, mid, mid] == 0.0 for v in vols)


def test_wavefront_position_at_t3():
    # d'Alembert: with n = 1 the front sits 3 units from the source at t = 3
    cfg = desk_config(sphere_index=1.0, duration=3.0)
    medium = build_medium(cfg)
    medium.inverse_speed_squared[:] = 1.0
    vols = run_simulation(cfg, medium=medium)
    last = vols[-1]
    assert last.time == pytest.approx(3.0)
    profile = np.abs(last.data).max(axis=(1, 2))
    threshold = 0.012 * profile.max()
    front_idx = np.nonzero(profile > threshold)[0].max()
    front_x = front_idx * cfg.dx - cfg.cell_extent / 2.0
    assert front_x - cfg.source_position == pytest.approx(3.0, rel=0.02)


def test_energy_non_increasing_after_source_stops():
    # compact source, wide sponge: total energy sum(E^2 + (dE/dt)^2) must
    # not grow once injection ends. The functional tracks field plus
    # velocity only, so it sloshes against the (unmeasured) gradient term
    # at half the wave period; sampling every 0.5 time units compares
    # like phases and isolates the sponge's dissipation.
    cfg = SimulationConfig(
        sphere_radius=0.5,
        sphere_index=1.0,
        cell_extent=8.0,
        resolution=4,
        boundary_width=3.0,
        source_position=-1.0,
        source_size=(0.0, 2.0, 2.0),
        snapshot_interval=0.125,
        duration=8.0,
        source_stop_time=2.0,
    )
    med, damp = build_medium(cfg), sponge_profile(cfg)
    st = _zero_state(cfg)
    assert st.dt == pytest.approx(0.125)  # 0.5 is an exact step multiple
    energies = []
    for k in range(int(round(cfg.duration / st.dt))):
        st = step(st, med, damp, cfg)
        t = (k + 1) * st.dt
        if t > cfg.source_stop_time + 2 * st.dt and (k + 1) % 4 == 0:
            vel = (st.e_curr - st.e_prev) / st.dt
            energies.append(float(np.sum(st.e_curr**2 + vel**2)))
    energies = np.asarray(energies)
    rel_increase = np.diff(energies) / energies[:-1]
    assert rel_increase.max() <= 1e-6
