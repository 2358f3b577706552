import math

import numpy as np
import pytest

from vesselsim.core import Frame, Kind, NanoObject, SimClock, diffusion_coefficient, vec3
from vesselsim.motion import (
    FlowProfile,
    advance,
    advance_arrays,
    brownian_displacement,
    brownian_sigma,
    poiseuille_velocity,
)

T = 310.0
ETA = 0.0013


def make_profile(v_mean=0.5e-3, radius=30e-6):
    return FlowProfile(v_mean=v_mean, vessel_radius=radius, axis=Frame())


def test_profile_centerline_and_wall():
    p = make_profile()
    assert math.isclose(poiseuille_velocity(0.0, p), 2.0 * p.v_mean)
    assert poiseuille_velocity(p.vessel_radius, p) == 0.0
    # Half radius: 2 v (1 - 1/4) = 1.5 v.
    assert math.isclose(poiseuille_velocity(15e-6, p), 1.5 * p.v_mean)


def test_profile_clamps_outside_wall():
    p = make_profile()
    assert poiseuille_velocity(31e-6, p) == 0.0
    assert p.clamped_count == 1


def test_profile_validation():
    with pytest.raises(ValueError):
        FlowProfile(v_mean=-1.0, vessel_radius=1.0, axis=Frame())
    with pytest.raises(ValueError):
        FlowProfile(v_mean=1.0, vessel_radius=0.0, axis=Frame())


def test_brownian_sigma_formula():
    d = diffusion_coefficient(1.75e-9, T, ETA)
    assert math.isclose(brownian_sigma(d, 5e-6), math.sqrt(2.0 * d * 5e-6))


def test_brownian_displacement_is_reproducible():
    obj = NanoObject(3, Kind.CARRIER, vec3(0, 0, 0), 1.75e-9, np.zeros(3), 1e-20)
    clock = SimClock(step=17)
    a = brownian_displacement(obj, 5e-6, clock, 42, T, ETA)
    b = brownian_displacement(obj, 5e-6, clock, 42, T, ETA)
    assert np.array_equal(a, b)
    clock.tick()
    c = brownian_displacement(obj, 5e-6, clock, 42, T, ETA)
    assert not np.array_equal(a, c)


def test_advance_imposes_local_drift():
    p = make_profile()
    obj = NanoObject(0, Kind.RED_CELL, vec3(0, 0, 0), 3.5e-6, np.zeros(3), 1e-13)
    advance(obj, p, 5e-6, SimClock(step=0), 1, T, ETA)
    assert math.isclose(obj.velocity[2], 2.0 * p.v_mean)
    assert obj.velocity[0] == 0.0 and obj.velocity[1] == 0.0


def test_advance_arrays_matches_scalar_bitwise():
    p = make_profile()
    rng = np.random.default_rng(0)
    n = 40
    pos = np.column_stack(
        [
            rng.uniform(-20e-6, 20e-6, n),
            rng.uniform(-20e-6, 20e-6, n),
            rng.uniform(-50e-6, 50e-6, n),
        ]
    )
    ids = np.arange(10, 10 + n)
    radii = rng.uniform(1e-9, 5e-6, n)
    new_pos, vel = advance_arrays(pos.copy(), ids, radii, p, 5e-6, 123, 77, T, ETA)
    clock = SimClock(step=123)
    for k in range(n):
        obj = NanoObject(int(ids[k]), Kind.CARRIER, pos[k].copy(), float(radii[k]), np.zeros(3), 1.0)
        advance(obj, p, 5e-6, clock, 77, T, ETA)
        assert np.array_equal(obj.center, new_pos[k])
        assert np.array_equal(obj.velocity, vel[k])


def test_advance_arrays_row_independent():
    # Any subset, advanced alone, reproduces the same rows.
    p = make_profile()
    rng = np.random.default_rng(1)
    pos = rng.uniform(-10e-6, 10e-6, size=(30, 3))
    ids = np.arange(30)
    radii = np.full(30, 1e-6)
    full, _ = advance_arrays(pos, ids, radii, p, 5e-6, 5, 0, T, ETA)
    sel = np.array([3, 7, 20, 28])
    part, _ = advance_arrays(pos[sel], ids[sel], radii[sel], p, 5e-6, 5, 0, T, ETA)
    assert np.array_equal(full[sel], part)


def test_free_diffusion_msd():
    # Pure diffusion (no drift): mean squared displacement = 6 D t.
    radius = 1.75e-9
    d = diffusion_coefficient(radius, T, ETA)
    dt = 5e-6
    steps = 400
    n = 4000
    p = FlowProfile(v_mean=0.0, vessel_radius=1.0, axis=Frame())
    pos = np.zeros((n, 3))
    ids = np.arange(n)
    radii = np.full(n, radius)
    for step in range(steps):
        pos, _ = advance_arrays(pos, ids, radii, p, dt, step, 99, T, ETA)
    msd = float(np.mean(np.sum(pos**2, axis=1)))
    expected = 6.0 * d * steps * dt
    assert abs(msd - expected) / expected < 0.05


def test_drift_accumulates_along_axis():
    p = make_profile()
    pos = np.zeros((1, 3))
    for step in range(100):
        pos, _ = advance_arrays(pos, np.array([0]), np.array([3.5e-6]), p, 5e-6, step, 0, T, ETA)
    # Near the axis the drift is ~2 v_mean; diffusion is tiny for a cell.
    assert abs(pos[0, 2] - 2.0 * p.v_mean * 100 * 5e-6) < 0.1 * 2.0 * p.v_mean * 100 * 5e-6
