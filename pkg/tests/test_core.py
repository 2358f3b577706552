import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vesselsim.core import (
    BOLTZMANN,
    CylindricalCoord,
    Frame,
    Kind,
    NanoObject,
    SimClock,
    diffusion_coefficient,
    from_cylindrical,
    mass_of,
    to_cylindrical,
    vec3,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


def random_frame(rng: np.random.Generator) -> Frame:
    q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return Frame(origin=rng.normal(size=3), n=q[:, 0], o=q[:, 1], d=q[:, 2])


def test_default_frame_is_identity():
    f = Frame()
    assert np.array_equal(f.rotation, np.eye(3))
    p = vec3(1.0, 2.0, 3.0)
    assert np.array_equal(f.to_world(p), p)


def test_frame_rejects_non_unit_axes():
    with pytest.raises(ValueError):
        Frame(d=vec3(0, 0, 2), n=vec3(1, 0, 0), o=vec3(0, 1, 0))


def test_frame_rejects_non_orthogonal_axes():
    with pytest.raises(ValueError):
        Frame(
            d=vec3(0, 0, 1),
            n=vec3(1, 0, 0),
            o=vec3(math.sqrt(0.5), math.sqrt(0.5), 0),
        )


def test_frame_rejects_left_handed_triad():
    with pytest.raises(ValueError):
        Frame(d=vec3(0, 0, -1), n=vec3(1, 0, 0), o=vec3(0, 1, 0))


def test_world_local_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        f = random_frame(rng)
        p = rng.normal(size=3)
        assert np.allclose(f.to_local(f.to_world(p)), p, atol=1e-12)


def test_rotated_about_d_keeps_axis():
    rng = np.random.default_rng(1)
    f = random_frame(rng)
    g = f.rotated_about_d(0.7)
    assert np.allclose(g.d, f.d)
    assert abs(g.n @ f.n - math.cos(0.7)) < 1e-12


def test_cylindrical_roundtrip():
    rng = np.random.default_rng(2)
    for _ in range(100):
        f = random_frame(rng)
        p = rng.normal(size=3)
        back = from_cylindrical(to_cylindrical(p, f), f)
        assert np.allclose(back, p, atol=1e-9)


def test_on_axis_point_gets_phi_zero():
    f = Frame()
    c = to_cylindrical(vec3(0.0, 0.0, 4.2), f)
    assert c.phi == 0.0 and c.r == 0.0 and c.z == 4.2


@given(phi=angles, r=st.floats(1e-9, 1e3), z=finite)
def test_cylindrical_inverse_property(phi, r, z):
    f = Frame()
    c = to_cylindrical(from_cylindrical(CylindricalCoord(phi, r, z), f), f)
    assert math.isclose(c.r, r, rel_tol=1e-9)
    assert math.isclose(c.z, z, rel_tol=1e-9, abs_tol=1e-9)


def test_stokes_einstein_known_values():
    # 1.75 nm molecule and 1 um cell in plasma at body temperature.
    d_mol = diffusion_coefficient(1.75e-9, 310.0, 0.0013)
    d_cell = diffusion_coefficient(1e-6, 310.0, 0.0013)
    assert abs(d_mol - 9.98e-11) / 9.98e-11 < 1e-3
    assert abs(d_cell - 1.75e-13) / 1.75e-13 < 2e-3


def test_diffusion_rejects_bad_input():
    with pytest.raises(ValueError):
        diffusion_coefficient(0.0, 310.0, 0.0013)
    with pytest.raises(ValueError):
        diffusion_coefficient(1e-9, -1.0, 0.0013)


def test_mass_of_sphere():
    assert math.isclose(mass_of(1.0, 1.0), 4.0 * math.pi / 3.0)
    with pytest.raises(ValueError):
        mass_of(-1.0, 1.0)


def test_nano_object_validation():
    with pytest.raises(ValueError):
        NanoObject(0, Kind.CARRIER, vec3(0, 0, 0), -1e-9, vec3(0, 0, 0), 1.0)
    with pytest.raises(ValueError):
        NanoObject(0, Kind.CARRIER, vec3(0, 0, 0), 1e-9, vec3(0, 0, 0), 0.0)


def test_clock_time_is_step_times_dt():
    clock = SimClock(dt=5e-6)
    for _ in range(10):
        clock.tick()
    assert clock.step == 10
    assert clock.time == 10 * 5e-6
    with pytest.raises(ValueError):
        SimClock(dt=0.0)


def test_boltzmann_constant_value():
    assert BOLTZMANN == 1.380649e-23
