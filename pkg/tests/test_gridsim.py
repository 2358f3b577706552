import socket

import numpy as np
import pytest

from vesselsim.core import Kind
from vesselsim.engine import Director, ObjectState, RunConfig
from vesselsim.gridsim import (
    ABORT,
    ADVANCE,
    ENVELOPE,
    FACE_AXES,
    GHOST,
    HELLO,
    PENDING,
    READY,
    Connection,
    SplitError,
    assert_equivalent,
    grid_director,
    pack_object,
    split_volume,
    states_digest,
    unpack_object,
    vessel_grid,
)
from helpers import small_scenario


# -- topology ----------------------------------------------------------


def test_split_requires_identical_cubes():
    topo = split_volume([0, 0, 0], [4.0, 2.0, 2.0], 2, 1, 1)
    assert topo.side == 2.0
    assert topo.n_partitions == 2
    with pytest.raises(SplitError):
        split_volume([0, 0, 0], [4.0, 2.0, 2.0], 1, 1, 1)
    with pytest.raises(SplitError):
        split_volume([0, 0, 0], [0.0, 2.0, 2.0], 1, 1, 1)


def test_die_faces_opposite_sum_to_seven():
    for face, (axis, direction) in FACE_AXES.items():
        other_axis, other_dir = FACE_AXES[7 - face]
        assert other_axis == axis
        assert other_dir == -direction


def test_neighbors_follow_die_faces():
    topo = split_volume([0, 0, 0], [3.0, 3.0, 3.0], 3, 3, 3)
    center = topo.index(1, 1, 1)
    assert topo.neighbor(center, 3) == topo.index(2, 1, 1)  # +x
    assert topo.neighbor(center, 4) == topo.index(0, 1, 1)  # -x
    assert topo.neighbor(center, 2) == topo.index(1, 2, 1)  # +y
    assert topo.neighbor(center, 5) == topo.index(1, 0, 1)  # -y
    assert topo.neighbor(center, 1) == topo.index(1, 1, 2)  # +z
    assert topo.neighbor(center, 6) == topo.index(1, 1, 0)  # -z
    corner = topo.index(0, 0, 0)
    assert topo.neighbor(corner, 4) is None
    assert topo.neighbor(corner, 6) is None


def test_locate_and_bounds_are_consistent():
    topo = split_volume([-1, -1, -1], [1.0, 1.0, 1.0], 2, 2, 2)
    for p in range(topo.n_partitions):
        lo, hi = topo.bounds(p)
        center = (lo + hi) / 2.0
        assert topo.locate(center) == p
    # Clamping keeps out-of-volume points addressable.
    assert topo.locate([5.0, 5.0, 5.0]) == topo.index(1, 1, 1)


def test_routing_reaches_any_target_within_max_hops():
    topo = split_volume([0, 0, 0], [4.0, 4.0, 4.0], 4, 4, 4)
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = int(rng.integers(topo.n_partitions))
        pos = rng.uniform(0.0, 4.0, size=3)
        target = topo.locate(pos)
        hops = 0
        while p != target:
            nxt = topo.route(p, pos)
            assert nxt != p
            # Hops are face-adjacent only.
            assert any(topo.neighbor(p, f) == nxt for f in FACE_AXES)
            p = nxt
            hops += 1
            assert hops <= topo.max_hops
        assert p == target


def test_multi_hop_diagonal_transfer():
    # An object two cubes away diagonally needs one x hop then one y hop.
    topo = split_volume([0, 0, 0], [3.0, 3.0, 1.0], 3, 3, 1)
    start = topo.index(0, 0, 0)
    pos = [2.5, 2.5, 0.5]
    first = topo.route(start, pos)
    assert first == topo.index(1, 0, 0)
    second = topo.route(first, pos)
    assert second == topo.index(2, 0, 0)
    third = topo.route(second, pos)
    assert third == topo.index(2, 1, 0)


def test_director_transfer_handles_multi_hop():
    sc = small_scenario(burst=0, scale=0.0)
    topo = vessel_grid(sc, 3, 3, 1)
    cfg = RunConfig(steps=1, seed=0)
    director = Director(sc, cfg, topology=topo, seed_objects=False)
    lo, _ = topo.bounds(0)
    stray = ObjectState(
        id=0, kind=Kind.PLATELET, pos=np.array([20e-6, 20e-6, 0.0]),
        vel=np.zeros(3), radius=1e-6, mass=1e-15,
    )
    # Insert into the wrong corner partition and let routing repatriate it.
    director.partitions[0].insert_states([stray])
    assert director.partitions[0].leaver_ids() == [0]
    director._transfer()
    owner = topo.locate(stray.pos)
    assert [s.id for s in director.partitions[owner].dump_states()] == [0]


# -- wire protocol -----------------------------------------------------


def test_object_codec_roundtrip_is_bit_exact():
    s = ObjectState(
        id=123456789,
        kind=Kind.WHITE_CELL,
        pos=np.array([1e-6, -2.5e-7, np.nextafter(3e-5, 0.0)]),
        vel=np.array([-1e-3, 5e-4, 0.0]),
        radius=5e-6,
        mass=5.23e-13,
        stream_key=42,
        counter=7,
    )
    payload = pack_object(s)
    back = unpack_object(payload)
    assert back.id == s.id and back.kind is s.kind
    assert np.array_equal(back.pos, s.pos)
    assert np.array_equal(back.vel, s.vel)
    assert back.radius == s.radius and back.mass == s.mass
    assert back.stream_key == 42 and back.counter == 7
    assert pack_object(back) == payload


def test_frame_layout_on_the_wire():
    a, b = socket.socketpair()
    ca, cb = Connection(a), Connection(b)
    ca.send(READY, b"abc")
    raw = b.recv(16)
    # u32 little-endian length, u8 type, then the payload.
    assert raw[:4] == (3).to_bytes(4, "little")
    assert raw[4] == READY
    assert raw[5:] == b"abc"
    ca.send_json(ADVANCE, {"op": "x"})
    frame_type, payload = cb.recv()
    assert frame_type == ADVANCE
    ca.close()
    cb.close()


def test_connection_detects_peer_close():
    a, b = socket.socketpair()
    ca, cb = Connection(a), Connection(b)
    ca.close()
    with pytest.raises(ConnectionError):
        cb.recv()
    cb.close()


def test_frame_type_constants():
    assert (HELLO, ENVELOPE, GHOST, READY, PENDING, ADVANCE, ABORT) == (
        1, 2, 3, 4, 5, 6, 7,
    )


# -- equivalence -------------------------------------------------------


def run_single(steps=20, seed=7):
    director = Director(small_scenario(seed=seed), RunConfig(steps=steps, seed=seed))
    director.run()
    return director


def test_grid_matches_single_partition():
    single = run_single()
    for split in ((2, 1, 1), (2, 2, 1)):
        sc = small_scenario()
        topo = vessel_grid(sc, *split)
        director, _ = grid_director(sc, RunConfig(steps=20, seed=7), topo)
        director.run()
        assert_equivalent(single, director)


def test_wire_cluster_matches_single_partition():
    single = run_single()
    sc = small_scenario()
    topo = vessel_grid(sc, 2, 1, 1)
    director, cluster = grid_director(sc, RunConfig(steps=20, seed=7), topo, over_wire=True)
    director.run()
    assert_equivalent(single, director)
    cluster.shutdown()


def test_states_digest_detects_changes():
    s = [
        ObjectState(id=1, kind=Kind.CARRIER, pos=np.zeros(3), vel=np.zeros(3), radius=1e-9, mass=1e-20)
    ]
    a = states_digest(s)
    s[0].pos = np.array([1e-12, 0.0, 0.0])
    assert states_digest(s) != a
