"""Partitioned execution over a grid of equal cubes.

The volume of interest is split into nx*ny*nz identical cubes.  Cube
faces are numbered like a die (opposite faces sum to 7):

    1 = +z   6 = -z
    2 = +y   5 = -y
    3 = +x   4 = -x

Objects that leave a cube travel one face-adjacent hop at a time
(x first, then y, then z) until they reach the cube containing their
center.  Each step has two synchronization points: entry into the step
(PENDING) and completion of its phase work (READY).

The wire protocol frames every message as

    u32 little-endian payload length | u8 frame type | payload

with frame types HELLO(1), ENVELOPE(2), GHOST(3), READY(4), PENDING(5),
ADVANCE(6), ABORT(7).  ENVELOPE and GHOST carry one object in a fixed
binary layout (id, kind, position, velocity, radius, mass, stream key,
counter); all control payloads are JSON.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .core import Kind
from .engine import Director, ObjectState, PartitionSim, PhaseOutcome, RunConfig, Scenario

# Die-face numbering: (axis, direction); opposite faces sum to 7.
FACE_AXES = {
    1: (2, +1),
    6: (2, -1),
    2: (1, +1),
    5: (1, -1),
    3: (0, +1),
    4: (0, -1),
}


class SplitError(ValueError):
    """The requested split does not produce identical cubes."""


@dataclass(frozen=True)
class GridTopology:
    """nx*ny*nz identical cubes tiling [lo, hi)."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    nx: int
    ny: int
    nz: int
    side: float

    @property
    def n_partitions(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def max_hops(self) -> int:
        return self.nx + self.ny + self.nz

    def index(self, ix: int, iy: int, iz: int) -> int:
        return ix + self.nx * (iy + self.ny * iz)

    def coords(self, p: int) -> tuple[int, int, int]:
        ix = p % self.nx
        iy = (p // self.nx) % self.ny
        iz = p // (self.nx * self.ny)
        return ix, iy, iz

    def bounds(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        ix, iy, iz = self.coords(p)
        lo = np.array(self.lo) + self.side * np.array([ix, iy, iz], dtype=float)
        return lo, lo + self.side

    def center(self, p: int) -> np.ndarray:
        lo, hi = self.bounds(p)
        return (lo + hi) / 2.0

    def locate(self, pos) -> int:
        """Partition whose cube contains ``pos`` (clamped to the grid)."""
        rel = (np.asarray(pos, dtype=float) - np.array(self.lo)) / self.side
        idx = np.clip(np.floor(rel).astype(int), 0, [self.nx - 1, self.ny - 1, self.nz - 1])
        return self.index(*idx)

    def neighbor(self, p: int, face: int) -> int | None:
        """Face-adjacent partition through a die face, or None at the hull."""
        axis, direction = FACE_AXES[face]
        c = list(self.coords(p))
        c[axis] += direction
        if not 0 <= c[axis] < self.shape[axis]:
            return None
        return self.index(*c)

    def route_face(self, p: int, target: int) -> int | None:
        """Die face of the next hop toward ``target`` (x, then y, then z)."""
        here = self.coords(p)
        there = self.coords(target)
        for axis, plus, minus in ((0, 3, 4), (1, 2, 5), (2, 1, 6)):
            if there[axis] > here[axis]:
                return plus
            if there[axis] < here[axis]:
                return minus
        return None

    def route(self, p: int, pos) -> int:
        """Next-hop partition for an object now at ``pos``."""
        target = self.locate(pos)
        face = self.route_face(p, target)
        if face is None:
            return p
        return self.neighbor(p, face)


def split_volume(lo, hi, nx: int, ny: int, nz: int) -> GridTopology:
    """Split [lo, hi) into identical cubes; rejects non-cubic splits."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise SplitError("empty volume")
    if min(nx, ny, nz) < 1:
        raise SplitError("counts must be positive")
    sides = (hi - lo) / np.array([nx, ny, nz], dtype=float)
    if not np.allclose(sides, sides[0], rtol=1e-12, atol=0.0):
        raise SplitError(f"split produces boxes of sides {sides}, not cubes")
    return GridTopology(lo=tuple(lo), hi=tuple(hi), nx=nx, ny=ny, nz=nz, side=float(sides[0]))


# ---------------------------------------------------------------------------
# Wire protocol

HELLO = 1
ENVELOPE = 2
GHOST = 3
READY = 4
PENDING = 5
ADVANCE = 6
ABORT = 7

_HEADER = struct.Struct("<IB")
# id, kind, pos*3, vel*3, radius, mass, stream key, counter
_OBJECT = struct.Struct("<qB8dqI")


def pack_object(s: ObjectState) -> bytes:
    return _OBJECT.pack(
        s.id,
        int(s.kind),
        *(float(v) for v in s.pos),
        *(float(v) for v in s.vel),
        s.radius,
        s.mass,
        s.stream_key,
        s.counter,
    )


def unpack_object(payload: bytes) -> ObjectState:
    vals = _OBJECT.unpack(payload)
    return ObjectState(
        id=vals[0],
        kind=Kind(vals[1]),
        pos=np.array(vals[2:5]),
        vel=np.array(vals[5:8]),
        radius=vals[8],
        mass=vals[9],
        stream_key=vals[10],
        counter=vals[11],
    )


class Connection:
    """Framed, length-prefixed messaging over a stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._lock = threading.Lock()

    def send(self, frame_type: int, payload: bytes = b"") -> None:
        with self._lock:
            self.sock.sendall(_HEADER.pack(len(payload), frame_type) + payload)

    def send_json(self, frame_type: int, obj) -> None:
        self.send(frame_type, json.dumps(obj).encode())

    def _read_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("peer closed the connection")
            buf += chunk
        return buf

    def recv(self) -> tuple[int, bytes]:
        length, frame_type = _HEADER.unpack(self._read_exact(_HEADER.size))
        return frame_type, self._read_exact(length)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _states_to_rows(snapshot):
    return [[oid, r, [float(v) for v in c]] for oid, r, c in snapshot]


def _rows_to_states(rows):
    return [(int(oid), float(r), np.array(c)) for oid, r, c in rows]


def serve_partition(conn: Connection, scenario: Scenario, config: RunConfig, bounds) -> None:
    """Worker loop: hosts one partition and answers coordinator frames.

    Step choreography per coordinator request: acknowledge entry with
    PENDING, stream any object frames, then report completion with READY.
    """
    part = PartitionSim(scenario, config, bounds=bounds)
    ghosts: list[ObjectState] = []
    while True:
        frame_type, payload = conn.recv()
        if frame_type == ABORT:
            return
        if frame_type == HELLO:
            conn.send_json(HELLO, {"bounds": [list(map(float, b)) for b in bounds] if bounds else None})
            continue
        if frame_type == ENVELOPE:
            part.insert_states([unpack_object(payload)])
            continue
        if frame_type == GHOST:
            ghosts.append(unpack_object(payload))
            continue
        if frame_type != ADVANCE:
            conn.send_json(ABORT, {"error": f"unexpected frame {frame_type}"})
            return
        msg = json.loads(payload.decode())
        op = msg["op"]
        if op in ("motion", "pairs"):
            conn.send_json(PENDING, {"step": msg.get("step", -1), "op": op})
        if op == "live_counts":
            conn.send_json(READY, {str(int(k)): v for k, v in part.live_counts().items()})
        elif op == "slab":
            conn.send_json(READY, {"rows": _states_to_rows(part.slab_snapshot())})
        elif op == "near":
            rows = part.snapshot_near(np.array(msg["point"]), msg["reach"])
            conn.send_json(READY, {"rows": _states_to_rows(rows)})
        elif op == "moves":
            part.apply_moves([(int(oid), np.array(pos)) for oid, pos in msg["moves"]])
            conn.send_json(READY, {})
        elif op == "remove":
            removed = part.remove_ids(msg["ids"])
            for s in removed:
                conn.send(ENVELOPE, pack_object(s))
            conn.send_json(READY, {"n": len(removed)})
        elif op == "leavers":
            out = part.take_leavers()
            for s in out:
                conn.send(ENVELOPE, pack_object(s))
            conn.send_json(READY, {"n": len(out)})
        elif op == "motion":
            outcome = part.motion_and_walls(msg["step"])
            conn.send_json(
                READY,
                {
                    "exited": {str(int(k)): v for k, v in outcome.exited.items()},
                    "assim": outcome.assim_events,
                    "absorbed": outcome.absorbed_events,
                },
            )
        elif op == "pairs":
            outcome = PhaseOutcome()
            part.pair_phase(msg["step"], ghosts, outcome)
            ghosts = []
            conn.send_json(
                READY,
                {"assim": outcome.assim_events, "absorbed": outcome.absorbed_events},
            )
        elif op == "compact":
            part.compact()
            conn.send_json(READY, {})
        elif op == "dump":
            for s in part.dump_states():
                conn.send(ENVELOPE, pack_object(s))
            conn.send_json(READY, {})
        else:
            conn.send_json(ABORT, {"error": f"unknown op {op}"})
            return


class RemotePartition:
    """Coordinator-side proxy with the PartitionSim phase interface."""

    def __init__(self, conn: Connection):
        self.conn = conn

    def _call(self, op: str, **kw):
        self.conn.send_json(ADVANCE, {"op": op, **kw})
        states = []
        while True:
            frame_type, payload = self.conn.recv()
            if frame_type == ENVELOPE:
                states.append(unpack_object(payload))
            elif frame_type == PENDING:
                continue  # step-entry acknowledgement
            elif frame_type == READY:
                return json.loads(payload.decode()) if payload else {}, states
            elif frame_type == ABORT:
                raise RuntimeError(json.loads(payload.decode()).get("error", "aborted"))
            else:
                raise RuntimeError(f"unexpected frame {frame_type}")

    def hello(self):
        self.conn.send_json(HELLO, {})
        frame_type, payload = self.conn.recv()
        if frame_type != HELLO:
            raise RuntimeError("handshake failed")
        return json.loads(payload.decode())

    def live_counts(self):
        reply, _ = self._call("live_counts")
        return {Kind(int(k)): v for k, v in reply.items()}

    def slab_snapshot(self):
        reply, _ = self._call("slab")
        return _rows_to_states(reply["rows"])

    def snapshot_near(self, point, reach):
        reply, _ = self._call("near", point=[float(v) for v in point], reach=float(reach))
        return _rows_to_states(reply["rows"])

    def apply_moves(self, moves):
        self._call("moves", moves=[[int(oid), [float(v) for v in pos]] for oid, pos in moves])

    def remove_ids(self, ids):
        _, states = self._call("remove", ids=[int(i) for i in ids])
        return states

    def insert_states(self, states):
        for s in states:
            self.conn.send(ENVELOPE, pack_object(s))

    def take_leavers(self):
        _, states = self._call("leavers")
        return states

    def motion_and_walls(self, step: int) -> PhaseOutcome:
        reply, _ = self._call("motion", step=step)
        out = PhaseOutcome()
        out.exited = {Kind(int(k)): v for k, v in reply["exited"].items()}
        out.assim_events = [tuple(e) for e in reply["assim"]]
        out.absorbed_events = list(reply["absorbed"])
        return out

    def states_near_box(self, lo, hi, reach):
        # Ghost collection reuses the removal-free snapshot path: ask the
        # worker for a dump and filter here.  Cheap at test scales; a
        # production deployment would filter worker-side.
        _, states = self._call("dump")
        lo = np.asarray(lo) - reach
        hi = np.asarray(hi) + reach
        return [s for s in states if np.all(s.pos >= lo) and np.all(s.pos < hi)]

    def send_ghosts(self, ghosts):
        for g in ghosts:
            self.conn.send(GHOST, pack_object(g))

    def pair_phase(self, step: int, ghosts, outcome: PhaseOutcome) -> None:
        self.send_ghosts(ghosts)
        reply, _ = self._call("pairs", step=step)
        outcome.assim_events.extend(tuple(e) for e in reply["assim"])
        outcome.absorbed_events.extend(reply["absorbed"])

    def compact(self):
        self._call("compact")

    def dump_states(self):
        _, states = self._call("dump")
        return states

    def shutdown(self):
        try:
            self.conn.send_json(ABORT, {})
        except (OSError, ConnectionError):
            pass
        self.conn.close()


class WireCluster:
    """In-process cluster: one worker thread and socket pair per cube.

    Exchanges every object and control message through the byte protocol,
    so a run through this cluster exercises exactly what separate worker
    processes would send over TCP.
    """

    def __init__(self, scenario: Scenario, config: RunConfig, topology: GridTopology):
        self.proxies: list[RemotePartition] = []
        self.threads: list[threading.Thread] = []
        for p in range(topology.n_partitions):
            a, b = socket.socketpair()
            worker = threading.Thread(
                target=serve_partition,
                args=(Connection(b), scenario, config, topology.bounds(p)),
                daemon=True,
            )
            worker.start()
            proxy = RemotePartition(Connection(a))
            proxy.hello()
            self.proxies.append(proxy)
            self.threads.append(worker)

    def partition_factory(self, p: int, bounds) -> RemotePartition:
        return self.proxies[p]

    def shutdown(self) -> None:
        for proxy in self.proxies:
            proxy.shutdown()
        for t in self.threads:
            t.join(timeout=5.0)


def grid_director(
    scenario: Scenario,
    config: RunConfig,
    topology: GridTopology,
    over_wire: bool = False,
):
    """Director over grid partitions; in-process or through the protocol.

    Returns (director, cluster); ``cluster`` is None unless ``over_wire``.
    """
    if not over_wire:
        return Director(scenario, config, topology=topology), None
    cluster = WireCluster(scenario, config, topology)
    director = Director(
        scenario, config, topology=topology, partition_factory=cluster.partition_factory
    )
    return director, cluster


def vessel_grid(scenario: Scenario, nx: int, ny: int, nz: int, padding: float = 0.0) -> GridTopology:
    """Equal-cube grid covering the vessel (plus optional padding).

    The box is sized so that the split yields identical cubes; it is
    centered on the vessel axis.
    """
    r = scenario.vessel.radius + padding
    half_len = scenario.vessel.length / 2.0 + padding
    # Smallest cube side accommodating every axis requirement.
    side = max(2.0 * r / nx, 2.0 * r / ny, 2.0 * half_len / nz)
    half = np.array([nx * side / 2.0, ny * side / 2.0, nz * side / 2.0])
    return split_volume(-half, half, nx, ny, nz)


def states_digest(states: list[ObjectState]) -> bytes:
    """Canonical byte digest of an id-sorted object set."""
    import hashlib

    h = hashlib.sha256()
    for s in sorted(states, key=lambda s: s.id):
        h.update(pack_object(s))
    return h.digest()


def assert_equivalent(single: Director, gridded: Director) -> None:
    """Bit-equivalence check between two runs of the same scenario."""
    a = states_digest(single.all_states())
    b = states_digest(gridded.all_states())
    if a != b:
        raise AssertionError("object states diverged between runs")
    if single.counters != gridded.counters:
        raise AssertionError(
            f"counters diverged: {single.counters} vs {gridded.counters}"
        )
