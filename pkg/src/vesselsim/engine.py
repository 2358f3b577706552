"""Discrete time-step orchestration.

Each step runs a fixed phase list: transmission (burst emission and
continuous creation), reception (folding queued assimilation events),
information processing (threshold decoding), motion, destruction,
and collision management (wall handling, then pair resolution).

The same per-partition executor drives both the single-volume mode and
the partitioned mode; a Director coordinates one or more partitions in
lock step and owns all global state (receiver counters, conservation
ledger, result series).  Every phase is either pure per object or folded
in a canonical id order, so results are bit-identical for any worker
count and any partition count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import collision, motion, reception, vessel as vessel_mod
from .collision import CylinderGeom, Surface
from .core import Frame, Kind, NanoObject, mass_of, to_cylindrical, vec3
from .motion import FlowProfile
from .reception import ReceiverState
from .vessel import (
    BloodSpec,
    EndothelialCell,
    EndotheliumPlan,
    TransmitterSpec,
    VesselSpec,
)

PHASE_LIST = (
    "Transmission",
    "Reception",
    "InformationProcessing",
    "Motion",
    "Destruction",
    "CollisionCheck",
    "Relocation",
)


class InvariantError(RuntimeError):
    """A conservation or containment invariant was violated."""


@dataclass
class RunConfig:
    steps: int
    dt: float = 5e-6
    seed: int = 0
    workers: int = 1
    fanout: int = 4
    checkpoint_every: int = 0
    collect_series: bool = True

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.fanout < 1:
            raise ValueError("fanout must be at least 1")


@dataclass
class ObjectState:
    """Transferable object record (also the checkpoint/wire unit)."""

    id: int
    kind: Kind
    pos: np.ndarray
    vel: np.ndarray
    radius: float
    mass: float
    stream_key: int = -1
    counter: int = 0

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.float64)
        self.vel = np.asarray(self.vel, dtype=np.float64)
        if self.stream_key < 0:
            self.stream_key = self.id


@dataclass
class Scenario:
    """Global, read-only description of one simulated experiment."""

    vessel: VesselSpec
    plan: EndotheliumPlan
    cells: list[EndothelialCell]
    blood: BloodSpec
    transmitter: TransmitterSpec
    thresholds: list[int]
    temperature: float = 310.0
    viscosity: float = 0.0013
    density: float = 1000.0
    v_mean: float = 0.5e-3
    pair_restitution: float = 0.6
    carrier_carrier: bool = True
    maintain: bool = True
    white_receptors: int = 1000

    def __post_init__(self):
        self.geom = CylinderGeom(
            frame=Frame(), radius=self.vessel.radius, height=self.vessel.length
        )
        self.profile = FlowProfile(
            v_mean=self.v_mean, vessel_radius=self.vessel.radius, axis=self.geom.frame
        )
        self._white_receptor_cache: dict[int, np.ndarray] = {}
        self._endo_start = -self.vessel.length / 2.0 + self.vessel.lead_in
        self._cell_grid = {}
        for cell in self.cells:
            self._cell_grid[(cell.ring, cell.index)] = cell

    def kind_radius(self, kind: Kind) -> float:
        if kind is Kind.CARRIER:
            return self.transmitter.carrier_radius
        return self.blood.radii[kind]

    def kind_mass(self, kind: Kind) -> float:
        return mass_of(self.kind_radius(kind), self.density)

    def cell_at(self, phi: float, z: float) -> EndothelialCell | None:
        """Receiver cell owning a wall point, or None off the endothelium."""
        if self.plan.rings == 0:
            return None
        ring = math.floor((z - self._endo_start) / self.plan.cell_width)
        if not 0 <= ring < self.plan.rings:
            return None
        pitch = 2.0 * math.pi / self.plan.n_cells_ring
        index = round(phi / pitch) % self.plan.n_cells_ring
        return self._cell_grid.get((ring, index))

    def white_receptor_offsets(self, object_id: int, seed: int) -> np.ndarray:
        got = self._white_receptor_cache.get(object_id)
        if got is None:
            got = reception.white_cell_receptors(
                object_id,
                self.white_receptors,
                self.blood.radii[Kind.WHITE_CELL],
                seed,
            )
            self._white_receptor_cache[object_id] = got
        return got


def build_scenario(
    vessel_spec: VesselSpec,
    blood: BloodSpec,
    transmitter: TransmitterSpec,
    thresholds: list[int],
    seed: int,
    **physics,
) -> Scenario:
    plan, cells = vessel_mod.build_endothelium(vessel_spec, seed)
    return Scenario(
        vessel=vessel_spec,
        plan=plan,
        cells=cells,
        blood=blood,
        transmitter=transmitter,
        thresholds=list(thresholds),
        **physics,
    )


class World:
    """Struct-of-arrays object storage for one partition."""

    def __init__(self):
        self.ids = np.zeros(0, dtype=np.int64)
        self.kind = np.zeros(0, dtype=np.int8)
        self.pos = np.zeros((0, 3))
        self.vel = np.zeros((0, 3))
        self.radius = np.zeros(0)
        self.mass = np.zeros(0)
        self.alive = np.zeros(0, dtype=bool)
        self.prev = np.zeros((0, 3))

    def __len__(self):
        return int(np.count_nonzero(self.alive))

    def insert(self, states: list[ObjectState]) -> None:
        if not states:
            return
        self.ids = np.concatenate([self.ids, [s.id for s in states]])
        self.kind = np.concatenate(
            [self.kind, np.array([int(s.kind) for s in states], dtype=np.int8)]
        )
        self.pos = np.vstack([self.pos, [s.pos for s in states]])
        self.vel = np.vstack([self.vel, [s.vel for s in states]])
        self.radius = np.concatenate([self.radius, [s.radius for s in states]])
        self.mass = np.concatenate([self.mass, [s.mass for s in states]])
        self.alive = np.concatenate([self.alive, np.ones(len(states), dtype=bool)])
        self.prev = np.vstack([self.prev, [s.pos for s in states]])

    def state_of(self, row: int) -> ObjectState:
        return ObjectState(
            id=int(self.ids[row]),
            kind=Kind(int(self.kind[row])),
            pos=self.pos[row].copy(),
            vel=self.vel[row].copy(),
            radius=float(self.radius[row]),
            mass=float(self.mass[row]),
        )

    def compact(self) -> None:
        keep = self.alive
        self.ids = self.ids[keep]
        self.kind = self.kind[keep]
        self.pos = self.pos[keep]
        self.vel = self.vel[keep]
        self.radius = self.radius[keep]
        self.mass = self.mass[keep]
        self.prev = self.prev[keep]
        self.alive = np.ones(len(self.ids), dtype=bool)

    def live_counts(self) -> dict[Kind, int]:
        counts = {k: 0 for k in Kind}
        kinds, n = np.unique(self.kind[self.alive], return_counts=True)
        for k, c in zip(kinds, n):
            counts[Kind(int(k))] = int(c)
        return counts


def partition_worklists(object_ids, workers: int, fanout: int) -> list[list[int]]:
    """Split ids into fanout*workers near-equal sublists, deterministically.

    Sizes differ by at most one; ids are assigned in sorted order.
    """
    if workers < 1 or fanout < 1:
        raise ValueError("workers and fanout must be at least 1")
    ids = sorted(int(i) for i in object_ids)
    n_lists = workers * fanout
    base, extra = divmod(len(ids), n_lists)
    out = []
    start = 0
    for i in range(n_lists):
        size = base + (1 if i < extra else 0)
        out.append(ids[start : start + size])
        start += size
    return out


@dataclass
class StepReport:
    step: int
    time: float
    live: dict[Kind, int]
    created: dict[Kind, int]
    assimilated: int  # cumulative endothelial assimilations
    absorbed: int  # cumulative white-cell absorptions
    exited_carriers: int  # cumulative carriers absorbed at the end caps
    emitted: int
    activated: dict[int, int]  # threshold -> activated-cell count


@dataclass
class PhaseOutcome:
    """Mutable per-step tallies produced by one partition."""

    exited: dict[Kind, int] = field(default_factory=lambda: {k: 0 for k in Kind})
    assim_events: list[tuple[int, int, int]] = field(default_factory=list)
    absorbed_events: list[int] = field(default_factory=list)


class PartitionSim:
    """Phase executor for one partition's objects.

    Every method is a pure function of (scenario, seed, step, own
    objects, ghosts); no hidden cross-partition state.
    """

    def __init__(self, scenario: Scenario, config: RunConfig, bounds=None):
        self.scenario = scenario
        self.config = config
        self.bounds = bounds  # (lo, hi) arrays or None for the whole volume
        self.world = World()

    # -- snapshots -----------------------------------------------------

    def live_counts(self):
        return self.world.live_counts()

    def slab_snapshot(self) -> list[tuple[int, float, np.ndarray]]:
        w = self.world
        z_hi = -self.scenario.vessel.length / 2.0 + self.scenario.blood.creation_slab
        mask = w.alive & (w.pos[:, 2] <= z_hi)
        rows = np.flatnonzero(mask)
        return [
            (int(w.ids[r]), float(w.radius[r]), w.pos[r].copy()) for r in rows
        ]

    def snapshot_near(self, point, reach) -> list[tuple[int, float, np.ndarray]]:
        w = self.world
        mask = w.alive & (
            np.linalg.norm(w.pos - np.asarray(point), axis=1) <= reach
        )
        rows = np.flatnonzero(mask)
        return [
            (int(w.ids[r]), float(w.radius[r]), w.pos[r].copy()) for r in rows
        ]

    def apply_moves(self, moves: list[tuple[int, np.ndarray]]) -> None:
        w = self.world
        index = {int(i): r for r, i in enumerate(w.ids)}
        for oid, pos in moves:
            r = index.get(oid)
            if r is not None and w.alive[r]:
                w.pos[r] = pos
                w.prev[r] = pos

    def remove_ids(self, ids) -> list[ObjectState]:
        """Detach objects (for transfer); returns their states."""
        w = self.world
        index = {int(i): r for r, i in enumerate(w.ids)}
        out = []
        for oid in ids:
            r = index.get(int(oid))
            if r is not None and w.alive[r]:
                out.append(w.state_of(r))
                w.alive[r] = False
        return out

    def leaver_ids(self) -> list[int]:
        if self.bounds is None:
            return []
        lo, hi = self.bounds
        w = self.world
        outside = w.alive & np.any((w.pos < lo) | (w.pos >= hi), axis=1)
        return [int(i) for i in w.ids[outside]]

    # -- phases --------------------------------------------------------

    def motion_and_walls(self, step: int) -> PhaseOutcome:
        """Motion phase, destruction at the end caps, and wall handling.

        All work here is per object, so the result does not depend on
        how objects are distributed over partitions or worklists.
        """
        out = PhaseOutcome()
        w = self.world
        rows = np.flatnonzero(w.alive)
        if rows.size == 0:
            return out
        sc = self.scenario
        w.prev[rows] = w.pos[rows]

        worklists = partition_worklists(
            range(rows.size), self.config.workers, self.config.fanout
        )
        for chunk in worklists:
            if not chunk:
                continue
            sel = rows[np.asarray(chunk)]
            new_pos, vel = motion.advance_arrays(
                w.pos[sel],
                w.ids[sel],
                w.radius[sel],
                sc.profile,
                self.config.dt,
                step,
                self.config.seed,
                sc.temperature,
                sc.viscosity,
            )
            w.pos[sel] = new_pos
            w.vel[sel] = vel

        self._resolve_walls(rows, step, out)
        return out

    def _resolve_walls(self, rows, step: int, out: PhaseOutcome) -> None:
        sc = self.scenario
        geom = sc.geom
        w = self.world
        dt = self.config.dt
        half_h = sc.vessel.length / 2.0

        radial = np.hypot(w.pos[rows, 0], w.pos[rows, 1])
        side = radial + w.radius[rows] >= geom.radius
        caps = np.abs(w.pos[rows, 2]) + w.radius[rows] >= half_h
        flagged = rows[side | caps]
        # Ascending-id order for reproducibility (no cross effects anyway).
        flagged = flagged[np.argsort(w.ids[flagged])]

        for r in flagged:
            self._wall_loop(int(r), step, out, geom, half_h, dt)

    def _wall_loop(self, r: int, step: int, out: PhaseOutcome, geom, half_h, dt) -> None:
        sc = self.scenario
        w = self.world
        e = sc.vessel.wall_restitution
        seg_start = w.prev[r].copy()
        seg_end = w.pos[r].copy()
        radius = float(w.radius[r])
        kind = Kind(int(w.kind[r]))
        dt_seg = dt

        for _ in range(64):
            hit = collision.first_wall_hit(seg_start, seg_end, radius, geom)
            if hit is None:
                break
            if hit.surface in (Surface.TOP, Surface.BOTTOM):
                # End caps absorb: the object leaves the section.
                w.alive[r] = False
                out.exited[kind] += 1
                return
            if kind is Kind.CARRIER:
                coord = to_cylindrical(hit.impact_point, geom.frame)
                cell = sc.cell_at(coord.phi, coord.z)
                if cell is not None:
                    rec = reception.assimilation_test(
                        hit.impact_point,
                        cell,
                        sc.vessel.receptor_radius,
                        radius,
                    )
                    if rec is not None:
                        w.alive[r] = False
                        out.assim_events.append((cell.id, rec, int(w.ids[r])))
                        return
            frame = collision.surface_frame(hit, geom)
            delta = seg_end - seg_start
            if dt_seg <= 0.0 or float(delta @ delta) == 0.0:
                break
            v_avg = delta / dt_seg
            v_new = collision.bounce_side(v_avg, frame, e)
            remaining = (1.0 - hit.impact_fraction) * dt_seg
            seg_start = hit.center_at_impact
            seg_end = seg_start + v_new * remaining
            dt_seg = remaining
            w.vel[r] = v_new
            if remaining <= 0.0:
                break

        # Containment guarantee even if the bounce budget ran out.
        rad = math.hypot(seg_end[0], seg_end[1])
        max_rad = (geom.radius - radius) * (1.0 - 1e-15)
        if rad > max_rad and rad > 0.0:
            seg_end[:2] *= max_rad / rad
        w.pos[r] = seg_end

    def pair_phase(self, step: int, ghosts: list[ObjectState], out: PhaseOutcome) -> None:
        """Confirmed-overlap pair resolution in canonical id order.

        Ghost copies participate with full state; their updates are
        discarded (their owner performs the same computation).
        """
        sc = self.scenario
        w = self.world
        local_rows = np.flatnonzero(w.alive)
        n_local = local_rows.size
        if n_local + len(ghosts) < 2:
            return

        ids = np.concatenate(
            [w.ids[local_rows], [g.id for g in ghosts]]
        ).astype(np.int64)
        pos = np.vstack([w.pos[local_rows], [g.pos for g in ghosts]]) if ghosts else w.pos[local_rows].copy()
        vel = np.vstack([w.vel[local_rows], [g.vel for g in ghosts]]) if ghosts else w.vel[local_rows].copy()
        radius = np.concatenate([w.radius[local_rows], [g.radius for g in ghosts]])
        mass = np.concatenate([w.mass[local_rows], [g.mass for g in ghosts]])
        kind = np.concatenate(
            [w.kind[local_rows], np.array([int(g.kind) for g in ghosts], dtype=np.int8)]
        )
        alive = np.ones(len(ids), dtype=bool)

        pairs = self._candidate_pairs(pos, radius, kind)
        if not pairs:
            return
        # Canonical order: (min id, max id).
        order = sorted(pairs, key=lambda ij: (ids[ij[0]], ids[ij[1]]) if ids[ij[0]] < ids[ij[1]] else (ids[ij[1]], ids[ij[0]]))

        e = sc.pair_restitution
        eps = 1e-12
        for i, j in order:
            if ids[j] < ids[i]:
                i, j = j, i
            if not (alive[i] and alive[j]):
                continue
            d_vec = pos[j] - pos[i]
            d = float(np.linalg.norm(d_vec))
            if d > radius[i] + radius[j]:
                continue  # separated by an earlier resolution
            normal = d_vec / d if d > 0.0 else vec3(1.0, 0.0, 0.0)

            # White-cell absorption of carriers takes precedence over the bounce.
            absorbed = False
            for ci, wi in ((i, j), (j, i)):
                if kind[ci] == int(Kind.CARRIER) and kind[wi] == int(Kind.WHITE_CELL):
                    carrier = NanoObject(
                        int(ids[ci]), Kind.CARRIER, pos[ci], radius[ci], vel[ci], mass[ci]
                    )
                    white = NanoObject(
                        int(ids[wi]), Kind.WHITE_CELL, pos[wi], radius[wi], vel[wi], mass[wi]
                    )
                    offsets = sc.white_receptor_offsets(int(ids[wi]), self.config.seed)
                    if reception.absorb_by_white_cell(
                        carrier, white, offsets, sc.vessel.receptor_radius
                    ):
                        alive[ci] = False
                        out.absorbed_events.append(int(ids[ci]))
                        absorbed = True
                    break
            if absorbed:
                continue

            overlap = radius[i] + radius[j] - d
            shift = overlap / 2.0 + eps
            pos[i] = pos[i] - shift * normal
            pos[j] = pos[j] + shift * normal
            v1f, v2f = collision.resolve_two_body(
                vel[i], vel[j], float(mass[i]), float(mass[j]), e, normal
            )
            vel[i] = v1f
            vel[j] = v2f

        # Keep local results only.
        w.pos[local_rows] = pos[:n_local]
        w.vel[local_rows] = vel[:n_local]
        w.alive[local_rows] = alive[:n_local]

    def _candidate_pairs(self, pos, radius, kind) -> list[tuple[int, int]]:
        """Overlapping index pairs via per-species neighbor queries."""
        sc = self.scenario
        carriers = np.flatnonzero(kind == int(Kind.CARRIER))
        cells = np.flatnonzero(kind != int(Kind.CARRIER))
        pairs: set[tuple[int, int]] = set()

        def confirm_many(i_idx: np.ndarray, j_idx: np.ndarray) -> None:
            if i_idx.size == 0:
                return
            gap = np.sqrt(np.sum((pos[i_idx] - pos[j_idx]) ** 2, axis=1))
            touch = gap <= radius[i_idx] + radius[j_idx]
            lo = np.minimum(i_idx[touch], j_idx[touch])
            hi = np.maximum(i_idx[touch], j_idx[touch])
            pairs.update(zip(lo.tolist(), hi.tolist()))

        if cells.size >= 2:
            tree = cKDTree(pos[cells])
            reach = 2.0 * float(radius[cells].max())
            cand = tree.query_pairs(reach, output_type="ndarray")
            confirm_many(cells[cand[:, 0]], cells[cand[:, 1]])
        if cells.size and carriers.size:
            tree = cKDTree(pos[cells])
            reach = float(radius[cells].max() + radius[carriers].max())
            hits = tree.query_ball_point(pos[carriers], reach)
            counts = np.fromiter((len(h) for h in hits), dtype=np.intp, count=len(hits))
            if counts.any():
                flat = np.concatenate([h for h in hits if h]).astype(np.intp)
                confirm_many(np.repeat(carriers, counts), cells[flat])
        if sc.carrier_carrier and carriers.size >= 2:
            tree = cKDTree(pos[carriers])
            reach = 2.0 * float(radius[carriers].max())
            cand = tree.query_pairs(reach, output_type="ndarray")
            confirm_many(carriers[cand[:, 0]], carriers[cand[:, 1]])
        return sorted(pairs)

    def insert_states(self, states: list[ObjectState]) -> None:
        self.world.insert(states)

    def take_leavers(self) -> list[ObjectState]:
        """Detach and return objects whose center left this partition."""
        return self.remove_ids(self.leaver_ids())

    def compact(self) -> None:
        self.world.compact()

    def dump_states(self) -> list[ObjectState]:
        w = self.world
        return [w.state_of(int(r)) for r in np.flatnonzero(w.alive)]

    def states_near_box(self, lo, hi, reach: float) -> list[ObjectState]:
        """Objects within ``reach`` of the box [lo, hi) (ghost candidates)."""
        w = self.world
        rows = np.flatnonzero(w.alive)
        if rows.size == 0:
            return []
        p = w.pos[rows]
        near = np.all((p >= lo - reach) & (p < hi + reach), axis=1)
        return [self.world.state_of(int(r)) for r in rows[near]]


@dataclass
class RunResult:
    series: list[StepReport]
    footprints: dict[int, list]
    counters: dict[str, int]
    live: dict[Kind, int]
    receiver_states: dict[int, ReceiverState]


CHECKPOINT_VERSION = 1


class Director:
    """Lock-step coordinator over one or more partitions.

    Owns all global decisions (creation, burst emission, receiver
    accumulation, decoding, the conservation ledger) so that partitions
    stay pure executors.  With ``topology=None`` a single partition
    covers the whole volume; the phase code is identical either way.
    """

    def __init__(
        self,
        scenario: Scenario,
        config: RunConfig,
        topology=None,
        seed_objects: bool = True,
        partition_factory=None,
    ):
        self.scenario = scenario
        self.config = config
        self.topology = topology
        if partition_factory is None:
            partition_factory = lambda p, bounds: PartitionSim(scenario, config, bounds=bounds)
        if topology is None:
            self.partitions = [partition_factory(0, None)]
        else:
            self.partitions = [
                partition_factory(p, topology.bounds(p))
                for p in range(topology.n_partitions)
            ]
        self.step_index = 0
        self.next_id = 0
        self.counters = {
            "emitted": 0,
            "assimilated": 0,
            "absorbed": 0,
            "exited_carriers": 0,
        }
        self.seeded = {k: 0 for k in Kind}
        self.created = {k: 0 for k in Kind}
        self.exited = {k: 0 for k in Kind}
        self.activated = {s: 0 for s in scenario.thresholds}
        self.receiver_states: dict[int, ReceiverState] = {}
        self.pending: list[tuple[int, int, int]] = []
        self.series: list[StepReport] = []
        self._cell_by_id = {c.id: c for c in scenario.cells}
        self._burst_done = False
        # Pair reach with margin for the separation pushes.
        max_r = max(
            [scenario.transmitter.carrier_radius, scenario.transmitter.radius]
            + list(scenario.blood.radii.values())
        )
        self.ghost_reach = 2.5 * max_r
        if seed_objects:
            self._seed()

    # -- construction --------------------------------------------------

    def _drift_velocity(self, pos: np.ndarray) -> np.ndarray:
        sc = self.scenario
        local = sc.profile.axis.to_local(pos)
        speed = motion.poiseuille_velocity(math.hypot(local[0], local[1]), sc.profile)
        return speed * sc.profile.axis.d

    def _locate(self, pos: np.ndarray) -> int:
        if self.topology is None:
            return 0
        return self.topology.locate(pos)

    def _insert(self, states: list[ObjectState]) -> None:
        if self.topology is None:
            self.partitions[0].insert_states(states)
            return
        by_part: dict[int, list[ObjectState]] = {}
        for s in states:
            by_part.setdefault(self._locate(s.pos), []).append(s)
        for p, group in by_part.items():
            self.partitions[p].insert_states(group)

    def _make_state(self, kind: Kind, pos: np.ndarray, vel=None) -> ObjectState:
        sc = self.scenario
        oid = self.next_id
        self.next_id += 1
        if vel is None:
            vel = self._drift_velocity(pos)
        return ObjectState(
            id=oid,
            kind=kind,
            pos=np.asarray(pos, dtype=np.float64),
            vel=np.asarray(vel, dtype=np.float64),
            radius=sc.kind_radius(kind),
            mass=sc.kind_mass(kind),
        )

    def _seed(self) -> None:
        placed = vessel_mod.seed_blood(
            self.scenario.blood, self.scenario.vessel, self.config.seed
        )
        states = [self._make_state(kind, pos) for kind, pos in placed]
        for s in states:
            self.seeded[s.kind] += 1
        self._insert(states)

    # -- global snapshots ----------------------------------------------

    def live_counts(self) -> dict[Kind, int]:
        total = {k: 0 for k in Kind}
        for p in self.partitions:
            for k, n in p.live_counts().items():
                total[k] += n
        return total

    def _merged_slab_snapshot(self):
        rows = []
        for p in self.partitions:
            rows.extend(p.slab_snapshot())
        rows.sort(key=lambda t: t[0])
        return rows

    def _merged_snapshot_near(self, point, reach):
        rows = []
        for p in self.partitions:
            rows.extend(p.snapshot_near(point, reach))
        rows.sort(key=lambda t: t[0])
        return rows

    # -- phases --------------------------------------------------------

    def _transmission(self, step: int) -> dict[Kind, int]:
        sc = self.scenario
        created = {k: 0 for k in Kind}
        if sc.maintain:
            targets = vessel_mod.creation_targets(sc.blood, sc.vessel)
            live = self.live_counts()
            deficits = {k: targets[k] - live[k] for k in targets}
            if any(d > 0 for d in deficits.values()):
                slab = [(r, c) for _id, r, c in self._merged_slab_snapshot()]
                newly = vessel_mod.maintain_concentration(
                    deficits, slab, sc.blood, sc.vessel, self.config.seed, step
                )
                states = [self._make_state(kind, pos) for kind, pos in newly]
                for s in states:
                    created[s.kind] += 1
                    self.created[s.kind] += 1
                self._insert(states)

        tx = sc.transmitter
        if step == tx.emit_step and not self._burst_done:
            self._burst_done = True
            tx_pos = vessel_mod.transmitter_position(tx, sc.vessel)
            max_r = max(sc.blood.radii.values())
            occupancy = self._merged_snapshot_near(tx_pos, tx.radius + 2.0 * max_r)
            moves = vessel_mod.displace_blockers(
                tx_pos, tx.radius, occupancy, sc.vessel, self.config.seed, step
            )
            if moves:
                move_ids = [oid for oid, _ in moves]
                detached: dict[int, ObjectState] = {}
                for p in self.partitions:
                    for s in p.remove_ids(move_ids):
                        detached[s.id] = s
                relocated = []
                for oid, pos in moves:
                    s = detached.pop(oid)
                    s.pos = np.asarray(pos, dtype=np.float64)
                    s.vel = self._drift_velocity(s.pos)
                    relocated.append(s)
                self._insert(relocated)

            tx_vel = self._drift_velocity(tx_pos)
            emitter = self._make_state(Kind.PLATELET, tx_pos, tx_vel)
            emitter.radius = tx.radius
            emitter.mass = mass_of(tx.radius, sc.density)
            self.created[Kind.PLATELET] += 1
            created[Kind.PLATELET] += 1
            self._insert([emitter])

            first_id = self.next_id
            burst = vessel_mod.emit_burst(
                tx_pos, tx.radius, tx_vel, tx.burst_size,
                tx.carrier_radius, self.config.seed, first_id,
            )
            self.next_id += tx.burst_size
            carriers = [
                ObjectState(
                    id=oid, kind=Kind.CARRIER, pos=pos, vel=vel,
                    radius=tx.carrier_radius, mass=sc.kind_mass(Kind.CARRIER),
                )
                for oid, pos, vel in burst
            ]
            self.counters["emitted"] += len(carriers)
            self._insert(carriers)
        return created

    def _reception_and_decode(self, step: int) -> None:
        touched = set()
        for cell_id, _receptor, _carrier in sorted(self.pending, key=lambda e: e[2]):
            st = self.receiver_states.get(cell_id)
            if st is None:
                cell = self._cell_by_id[cell_id]
                st = ReceiverState(cell_id=cell_id, phi=cell.phi, z=cell.z)
                self.receiver_states[cell_id] = st
            st.assimilated += 1
            touched.add(cell_id)
        self.pending = []
        for cell_id in sorted(touched):
            st = self.receiver_states[cell_id]
            for s in self.scenario.thresholds:
                if s not in st.activation_step and reception.decode(st, s, step):
                    self.activated[s] += 1

    def _transfer(self) -> None:
        if self.topology is None:
            return
        for _ in range(self.topology.max_hops + 1):
            moved = 0
            for p_idx, part in enumerate(self.partitions):
                for s in part.take_leavers():
                    dest = self.topology.route(p_idx, s.pos)
                    if dest == p_idx:
                        # Position is outside the grid volume (e.g. a pair
                        # push past the wall before the next wall phase);
                        # the nearest edge cube keeps ownership.
                        part.insert_states([s])
                        continue
                    self.partitions[dest].insert_states([s])
                    moved += 1
            if moved == 0:
                return
        raise InvariantError("object transfer did not converge")

    def _ghosts_for(self, p_idx: int) -> list[ObjectState]:
        if self.topology is None:
            return []
        lo, hi = self.topology.bounds(p_idx)
        ghosts: list[ObjectState] = []
        for q_idx, part in enumerate(self.partitions):
            if q_idx == p_idx:
                continue
            ghosts.extend(part.states_near_box(lo, hi, self.ghost_reach))
        return ghosts

    def _check_conservation(self, live: dict[Kind, int]) -> None:
        c = self.counters
        if c["emitted"] != (
            live[Kind.CARRIER] + c["assimilated"] + c["absorbed"] + c["exited_carriers"]
        ):
            raise InvariantError(
                f"carrier ledger broken: emitted={c['emitted']} "
                f"live={live[Kind.CARRIER]} assimilated={c['assimilated']} "
                f"absorbed={c['absorbed']} exited={c['exited_carriers']}"
            )
        for k in (Kind.PLATELET, Kind.RED_CELL, Kind.WHITE_CELL):
            if self.seeded[k] + self.created[k] != live[k] + self.exited[k]:
                raise InvariantError(f"{k.name} ledger broken")

    def run_step(self) -> StepReport:
        step = self.step_index
        created = self._transmission(step)
        self._reception_and_decode(step)

        outcomes = [p.motion_and_walls(step) for p in self.partitions]
        self._transfer()
        # Ghosts are snapshotted for every partition before any pair phase
        # runs, so all partitions resolve against the same pre-pair state.
        ghosts = [self._ghosts_for(p) for p in range(len(self.partitions))]
        for p_idx, part in enumerate(self.partitions):
            part.pair_phase(step, ghosts[p_idx], outcomes[p_idx])
        self._transfer()

        events: list[tuple[int, int, int]] = []
        for out in outcomes:
            for kind, n in out.exited.items():
                if kind is Kind.CARRIER:
                    self.counters["exited_carriers"] += n
                else:
                    self.exited[kind] += n
            events.extend(out.assim_events)
            self.counters["absorbed"] += len(out.absorbed_events)
        events.sort(key=lambda e: e[2])
        self.counters["assimilated"] += len(events)
        self.pending.extend(events)

        for part in self.partitions:
            part.compact()

        live = self.live_counts()
        self._check_conservation(live)
        report = StepReport(
            step=step,
            time=(step + 1) * self.config.dt,
            live=live,
            created=created,
            assimilated=self.counters["assimilated"],
            absorbed=self.counters["absorbed"],
            exited_carriers=self.counters["exited_carriers"],
            emitted=self.counters["emitted"],
            activated=dict(self.activated),
        )
        if self.config.collect_series:
            self.series.append(report)
        self.step_index += 1
        if (
            self.config.checkpoint_every
            and self.step_index % self.config.checkpoint_every == 0
            and getattr(self, "checkpoint_path", None)
        ):
            self.save_checkpoint(self.checkpoint_path)
        return report

    def run(self) -> RunResult:
        while self.step_index < self.config.steps:
            self.run_step()
        # Fold events produced by the final step so no assimilation is lost.
        self._reception_and_decode(self.step_index)
        footprints = {
            s: reception.footprint(
                list(self.receiver_states.values()),
                s,
                self.scenario.transmitter.emit_step,
                self.config.dt,
            )
            for s in self.scenario.thresholds
        }
        return RunResult(
            series=self.series,
            footprints=footprints,
            counters=dict(self.counters),
            live=self.live_counts(),
            receiver_states=self.receiver_states,
        )

    # -- checkpointing -------------------------------------------------

    def all_states(self) -> list[ObjectState]:
        out: list[ObjectState] = []
        for part in self.partitions:
            out.extend(part.dump_states())
        out.sort(key=lambda s: s.id)
        return out

    def save_checkpoint(self, path) -> None:
        states = self.all_states()
        n = len(states)
        arr = {
            "version": np.array([CHECKPOINT_VERSION], dtype=np.int64),
            "step": np.array([self.step_index], dtype=np.int64),
            "next_id": np.array([self.next_id], dtype=np.int64),
            "ids": np.array([s.id for s in states], dtype=np.int64),
            "kinds": np.array([int(s.kind) for s in states], dtype=np.int8),
            "pos": np.array([s.pos for s in states]).reshape(n, 3),
            "vel": np.array([s.vel for s in states]).reshape(n, 3),
            "radius": np.array([s.radius for s in states]),
            "mass": np.array([s.mass for s in states]),
            "counters": np.array(
                [self.counters[k] for k in sorted(self.counters)], dtype=np.int64
            ),
            "seeded": np.array([self.seeded[k] for k in Kind], dtype=np.int64),
            "created": np.array([self.created[k] for k in Kind], dtype=np.int64),
            "exited": np.array([self.exited[k] for k in Kind], dtype=np.int64),
            "burst_done": np.array([int(self._burst_done)], dtype=np.int64),
            "pending": np.array(self.pending, dtype=np.int64).reshape(-1, 3),
            "receivers": np.array(
                [
                    (cid, st.assimilated)
                    for cid, st in sorted(self.receiver_states.items())
                ],
                dtype=np.int64,
            ).reshape(-1, 2),
            "activations": np.array(
                [
                    (cid, s, st.activation_step[s])
                    for cid, st in sorted(self.receiver_states.items())
                    for s in sorted(st.activation_step)
                ],
                dtype=np.int64,
            ).reshape(-1, 3),
        }
        np.savez(path, **arr)

    @classmethod
    def restore(cls, scenario: Scenario, config: RunConfig, path, topology=None) -> "Director":
        data = np.load(path)
        if int(data["version"][0]) != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        d = cls(scenario, config, topology=topology, seed_objects=False)
        d.step_index = int(data["step"][0])
        d.next_id = int(data["next_id"][0])
        for i, k in enumerate(sorted(d.counters)):
            d.counters[k] = int(data["counters"][i])
        for i, k in enumerate(Kind):
            d.seeded[k] = int(data["seeded"][i])
            d.created[k] = int(data["created"][i])
            d.exited[k] = int(data["exited"][i])
        d._burst_done = bool(int(data["burst_done"][0]))
        d.pending = [tuple(int(v) for v in row) for row in data["pending"]]
        for cid, count in data["receivers"]:
            cell = d._cell_by_id[int(cid)]
            d.receiver_states[int(cid)] = ReceiverState(
                cell_id=int(cid), phi=cell.phi, z=cell.z, assimilated=int(count)
            )
        for cid, s, at in data["activations"]:
            st = d.receiver_states[int(cid)]
            st.activation_step[int(s)] = int(at)
            d.activated[int(s)] = d.activated.get(int(s), 0) + 1
        states = [
            ObjectState(
                id=int(data["ids"][i]),
                kind=Kind(int(data["kinds"][i])),
                pos=data["pos"][i].copy(),
                vel=data["vel"][i].copy(),
                radius=float(data["radius"][i]),
                mass=float(data["mass"][i]),
            )
            for i in range(len(data["ids"]))
        ]
        d._insert(states)
        return d
