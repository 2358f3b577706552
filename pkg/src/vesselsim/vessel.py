"""Scenario construction: the cylindrical vessel, its endothelial
receiver tiling, receptor placement, blood seeding, and the transmitter.

Vessel-local coordinates: the axis frame has its origin at the vessel
center with d along the axis; "z from inlet" = local z + length/2.
Endothelial cells start after the inlet lead-in region and tile the wall
in rings of N_h cubes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import rng
from .core import Frame, Kind, vec3
from .domains import Cube, Cylinder, DomainTree, WallPolicy


class SeedingError(RuntimeError):
    """Rejection sampling could not place an object within the budget."""


class PlacementError(RuntimeError):
    """The transmitter could not be placed within the retry budget."""


RETRY_BUDGET = 10_000


@dataclass
class VesselSpec:
    radius: float  # m
    length: float  # m
    cell_side: float = 15e-6  # nominal endothelial cell side d_h
    receptors_per_cell: int = 1000
    receptor_radius: float = 4e-9
    wall_restitution: float = 0.6
    lead_in: float = 400e-6  # inlet region with no endothelium

    def __post_init__(self):
        if self.radius <= 0.0 or self.length <= 0.0:
            raise ValueError("vessel dimensions must be positive")
        if not 0.0 < self.cell_side < 2.0 * math.pi * self.radius:
            raise ValueError("cell side must be positive and below the circumference")
        if self.lead_in < 0.0 or self.lead_in >= self.length:
            raise ValueError("lead-in must fit inside the vessel")


@dataclass
class EndotheliumPlan:
    n_cells_ring: int  # cells per transversal ring
    cell_width: float  # approximated side after fitting the circumference
    apothem: float
    center_distance: float  # cube center distance from the axis
    rings: int


@dataclass
class TransmitterSpec:
    position_index: int = 0  # 0 (wall-adjacent) .. 5 (axis)
    offset: float = 400e-6  # along the axis, past the first endothelial ring
    burst_size: int = 3000
    emit_step: int = 40000
    radius: float = 1e-6  # behaves as a platelet
    carrier_radius: float = 1.75e-9

    def __post_init__(self):
        if not 0 <= self.position_index <= 5:
            raise ValueError("position index must be in 0..5")
        if self.burst_size < 0:
            raise ValueError("burst size must be non-negative")


@dataclass
class BloodSpec:
    """Per-kind concentrations (m^-3) and radii (m)."""

    concentrations: dict[Kind, float] = field(
        default_factory=lambda: {
            Kind.RED_CELL: 4e6 * 1e9,
            Kind.WHITE_CELL: 4e3 * 1e9,
            Kind.PLATELET: 2e5 * 1e9,
        }
    )
    radii: dict[Kind, float] = field(
        default_factory=lambda: {
            Kind.RED_CELL: 3.5e-6,
            Kind.WHITE_CELL: 5e-6,
            Kind.PLATELET: 1e-6,
        }
    )
    creation_slab: float = 7e-6  # inlet slab thickness

    def __post_init__(self):
        for kind, conc in self.concentrations.items():
            if conc < 0.0:
                raise ValueError(f"negative concentration for {kind.name}")


@dataclass
class EndothelialCell:
    """One receiver: a wall patch with its projected receptors."""

    id: int
    ring: int
    index: int
    phi: float  # center angle in (-pi, pi]
    z: float  # center axial coordinate, vessel-local
    receptors: np.ndarray  # (n, 3) world positions on the cylinder surface
    domain_id: int = -1


def plan_endothelium(radius: float, cell_side: float, covered_length: float = 0.0) -> EndotheliumPlan:
    """Fit an integer number of cells around the circumference.

    N_h = round(2*pi*R / d_h), cell width = circumference / N_h,
    apothem = R cos(pi/N_h), cube center distance = apothem + width/2.
    """
    circumference = 2.0 * math.pi * radius
    n_cells = round(circumference / cell_side)
    if n_cells < 3:
        raise ValueError("degenerate endothelium tiling (fewer than 3 cells per ring)")
    width = circumference / n_cells
    apothem = radius * math.cos(math.pi / n_cells)
    center_distance = apothem + width / 2.0
    rings = int(covered_length / width) if covered_length > 0.0 else 0
    return EndotheliumPlan(
        n_cells_ring=n_cells,
        cell_width=width,
        apothem=apothem,
        center_distance=center_distance,
        rings=rings,
    )


def _scatter_face_offsets(cell_id: int, count: int, width: float, seed: int) -> np.ndarray:
    """Uniform (tangential, axial) offsets on a cell's inner face."""
    if count == 0:
        return np.zeros((0, 2))
    idx = np.arange(count)
    u = (rng.uniform(seed, rng.NS_RECEPTOR, cell_id, idx, 0) - 0.5) * width
    w = (rng.uniform(seed, rng.NS_RECEPTOR, cell_id, idx, 1) - 0.5) * width
    return np.column_stack([u, w])


def project_face_offsets(offsets: np.ndarray, plan: EndotheliumPlan, radius: float):
    """Project flat-face receptor offsets onto the cylinder surface.

    Each receptor is pushed radially outward along the ray from the axis
    through its position until it reaches the wall (scale R / in-plane
    distance); receptors whose projection leaves the cell's footprint are
    removed.  Returns (kept mask, angular offsets, axial offsets).
    """
    u = offsets[:, 0]
    w = offsets[:, 1]
    in_plane = np.hypot(plan.apothem, u)
    scale = radius / in_plane
    u_new = scale * u
    w_new = scale * w
    half = plan.cell_width / 2.0
    keep = (np.abs(u_new) < half) & (np.abs(w_new) < half)
    dphi = np.arctan2(u, plan.apothem)
    return keep, dphi, w_new


def scatter_receptors(
    cell_id: int,
    ring: int,
    index: int,
    plan: EndotheliumPlan,
    spec: VesselSpec,
    seed: int,
) -> EndothelialCell:
    """Scatter receptors on a cell's face and project them onto the wall."""
    phi = _wrap_angle(index * 2.0 * math.pi / plan.n_cells_ring)
    z = -spec.length / 2.0 + spec.lead_in + (ring + 0.5) * plan.cell_width
    offsets = _scatter_face_offsets(cell_id, spec.receptors_per_cell, plan.cell_width, seed)
    keep, dphi, w_new = project_face_offsets(offsets, plan, spec.radius)
    phis = phi + dphi[keep]
    zs = z + w_new[keep]
    receptors = np.column_stack(
        [spec.radius * np.cos(phis), spec.radius * np.sin(phis), zs]
    )
    return EndothelialCell(
        id=cell_id, ring=ring, index=index, phi=phi, z=z, receptors=receptors
    )


def _wrap_angle(phi: float) -> float:
    phi = (phi + math.pi) % (2.0 * math.pi) - math.pi
    if phi <= -math.pi:
        phi = math.pi
    return phi


def build_endothelium(spec: VesselSpec, seed: int) -> tuple[EndotheliumPlan, list[EndothelialCell]]:
    """Tile the wall past the lead-in with receptor-carrying cells."""
    covered = spec.length - spec.lead_in
    plan = plan_endothelium(spec.radius, spec.cell_side, covered)
    cells = []
    cid = 0
    for ring in range(plan.rings):
        for index in range(plan.n_cells_ring):
            cells.append(scatter_receptors(cid, ring, index, plan, spec, seed))
            cid += 1
    return plan, cells


def build_domain_tree(spec: VesselSpec, plan: EndotheliumPlan, cells: list[EndothelialCell]) -> DomainTree:
    """Root -> vessel cylinder -> one virtual cube per endothelial cell."""
    tree = DomainTree()
    vessel = tree.add(
        Cylinder(radius=spec.radius, height=spec.length),
        restitution=spec.wall_restitution,
        wall_policy={
            "side": WallPolicy.BOUNCE,
            "top": WallPolicy.ABSORB,
            "bottom": WallPolicy.ABSORB,
        },
    )
    virtual = {k: WallPolicy.VIRTUAL for k in ("side", "top", "bottom")}
    for cell in cells:
        base = Frame()
        frame = base.rotated_about_d(cell.phi)
        local = plan.center_distance * frame.n + cell.z * frame.d
        dom = tree.add(
            Cube(half_side=plan.cell_width / 2.0),
            parent=vessel.id,
            local_center=local,
            frame=frame,
            wall_policy=virtual,
        )
        cell.domain_id = dom.id
    return tree


def _disk_point(seed, ns, k0, k1, max_r):
    """Uniform point in a disk of radius max_r (counter-derived)."""
    u1 = rng.uniform(seed, ns, k0, k1, 0)
    u2 = rng.uniform(seed, ns, k0, k1, 1)
    r = max_r * math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    return r * math.cos(phi), r * math.sin(phi)


def seed_blood(blood: BloodSpec, vessel: VesselSpec, seed: int) -> list[tuple[Kind, np.ndarray]]:
    """Fill the vessel with blood cells at the configured concentrations.

    A base slab is populated by rejection sampling, then replicated along
    the axis with a random rotation per copy; per-slab counts carry the
    fractional remainder so the vessel total is unbiased.  A final global
    pass re-places any overlapping objects.
    """
    slab = blood.creation_slab
    n_slabs = max(1, math.ceil(vessel.length / slab))
    cross_section = math.pi * vessel.radius**2
    placed: list[tuple[Kind, np.ndarray]] = []

    kinds = sorted(blood.concentrations, key=int)
    base: dict[Kind, list[np.ndarray]] = {k: [] for k in kinds}

    attempt_counter = 0

    def try_place(kind: Kind, z_lo: float, z_hi: float, others: list[tuple[float, np.ndarray]]):
        nonlocal attempt_counter
        radius = blood.radii[kind]
        for _ in range(RETRY_BUDGET):
            attempt_counter += 1
            x, y = _disk_point(seed, rng.NS_SEEDING, attempt_counter, 0, vessel.radius - radius)
            z = z_lo + rng.uniform(seed, rng.NS_SEEDING, attempt_counter, 1, 2) * (z_hi - z_lo)
            pos = vec3(x, y, z)
            ok = all(
                np.linalg.norm(pos - other) > radius + r_other
                for r_other, other in others
            )
            if ok:
                return pos
        raise SeedingError(f"could not place a {kind.name} within the retry budget")

    # Base slab, rejection-sampled with no overlaps.
    z0 = -vessel.length / 2.0
    others: list[tuple[float, np.ndarray]] = []
    base_counts = {}
    for kind in kinds:
        exact = blood.concentrations[kind] * cross_section * min(slab, vessel.length)
        base_counts[kind] = int(round(exact))
    for kind in kinds:
        for _ in range(base_counts[kind]):
            pos = try_place(kind, z0, z0 + slab, others)
            others.append((blood.radii[kind], pos))
            base[kind].append(pos - vec3(0, 0, z0))  # slab-local offset

    # Replicate slabs with carry-corrected counts and per-slab rotation.
    placed_count = {k: 0 for k in kinds}
    cumulative = {k: 0.0 for k in kinds}
    for s in range(n_slabs):
        z_lo = z0 + s * slab
        z_hi = min(z_lo + slab, vessel.length / 2.0)
        frac = (z_hi - z_lo) / slab
        theta = 2.0 * math.pi * rng.uniform(seed, rng.NS_SEEDING, 0, s, 3)
        c, si = math.cos(theta), math.sin(theta)
        slab_members: list[tuple[float, np.ndarray]] = []
        for kind in kinds:
            cumulative[kind] += blood.concentrations[kind] * cross_section * slab * frac
            want = int(round(cumulative[kind])) - placed_count[kind]
            template = base[kind]
            for i in range(want):
                if i < len(template) and template[i][2] <= (z_hi - z_lo):
                    off = template[i]
                    pos = vec3(
                        c * off[0] - si * off[1],
                        si * off[0] + c * off[1],
                        z_lo + off[2],
                    )
                else:
                    pos = try_place(kind, z_lo, z_hi, slab_members)
                slab_members.append((blood.radii[kind], pos))
                placed.append((kind, pos))
                placed_count[kind] += 1

    _fix_overlaps(placed, blood, vessel, seed)
    return placed


def _fix_overlaps(placed, blood: BloodSpec, vessel: VesselSpec, seed: int) -> None:
    """Re-place overlapping seeds until the configuration is overlap-free."""
    if len(placed) < 2:
        return
    max_r = max(blood.radii.values())
    attempt = 1_000_000  # disjoint from seeding attempt counters
    for _ in range(64):
        centers = np.array([p for _, p in placed])
        radii = np.array([blood.radii[k] for k, _ in placed])
        tree = cKDTree(centers)
        bad = sorted(
            (max(i, j), min(i, j))
            for i, j in tree.query_pairs(2.0 * max_r)
            if np.linalg.norm(centers[i] - centers[j]) <= radii[i] + radii[j]
        )
        if not bad:
            return
        moved = set()
        for hi, _lo in bad:
            if hi in moved:
                continue
            kind, _ = placed[hi]
            radius = blood.radii[kind]
            for _ in range(RETRY_BUDGET):
                attempt += 1
                x, y = _disk_point(seed, rng.NS_SEEDING, attempt, 4, vessel.radius - radius)
                z = (rng.uniform(seed, rng.NS_SEEDING, attempt, 5, 6) - 0.5) * vessel.length
                pos = vec3(x, y, z)
                near = tree.query_ball_point(pos, radius + max_r)
                if all(
                    k == hi or np.linalg.norm(pos - centers[k]) > radius + radii[k]
                    for k in near
                ):
                    placed[hi] = (kind, pos)
                    moved.add(hi)
                    break
            else:
                raise SeedingError("overlap fix-up exceeded the retry budget")
    raise SeedingError("overlap fix-up did not converge")


def creation_targets(blood: BloodSpec, vessel: VesselSpec) -> dict[Kind, int]:
    """Per-kind live-count targets for the whole vessel."""
    volume = math.pi * vessel.radius**2 * vessel.length
    return {k: int(round(c * volume)) for k, c in sorted(blood.concentrations.items(), key=lambda kv: int(kv[0]))}


def maintain_concentration(
    deficits: dict[Kind, int],
    slab_occupancy: list[tuple[float, np.ndarray]],
    blood: BloodSpec,
    vessel: VesselSpec,
    seed: int,
    step: int,
) -> list[tuple[Kind, np.ndarray]]:
    """Insert the per-kind deficit uniformly into the inlet creation slab.

    ``slab_occupancy`` is the (radius, center) snapshot of objects already
    in the slab, in a deterministic (id-sorted) order, so the result is
    identical regardless of how the simulation is partitioned.
    """
    z_lo = -vessel.length / 2.0
    z_hi = z_lo + blood.creation_slab
    occupied = list(slab_occupancy)
    out: list[tuple[Kind, np.ndarray]] = []
    attempt = 0
    for kind in sorted(deficits, key=int):
        radius = blood.radii[kind]
        for _ in range(max(0, deficits[kind])):
            for _ in range(RETRY_BUDGET):
                attempt += 1
                x, y = _disk_point(seed, rng.NS_CREATION, step, attempt, vessel.radius - radius)
                z = z_lo + rng.uniform(seed, rng.NS_CREATION, step, attempt, 2) * (z_hi - z_lo)
                pos = vec3(x, y, z)
                if all(
                    np.linalg.norm(pos - other) > radius + r_other
                    for r_other, other in occupied
                ):
                    occupied.append((radius, pos))
                    out.append((kind, pos))
                    break
            else:
                raise SeedingError(
                    f"continuous creation could not place a {kind.name}"
                )
    return out


def transmitter_position(tx: TransmitterSpec, vessel: VesselSpec) -> np.ndarray:
    """Fixed emission point: phi=0, r interpolated between the wall-adjacent
    (index 0, r = R - r_p) and axis (index 5, r = 0) endpoints, on the
    plane ``offset`` past the first endothelial ring.
    """
    r = (vessel.radius - tx.radius) * (5 - tx.position_index) / 5.0
    z = -vessel.length / 2.0 + vessel.lead_in + tx.offset
    return vec3(r, 0.0, z)


def displace_blockers(
    tx_center: np.ndarray,
    tx_radius: float,
    occupancy: list[tuple[int, float, np.ndarray]],
    vessel: VesselSpec,
    seed: int,
    step: int,
) -> list[tuple[int, np.ndarray]]:
    """Clear the transmitter position by re-sampling blocking objects.

    ``occupancy`` is an id-sorted (id, radius, center) snapshot of nearby
    objects.  Blockers are re-placed uniformly in the vessel until they
    no longer overlap the transmitter or each other; returns (id, new
    center) moves.
    """
    centers = {oid: c for oid, _r, c in occupancy}
    radii = {oid: r for oid, r, _c in occupancy}
    moves: list[tuple[int, np.ndarray]] = []
    attempt = 0
    for oid, radius, center in occupancy:
        if np.linalg.norm(center - tx_center) > radius + tx_radius:
            continue
        for _ in range(RETRY_BUDGET):
            attempt += 1
            x, y = _disk_point(seed, rng.NS_CREATION, step, 500_000 + attempt, vessel.radius - radius)
            z = (rng.uniform(seed, rng.NS_CREATION, step, 500_000 + attempt, 2) - 0.5) * vessel.length
            pos = vec3(x, y, z)
            if np.linalg.norm(pos - tx_center) <= radius + tx_radius:
                continue
            if all(
                other == oid
                or np.linalg.norm(pos - centers[other]) > radius + radii[other]
                for other in centers
            ):
                centers[oid] = pos
                moves.append((oid, pos))
                break
        else:
            raise PlacementError("could not clear the transmitter position")
    return moves


def emit_burst(
    tx_center: np.ndarray,
    tx_radius: float,
    tx_velocity: np.ndarray,
    burst_size: int,
    carrier_radius: float,
    seed: int,
    first_id: int,
) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Place ``burst_size`` carriers uniformly on the transmitter surface.

    Returns (id, center, velocity) triples; initial velocity is the local
    drift (the transmitter's own velocity).
    """
    out = []
    offset = tx_radius + carrier_radius + 1e-12
    for i in range(burst_size):
        g = rng.gaussian(seed, rng.NS_BURST, i, 0, np.arange(3))
        norm = float(np.linalg.norm(g))
        direction = g / norm if norm > 0.0 else vec3(1.0, 0.0, 0.0)
        out.append((first_id + i, tx_center + offset * direction, tx_velocity.copy()))
    return out
