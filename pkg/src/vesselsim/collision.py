"""Collision detection and resolution.

Broad phase: sort-and-sweep on 1D distance intervals from a reference
point, confirmed by exact sphere-sphere tests.  Wall handling: hit tests
against a finite cylinder, linear backtracking to the impact time, and
restitution-scaled bounces that damp only the surface-normal velocity
component.  Pair handling: partially inelastic two-body resolution in
the center-of-mass frame.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import Frame, NanoObject


class Surface(enum.Enum):
    SIDE = "side"
    TOP = "top"
    BOTTOM = "bottom"


@dataclass(frozen=True)
class CylinderGeom:
    """Finite cylinder: axis frame (d longitudinal), radius, height.

    The axial coordinate runs in [-height/2, +height/2] around the frame
    origin.
    """

    frame: Frame
    radius: float
    height: float


@dataclass(frozen=True)
class WallHit:
    surface: Surface
    impact_point: np.ndarray  # contact point on the wall surface
    impact_fraction: float  # fraction of the step elapsed at impact
    center_at_impact: np.ndarray


@dataclass
class SweepResult:
    pairs: set[tuple[int, int]]
    comparisons: int


def broad_phase_arrays(
    centers: np.ndarray,
    radii: np.ndarray,
    ids: np.ndarray,
    reference_point: np.ndarray,
) -> SweepResult:
    """Sweep the 1D distance intervals [dist-r, dist+r] from the
    reference point; candidate pairs are those whose intervals overlap.

    Ids are canonicalized as (min, max).  ``comparisons`` counts the
    sort/search work plus one unit per candidate, for complexity checks.
    """
    centers = np.asarray(centers, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    ids = np.asarray(ids)
    n = len(ids)
    if n < 2:
        return SweepResult(set(), 0)

    dist = np.linalg.norm(centers - np.asarray(reference_point), axis=1)
    lo = dist - radii
    hi = dist + radii
    # Distance ties broken by object id for a deterministic ordering.
    order = np.lexsort((ids, lo))
    lo_s = lo[order]
    hi_s = hi[order]
    ids_s = ids[order]

    log_n = max(1, math.ceil(math.log2(n)))
    comparisons = 2 * n * log_n  # sort + binary searches
    # For each interval, every later-starting interval with lo <= hi_i
    # is a candidate.
    stop = np.searchsorted(lo_s, hi_s, side="right")
    counts = np.maximum(stop - np.arange(1, n + 1), 0)
    total = int(counts.sum())
    comparisons += total
    if total == 0:
        return SweepResult(set(), comparisons)
    first = np.repeat(np.arange(n), counts)
    second = np.concatenate(
        [np.arange(i + 1, s) for i, s in enumerate(stop) if s > i + 1]
    )
    a = ids_s[first]
    b = ids_s[second]
    pairs = set(zip(np.minimum(a, b).tolist(), np.maximum(a, b).tolist()))
    return SweepResult(pairs, comparisons)


def broad_phase(objects, reference_point) -> SweepResult:
    """Broad phase over a sequence of NanoObjects."""
    if len(objects) < 2:
        return SweepResult(set(), 0)
    centers = np.array([o.center for o in objects])
    radii = np.array([o.radius for o in objects])
    ids = np.array([o.id for o in objects])
    return broad_phase_arrays(centers, radii, ids, reference_point)


def confirm_pairs_arrays(pairs, centers_by_id, radii_by_id) -> set[tuple[int, int]]:
    """Exact 3D confirmation of candidate pairs (tangency counts)."""
    confirmed = set()
    for a, b in pairs:
        d = np.linalg.norm(centers_by_id[a] - centers_by_id[b])
        if d <= radii_by_id[a] + radii_by_id[b]:
            confirmed.add((a, b))
    return confirmed


def confirmed_pairs(objects, reference_point) -> set[tuple[int, int]]:
    """Broad phase plus narrow-phase confirmation."""
    sweep = broad_phase(objects, reference_point)
    by_id_c = {o.id: o.center for o in objects}
    by_id_r = {o.id: o.radius for o in objects}
    return confirm_pairs_arrays(sweep.pairs, by_id_c, by_id_r)


def all_pairs_oracle(objects) -> set[tuple[int, int]]:
    """O(n^2) reference: every truly overlapping pair."""
    out = set()
    n = len(objects)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = objects[i], objects[j]
            if np.linalg.norm(a.center - b.center) <= a.radius + b.radius:
                out.add((min(a.id, b.id), max(a.id, b.id)))
    return out


def sphere_sphere_test(a: NanoObject, b: NanoObject) -> bool:
    """True iff the two spheres touch or overlap."""
    return bool(np.linalg.norm(a.center - b.center) <= a.radius + b.radius)


def cylinder_hit_test(center, radius: float, geom: CylinderGeom) -> set[Surface]:
    """Surfaces the sphere reaches: side if radial extent >= cylinder
    radius, top/bottom if axial extent >= half-height.  A corner contact
    reports both.
    """
    local = geom.frame.to_local(center)
    d_p = local[2]
    d_n = math.hypot(local[0], local[1])
    hits: set[Surface] = set()
    if d_n + radius >= geom.radius:
        hits.add(Surface.SIDE)
    if d_p + radius >= geom.height / 2.0:
        hits.add(Surface.TOP)
    if -d_p + radius >= geom.height / 2.0:
        hits.add(Surface.BOTTOM)
    return hits


def first_wall_hit(start, end, radius: float, geom: CylinderGeom) -> WallHit | None:
    """Earliest wall contact on the linear path start -> end.

    Returns None when the path stays strictly inside.  A sphere already
    in contact at the start is reported with impact_fraction 0.
    """
    p0 = geom.frame.to_local(start)
    p1 = geom.frame.to_local(end)
    half_h = geom.height / 2.0
    best_t = None
    best_surface = None

    # Side surface: contact when the 2D radial distance reaches radius_c.
    radius_c = geom.radius - radius
    q0 = p0[:2]
    dq = p1[:2] - q0
    c = q0 @ q0 - radius_c * radius_c
    if c >= 0.0:
        best_t, best_surface = 0.0, Surface.SIDE
    else:
        a = dq @ dq
        if a > 0.0:
            b = 2.0 * (q0 @ dq)
            disc = b * b - 4.0 * a * c
            if disc >= 0.0:
                t = (-b + math.sqrt(disc)) / (2.0 * a)  # outward root (c < 0)
                if 0.0 <= t <= 1.0:
                    best_t, best_surface = t, Surface.SIDE

    # Flat surfaces: contact when |z| reaches half_h - radius.
    z_c = half_h - radius
    for sign, surface in ((1.0, Surface.TOP), (-1.0, Surface.BOTTOM)):
        z0 = sign * p0[2]
        z1 = sign * p1[2]
        if z0 >= z_c:
            t = 0.0
        elif z1 >= z_c and z1 > z0:
            t = (z_c - z0) / (z1 - z0)
        else:
            continue
        if best_t is None or t < best_t:
            best_t, best_surface = t, surface

    if best_t is None:
        return None
    center_local = p0 + best_t * (p1 - p0)
    if best_surface is Surface.SIDE:
        rad = math.hypot(center_local[0], center_local[1])
        if rad == 0.0:
            contact_local = np.array([geom.radius, 0.0, center_local[2]])
        else:
            contact_local = center_local * 1.0
            contact_local[:2] *= geom.radius / rad
    else:
        sign = 1.0 if best_surface is Surface.TOP else -1.0
        contact_local = np.array([center_local[0], center_local[1], sign * half_h])
    return WallHit(
        surface=best_surface,
        impact_point=geom.frame.to_world(contact_local),
        impact_fraction=float(best_t),
        center_at_impact=geom.frame.to_world(center_local),
    )


def surface_frame(hit: WallHit, geom: CylinderGeom) -> Frame:
    """Impact frame: d along the cylinder axis, n the outward radial
    direction through the impact point (side) or arbitrary in-plane
    (flat).
    """
    d = geom.frame.d
    local = geom.frame.to_local(hit.center_at_impact)
    rad = math.hypot(local[0], local[1])
    if rad > 0.0:
        n_local = np.array([local[0] / rad, local[1] / rad, 0.0])
    else:
        n_local = np.array([1.0, 0.0, 0.0])
    n = geom.frame.rotation @ n_local
    # Manual cross product: np.cross pays a large generic-shape overhead
    # on single 3-vectors and this is the hottest frame constructor.
    o = np.array(
        [
            d[1] * n[2] - d[2] * n[1],
            d[2] * n[0] - d[0] * n[2],
            d[0] * n[1] - d[1] * n[0],
        ]
    )
    return Frame(hit.impact_point.copy(), d=d, n=n, o=o, check=False)


def _check_restitution(e: float) -> None:
    if not 0.0 <= e <= 1.0:
        raise ValueError("restitution must lie in [0, 1]")


def bounce_flat(v, frame: Frame, e: float) -> np.ndarray:
    """Bounce off a flat (top/bottom) surface whose normal is d: the
    d-component is negated and damped by e, tangentials untouched.
    """
    _check_restitution(e)
    v = np.asarray(v, dtype=np.float64)
    d_i = frame.d * (frame.d @ v)
    return v - (1.0 + e) * d_i


def bounce_side(v, frame: Frame, e: float) -> np.ndarray:
    """Bounce off the curved side surface: only the radial (n) component
    is negated and damped by e.
    """
    _check_restitution(e)
    v = np.asarray(v, dtype=np.float64)
    n_i = frame.n * (frame.n @ v)
    return v - (1.0 + e) * n_i


def resolve_two_body(v1, v2, m1: float, m2: float, e: float, contact_normal):
    """Partially inelastic two-body impact.

    The contact-normal components are transformed in the center-of-mass
    frame (momentum conserved, normal relative velocity reversed and
    scaled by e); tangential components pass through unchanged.
    ``contact_normal`` points from body 1 to body 2.
    """
    _check_restitution(e)
    if m1 <= 0.0 or m2 <= 0.0:
        raise ValueError("masses must be positive")
    normal = np.asarray(contact_normal, dtype=np.float64)
    norm = np.linalg.norm(normal)
    if norm == 0.0:
        raise ValueError("contact normal must be non-zero")
    normal = normal / norm
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)

    u1 = float(v1 @ normal)
    u2 = float(v2 @ normal)
    u_cm = (m1 * u1 + m2 * u2) / (m1 + m2)
    r1 = u1 - u_cm
    r2 = u2 - u_cm
    r1f = ((m1 - e * m2) * r1 + m2 * (1.0 + e) * r2) / (m1 + m2)
    r2f = ((m2 - e * m1) * r2 + m1 * (1.0 + e) * r1) / (m1 + m2)
    v1f = v1 + (u_cm + r1f - u1) * normal
    v2f = v2 + (u_cm + r2f - u2) * normal
    return v1f, v2f


def cm_kinetic_energy_ratio(v1i, v2i, v1f, v2f, m1: float, m2: float, contact_normal):
    """Post/pre kinetic energy of the contact-normal components in the
    center-of-mass frame.  Equals e**2 for a resolved collision.
    """
    normal = np.asarray(contact_normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)

    def _normal_cm_energy(v1, v2):
        u1 = float(np.asarray(v1) @ normal)
        u2 = float(np.asarray(v2) @ normal)
        u_cm = (m1 * u1 + m2 * u2) / (m1 + m2)
        return 0.5 * m1 * (u1 - u_cm) ** 2 + 0.5 * m2 * (u2 - u_cm) ** 2

    pre = _normal_cm_energy(v1i, v2i)
    post = _normal_cm_energy(v1f, v2f)
    if pre == 0.0:
        return 0.0 if post == 0.0 else math.inf
    return post / pre
