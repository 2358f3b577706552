"""Hierarchical spatial domains.

A domain tree has a single unbounded root; every other node is a bounded
volume (sphere, cube, or cylinder) positioned relative to its parent.
Domains own objects, a restitution coefficient, and per-surface wall
policies.  Collision prefiltering against inner domains runs on 1D
distance intervals from the parent's center, backed by bounding spheres.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Frame, vec3


class WallPolicy(enum.Enum):
    BOUNCE = "bounce"
    ABSORB = "absorb"
    VIRTUAL = "virtual"


class Overlap(enum.Enum):
    NO_OVERLAP = "no_overlap"
    MAY_COLLIDE = "may_collide"


@dataclass(frozen=True)
class Unbounded:
    pass


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Cube:
    half_side: float

    def __post_init__(self):
        if self.half_side <= 0.0:
            raise ValueError("cube half-side must be positive")


@dataclass(frozen=True)
class Cylinder:
    radius: float
    height: float

    def __post_init__(self):
        if self.radius <= 0.0 or self.height <= 0.0:
            raise ValueError("cylinder dimensions must be positive")


Shape = Unbounded | Sphere | Cube | Cylinder


@dataclass(frozen=True)
class BoundingSphere:
    center: np.ndarray
    radius: float


@dataclass
class Domain:
    """One node of the spatial hierarchy."""

    id: int
    shape: Shape
    local_center: np.ndarray = field(default_factory=lambda: vec3(0, 0, 0))
    frame: Frame = field(default_factory=Frame)  # orientation relative to parent
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    objects: set[int] = field(default_factory=set)
    restitution: float = 1.0
    wall_policy: dict[str, WallPolicy] = field(default_factory=dict)

    def __post_init__(self):
        self.local_center = np.asarray(self.local_center, dtype=np.float64)
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")


class DomainTree:
    """Owns the domain hierarchy and the object->domain assignment."""

    def __init__(self):
        self._domains: dict[int, Domain] = {}
        self._next_id = 0
        self._object_owner: dict[int, int] = {}
        self.root = self.add(Unbounded())

    def add(
        self,
        shape: Shape,
        parent: int | None = None,
        local_center=(0.0, 0.0, 0.0),
        frame: Frame | None = None,
        restitution: float = 1.0,
        wall_policy: dict[str, WallPolicy] | None = None,
    ) -> Domain:
        if parent is None and self._domains:
            parent = self.root.id
        if parent is not None and parent not in self._domains:
            raise ValueError(f"unknown parent domain {parent}")
        if parent is None and not isinstance(shape, Unbounded):
            raise ValueError("the root domain must be unbounded")
        dom = Domain(
            id=self._next_id,
            shape=shape,
            local_center=np.asarray(local_center, dtype=np.float64),
            frame=frame or Frame(),
            parent=parent,
            restitution=restitution,
            wall_policy=wall_policy or {},
        )
        self._next_id += 1
        self._domains[dom.id] = dom
        if parent is not None:
            self._domains[parent].children.append(dom.id)
        return dom

    def __getitem__(self, domain_id: int) -> Domain:
        return self._domains[domain_id]

    def __iter__(self):
        return iter(self._domains.values())

    def assign(self, object_id: int, domain_id: int) -> None:
        """Move an object into a domain (removing it from any previous one)."""
        if domain_id not in self._domains:
            raise ValueError(f"unknown domain {domain_id}")
        old = self._object_owner.get(object_id)
        if old is not None:
            self._domains[old].objects.discard(object_id)
        self._domains[domain_id].objects.add(object_id)
        self._object_owner[object_id] = domain_id

    def owner_of(self, object_id: int) -> int | None:
        return self._object_owner.get(object_id)

    def world_frame(self, domain_id: int) -> Frame:
        """Frame of a domain composed through the parent chain."""
        chain = []
        cur: int | None = domain_id
        while cur is not None:
            dom = self._domains.get(cur)
            if dom is None:
                raise ValueError(f"domain {domain_id} is detached from the tree")
            chain.append(dom)
            cur = dom.parent
        origin = vec3(0.0, 0.0, 0.0)
        rot = np.eye(3)
        for dom in reversed(chain):
            origin = origin + rot @ dom.local_center
            rot = rot @ dom.frame.rotation
        return Frame(origin, d=rot[:, 2], n=rot[:, 0], o=rot[:, 1])

    def world_center(self, domain_id: int) -> np.ndarray:
        """World-frame center: local centers summed through parent frames."""
        return self.world_frame(domain_id).origin

    def bounding_sphere(self, domain_id: int) -> BoundingSphere:
        """Minimal enclosing sphere of a bounded domain."""
        dom = self._domains[domain_id]
        shape = dom.shape
        if isinstance(shape, Sphere):
            radius = shape.radius
        elif isinstance(shape, Cube):
            radius = shape.half_side * math.sqrt(3.0)
        elif isinstance(shape, Cylinder):
            radius = math.hypot(shape.radius, shape.height / 2.0)
        else:
            raise ValueError("an unbounded domain has no bounding sphere")
        return BoundingSphere(center=self.world_center(domain_id), radius=radius)


def interval_prefilter(domain_interval, object_interval) -> Overlap:
    """1D prefilter: closed-interval overlap between a domain's and an
    object's distance intervals from the reference point.

    MAY_COLLIDE is a superset of true collisions; the shape-specific test
    settles false positives.
    """
    d_lo, d_hi = domain_interval
    n_lo, n_hi = object_interval
    if d_lo > d_hi or n_lo > n_hi:
        raise ValueError("intervals must be ordered (lo <= hi)")
    if n_lo <= d_hi and d_lo <= n_hi:
        return Overlap.MAY_COLLIDE
    return Overlap.NO_OVERLAP


def sweep_inner_domains(
    tree: DomainTree,
    parent_id: int,
    object_centers: np.ndarray,
    object_radii: np.ndarray,
    object_ids,
) -> list[tuple[int, int]]:
    """Candidate (object id, inner domain id) pairs for one parent domain.

    Reference point is the parent's center.  The result equals the
    exhaustive interval check; the sweep only changes the cost, not the
    answer.
    """
    parent = tree[parent_id]
    if not parent.children:
        return []
    object_centers = np.asarray(object_centers, dtype=np.float64)
    object_radii = np.asarray(object_radii, dtype=np.float64)
    object_ids = np.asarray(object_ids)
    ref = tree.world_center(parent_id)

    spheres = [(cid, tree.bounding_sphere(cid)) for cid in parent.children]
    # Farthest-first ordering of the inner domains.
    dom_dist = np.array([np.linalg.norm(bs.center - ref) for _, bs in spheres])
    dom_rad = np.array([bs.radius for _, bs in spheres])
    dom_order = np.argsort(-dom_dist, kind="stable")

    obj_dist = np.linalg.norm(object_centers - ref, axis=1)
    obj_lo = obj_dist - object_radii
    obj_hi = obj_dist + object_radii
    order = np.argsort(obj_lo, kind="stable")
    lo_sorted = obj_lo[order]

    pairs: list[tuple[int, int]] = []
    for k in dom_order:
        cid = spheres[k][0]
        d_lo = dom_dist[k] - dom_rad[k]
        d_hi = dom_dist[k] + dom_rad[k]
        # Objects whose interval start is <= d_hi may overlap; the ones
        # past that point cannot (early termination of the sweep).
        stop = np.searchsorted(lo_sorted, d_hi, side="right")
        for idx in order[:stop]:
            if obj_hi[idx] >= d_lo:
                pairs.append((int(object_ids[idx]), int(cid)))
    return pairs
