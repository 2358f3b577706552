"""Shared value types and physical closures.

Internal units are strictly SI (m, s, kg, K, Pa.s).  Configuration layers
convert from lab units (um, mm/s, ...) at ingest; nothing below this
module ever sees a micrometer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import InitVar, dataclass, field

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K

_ORTHO_TOL = 1e-12


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """3-vector as a float64 numpy array."""
    return np.array([x, y, z], dtype=np.float64)


ZERO3 = vec3(0.0, 0.0, 0.0)


class Kind(enum.IntEnum):
    """Species of a simulated sphere."""

    CARRIER = 0
    PLATELET = 1
    RED_CELL = 2
    WHITE_CELL = 3


@dataclass
class Frame:
    """Right-handed orthonormal frame: origin plus axes d, n, o.

    ``d`` is the longitudinal axis wherever a cylinder is involved; ``n``
    and ``o`` complete the triad.
    """

    origin: np.ndarray = field(default_factory=lambda: ZERO3.copy())
    d: np.ndarray = field(default_factory=lambda: vec3(0.0, 0.0, 1.0))
    n: np.ndarray = field(default_factory=lambda: vec3(1.0, 0.0, 0.0))
    o: np.ndarray = field(default_factory=lambda: vec3(0.0, 1.0, 0.0))
    # Callers constructing a frame that is orthonormal by construction
    # (e.g. from a normalized normal and a cross product) may skip the
    # validation; the axes are treated as immutable either way.
    check: InitVar[bool] = True

    def __post_init__(self, check: bool = True):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.d = np.asarray(self.d, dtype=np.float64)
        self.n = np.asarray(self.n, dtype=np.float64)
        self.o = np.asarray(self.o, dtype=np.float64)
        if check:
            self.validate()
        self._rotation = np.column_stack([self.n, self.o, self.d])

    def validate(self) -> None:
        for axis in (self.d, self.n, self.o):
            if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
                raise ValueError("frame axes must be unit vectors")
        if (
            abs(self.d @ self.n) > 1e-9
            or abs(self.d @ self.o) > 1e-9
            or abs(self.n @ self.o) > 1e-9
        ):
            raise ValueError("frame axes must be mutually orthogonal")
        if np.cross(self.n, self.o) @ self.d < 0.0:
            raise ValueError("frame must be right-handed (n x o = d)")

    @property
    def rotation(self) -> np.ndarray:
        """Matrix with columns (n, o, d): local coords -> world coords."""
        return self._rotation

    def to_world(self, local: np.ndarray) -> np.ndarray:
        return self.origin + self.rotation @ np.asarray(local, dtype=np.float64)

    def to_local(self, world: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(world, dtype=np.float64) - self.origin)

    def rotated_about_d(self, angle: float) -> "Frame":
        """New frame rotated by ``angle`` about its own d axis."""
        c, s = math.cos(angle), math.sin(angle)
        n_new = c * self.n + s * self.o
        o_new = -s * self.n + c * self.o
        return Frame(self.origin.copy(), self.d.copy(), n_new, o_new)


@dataclass
class NanoObject:
    """Any moving sphere: carrier molecule or blood cell."""

    id: int
    kind: Kind
    center: np.ndarray
    radius: float
    velocity: np.ndarray
    mass: float
    owner_domain: int = -1
    alive: bool = True

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")


@dataclass
class SimClock:
    """Discrete simulation clock; simulated time is exactly step * dt."""

    step: int = 0
    dt: float = 5e-6

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @property
    def time(self) -> float:
        return self.step * self.dt

    def tick(self) -> None:
        self.step += 1


@dataclass(frozen=True)
class CylindricalCoord:
    """(phi, r, z) with phi in (-pi, pi] measured from n toward o."""

    phi: float
    r: float
    z: float


def diffusion_coefficient(radius: float, temperature: float, viscosity: float) -> float:
    """Stokes-Einstein diffusion coefficient k_B*T / (6*pi*eta*r)."""
    if radius <= 0.0 or temperature <= 0.0 or viscosity <= 0.0:
        raise ValueError("radius, temperature and viscosity must be positive")
    return BOLTZMANN * temperature / (6.0 * math.pi * viscosity * radius)


def mass_of(radius: float, density: float) -> float:
    """Mass of a homogeneous sphere."""
    if radius <= 0.0 or density <= 0.0:
        raise ValueError("radius and density must be positive")
    return (4.0 / 3.0) * math.pi * radius**3 * density


def to_cylindrical(point: np.ndarray, frame: Frame) -> CylindricalCoord:
    """Cylindrical coordinates of ``point`` in the axis frame.

    A point exactly on the axis gets phi = 0 by convention.
    """
    local = np.asarray(point, dtype=np.float64) - frame.origin
    z = float(local @ frame.d)
    radial = local - z * frame.d
    r = math.sqrt(float(radial @ radial))
    if r == 0.0:
        phi = 0.0
    else:
        phi = math.atan2(float(radial @ frame.o), float(radial @ frame.n))
        if phi <= -math.pi:
            phi = math.pi
    return CylindricalCoord(phi=phi, r=r, z=z)


def from_cylindrical(coord: CylindricalCoord, frame: Frame) -> np.ndarray:
    """Inverse of :func:`to_cylindrical`."""
    radial = coord.r * (
        math.cos(coord.phi) * frame.n + math.sin(coord.phi) * frame.o
    )
    return frame.origin + radial + coord.z * frame.d
