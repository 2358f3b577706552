"""Carrier assimilation, per-cell accumulation, and threshold decoding.

Assimilation destroys the carrier; receptor counters never saturate.
Decoding is a simple threshold S on a cell's assimilation count, with
the activation time recorded relative to the burst emission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .core import Kind, NanoObject
from .vessel import EndothelialCell


@dataclass
class ReceiverState:
    cell_id: int
    phi: float
    z: float
    assimilated: int = 0
    # First step at which the count reached each threshold (set once).
    activation_step: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ActivationRecord:
    cell_id: int
    phi: float
    z: float
    t_activation: float
    assimilated: int


def assimilation_test(
    impact_point: np.ndarray,
    cell: EndothelialCell,
    receptor_radius: float,
    carrier_radius: float,
) -> int | None:
    """Receptor (index) captured by a wall impact, or None.

    A receptor within receptor_radius + carrier_radius (chord distance)
    of the impact point captures the carrier; nearest first, ties broken
    by receptor index.
    """
    if len(cell.receptors) == 0:
        return None
    diff = cell.receptors - impact_point
    reach = receptor_radius + carrier_radius
    # Axis-aligned prefilter: |component| > reach already implies
    # distance > reach, and reach (nm) is tiny against the cell (um),
    # so the exact test usually runs on zero or one receptor.
    near = np.flatnonzero(
        (np.abs(diff[:, 0]) <= reach)
        & (np.abs(diff[:, 1]) <= reach)
        & (np.abs(diff[:, 2]) <= reach)
    )
    if near.size == 0:
        return None
    sub = diff[near]
    d = np.sqrt(np.add.reduce(sub * sub, axis=1))
    in_reach = d <= reach
    hits = near[in_reach]
    if hits.size == 0:
        return None
    best = hits[np.lexsort((hits, d[in_reach]))[0]]
    return int(best)


def white_cell_receptors(cell_id: int, count: int, radius: float, seed: int) -> np.ndarray:
    """Receptor offsets scattered uniformly on a white cell's surface.

    Offsets are relative to the cell center and ride along with it.
    """
    if count == 0:
        return np.zeros((0, 3))
    idx = np.arange(count)[:, None]
    g = rng.gaussian(seed, rng.NS_RECEPTOR, cell_id, idx, 3 + np.arange(3)[None, :])
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    norm[norm == 0.0] = 1.0
    return radius * g / norm


def absorb_by_white_cell(
    carrier: NanoObject,
    white: NanoObject,
    receptor_offsets: np.ndarray,
    receptor_radius: float,
) -> bool:
    """Test the carrier's contact point against the white cell receptors.

    Only white cells carry absorbing receptors; a hit destroys the
    carrier, otherwise the pair bounces normally.
    """
    if white.kind is not Kind.WHITE_CELL or carrier.kind is not Kind.CARRIER:
        return False
    axis = carrier.center - white.center
    norm = float(np.linalg.norm(axis))
    if norm == 0.0:
        return len(receptor_offsets) > 0
    contact = white.center + white.radius * axis / norm
    d = np.linalg.norm((white.center + receptor_offsets) - contact, axis=1)
    return bool(np.any(d <= receptor_radius + carrier.radius))


def decode(state: ReceiverState, threshold: int, step: int) -> bool:
    """Threshold decoding; records the first step the count reaches S."""
    if threshold < 1:
        raise ValueError("threshold must be at least 1")
    activated = state.assimilated >= threshold
    if activated and threshold not in state.activation_step:
        state.activation_step[threshold] = step
    return activated


def footprint(
    states: list[ReceiverState],
    threshold: int,
    emit_step: int,
    dt: float,
) -> list[ActivationRecord]:
    """Activation records (the wall footprint) for one threshold."""
    records = []
    for s in states:
        if threshold in s.activation_step:
            t = (s.activation_step[threshold] - emit_step) * dt
            records.append(
                ActivationRecord(
                    cell_id=s.cell_id,
                    phi=s.phi,
                    z=s.z,
                    t_activation=t,
                    assimilated=s.assimilated,
                )
            )
    return records


def phi_band_width(records: list[ActivationRecord]) -> float:
    """Width of the smallest angular band containing all activations.

    Computed on the circle, so a footprint hugging +-pi is measured
    correctly.
    """
    if not records:
        return 0.0
    phis = sorted(r.phi for r in records)
    if len(phis) == 1:
        return 0.0
    gaps = [b - a for a, b in zip(phis, phis[1:])]
    gaps.append(phis[0] + 2.0 * math.pi - phis[-1])
    return 2.0 * math.pi - max(gaps)
