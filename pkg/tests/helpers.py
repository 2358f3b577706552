"""Shared scenario builders for the test suite."""

from vesselsim.core import Kind
from vesselsim.engine import build_scenario
from vesselsim.vessel import BloodSpec, TransmitterSpec, VesselSpec


def small_scenario(seed=7, burst=50, emit_step=5, thresholds=(1, 2), scale=0.1, white=0.0):
    """Short, sparse vessel: fast to run, still exercises every phase."""
    vessel = VesselSpec(radius=30e-6, length=120e-6, lead_in=15e-6)
    blood = BloodSpec(
        concentrations={
            Kind.RED_CELL: 4e15 * scale,
            Kind.WHITE_CELL: 4e12 * white,
            Kind.PLATELET: 2e14 * scale,
        }
    )
    tx = TransmitterSpec(
        position_index=0, offset=15e-6, burst_size=burst, emit_step=emit_step
    )
    return build_scenario(vessel, blood, tx, list(thresholds), seed=seed)
