"""JSON scenario configuration.

Keys carry their unit in the name (``radius_um``, ``dt_us``, ...) and are
converted to SI on load.  Unknown keys are rejected rather than ignored,
so typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import Kind, diffusion_coefficient
from .engine import RunConfig, Scenario, build_scenario
from .motion import brownian_sigma
from .vessel import BloodSpec, TransmitterSpec, VesselSpec, creation_targets

UM = 1e-6
NM = 1e-9
US = 1e-6
PER_UL = 1e9  # events per microliter -> per cubic meter
MM_S = 1e-3


class ConfigError(ValueError):
    pass


def _section(data: dict, name: str, known: dict) -> dict:
    """Extract a section, applying defaults and rejecting unknown keys."""
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be an object")
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    out = dict(known)
    out.update(raw)
    return out


_VESSEL = {
    "radius_um": 30.0,
    "length_um": 2600.0,
    "cell_side_um": 15.0,
    "receptors_per_cell": 1000,
    "receptor_radius_nm": 4.0,
    "wall_restitution": 0.6,
    "lead_in_um": 400.0,
}

_BLOOD = {
    "red_per_uL": 4e6,
    "white_per_uL": 4e3,
    "platelet_per_uL": 2e5,
    "red_radius_um": 3.5,
    "white_radius_um": 5.0,
    "platelet_radius_um": 1.0,
    "creation_slab_um": 7.0,
    "scale": 1.0,  # multiplies every concentration (downscaled runs)
}

_TRANSMITTER = {
    "position_index": 0,
    "offset_um": 400.0,
    "burst_size": 3000,
    "emit_step": 40000,
    "radius_um": 1.0,
    "carrier_radius_nm": 1.75,
}

_PHYSICS = {
    "temperature_K": 310.0,
    "viscosity_Pa_s": 0.0013,
    "density_kg_m3": 1000.0,
    "mean_velocity_mm_s": 0.5,
    "pair_restitution": 0.6,
    "carrier_carrier": True,
    "maintain_concentration": True,
    "white_receptors": 1000,
}

_RUN = {
    "steps": 0,
    "dt_us": 5.0,
    "seed": 0,
    "workers": 1,
    "fanout": 4,
    "checkpoint_every": 0,
}

_GRID = {
    "nx": 1,
    "ny": 1,
    "nz": 1,
    "padding_um": 0.0,
    "over_wire": False,
}

_TOP_LEVEL = {"vessel", "blood", "transmitter", "physics", "run", "grid", "thresholds"}


@dataclass
class ScenarioConfig:
    vessel: VesselSpec
    blood: BloodSpec
    transmitter: TransmitterSpec
    thresholds: list[int]
    physics: dict
    run: RunConfig
    grid: dict

    def scenario(self, seed: int | None = None) -> Scenario:
        return build_scenario(
            self.vessel,
            self.blood,
            self.transmitter,
            self.thresholds,
            seed=self.run.seed if seed is None else seed,
            **self.physics,
        )


def load_config(source) -> ScenarioConfig:
    """Parse a config from a path, a JSON string, or a dict."""
    if isinstance(source, dict):
        data = source
    else:
        try:
            is_file = Path(str(source)).exists()
        except OSError:
            is_file = False
        text = Path(source).read_text() if is_file else str(source)
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    unknown = sorted(set(data) - _TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")

    v = _section(data, "vessel", _VESSEL)
    vessel = VesselSpec(
        radius=v["radius_um"] * UM,
        length=v["length_um"] * UM,
        cell_side=v["cell_side_um"] * UM,
        receptors_per_cell=int(v["receptors_per_cell"]),
        receptor_radius=v["receptor_radius_nm"] * NM,
        wall_restitution=float(v["wall_restitution"]),
        lead_in=v["lead_in_um"] * UM,
    )

    b = _section(data, "blood", _BLOOD)
    scale = float(b["scale"])
    if scale < 0.0:
        raise ConfigError("blood scale must be non-negative")
    blood = BloodSpec(
        concentrations={
            Kind.RED_CELL: b["red_per_uL"] * PER_UL * scale,
            Kind.WHITE_CELL: b["white_per_uL"] * PER_UL * scale,
            Kind.PLATELET: b["platelet_per_uL"] * PER_UL * scale,
        },
        radii={
            Kind.RED_CELL: b["red_radius_um"] * UM,
            Kind.WHITE_CELL: b["white_radius_um"] * UM,
            Kind.PLATELET: b["platelet_radius_um"] * UM,
        },
        creation_slab=b["creation_slab_um"] * UM,
    )

    t = _section(data, "transmitter", _TRANSMITTER)
    transmitter = TransmitterSpec(
        position_index=int(t["position_index"]),
        offset=t["offset_um"] * UM,
        burst_size=int(t["burst_size"]),
        emit_step=int(t["emit_step"]),
        radius=t["radius_um"] * UM,
        carrier_radius=t["carrier_radius_nm"] * NM,
    )

    p = _section(data, "physics", _PHYSICS)
    physics = {
        "temperature": float(p["temperature_K"]),
        "viscosity": float(p["viscosity_Pa_s"]),
        "density": float(p["density_kg_m3"]),
        "v_mean": p["mean_velocity_mm_s"] * MM_S,
        "pair_restitution": float(p["pair_restitution"]),
        "carrier_carrier": bool(p["carrier_carrier"]),
        "maintain": bool(p["maintain_concentration"]),
        "white_receptors": int(p["white_receptors"]),
    }

    r = _section(data, "run", _RUN)
    run = RunConfig(
        steps=int(r["steps"]),
        dt=r["dt_us"] * US,
        seed=int(r["seed"]),
        workers=int(r["workers"]),
        fanout=int(r["fanout"]),
        checkpoint_every=int(r["checkpoint_every"]),
    )

    g = _section(data, "grid", _GRID)
    grid = {
        "nx": int(g["nx"]),
        "ny": int(g["ny"]),
        "nz": int(g["nz"]),
        "padding": g["padding_um"] * UM,
        "over_wire": bool(g["over_wire"]),
    }

    thresholds = data.get("thresholds", [1, 2, 5, 10])
    if not isinstance(thresholds, list) or not all(
        isinstance(s, int) and s >= 1 for s in thresholds
    ):
        raise ConfigError("thresholds must be a list of integers >= 1")

    return ScenarioConfig(
        vessel=vessel,
        blood=blood,
        transmitter=transmitter,
        thresholds=list(thresholds),
        physics=physics,
        run=run,
        grid=grid,
    )


def derived_quantities(cfg: ScenarioConfig) -> dict:
    """Derived values worth echoing back before a run."""
    sc = cfg.scenario()
    targets = creation_targets(cfg.blood, cfg.vessel)
    d_carrier = diffusion_coefficient(
        cfg.transmitter.carrier_radius,
        cfg.physics["temperature"],
        cfg.physics["viscosity"],
    )
    return {
        "cells_per_ring": sc.plan.n_cells_ring,
        "cell_width_um": sc.plan.cell_width / UM,
        "apothem_um": sc.plan.apothem / UM,
        "cube_center_distance_um": sc.plan.center_distance / UM,
        "rings": sc.plan.rings,
        "receiver_cells": len(sc.cells),
        "target_counts": {k.name: n for k, n in targets.items()},
        "carrier_diffusion_m2_s": d_carrier,
        "carrier_step_sigma_um": brownian_sigma(d_carrier, cfg.run.dt) / UM,
        "peak_drift_um_per_step": 2.0 * cfg.physics["v_mean"] * cfg.run.dt / UM,
        "simulated_time_s": cfg.run.steps * cfg.run.dt,
    }
