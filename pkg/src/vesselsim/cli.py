"""Command line interface.

Subcommands:

    run       simulate a scenario and write steps.csv / footprint.csv /
              metadata.json into the output directory
    validate  parse a config and echo the derived quantities
    report    summarize a finished run directory
    bench     time the neighbor-search broad phase over growing counts

CSV output uses '.' decimals and shortest round-trip float formatting
regardless of locale, so files are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .collision import broad_phase_arrays
from .config import ConfigError, derived_quantities, load_config
from .core import Kind
from .engine import Director
from .gridsim import grid_director, vessel_grid


def _fmt(value) -> str:
    """Locale-independent, shortest round-trip formatting."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as err:
        print(f"invalid config: {err}", file=sys.stderr)
        return 1
    print(json.dumps(derived_quantities(cfg), indent=2, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.steps is not None:
        cfg.run.steps = args.steps
    if args.seed is not None:
        cfg.run.seed = args.seed
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    scenario = cfg.scenario()
    grid = cfg.grid
    cluster = None
    started = time.perf_counter()
    if grid["nx"] * grid["ny"] * grid["nz"] > 1:
        topology = vessel_grid(scenario, grid["nx"], grid["ny"], grid["nz"], grid["padding"])
        director, cluster = grid_director(
            scenario, cfg.run, topology, over_wire=grid["over_wire"]
        )
    else:
        director = Director(scenario, cfg.run)
    if cfg.run.checkpoint_every:
        director.checkpoint_path = out_dir / "checkpoint.npz"
    result = director.run()
    elapsed = time.perf_counter() - started
    if cluster is not None:
        cluster.shutdown()

    kinds = list(Kind)
    header = (
        ["step", "time_s"]
        + [f"live_{k.name.lower()}" for k in kinds]
        + ["emitted", "assimilated", "absorbed", "exited_carriers"]
        + [f"activated_s{s}" for s in scenario.thresholds]
    )
    rows = (
        [r.step, r.time]
        + [r.live[k] for k in kinds]
        + [r.emitted, r.assimilated, r.absorbed, r.exited_carriers]
        + [r.activated[s] for s in scenario.thresholds]
        for r in result.series
    )
    _write_csv(out_dir / "steps.csv", header, rows)

    foot_rows = []
    for s in scenario.thresholds:
        for rec in result.footprints[s]:
            foot_rows.append(
                [s, rec.cell_id, rec.phi, rec.z, rec.t_activation, rec.assimilated]
            )
    _write_csv(
        out_dir / "footprint.csv",
        ["threshold", "cell_id", "phi_rad", "z_m", "t_activation_s", "assimilated"],
        foot_rows,
    )

    metadata = {
        "version": __version__,
        "derived": derived_quantities(cfg),
        "counters": result.counters,
        "final_live": {k.name: v for k, v in result.live.items()},
        "activated": {str(s): director.activated[s] for s in scenario.thresholds},
        "steps": cfg.run.steps,
        "dt_s": cfg.run.dt,
        "seed": cfg.run.seed,
        "partitions": grid["nx"] * grid["ny"] * grid["nz"],
        "over_wire": bool(grid["over_wire"]),
        "wall_clock_s": elapsed,
        "assumptions": {
            "drift_reimposed_each_step": True,
            "wall_contacts_resolved_before_pairs": True,
            "end_caps_absorb_on_contact": True,
            "assimilation_folded_next_step": True,
        },
    }
    (out_dir / "metadata.json").write_text(json.dumps(metadata, indent=2, sort_keys=True))

    if args.plot:
        _plot(out_dir, scenario.thresholds)
    print(f"wrote {out_dir}/steps.csv, footprint.csv, metadata.json")
    return 0


def _plot(out_dir: Path, thresholds) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plots", file=sys.stderr)
        return
    data = np.genfromtxt(out_dir / "steps.csv", delimiter=",", names=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(data["time_s"], data["live_carrier"], label="carriers in flight")
    ax.plot(data["time_s"], data["assimilated"], label="assimilated")
    for s in thresholds:
        ax.plot(data["time_s"], data[f"activated_s{s}"], label=f"activated S={s}")
    ax.set_xlabel("time [s]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "series.png", dpi=120)
    plt.close(fig)


def cmd_report(args) -> int:
    out_dir = Path(args.output)
    meta_path = out_dir / "metadata.json"
    if not meta_path.exists():
        print(f"no metadata.json in {out_dir}", file=sys.stderr)
        return 1
    meta = json.loads(meta_path.read_text())
    print(f"run of {meta['steps']} steps (dt={meta['dt_s']} s, seed={meta['seed']})")
    print(f"partitions: {meta['partitions']}  wall clock: {meta['wall_clock_s']:.2f} s")
    print("carriers:", meta["counters"])
    print("final live:", meta["final_live"])
    print("activated receivers:", meta["activated"])
    foot = (out_dir / "footprint.csv").read_text().splitlines()
    print(f"footprint records: {max(0, len(foot) - 1)}")
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(0)
    print(f"{'n':>8} {'pairs':>8} {'comparisons':>12} {'ms':>8}")
    for n in args.sizes:
        centers = rng.uniform(-1.0, 1.0, size=(n, 3))
        radii = np.full(n, args.radius)
        ids = np.arange(n)
        t0 = time.perf_counter()
        result = broad_phase_arrays(centers, radii, ids, np.zeros(3))
        ms = (time.perf_counter() - t0) * 1e3
        print(f"{n:>8} {len(result.pairs):>8} {result.comparisons:>12} {ms:>8.2f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vesselsim",
        description="particle-level simulation of intra-body molecular communication",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario")
    p_run.add_argument("config", help="JSON config file")
    p_run.add_argument("-o", "--output", default="out", help="output directory")
    p_run.add_argument("--steps", type=int, default=None, help="override step count")
    p_run.add_argument("--seed", type=int, default=None, help="override seed")
    p_run.add_argument("--plot", action="store_true", help="write series.png")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a config and echo derived values")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)

    p_rep = sub.add_parser("report", help="summarize a run directory")
    p_rep.add_argument("output")
    p_rep.set_defaults(func=cmd_report)

    p_bench = sub.add_parser("bench", help="time the neighbor-search broad phase")
    p_bench.add_argument(
        "--sizes", type=int, nargs="+", default=[1000, 2000, 4000, 8000, 16000]
    )
    p_bench.add_argument("--radius", type=float, default=0.01)
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
