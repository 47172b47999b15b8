"""
Command-line front end: ``run``, ``compare``, ``sweep`` and ``validate``.

Exit codes: 0 success, 1 validation or usage error, 2 run failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConfigError, RunConfig, load_run_config, resolve_mission
from .engine import RunResult, run_mission
from .vehicle import CurrentField

__all__ = [
    "EXIT_OK", "EXIT_VALIDATION", "EXIT_RUN_FAILURE",
    "ComparisonReport", "cmd_run", "cmd_compare", "cmd_sweep", "write_plot_data", "main",
]

log = logging.getLogger("auvpath")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUN_FAILURE = 2

SCHEMA_DIR = Path(__file__).parent / "schemas"


@contextlib.contextmanager
def forbid_rng():
    """Make any call into the stdlib or numpy random generators raise."""

    def boom(*args, **kwargs):
        raise RuntimeError("random number generation used in a --seedless run")

    saved = []
    targets = [(random, n) for n in ("random", "seed", "uniform", "gauss", "randint", "choice", "shuffle")]
    targets += [(np.random, n) for n in ("default_rng", "seed", "rand", "randn", "random", "uniform",
                                         "normal", "randint", "choice", "shuffle")]
    for mod, name in targets:
        saved.append((mod, name, getattr(mod, name)))
        setattr(mod, name, boom)
    try:
        yield
    finally:
        for mod, name, fn in saved:
            setattr(mod, name, fn)


def _run_one(job):
    mission, current, cfg, seedless = job
    guard = forbid_rng() if seedless else contextlib.nullcontext()
    with guard:
        return run_mission(mission, CurrentField(*current), cfg.params, cfg.sim, cfg.optimizer, cfg.mpc)


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs))


def write_plot_data(result: RunResult, outdir: Path) -> None:
    """Long-format (time, variable, value) CSV plus an XYZ trajectory CSV."""
    from .engine import TELEMETRY_COLUMNS

    with open(outdir / "plot_long.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "variable", "value"])
        for row in result.telemetry:
            t = repr(float(row[0]))
            for name, val in zip(TELEMETRY_COLUMNS[1:], row[1:]):
                w.writerow([t, name, repr(float(val))])
    with open(outdir / "trajectory_xyz.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for x, y, z in result.telemetry[:, 1:4]:
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z))])


def cmd_run(cfg: RunConfig, seedless: bool = False) -> RunResult:
    """Run one mission and write telemetry, metrics and per-DOF energy files."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    result = _run_one((cfg.mission, (cfg.current.vx, cfg.current.vy), cfg, seedless))
    result.write_telemetry_csv(outdir / "telemetry.csv")
    result.write_metrics_json(outdir / "metrics.json")
    result.write_energy_csv(outdir / "energy_by_dof.csv")
    write_plot_data(result, outdir)
    return result


def _row_metrics(result: RunResult) -> dict:
    m = result.metrics
    return {
        "energy": m.total_energy,
        "travel_time": m.travel_time,
        "cross_track": m.mean_cross_track,
        "energy_surge": m.energy_surge,
        "energy_yaw": m.energy_yaw,
        "energy_heave": m.energy_heave,
        "energy_pitch": m.energy_pitch,
        "completed": m.completed,
        "error": result.error,
    }


@dataclass
class ComparisonReport:
    """Proposed vs LOS benchmark, one row per (mission, current)."""

    rows: list = field(default_factory=list)

    @staticmethod
    def saving(e_los: float, e_proposed: float) -> float:
        return (e_los - e_proposed) / e_los

    @property
    def valid_rows(self) -> list:
        return [r for r in self.rows if r["valid"]]

    @property
    def mean_saving_percent(self) -> Optional[float]:
        rows = self.valid_rows
        if not rows:
            return None
        return 100.0 * sum(r["saving"] for r in rows) / len(rows)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "n_rows": len(self.rows),
            "n_valid": len(self.valid_rows),
            "mean_saving_percent": self.mean_saving_percent,
        }

    def table(self) -> str:
        head = (f"{'mission':<11} {'current [vx, vy] (m/s)':<24} {'method':<9} "
                f"{'energy (J)':>12} {'time (s)':>9} {'3D xtrack (m)':>14}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            cur = f"[{r['current'][0]:.4f}, {r['current'][1]:.4f}]"
            for kind in ("proposed", "los"):
                m = r[kind]
                label = "Proposed" if kind == "proposed" else "LOS"
                lines.append(f"{r['mission']:<11} {cur:<24} {label:<9} {m['energy']:>12.1f} "
                             f"{m['travel_time']:>9.1f} {m['cross_track']:>14.4f}")
            note = f"saving {100 * r['saving']:.2f}%" if r["valid"] else "excluded (run failed)"
            lines.append(f"{'':<11} {'':<24} {note}")
        msp = self.mean_saving_percent
        lines.append("-" * len(head))
        lines.append("mean energy saving: " + ("n/a" if msp is None else f"{msp:.2f}%"))
        return "\n".join(lines)


def cmd_compare(cfg: RunConfig, seedless: bool = False) -> ComparisonReport:
    """Both controllers on every (mission, current) pair."""
    missions = [(name, resolve_mission(name)) for name in cfg.missions]
    jobs, keys = [], []
    for mname, mission in missions:
        for cur in cfg.currents:
            for kind in ("proposed", "los"):
                sub = RunConfig(params=cfg.params, mission=mission, controller=kind, current=CurrentField(*cur),
                                optimizer=cfg.optimizer, mpc=cfg.mpc, sim=cfg.sim)
                jobs.append((mission, tuple(cur), sub, seedless))
                keys.append((mission.name, tuple(cur), kind))
    results = dict(zip(keys, _map(jobs, cfg.workers)))

    report = ComparisonReport()
    for mname, mission in missions:
        for cur in cfg.currents:
            pr = results[(mission.name, tuple(cur), "proposed")]
            lr = results[(mission.name, tuple(cur), "los")]
            row = {
                "mission": mission.name,
                "current": [float(cur[0]), float(cur[1])],
                "proposed": _row_metrics(pr),
                "los": _row_metrics(lr),
            }
            ok = pr.error is None and lr.error is None and pr.metrics.completed and lr.metrics.completed
            row["valid"] = bool(ok)
            row["saving"] = ComparisonReport.saving(lr.metrics.total_energy, pr.metrics.total_energy) if ok else None
            if not ok:
                log.warning("comparison row %s %s excluded: %s", mission.name, cur, pr.error or lr.error or "incomplete")
            report.rows.append(row)

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "comparison.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (outdir / "comparison.txt").write_text(report.table() + "\n")
    return report


def cmd_sweep(cfg: RunConfig, seedless: bool = False) -> dict:
    """One run per current on the vx-by-vy grid; failures are recorded and skipped."""
    grid = cfg.sweep_grid or {}
    vxs, vys = grid.get("vx", []), grid.get("vy", [])
    if not vxs or not vys:
        raise ConfigError("sweep needs a non-empty current grid (sweep_grid.vx and sweep_grid.vy)")
    points = [(float(vx), float(vy)) for vx in vxs for vy in vys]
    rows, jobs, idx = [], [], []
    for p in points:
        row = {"current": list(p), "controller": cfg.controller, "mission": cfg.mission.name}
        try:
            cfg.check_current(CurrentField(*p))
        except ConfigError as exc:
            row.update(status="rejected", error=str(exc))
            rows.append(row)
            continue
        row["status"] = "pending"
        rows.append(row)
        idx.append(len(rows) - 1)
        jobs.append((cfg.mission, p, cfg, seedless))
    for i, res in zip(idx, _map(jobs, cfg.workers)):
        m = res.metrics
        rows[i].update(
            status="ok" if res.error is None else "failed",
            error=res.error,
            energy=m.total_energy,
            travel_time=m.travel_time,
            cross_track=m.mean_cross_track,
            completed=m.completed,
        )
    report = {"mission": cfg.mission.name, "controller": cfg.controller, "rows": rows}
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "sweep.json").write_text(json.dumps(report, indent=2) + "\n")
    cols = ["vx", "vy", "status", "energy", "travel_time", "cross_track", "completed", "error"]
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r["current"][0], r["current"][1], r["status"], r.get("energy", ""),
                        r.get("travel_time", ""), r.get("cross_track", ""), r.get("completed", ""),
                        r.get("error") or ""])
    return report


def _parse_current(text: str) -> CurrentField:
    try:
        vx, vy = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--current expects 'vx,vy', got {text!r}") from None
    return CurrentField(vx, vy)


def _parse_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auvpath", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON file")
    common.add_argument("--mission", help="built-in mission name (lawnmower, inspection) or mission file")
    common.add_argument("--controller", choices=("proposed", "los"))
    common.add_argument("--current", help="constant current as 'vx,vy' in m/s")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seedless", action="store_true", help="fail if any random number generator is used")
    common.add_argument("--workers", type=int, help="parallel worker processes for compare/sweep")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("run", parents=[common], help="simulate one mission")
    sub.add_parser("compare", parents=[common], help="proposed vs LOS benchmark over missions and currents")
    sp = sub.add_parser("sweep", parents=[common], help="one run per current on a grid")
    sp.add_argument("--grid-vx", help="comma-separated vx values")
    sp.add_argument("--grid-vy", help="comma-separated vy values")
    sub.add_parser("validate", parents=[common], help="check a config without running")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config)
        cfg = cfg.with_overrides(
            mission=args.mission,
            controller=args.controller,
            current=_parse_current(args.current) if args.current else None,
            output_dir=args.out,
        )
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
        if args.command == "sweep" and (args.grid_vx or args.grid_vy):
            cfg.sweep_grid = {"vx": _parse_list(args.grid_vx or ""), "vy": _parse_list(args.grid_vy or "")}
        if args.command == "sweep" and not (cfg.sweep_grid and cfg.sweep_grid["vx"] and cfg.sweep_grid["vy"]):
            raise ConfigError("sweep needs a non-empty current grid (--grid-vx/--grid-vy or sweep_grid)")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        print("config OK")
        return EXIT_OK
    try:
        if args.command == "run":
            res = cmd_run(cfg, args.seedless)
            m = res.metrics
            print(f"{res.mission} / {res.controller}: energy {m.total_energy:.1f} J, "
                  f"travel time {m.travel_time:.1f} s, 3D cross-track {m.mean_cross_track:.4f} m, "
                  f"completed {m.completed}")
            if res.error:
                print(f"run aborted: {res.error}", file=sys.stderr)
            return EXIT_OK if m.completed and res.error is None else EXIT_RUN_FAILURE
        if args.command == "compare":
            report = cmd_compare(cfg, args.seedless)
            print(report.table())
            return EXIT_OK if len(report.valid_rows) == len(report.rows) else EXIT_RUN_FAILURE
        if args.command == "sweep":
            report = cmd_sweep(cfg, args.seedless)
            failed = [r for r in report["rows"] if r["status"] == "failed"]
            print(f"sweep: {len(report['rows'])} points, {len(failed)} failed, "
                  f"{sum(r['status'] == 'rejected' for r in report['rows'])} rejected")
            return EXIT_RUN_FAILURE if failed else EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any crash is a run failure for the exit-code contract
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
