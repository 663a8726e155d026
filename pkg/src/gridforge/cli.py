"""Command line entry point: build, simulate, report."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from . import powerflow as pf
from .loads import LoadProfile
from .model import EquipmentCatalog, ModelError, canonical_json, export_geojson, export_model, import_model
from .pipeline import StageError, build

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("gridforge")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
LOG_ENV = "GRIDFORGE_LOG_LEVEL"
PAPER_INSTANTS = ((7, 15, 12), (7, 15, 20), (12, 15, 12), (12, 15, 20))
RESULT_COLUMNS = ("timestamp_utc", "scenario", "converged", "iterations", "trafo_loading_max_pct",
                  "line_loading_max_pct", "line_loading_avg_pct", "voltage_max_pu", "voltage_min_pu",
                  "losses_kva")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    streets: Path | None = None
    buildings: Path | None = None
    substations: Path | None = None
    catalog: Path | None = None
    profile: Path | None = None
    out_dir: Path = Path("out")
    time_limit: float | None = 60.0
    node_limit: int | None = None
    s_max_bounds: tuple[int | None, int | None] = (None, None)
    hv_tap: int = 0
    scenario: str = "present"
    preset: str | None = None
    window: str | None = None
    step: str = "15m"
    timezone: str = "Europe/Berlin"
    year: int = 2021
    seed: int = 0

    def scenarios(self) -> list[str]:
        if self.scenario.strip().lower() == "both":
            return list(pf.SCENARIOS)
        return [pf.normalise_scenario(self.scenario)]

    def check_inputs(self):
        for name in ("streets", "buildings", "substations"):
            p = getattr(self, name)
            if p is None:
                raise ConfigError(f"no {name} file given (config [inputs].{name} or --{name})")
            if not p.is_file():
                raise ConfigError(f"{name} file not found: {p}")
        for name in ("catalog", "profile"):
            p = getattr(self, name)
            if p is not None and not p.is_file():
                raise ConfigError(f"{name} file not found: {p}")


def load_config(path) -> RunConfig:
    """RunConfig from TOML; relative paths resolve against the file's folder."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent
    known = {"inputs", "build", "simulate", "output"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config sections {unknown}")
    inp, bld = data.get("inputs", {}), data.get("build", {})
    sim, out = data.get("simulate", {}), data.get("output", {})

    def rel(v):
        return None if v is None else (base / v)

    try:
        cfg = RunConfig(
            streets=rel(inp.get("streets")),
            buildings=rel(inp.get("buildings")),
            substations=rel(inp.get("substations")),
            catalog=rel(inp.get("catalog")),
            profile=rel(inp.get("profile")),
            out_dir=rel(out.get("dir", "out")),
            time_limit=float(bld["time_limit_s"]) if "time_limit_s" in bld else 60.0,
            node_limit=bld.get("node_limit"),
            s_max_bounds=(bld.get("s_max_min"), bld.get("s_max_max")),
            hv_tap=int(bld.get("hv_tap", 0)),
            scenario=sim.get("scenario", "present"),
            preset=sim.get("preset"),
            window=sim.get("window"),
            step=sim.get("step", "15m"),
            timezone=sim.get("timezone", "Europe/Berlin"),
            year=int(sim.get("year", 2021)),
            seed=int(out.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg


def parse_step(text: str) -> timedelta:
    m = re.fullmatch(r"\s*(\d+)\s*(s|sec|m|min|h|hour)\s*", text)
    if not m or int(m.group(1)) == 0:
        raise ConfigError(f"bad step {text!r}; use e.g. 15m, 1h")
    n, unit = int(m.group(1)), m.group(2)
    return timedelta(seconds=n) if unit.startswith("s") else \
        timedelta(minutes=n) if unit.startswith("m") else timedelta(hours=n)


def _zone(name: str):
    try:
        return ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError) as exc:
        raise ConfigError(f"unknown time zone {name!r}") from exc


def parse_window(text: str, tz: str) -> tuple[datetime, datetime]:
    """'START..END' in local time. A bare end date is inclusive (whole day)."""
    if ".." not in text:
        raise ConfigError(f"bad window {text!r}; expected START..END, e.g. 2021-07-12..2021-07-18")
    a, b = (s.strip() for s in text.split("..", 1))
    zone = _zone(tz)

    def parse(s, end):
        try:
            if len(s) == 10:
                d = date.fromisoformat(s)
                if end:
                    d += timedelta(days=1)
                t = datetime(d.year, d.month, d.day)
            else:
                t = datetime.fromisoformat(s)
        except ValueError as exc:
            raise ConfigError(f"bad window bound {s!r}: {exc}") from exc
        if t.tzinfo is None:
            t = t.replace(tzinfo=zone)
        return t.astimezone(timezone.utc)

    t0, t1 = parse(a, False), parse(b, True)
    if not t1 > t0:
        raise ConfigError(f"window {text!r} is empty")
    return t0, t1


def paper_instants(year: int, tz: str) -> list[datetime]:
    """Mid-July and mid-December, noon and 20:00 local time, as UTC."""
    zone = _zone(tz)
    return [datetime(year, m, d, h, tzinfo=zone).astimezone(timezone.utc) for m, d, h in PAPER_INSTANTS]


def _fmt(v, digits=6) -> str:
    if v is None:
        return ""
    return f"{v:.{digits}f}"


def results_csv(series_by_scenario: dict[str, pf.SeriesResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for sc, series in series_by_scenario.items():
        for t, r in zip(series.timestamps, series.rows):
            w.writerow([
                t.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"), sc, int(r["converged"]),
                r["iterations"], _fmt(r["trafo_loading_max"]), _fmt(r["line_loading_max"]),
                _fmt(r["line_loading_avg"]), _fmt(r["voltage_max"], 8), _fmt(r["voltage_min"], 8),
                _fmt(r["losses_kva"]),
            ])
    return buf.getvalue()


def _round(obj, digits=9):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _round(v, digits) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round(v, digits) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# commands


def cmd_build(cfg: RunConfig) -> int:
    cfg.check_inputs()
    catalog = EquipmentCatalog.load(cfg.catalog)
    profile = LoadProfile.from_csv(cfg.profile, cfg.timezone) if cfg.profile else LoadProfile.synthetic(cfg.timezone)
    res = build(cfg.streets, cfg.buildings, cfg.substations, catalog, profile,
                capacity_bounds=cfg.s_max_bounds, time_limit=cfg.time_limit,
                node_limit=cfg.node_limit, hv_tap=cfg.hv_tap)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    export_model(res.model, cfg.out_dir / "model.json")
    export_geojson(res.model, cfg.out_dir / "topology.geojson")
    report = {**res.report(), "seed": cfg.seed}
    (cfg.out_dir / "build_report.json").write_text(canonical_json(_round(report)), encoding="utf-8")
    inv = res.model.inventory()
    print(f"model: {cfg.out_dir / 'model.json'}")
    print(f"s_max* = {res.s_max_va} VA, radial length {res.objective_m:.1f} m ({res.status})")
    print("inventory: " + ", ".join(f"{k}={v}" for k, v in inv.items()))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, model_path: Path, at: list[str] | None = None) -> int:
    if not model_path.is_file():
        raise ConfigError(f"model file not found: {model_path}")
    if cfg.profile is not None and not cfg.profile.is_file():
        raise ConfigError(f"profile file not found: {cfg.profile}")
    scenarios = cfg.scenarios()
    if sum(x is not None for x in (cfg.window, cfg.preset, at or None)) > 1:
        raise ConfigError("choose one of --preset, --window or --at")
    if cfg.window:
        t0, t1 = parse_window(cfg.window, cfg.timezone)
        stamps = pf.window(t0, t1, parse_step(cfg.step))
        mode = "window"
    elif at:
        zone = _zone(cfg.timezone)
        stamps = []
        for s in at:
            try:
                t = datetime.fromisoformat(s)
            except ValueError as exc:
                raise ConfigError(f"bad timestamp {s!r}") from exc
            stamps.append((t if t.tzinfo else t.replace(tzinfo=zone)).astimezone(timezone.utc))
        mode = "instants"
    else:
        if cfg.preset not in (None, "paper-instants"):
            raise ConfigError(f"unknown preset {cfg.preset!r}; available: paper-instants")
        stamps = paper_instants(cfg.year, cfg.timezone)
        mode = "instants"
    try:
        model = import_model(model_path)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    profile = LoadProfile.from_csv(cfg.profile, cfg.timezone) if cfg.profile else LoadProfile.synthetic(cfg.timezone)
    net = pf.Network(model)
    series = {sc: pf.run_series(net, stamps, sc, profile) for sc in scenarios}
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "results.csv").write_text(results_csv(series), encoding="utf-8")
    report = {"mode": "window" if mode == "window" else "instants", "model": model_path.name, "scenarios": {}}
    for sc, s in series.items():
        section = {"aggregates": s.aggregates()}
        if mode == "instants":
            section["snapshots"] = [{"timestamp_utc": t.strftime("%Y-%m-%dT%H:%M:%SZ"), **r}
                                    for t, r in zip(s.timestamps, s.rows)]
        report["scenarios"][sc] = section
        export_geojson(model, cfg.out_dir / f"heatmap-{sc}.geojson", s)
    (cfg.out_dir / "report.json").write_text(canonical_json(_round(report)), encoding="utf-8")
    failed = sum(s.n_failed for s in series.values())
    total = sum(len(s.rows) for s in series.values())
    for sc, s in series.items():
        a = s.aggregates()
        print(f"[{sc}] {a['snapshots']} snapshots, line loading max {_fmt(a['line_loading_max'], 2)} %, "
              f"voltage {_fmt(a['voltage_min'], 4)}..{_fmt(a['voltage_max'], 4)} p.u.")
    if failed:
        logger.warning("%d of %d snapshots did not converge", failed, total)
    return EXIT_RUNTIME if failed == total else EXIT_OK


def cmd_report(path: Path) -> int:
    if path.is_dir():
        path = path / "report.json"
    if not path.is_file():
        raise ConfigError(f"report file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not a JSON report ({exc.msg})") from exc
    if "scenarios" not in data:
        print(json.dumps(data, indent=1, sort_keys=True))
        return EXIT_OK
    for sc, sec in data["scenarios"].items():
        print(f"== {sc} ==")
        for k, v in sec["aggregates"].items():
            print(f"  {k:24s} {v}")
        for snap in sec.get("snapshots", []):
            print(f"  {snap['timestamp_utc']}  line max {_fmt(snap['line_loading_max'], 2):>8s} %  "
                  f"avg {_fmt(snap['line_loading_avg'], 2):>7s} %  trafo {_fmt(snap['trafo_loading_max'], 2):>7s} %  "
                  f"V {_fmt(snap['voltage_min'], 4)}..{_fmt(snap['voltage_max'], 4)}  "
                  f"losses {_fmt(snap['losses_kva'], 2)} kVA")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument handling


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridforge", description="Synthetic LV grid models from street and building data.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="ingest, radialise, assemble and export model.json")
    b.add_argument("--config", type=Path)
    b.add_argument("--streets", type=Path)
    b.add_argument("--buildings", type=Path)
    b.add_argument("--substations", type=Path)
    b.add_argument("--catalog", type=Path)
    b.add_argument("--profile", type=Path)
    b.add_argument("--out", type=Path)
    b.add_argument("--time-limit", type=float, help="seconds per optimisation (default 60)")
    b.add_argument("--node-limit", type=int)
    b.add_argument("--s-min", type=int, help="lower bisection bound for s_max (VA)")
    b.add_argument("--s-max", type=int, help="upper bisection bound for s_max (VA)")
    b.add_argument("--hv-tap", type=int, help="HV/MV transformer tap position (-2..2)")
    b.add_argument("--seed", type=int)

    s = sub.add_parser("simulate", help="power flow at instants or over a window")
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--config", type=Path)
    s.add_argument("--profile", type=Path)
    s.add_argument("--out", type=Path)
    s.add_argument("--scenario", help="present, full-pv or both")
    s.add_argument("--preset", help="paper-instants")
    s.add_argument("--window", help="START..END, e.g. 2021-07-12..2021-07-18 (local dates, end inclusive)")
    s.add_argument("--step", help="time step, e.g. 15m")
    s.add_argument("--at", nargs="+", help="explicit ISO timestamps (local unless an offset is given)")
    s.add_argument("--timezone")
    s.add_argument("--year", type=int)

    r = sub.add_parser("report", help="print a report.json")
    r.add_argument("path", type=Path)
    return p


def _merge(cfg: RunConfig, args) -> RunConfig:
    """Command-line flags win over config values."""
    over = {}
    for flag, name in (("streets", "streets"), ("buildings", "buildings"), ("substations", "substations"),
                       ("catalog", "catalog"), ("profile", "profile"), ("out", "out_dir"),
                       ("time_limit", "time_limit"), ("node_limit", "node_limit"), ("hv_tap", "hv_tap"),
                       ("seed", "seed"), ("scenario", "scenario"), ("preset", "preset"), ("window", "window"),
                       ("step", "step"), ("timezone", "timezone"), ("year", "year")):
        v = getattr(args, flag, None)
        if v is not None:
            over[name] = v
    lo, hi = cfg.s_max_bounds
    if getattr(args, "s_min", None) is not None:
        lo = args.s_min
    if getattr(args, "s_max", None) is not None:
        hi = args.s_max
    over["s_max_bounds"] = (lo, hi)
    if over.get("window") and "preset" not in over:
        over["preset"] = None
    if over.get("preset") and "window" not in over:
        over["window"] = None
    return replace(cfg, **over)


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "report":
            return cmd_report(args.path)
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = _merge(cfg, args)
        if cfg.scenario.strip().lower() != "both":
            try:
                pf.normalise_scenario(cfg.scenario)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if not -2 <= cfg.hv_tap <= 2:
            raise ConfigError(f"hv tap {cfg.hv_tap} outside [-2, 2]")
        if args.command == "build":
            return cmd_build(cfg)
        return cmd_simulate(cfg, args.model, args.at)
    except ConfigError as exc:
        print(f"gridforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"gridforge: {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"gridforge: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
