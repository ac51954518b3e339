"""Command-line scenario runner.

    floodbed --scenario attack10-mitigation --seed 3 --out runs/a10m
    floodbed --config my.yaml --mode live --port 0 --out runs/live
    floodbed --scenario attack10-nomitigation --sweep-gamma --out runs/sweep

Exit codes: 0 ok, 2 config error, 3 transport error, 4 contract violation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .confusion import ConfusionCounts
from .ids import GAMMA_PRESETS, ContractError, Label, evaluate
from .metrics import RunManifest, render_charts, summarize, write_report
from .scenario import PRESETS, ConfigError, Scenario, load_config, preset
from .sim import RunResult, run_sim
from .timeline import write_run
from .transport import TransportError

log = logging.getLogger("floodbed")

EXIT_OK, EXIT_CONFIG, EXIT_TRANSPORT, EXIT_CONTRACT = 0, 2, 3, 4
SWEEP_GRID = tuple(round(g, 2) for g in np.arange(0.0, 1.0001, 0.05))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floodbed", description="UDP flood / IDS / mitigation testbed")
    p.add_argument("--scenario", choices=PRESETS, help="built-in preset (default: benign-only)")
    p.add_argument("--config", type=Path, help="YAML scenario file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("sim", "live"))
    p.add_argument("--port", type=int, help="live mode UDP port (0 = ephemeral)")
    p.add_argument("--gamma", help="detection threshold, a number or one of: " + ", ".join(GAMMA_PRESETS))
    p.add_argument("--mitigation", choices=("on", "off"))
    p.add_argument("--duration", type=float, help="scenario horizon in seconds")
    p.add_argument("--time-scale", type=float, help="live mode: virtual seconds per wall second")
    p.add_argument("--out", type=Path, default=Path("runs/latest"), help="output directory")
    p.add_argument("--sweep-gamma", nargs="?", const="grid", metavar="G1,G2,...",
                   help="sweep the threshold (sim mode); default grid 0, 0.05, ..., 1")
    p.add_argument("--no-charts", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _gamma(value: str) -> float:
    if value in GAMMA_PRESETS:
        return GAMMA_PRESETS[value]
    try:
        g = float(value)
    except ValueError:
        raise ConfigError(f"ids.gamma: not a number or preset: {value!r}") from None
    if not math.isfinite(g) or g < 0:
        raise ConfigError("ids.gamma: must be a finite value >= 0")
    return g


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    if args.config is not None:
        sc = load_config(args.config)
        if args.scenario is not None:
            log.warning("--scenario ignored when --config is given")
    else:
        sc = preset(args.scenario or "benign-only")
    if args.seed is not None:
        sc.seed = args.seed
    if args.mode is not None:
        sc.transport.mode = args.mode
    if args.port is not None:
        sc.transport.port = args.port
    if args.gamma is not None:
        sc.ids.gamma = _gamma(args.gamma)
    if args.mitigation is not None:
        sc.mitigation.enabled = args.mitigation == "on"
    if args.duration is not None:
        sc.duration = args.duration
    if args.time_scale is not None:
        sc.transport.time_scale = args.time_scale
    return sc.validate()


def execute(sc: Scenario) -> RunResult:
    if sc.transport.mode == "live":
        from .live import run_live
        return run_live(sc)
    return run_sim(sc)


def persist(result: RunResult, out: Path, charts: bool = True, manifest_extra: Optional[dict] = None) -> dict:
    """Write manifest, CSVs, charts and report.json; return the report."""
    sc = result.scenario
    out.mkdir(parents=True, exist_ok=True)
    RunManifest(sc.name, sc.to_dict(), sc.seed, sc.transport.mode, extra=manifest_extra or {}).write(
        out / "manifest.json")
    write_run(out, result.log, result.truth)
    if charts and result.log.samples:
        render_charts(result.log, out)
    report = summarize(result.log, result.truth)
    write_report(out / "report.json", report)
    return report


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4g}"
    return str(v)


def summary_rows(sc: Scenario, report: dict) -> list[tuple[str, str]]:
    c = report["confusion"] or {}
    rows = [
        ("scenario", sc.name), ("mode", sc.transport.mode), ("seed", str(sc.seed)),
        ("gamma", _fmt(sc.ids.gamma)), ("complete", str(report["complete"])),
        ("trained_at_s", _fmt(report["trained_at"])), ("decisions", str(report["decisions"])),
    ]
    for k in ("tp", "fp", "tn", "fn", "accuracy", "tpr", "tnr"):
        rows.append((k, _fmt(c.get(k))))
    rows += [
        ("peak_queue", str(report["peak_queue"])),
        ("max_delay_ms", _fmt(report["max_delay_ms"])),
        ("activations", " ".join(f"{t:.4f}" for t in report["activations"]) or "-"),
        ("benign_collateral", str(report["benign_collateral"])),
        ("dropped_flood", str(report["dropped_flood"])),
    ]
    for i, a in enumerate(report["attacks"]):
        rows.append((f"attack[{i}]", f"{a['start']:g}-{a['end']:g}s backlog={_fmt(a['backlog_at_end'])} "
                                     f"drain={_fmt(a['drain_time'])}s"))
    if "os_lost" in report["stats"]:
        rows.append(("os_lost", str(report["stats"]["os_lost"])))
    return rows


def print_table(rows, file=None) -> None:
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}", file=file or sys.stdout)


# ------------------------------------------------------------------ γ sweep

@dataclasses.dataclass(frozen=True)
class SweepRow:
    gamma: float
    counts: ConfusionCounts


def _rethreshold(decisions, gamma: float):
    return [dataclasses.replace(d, gamma=gamma, label=Label.ATTACK if d.score > gamma else Label.NORMAL)
            for d in decisions]


def sweep_gamma(sc: Scenario, grid: Sequence[float]) -> tuple[list[SweepRow], float]:
    """Per-γ confusion counts and the accuracy-maximising γ (first on ties).

    Without mitigation the label never feeds back into the traffic, so one
    run is re-thresholded.  With mitigation each γ is a fresh run.
    """
    if sc.transport.mode != "sim":
        raise ConfigError("transport.mode: the threshold sweep needs sim mode")
    grid = sorted(set(float(g) for g in grid))
    rows = []
    if not sc.mitigation.enabled:
        base = run_sim(sc)
        for g in grid:
            rows.append(SweepRow(g, evaluate(_rethreshold(base.log.decisions, g), base.truth)))
    else:
        for g in grid:
            s = copy.deepcopy(sc)
            s.ids.gamma = g
            r = run_sim(s)
            rows.append(SweepRow(g, evaluate(r.log.decisions, r.truth)))
    accs = [r.counts.accuracy for r in rows]
    best = rows[int(np.nanargmax(accs))].gamma if not all(math.isnan(a) for a in accs) else float("nan")
    return rows, best


def write_sweep(path: Path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "tp", "fp", "tn", "fn", "accuracy", "tpr", "tnr", "fpr"])
        for r in rows:
            c = r.counts
            w.writerow([repr(r.gamma), c.tp, c.fp, c.tn, c.fn, repr(c.accuracy), repr(c.tpr),
                        repr(c.tnr), repr(c.fpr)])


def _parse_grid(text: str) -> list[float]:
    if text == "grid":
        return list(SWEEP_GRID)
    try:
        return [_gamma(t.strip()) for t in text.split(",") if t.strip()]
    except ConfigError:
        raise ConfigError(f"--sweep-gamma: bad grid {text!r}") from None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = scenario_from_args(args)
        if args.sweep_gamma is not None:
            rows, best = sweep_gamma(sc, _parse_grid(args.sweep_gamma))
            args.out.mkdir(parents=True, exist_ok=True)
            write_sweep(args.out / "gamma_sweep.csv", rows)
            print(f"{'gamma':>7} {'acc':>7} {'tpr':>7} {'tnr':>7}")
            for r in rows:
                c = r.counts
                print(f"{r.gamma:7.4f} {_fmt(c.accuracy):>7} {_fmt(c.tpr):>7} {_fmt(c.tnr):>7}")
            print(f"best gamma (max accuracy): {_fmt(best)}")
            return EXIT_OK
        result = execute(sc)
        report = persist(result, args.out, charts=not args.no_charts)
        print_table(summary_rows(result.scenario, report))
        print(f"outputs: {args.out}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
