"""``rfimap`` command line.

Each subcommand reads the previous stage's files and writes its own::

    ingest -> points.csv -> fit-nominal -> model.json -> optimize-threshold -> regions.json
    points.csv + model.json + regions.json -> classify -> classified.csv -> evaluate
    simulate -> stream.jsonl + truth.csv

Exit codes: 0 ok, 1 other error, 2 missing input/config or bad usage,
3 model/region hash mismatch, 4 input schema errors under ``--strict``,
5 calibration, 6 model or region geometry, 7 optimizer, 8 evaluation,
9 refusing to overwrite an output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import errors as E
from .calibration import CalibrationConfig, calibrate_stream
from .evaluate import RFI_LABELS, EvaluationReport, as_label, score_detection, window_slice
from .files import (
    load_model,
    load_regions,
    read_classified,
    read_json,
    read_points,
    read_truth,
    save_model,
    save_regions,
    write_classified,
    write_json,
    write_jsonl,
    write_points,
    write_text,
    write_truth,
)
from .nominal import fit_nominal, recenter
from .plotting import density_grid, render_figure, write_density_csv
from .regions import Label, RegionConfig, build_regions, classify_stream
from .simulate import (
    Baseline,
    Event,
    EventKind,
    ScenarioScript,
    ramp_crossing_time,
    render,
    scenario_windows,
    step_jam_script,
    stream_to_records,
)
from .threshold import FalsificationConfig, SimplexConfig, optimize_threshold
from .ubx import read_epoch_stream

log = logging.getLogger("rfimap")

CONFIG_ENV = "RFIMAP_CONFIG_DIR"
CONFIG_NAME = "calibration.json"


class UsageError(E.RfiMapError):
    pass


class MissingInput(E.RfiMapError):
    pass


class StrictFailure(E.RfiMapError):
    pass


EXIT_CODES = (
    (MissingInput, 2),
    (UsageError, 2),
    (E.Unreadable, 2),
    (E.HashMismatch, 3),
    (StrictFailure, 4),
    (E.SchemaViolation, 4),
    (E.FrameError, 4),
    ((E.AlreadyAdjusted, E.Underdetermined, E.DegenerateTemps, E.TempOutOfRange,
      E.BandNotCovered, E.BinMisalignment, E.Saturated), 5),
    ((E.TooFewPoints, E.DegenerateCovariance, E.EllipseExcludesMean), 6),
    ((E.NoFeasiblePoint, E.DegenerateProposal), 7),
    ((E.LengthMismatch, E.WindowOutOfRange, E.NoRamp), 8),
    (E.OutputExists, 9),
)


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} not found: {p}")
    return p


def _inputs(paths, what="input") -> list:
    return [_require(p, what) for p in paths]


def load_config(path) -> CalibrationConfig:
    """Explicit ``--config``, else ``$RFIMAP_CONFIG_DIR/calibration.json``, else defaults."""
    if path:
        return CalibrationConfig.from_file(_require(path, "calibration config"))
    env = os.environ.get(CONFIG_ENV)
    if env:
        candidate = Path(env) / CONFIG_NAME
        if candidate.exists():
            return CalibrationConfig.from_file(candidate)
    return CalibrationConfig()


def _seed(args) -> int:
    if args.seed is None:
        if args.strict:
            raise UsageError("--seed is required in --strict mode")
        return 0
    return args.seed


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def _warn(msg: str) -> None:
    print(f"rfimap: {msg}", file=sys.stderr)


# -- subcommands ---------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = load_config(args.config)
    records = []
    n_errors = 0
    for path in _inputs(args.inputs):
        res = read_epoch_stream(path)
        for err in res.errors:
            log.debug("%s: %s", path, err)
        n_errors += len(res.errors)
        for w in res.warnings:
            log.info("%s: %s", path, w)
        records.extend(res.records)
    records.sort(key=lambda r: r.timestamp)
    rep = calibrate_stream(records, cfg, window=args.window)
    write_points(_out(args, "points.csv"), rep.points, args.force)
    _warn(f"{len(rep.points)} points written, {n_errors} schema violations, "
          f"{rep.dropped} epochs dropped, {rep.saturated} saturated spectra, "
          f"{len(rep.rejected)} spectra rejected")
    if args.strict and (n_errors or rep.rejected):
        raise StrictFailure(f"{n_errors} schema violations and {len(rep.rejected)} rejected spectra")
    return 0


def cmd_fit(args) -> int:
    if not args.attest_nominal:
        raise UsageError("fit-nominal needs --attest-nominal: training data must be interference-free")
    points = []
    for path in _inputs(args.inputs):
        points.extend(read_points(path))
    model = fit_nominal(points, elevation_bin=args.elevation, sat_filter=args.sat or None,
                        min_points=args.min_points)
    digest = save_model(_out(args, "model.json"), model, args.force,
                        inputs=[str(p) for p in args.inputs])
    _warn(f"model {digest[:12]} fitted on {model.n_points} points, mean "
          f"({model.mean[0]:.2f}, {model.mean[1]:.2f})")
    return 0


def cmd_optimize(args) -> int:
    model = load_model(_require(args.model, "model file"))
    fcfg = FalsificationConfig(rollouts=args.rollouts, proposal_scale=args.proposal_scale,
                               target_fpr=args.target_fpr, seed=_seed(args),
                               quantize=not args.continuous)
    report = optimize_threshold(model, fcfg, SimplexConfig(max_iter=args.max_iter))
    regions = build_regions(model, report.ellipse,
                            RegionConfig(cn0_floor=args.cn0_floor, jam_slope=args.jam_slope,
                                         quantize=not args.continuous))
    out = _out(args, "regions.json")
    save_regions(out, regions, args.force)
    report_path = Path(args.report) if args.report else out.with_name(out.stem + ".report.json")
    write_json(report_path, report.to_dict() | {"model_hash": regions.model_hash}, args.force)
    est = report.achieved_fpr
    _warn(f"ellipse area {report.area:.3f}, p_hat {est.p_hat:.3g} +/- {est.std_err:.2g} "
          f"after {report.iterations} iterations")
    return 0


def cmd_classify(args) -> int:
    model = load_model(_require(args.model, "model file"))
    regions = load_regions(_require(args.regions, "region file"), model)
    points = []
    for path in _inputs(args.inputs):
        points.extend(read_points(path))
    if args.local_nominal:
        local = read_points(_require(args.local_nominal, "local nominal file"))
        moved, delta = recenter(model, local)
        regions = regions.shifted(delta, moved.content_hash())
        _warn(f"recentred by ({delta.d_rx_power:+.2f} dB, {delta.d_cn0:+.2f} dB-Hz)")
    result = classify_stream(points, regions)
    write_classified(_out(args, "classified.csv"), result.items, args.force)
    summary = ", ".join(f"{lab.value}={result.counts[lab]}" for lab in Label)
    _warn(f"{len(result)} points: {summary}")
    return 0


def _preset(name: str, duration: float | None) -> ScenarioScript:
    base = Baseline()
    if name == "nominal":
        return ScenarioScript(duration or 7200.0, baseline=base)
    if name == "step":
        return step_jam_script(hours=(duration or 8 * 3600.0) / 3600.0, baseline=base)
    if name == "ramp":
        script = ScenarioScript(1200.0, baseline=base,
                                events=(Event(EventKind.RAMP_JAM, 300.0, 900.0, ramp_rate=0.1),))
    elif name == "spoof":
        script = ScenarioScript(1800.0, baseline=base, events=(
            Event(EventKind.SPOOF, 300.0, 900.0, power_db=10.0, spoof_power_db=16.0, spoof_cn0=50.0),
            Event(EventKind.SPOOF, 1200.0, 1500.0, power_db=10.0, spoof_power_db=7.0, spoof_cn0=50.0),
        ))
    elif name == "block":
        script = ScenarioScript(1800.0, baseline=base, events=(
            Event(EventKind.BLOCK, 300.0, 600.0, attenuation_db=12.0),
            Event(EventKind.BLOCK, 900.0, 1200.0),
        ))
    else:
        raise UsageError(f"unknown preset {name!r}")
    if duration is None or duration == script.duration:
        return script
    # stretch the event timeline to the requested length
    k = duration / script.duration
    events = tuple(replace(ev, t_start=ev.t_start * k, t_end=ev.t_end * k) for ev in script.events)
    return replace(script, duration=duration, events=events)


def cmd_simulate(args) -> int:
    if args.scenario:
        script = ScenarioScript.from_file(_require(args.scenario, "scenario file"))
    else:
        script = _preset(args.preset, args.duration)
    cfg = load_config(args.config)
    stream = render(script, _seed(args))
    out = _out(args, "stream.jsonl")
    write_jsonl(out, stream_to_records(stream, cfg, pga_level=args.pga), args.force)
    truth_path = Path(args.truth) if args.truth else out.with_name(out.stem + ".truth.csv")
    write_truth(truth_path, [p.timestamp for p in stream.points], stream.truth, args.force)
    if args.points:
        write_points(args.points, stream.points, args.force)
    if args.regions:
        regions = load_regions(_require(args.regions, "region file"))
        try:
            t = ramp_crossing_time(script, regions)
            _warn("ramp never leaves the nominal region" if t is None else f"ramp crossing at t={t:g}")
        except E.NoRamp as exc:
            log.info("%s", exc)
    _warn(f"{len(stream)} epochs rendered, {len(script.events)} events")
    return 0


def _windows(args, times):
    if args.windows:
        return [tuple(w) for w in read_json(_require(args.windows, "window file"))]
    if args.scenario:
        return scenario_windows(ScenarioScript.from_file(_require(args.scenario, "scenario file")))
    return []


def cmd_evaluate(args) -> int:
    pred = read_classified(_require(args.pred, "classified file"))
    truth = read_truth(_require(args.truth, "truth file"))
    if len(pred) != len(truth):
        raise E.LengthMismatch(f"{len(pred)} classified rows vs {len(truth)} truth rows")
    for (tp, _), (tt, _) in zip(pred, truth):
        if abs(tp - tt) > 1e-6:
            raise E.LengthMismatch(f"timestamps diverge at t={tp} vs t={tt}")
    times = [t for t, _ in pred]
    plabels = [as_label(lab) for _, lab in pred]
    tlabels = [as_label(lab) for _, lab in truth]
    positive = [Label(s.strip()) for s in args.positive.split(",")] if args.positive else RFI_LABELS
    reports = [score_detection(plabels, tlabels, positive, name="all")]
    if times:
        for name, (p, t) in window_slice(times, plabels, tlabels, _windows(args, times)).items():
            reports.append(score_detection(p, t, positive, name=name))
    ev = EvaluationReport(reports)
    out = _out(args, "report.json")
    write_json(out, ev.to_dict(), args.force)
    if args.csv:
        write_text(args.csv, ev.to_csv(), args.force)
    head = reports[0].row()
    _warn(f"accuracy {head['accuracy_pct']}%, sensitivity {head['sensitivity_pct']}, "
          f"specificity {head['specificity_pct']}")
    return 0


def cmd_plotdata(args) -> int:
    points = []
    for path in _inputs(args.inputs):
        points.extend(read_points(path))
    grid = density_grid(points)
    write_density_csv(_out(args, "density.csv"), grid, args.force)
    regions = None
    if args.regions:
        model = load_model(_require(args.model, "model file")) if args.model else None
        regions = load_regions(_require(args.regions, "region file"), model)
    if args.figure:
        render_figure(args.figure, points, regions, title=args.title, force=args.force)
    _warn(f"{len(grid)} occupied cells from {sum(g[2] for g in grid)} points")
    return 0


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"calibration config JSON (default ${CONFIG_ENV}/{CONFIG_NAME})")
    common.add_argument("--out", help="primary output path")
    common.add_argument("--seed", type=int, help="seed for randomised stages")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--strict", action="store_true", help="treat warnings and missing seeds as errors")
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="rfimap", description="GNSS RFI detection from C/N0 and received power")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="JSONL receiver logs to metric points CSV")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--window", type=float, default=1.0, help="pairing window in seconds")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit-nominal", parents=[common], help="fit the nominal model")
    p.add_argument("inputs", nargs="+", help="metric point CSVs, merged before fitting")
    p.add_argument("--attest-nominal", action="store_true",
                   help="confirm the inputs are interference-free")
    p.add_argument("--elevation", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--sat", action="append", help="satellite id to keep (repeatable)")
    p.add_argument("--min-points", type=int, default=100)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("optimize-threshold", parents=[common], help="optimise the detection ellipse")
    p.add_argument("--model", required=True)
    p.add_argument("--report", help="optimizer report path (default next to --out)")
    p.add_argument("--target-fpr", type=float, default=1e-6)
    p.add_argument("--rollouts", type=int, default=100_000)
    p.add_argument("--proposal-scale", type=float, default=3.0)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--cn0-floor", type=float, default=27.0)
    p.add_argument("--jam-slope", type=float, default=-1.0)
    p.add_argument("--continuous", action="store_true",
                   help="test raw rollouts instead of grid-cell centres")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("classify", parents=[common], help="label metric points")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--local-nominal", help="local interference-free points to recentre on")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", parents=[common], help="render a labelled synthetic scenario")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="scenario JSON")
    src.add_argument("--preset", choices=["nominal", "step", "ramp", "spoof", "block"], default="step")
    p.add_argument("--duration", type=float, help="preset duration in seconds")
    p.add_argument("--truth", help="truth CSV path (default next to --out)")
    p.add_argument("--points", help="also write metric points CSV")
    p.add_argument("--pga", type=float, default=0.0, help="PGA level written into spectra")
    p.add_argument("--regions", help="region file, to report the ramp crossing time")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", parents=[common], help="score classified points against truth")
    p.add_argument("--pred", required=True, help="classified CSV")
    p.add_argument("--truth", required=True, help="truth CSV")
    wsrc = p.add_mutually_exclusive_group()
    wsrc.add_argument("--windows", help="JSON list of [t0, t1, name]")
    wsrc.add_argument("--scenario", help="scenario JSON; one window per event and quiet gap")
    p.add_argument("--positive", help="comma-separated positive labels (default Jamming,Spoofing)")
    p.add_argument("--csv", help="also write a table CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot-data", parents=[common], help="density grid CSV and optional figure")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--regions", help="region file to overlay")
    p.add_argument("--model", help="model file the regions must match")
    p.add_argument("--figure", help="figure path (.png, .pdf, .svg)")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (E.RfiMapError, FileNotFoundError) as exc:
        code = 2 if isinstance(exc, FileNotFoundError) else exit_code_for(exc)
        _warn(f"error: {exc}")
        return code
    except (ValueError, KeyError) as exc:
        _warn(f"error: {exc.__class__.__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
