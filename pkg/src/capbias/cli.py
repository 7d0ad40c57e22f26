"""Command-line entry point: audit, ev, plan, simulate, score, report.

Every run writes a run.json capturing the resolved configuration and the
tool version, so identical invocations over identical inputs produce
byte-identical artifact trees.  A JSON config file can preseed defaults
for a subcommand; explicit flags always win.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from capbias import __version__
from capbias.audit import EmptySource, aggregate_parallel, ingest, render_report
from capbias.exposure import (
    CameraSettings,
    build_grid,
    compute_ev,
    ev_offset,
    load_grid,
    quantize_ev,
)
from capbias.metrics.report import (
    metric_charts,
    score_classification_log,
    score_detection_log,
    score_vqa_log,
    write_metric_artifacts,
)
from capbias.records import (
    read_ground_truth,
    read_human_answers,
    read_overrides,
    read_predictions,
    write_ground_truth,
)
from capbias.scenes import synth_scene
from capbias.sweep import (
    SimConfig,
    _lux_label,
    emit_tether_script,
    plan_sweep,
    save_plan,
    simulate_corpus,
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract reserves 2 for partial
    # failures, so validation errors exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolve_jobs(value: Optional[int]) -> int:
    if value is not None:
        if value < 1:
            raise ConfigError("jobs: must be a positive integer")
        return value
    env = os.environ.get("CAPBIAS_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigError(f"CAPBIAS_JOBS: not an integer: {env!r}")
        if jobs < 1:
            raise ConfigError("CAPBIAS_JOBS: must be a positive integer")
        return jobs
    return os.cpu_count() or 1


def _write_run_record(args: argparse.Namespace, outdir: Path) -> None:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func",)
    }
    doc = {"version": __version__, "config": config}
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_json(path: str, field: str) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"{field}: no such file: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{field}: invalid JSON: {exc}")


# --- subcommand bodies -------------------------------------------------------


def _cmd_ev(args: argparse.Namespace) -> int:
    try:
        settings = CameraSettings.of(args.shutter, args.fnumber, args.iso)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"settings: {exc}")
    ev = compute_ev(settings)
    ev_bin = quantize_ev(ev)
    print(f"EV {ev:.2f}")
    print(f"bin {ev_bin}")
    if args.lux is not None:
        try:
            offset = ev_offset(ev_bin, args.lux)
        except KeyError:
            raise ConfigError(f"lux: no anchor for {args.lux}")
        print(f"offset {offset:+d}")
    return 0


def _grid_from_args(args: argparse.Namespace):
    if args.grid is None:
        return build_grid()
    try:
        return load_grid(args.grid)
    except FileNotFoundError:
        raise ConfigError(f"grid: no such file: {args.grid}")
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"grid: {exc}")


def _cmd_plan(args: argparse.Namespace) -> int:
    grid = _grid_from_args(args)
    outdir = Path(args.out)
    try:
        plans = plan_sweep(grid, args.lux, scene_ids=args.scene or ("scene",),
                           subsample=args.subsample)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"plan: {exc}")
    outdir.mkdir(parents=True, exist_ok=True)
    for plan in plans:
        stem = f"{plan.scene_id}_{_lux_label(plan.lux)}"
        save_plan(plan, outdir / f"plan_{stem}.json")
        if args.emit_script:
            script = outdir / f"tether_{stem}.sh"
            script.write_text(emit_tether_script(plan))
            script.chmod(0o755)
    _write_run_record(args, outdir)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.scenes < 1:
        raise ConfigError("scenes: must be at least 1")
    grid = _grid_from_args(args)
    cfg = SimConfig(gamma_model=args.gamma, noise_k=args.noise_k, seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    scenes = [synth_scene(args.seed + index) for index in range(args.scenes)]
    image_dir = None if args.no_images else outdir / "images"
    try:
        truths, _, log = simulate_corpus(
            scenes, grid, args.lux, cfg, subsample=args.subsample, outdir=image_dir
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"simulate: {exc}")
    write_ground_truth(truths, outdir / "ground_truth.jsonl")
    with open(outdir / "sim_log.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["image_id", "scene_id", "lux", "shutter", "iso", "fnumber",
                         "ev_bin", "ev_offset", "kept"])
        for row in log:
            writer.writerow([row["image_id"], row["scene_id"], row["lux"],
                             row["shutter"], row["iso"], row["fnumber"],
                             row["ev_bin"], row["ev_offset"], int(row["kept"])])
    _write_run_record(args, outdir)
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    jobs = _resolve_jobs(args.jobs)
    if args.descriptor:
        descriptor: object = Path(args.descriptor)
    elif args.scan:
        descriptor = {"name": args.name or Path(args.scan).name,
                      "source": {"kind": "scan", "path": args.scan}}
    else:
        descriptor = {"name": args.name or Path(args.manifest).stem,
                      "source": {"kind": "manifest", "path": args.manifest}}
    try:
        records = list(ingest(descriptor, jobs=jobs))
    except FileNotFoundError as exc:
        raise ConfigError(f"source: {exc}")
    except EmptySource as exc:
        raise ConfigError(f"source: {exc}")
    report = aggregate_parallel(records, jobs)
    outdir = Path(args.out)
    formats = tuple(args.formats.split(","))
    render_report(report, outdir, formats=formats)
    _write_run_record(args, outdir)
    if report.downloaded < report.total:
        print(f"warning: {report.total - report.downloaded} of {report.total} "
              "items could not be read", file=sys.stderr)
        return 2
    return 0


def _read_synonyms(path: Optional[str]) -> Optional[Dict[str, List[str]]]:
    if path is None:
        return None
    doc = _load_json(path, "synonyms")
    if not isinstance(doc, dict):
        raise ConfigError("synonyms: expected a JSON object of label -> [alternates]")
    return doc


def _cmd_score(args: argparse.Namespace) -> int:
    try:
        gts = read_ground_truth(args.gt)
    except FileNotFoundError:
        raise ConfigError(f"gt: no such file: {args.gt}")
    if not gts:
        raise ConfigError("gt: no records")
    preds = []
    for path in args.preds:
        try:
            preds.extend(read_predictions(path))
        except FileNotFoundError:
            raise ConfigError(f"preds: no such file: {path}")
    if args.human:
        preds.extend(read_human_answers(args.human, group=args.human_group))
    if not preds:
        raise ConfigError("preds: no prediction records")
    synonyms = _read_synonyms(args.synonyms)
    task_preds = [p for p in preds if p.task == args.task]
    if not task_preds:
        raise ConfigError(f"preds: no records with task {args.task!r}")

    if args.task == "classification":
        doc, tables = score_classification_log(task_preds, gts, synonyms,
                                               group_lux=args.group_lux)
    elif args.task == "detection":
        if not 0 < args.iou < 1:
            raise ConfigError("iou: must be strictly between 0 and 1")
        doc, tables = score_detection_log(task_preds, gts, iou_threshold=args.iou,
                                          group_lux=args.group_lux)
    else:
        overrides = read_overrides(args.overrides) if args.overrides else None
        doc, tables = score_vqa_log(task_preds, gts, synonyms=synonyms,
                                    overrides=overrides, group_lux=args.group_lux)
    outdir = Path(args.out)
    write_metric_artifacts(outdir, doc, tables, charts=args.charts)
    _write_run_record(args, outdir)
    skipped = len(preds) - len(task_preds)
    if skipped:
        print(f"warning: {skipped} prediction records had a different task",
              file=sys.stderr)
        return 2
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in args.metrics:
        doc = _load_json(path, "metrics")
        written.extend(metric_charts(doc, outdir))
    if not written:
        raise ConfigError("metrics: no charts produced (unknown task fields?)")
    _write_run_record(args, outdir)
    return 0


# --- parser construction -----------------------------------------------------


def build_parser():
    parser = _Parser(prog="capbias",
                     description="Capture-bias audit, exposure sweeps, and scoring.")
    parser.add_argument("--version", action="version", version=f"capbias {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    subparsers.required = True
    registry = {}

    def sub(name: str, func, help_text: str):
        p = subparsers.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file preseeding defaults for this subcommand")
        p.set_defaults(func=func)
        registry[name] = p
        return p

    p = sub("audit", _cmd_audit, "ingest a corpus and report capture statistics")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--descriptor", help="dataset descriptor JSON")
    source.add_argument("--scan", help="directory of images to scan")
    source.add_argument("--manifest", help="JSONL manifest of images or tags")
    p.add_argument("--name", help="dataset name for scan/manifest sources")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (default: CAPBIAS_JOBS or CPU count)")
    p.add_argument("--formats", default="json,csv,svg",
                   help="comma-separated output formats")
    p.add_argument("--out", required=True, help="output directory")

    p = sub("ev", _cmd_ev, "compute EV and its bin for one settings triple")
    p.add_argument("--shutter", required=True, help='exposure time, e.g. "1/125"')
    p.add_argument("--fnumber", required=True, help='aperture, e.g. "8"')
    p.add_argument("--iso", required=True, type=int)
    p.add_argument("--lux", type=float, default=None,
                   help="also print the EV offset under this illuminance")

    p = sub("plan", _cmd_plan, "expand a settings grid into capture plans")
    p.add_argument("--grid", help="grid JSON (default: built-in full grid)")
    p.add_argument("--lux", type=float, action="append", required=True,
                   help="illuminance level; repeatable")
    p.add_argument("--scene", action="append", default=None,
                   help="scene identifier; repeatable (default: scene)")
    p.add_argument("--subsample", type=int, default=1,
                   help="keep every n-th step of the EV ramp")
    p.add_argument("--emit-script", action="store_true",
                   help="also write a tether capture script per plan")
    p.add_argument("--out", required=True)

    p = sub("simulate", _cmd_simulate, "render synthetic scenes through a sweep")
    p.add_argument("--grid", help="grid JSON (default: built-in full grid)")
    p.add_argument("--lux", type=float, action="append", required=True)
    p.add_argument("--scenes", type=int, default=10, help="number of synthetic scenes")
    p.add_argument("--subsample", type=int, default=1)
    p.add_argument("--gamma", choices=("srgb", "gamma22", "linear"), default="srgb")
    p.add_argument("--noise-k", type=float, default=0.0,
                   help="sensor noise scale per ISO 100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-images", action="store_true",
                   help="skip writing per-step rasters")
    p.add_argument("--out", required=True)

    p = sub("score", _cmd_score, "score a prediction log against ground truth")
    p.add_argument("--task", required=True,
                   choices=("classification", "detection", "vqa"))
    p.add_argument("--preds", action="append", default=[],
                   help="prediction JSONL; repeatable")
    p.add_argument("--human", help="human answers CSV (vqa)")
    p.add_argument("--human-group", default="all",
                   help="group tag for human answers (model becomes human:<group>)")
    p.add_argument("--gt", required=True, help="ground truth JSONL")
    p.add_argument("--synonyms", help="JSON object of label -> accepted alternates")
    p.add_argument("--overrides", help="CSV of hand-extracted answers (vqa)")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold (detection)")
    p.add_argument("--group-lux", action="store_true",
                   help="include lux in the sensitivity group key")
    p.add_argument("--charts", action="store_true", help="also write SVG charts")
    p.add_argument("--out", required=True)

    p = sub("report", _cmd_report, "render charts from existing metrics.json files")
    p.add_argument("--metrics", action="append", required=True,
                   help="metrics.json produced by score; repeatable")
    p.add_argument("--out", required=True)

    return parser, registry


def _apply_config_file(argv: Sequence[str], registry) -> None:
    if not argv or argv[0].startswith("-") or argv[0] not in registry:
        return
    subparser = registry[argv[0]]
    config_path = None
    rest = list(argv[1:])
    for index, token in enumerate(rest):
        if token == "--config" and index + 1 < len(rest):
            config_path = rest[index + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    if config_path is None:
        return
    doc = _load_json(config_path, "config")
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    by_dest = {action.dest: action for action in subparser._actions}
    given = {token.split("=", 1)[0] for token in rest if token.startswith("--")}
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        action = by_dest.get(dest)
        if action is None:
            raise ConfigError(f"config: unknown field {key!r} for {argv[0]!r}")
        # A flag given on the command line beats the config file outright;
        # skipping the default also keeps append-type flags from stacking.
        if any(opt in given for opt in action.option_strings):
            continue
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    # Fields covered by the config file are no longer hard-required.
    for action in subparser._actions:
        if action.dest in defaults:
            action.required = False
    for group in subparser._mutually_exclusive_groups:
        if group.required and any(a.dest in defaults for a in group._group_actions):
            group.required = False


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        _apply_config_file(argv, registry)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"capbias: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits for --help, --version, and usage errors; callers
        # using main() as a function get the code back instead.
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
