"""Score prediction logs into metrics.json plus per-figure CSV tables.

Each task family (classification, detection, vqa) turns a prediction log
and ground truth into one JSON document and a set of CSV tables named
after the figures they back.  Curves are stored as rows sorted by EV
offset so the files are deterministic byte for byte.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from capbias.metrics.classification import score_top1
from capbias.metrics.detection import (
    DEFAULT_IOU_THRESHOLD,
    EmptyScene,
    Scene,
    lrp_at_cut,
    olrp,
    olrp_by_offset,
    ap_coco,
)
from capbias.metrics.sensitivity import parameter_sensitivity
from capbias.metrics.vqa import (
    DEFAULT_QUESTIONS,
    QuestionSpec,
    response_length_stats,
    score_vqa,
)
from capbias.records import GroundTruthRecord, PredictionRecord

Tables = Dict[str, List[List]]


def _group_key(gt: GroundTruthRecord, group_lux: bool):
    if group_lux:
        return (gt.scene_id, gt.ev_offset, gt.lux)
    return (gt.scene_id, gt.ev_offset)


def _ps_block(per_image: Mapping[str, float], gts: Mapping[str, GroundTruthRecord],
              group_lux: bool) -> Optional[dict]:
    keys = {i: _group_key(gts[i], group_lux) for i in per_image}
    try:
        result = parameter_sensitivity(per_image, keys)
    except ValueError:
        return None
    return {
        "value": result.ps,
        "groups": result.n_groups,
        "sensitive": result.n_sensitive,
        "degenerate": len(result.degenerate),
    }


def _by_model(preds: Iterable[PredictionRecord]) -> Dict[str, List[PredictionRecord]]:
    grouped: Dict[str, List[PredictionRecord]] = defaultdict(list)
    for pred in preds:
        grouped[pred.model].append(pred)
    return dict(sorted(grouped.items()))


def score_classification_log(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruthRecord],
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
    group_lux: bool = False,
) -> Tuple[dict, Tables]:
    truth_map = {g.image_id: g for g in gts}
    doc: dict = {"task": "classification", "models": {}}
    rows = [["model", "ev_offset", "accuracy", "n"]]
    ps_rows = [["model", "metric", "ps", "groups", "sensitive"]]
    diagnostics: List[str] = []
    for model, model_preds in _by_model(preds).items():
        result = score_top1(model_preds, gts, synonyms)
        curve = [[o, result.by_offset[o], result.bin_sizes[o]]
                 for o in sorted(result.by_offset)]
        ps = _ps_block(result.per_image, truth_map, group_lux)
        doc["models"][model] = {"top1": result.overall, "curve": curve, "ps": ps}
        for offset, acc, n in curve:
            rows.append([model, offset, f"{acc:.6f}", n])
        if ps is not None:
            ps_rows.append([model, "top1", f"{ps['value']:.4f}",
                            ps["groups"], ps["sensitive"]])
        diagnostics.extend(result.diagnostics)
    doc["diagnostics"] = len(diagnostics)
    return doc, {"top1_by_offset.csv": rows, "ps.csv": ps_rows}


def detection_scenes(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruthRecord],
) -> Tuple[Dict[str, Scene], List[str]]:
    """Pair each truth image with one model's detections (empty if absent)."""
    detections: Dict[str, tuple] = {}
    diagnostics: List[str] = []
    truth_ids = {g.image_id for g in gts}
    for pred in preds:
        if pred.image_id not in truth_ids:
            diagnostics.append(f"prediction for unknown image {pred.image_id!r} ignored")
            continue
        if pred.image_id in detections:
            diagnostics.append(f"duplicate detections for {pred.image_id!r} ignored")
            continue
        detections[pred.image_id] = tuple(pred.detections)
    scenes: Dict[str, Scene] = {}
    for gt in gts:
        objects = [(float(b[0]), float(b[1]), float(b[2]), float(b[3]), gt.label)
                   for b in gt.boxes]
        if gt.image_id not in detections:
            diagnostics.append(f"missing detections for {gt.image_id!r}; counted empty")
        scenes[gt.image_id] = (detections.get(gt.image_id, ()), objects)
    return scenes, diagnostics


def score_detection_log(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    group_lux: bool = False,
) -> Tuple[dict, Tables]:
    truth_map = {g.image_id: g for g in gts}
    if not truth_map:
        raise ValueError("no ground truth records")
    doc: dict = {"task": "detection", "iou_threshold": iou_threshold, "models": {}}
    rows = [["model", "ev_offset", "olrp", "loc", "fp", "fn", "n"]]
    ps_rows = [["model", "metric", "ps", "groups", "sensitive"]]
    n_diagnostics = 0
    for model, model_preds in _by_model(preds).items():
        scenes, diagnostics = detection_scenes(model_preds, gts)
        n_diagnostics += len(diagnostics)
        overall = olrp(list(scenes.values()), iou_threshold)
        by_offset: Dict[int, List[Scene]] = defaultdict(list)
        bin_sizes: Dict[int, int] = defaultdict(int)
        for image_id, scene in scenes.items():
            offset = truth_map[image_id].ev_offset
            by_offset[offset].append(scene)
            bin_sizes[offset] += 1
        curve = olrp_by_offset(dict(by_offset), iou_threshold)
        curve_rows = [
            [o, r.olrp, r.loc, r.fp, r.fn, bin_sizes[o]] for o, r in sorted(curve.items())
        ]
        # Per-image LRP at the model's optimal cut feeds the PS statistic.
        per_image: Dict[str, float] = {}
        for image_id, scene in scenes.items():
            try:
                per_image[image_id] = lrp_at_cut([scene], iou_threshold, overall.cut).lrp
            except EmptyScene:
                continue
        ps = _ps_block(per_image, truth_map, group_lux)
        doc["models"][model] = {
            "olrp": overall.olrp,
            "loc": overall.loc,
            "fp": overall.fp,
            "fn": overall.fn,
            "cut": overall.cut,
            "ap": ap_coco(list(scenes.values())),
            "curve": [[o, v.olrp, v.loc, v.fp, v.fn, bin_sizes[o]]
                      for o, v in sorted(curve.items())],
            "ps": ps,
        }
        for row in curve_rows:
            rows.append([model, row[0]] + [f"{v:.6f}" for v in row[1:5]] + [row[5]])
        if ps is not None:
            ps_rows.append([model, "lrp", f"{ps['value']:.4f}",
                            ps["groups"], ps["sensitive"]])
    # Top-level summary keys mirror the per-model components (mean over models).
    models = doc["models"]
    for key in ("olrp", "loc", "fp", "fn"):
        doc[key] = sum(m[key] for m in models.values()) / len(models)
    doc["diagnostics"] = n_diagnostics
    return doc, {"olrp_components.csv": rows, "ps.csv": ps_rows}


def score_vqa_log(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruthRecord],
    questions: Optional[Mapping[str, QuestionSpec]] = None,
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
    overrides: Optional[Mapping[Tuple[str, str, str], str]] = None,
    group_lux: bool = False,
) -> Tuple[dict, Tables]:
    questions = dict(questions or DEFAULT_QUESTIONS)
    truth_map = {g.image_id: g for g in gts}
    result = score_vqa(preds, gts, questions, synonyms, overrides)
    doc: dict = {"task": "vqa", "models": {}}
    acc_rows = [["model", "question_id", "ev_offset", "soft", "hard", "n"]]
    ps_rows = [["model", "metric", "ps", "groups", "sensitive"]]
    len_rows = [["model", "ev_offset", "mean_chars", "n"]]

    pairs = sorted(result.soft_overall)
    for model, question_id in pairs:
        bins = sorted(o for (m, q, o) in result.bin_sizes if (m, q) == (model, question_id))
        curve = []
        for offset in bins:
            key = (model, question_id, offset)
            curve.append([offset, result.soft_by_bin[key], result.hard_by_bin[key],
                          result.bin_sizes[key]])
            acc_rows.append([model, question_id, offset,
                             f"{result.soft_by_bin[key]:.6f}",
                             f"{result.hard_by_bin[key]:.6f}",
                             result.bin_sizes[key]])
        per_image_hard = {
            image_id: float(score)
            for (m, q, image_id), score in result.per_image_hard.items()
            if (m, q) == (model, question_id)
        }
        ps = _ps_block(per_image_hard, truth_map, group_lux)
        entry = doc["models"].setdefault(model, {"questions": {}})
        entry["questions"][question_id] = {
            "soft": result.soft_overall[(model, question_id)],
            "hard": result.hard_overall[(model, question_id)],
            "curve": curve,
            "ps": ps,
        }
        if ps is not None:
            ps_rows.append([model, f"hard:{question_id}", f"{ps['value']:.4f}",
                            ps["groups"], ps["sensitive"]])

    lengths = response_length_stats(preds, gts)
    for (model, offset) in sorted(lengths):
        stat = lengths[(model, offset)]
        len_rows.append([model, offset, f"{stat.mean:.4f}", stat.n])

    doc["needs_review"] = len(result.needs_review)
    doc["diagnostics"] = len(result.diagnostics)
    tables: Tables = {
        "vqa_acc.csv": acc_rows,
        "ps.csv": ps_rows,
        "resp_len.csv": len_rows,
    }
    if result.needs_review:
        queue = [["image_id", "model", "question_id", "raw_text", "canonical"]]
        queue.extend(list(row) for row in result.needs_review)
        tables["overrides_queue.csv"] = queue
    return doc, tables


def write_metric_artifacts(
    outdir: str | Path,
    doc: dict,
    tables: Tables,
    charts: bool = False,
) -> List[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    path = outdir / "metrics.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written.append(path)
    for name, rows in sorted(tables.items()):
        path = outdir / name
        with open(path, "w", newline="") as handle:
            csv.writer(handle).writerows(rows)
        written.append(path)
    if charts:
        written.extend(metric_charts(doc, outdir))
    return written


def metric_charts(doc: dict, outdir: str | Path) -> List[Path]:
    """Line charts for whichever curves the document carries."""
    from capbias import charts as chartmod

    outdir = Path(outdir)
    written: List[Path] = []
    task = doc.get("task")
    if task == "classification":
        series = {
            model: ([row[0] for row in entry["curve"]], [row[1] for row in entry["curve"]])
            for model, entry in doc["models"].items()
        }
        if series:
            written.append(chartmod.line_chart(
                outdir / "top1_by_offset.svg", series,
                "Top-1 accuracy by EV offset", "EV offset", "accuracy"))
    elif task == "detection":
        series = {
            model: ([row[0] for row in entry["curve"]], [row[1] for row in entry["curve"]])
            for model, entry in doc["models"].items()
        }
        if series:
            written.append(chartmod.line_chart(
                outdir / "olrp_by_offset.svg", series,
                "oLRP by EV offset (lower is better)", "EV offset", "oLRP"))
    elif task == "vqa":
        soft_series = {}
        hard_series = {}
        for model, entry in doc["models"].items():
            for question_id, block in entry["questions"].items():
                xs = [row[0] for row in block["curve"]]
                soft_series[f"{model}/{question_id}"] = (xs, [r[1] for r in block["curve"]])
                hard_series[f"{model}/{question_id}"] = (xs, [r[2] for r in block["curve"]])
        if soft_series:
            written.append(chartmod.line_chart(
                outdir / "vqa_soft.svg", soft_series,
                "VQA soft accuracy by EV offset", "EV offset", "soft accuracy"))
            written.append(chartmod.line_chart(
                outdir / "vqa_hard.svg", hard_series,
                "VQA hard accuracy by EV offset", "EV offset", "hard accuracy"))
    return written
