"""Box matching and the LRP / oLRP / AP detection metrics.

A detection is a 6-tuple (x1, y1, x2, y2, score, label); a ground-truth
object is a 5-tuple (x1, y1, x2, y2, label).  A scene pairs one image's
detections with its ground truth.  All aggregate functions take a sequence
of scenes and optimize a single score cut across the whole set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

Detection = Tuple[float, float, float, float, float, str]
GtObject = Tuple[float, float, float, float, str]
Scene = Tuple[Sequence[Detection], Sequence[GtObject]]

DEFAULT_IOU_THRESHOLD = 0.5
AP_IOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


class EmptyScene(ValueError):
    """No ground truth and no detections: the metric is undefined."""


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two (x1, y1, x2, y2) boxes."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return inter / union


def _ranked(detections: Iterable[Detection]) -> List[Detection]:
    # Equal scores fall back to box coordinates so input order never matters.
    return sorted(detections, key=lambda d: (-d[4], d[:4], d[5]))


@dataclass(frozen=True)
class MatchResult:
    tp_ious: Tuple[float, ...]
    fp: int
    fn: int

    @property
    def tp(self) -> int:
        return len(self.tp_ious)


def match_detections(
    detections: Sequence[Detection],
    truths: Sequence[GtObject],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    score_cut: float = 0.0,
) -> MatchResult:
    """Greedy one-to-one matching in descending score order.

    Each kept detection claims the unmatched same-class ground-truth box
    of maximal IoU, provided that IoU reaches the threshold.
    """
    if not 0 < iou_threshold < 1:
        raise ValueError("iou_threshold must be in (0, 1)")
    kept = [d for d in _ranked(detections) if d[4] >= score_cut]
    claimed = [False] * len(truths)
    tp_ious: List[float] = []
    for det in kept:
        best = -1
        best_iou = 0.0
        for gi, gt in enumerate(truths):
            if claimed[gi] or gt[4] != det[5]:
                continue
            overlap = iou(det, gt)
            if overlap > best_iou:
                best, best_iou = gi, overlap
        if best >= 0 and best_iou >= iou_threshold:
            claimed[best] = True
            tp_ious.append(best_iou)
    tp = len(tp_ious)
    return MatchResult(tuple(tp_ious), fp=len(kept) - tp, fn=len(truths) - tp)


@dataclass(frozen=True)
class LrpParts:
    lrp: float
    loc: float
    fp: float
    fn: float

    def as_dict(self) -> Dict[str, float]:
        return {"lrp": self.lrp, "loc": self.loc, "fp": self.fp, "fn": self.fn}


def _parts(loc_sum: float, tp: int, fp: int, fn: int, tau: float) -> LrpParts:
    total = tp + fp + fn
    if total == 0:
        raise EmptyScene("no ground truth and no detections")
    return LrpParts(
        lrp=(loc_sum + fp + fn) / total,
        loc=loc_sum / tp if tp else 0.0,
        fp=fp / (tp + fp) if tp + fp else 0.0,
        fn=fn / (tp + fn) if tp + fn else 0.0,
    )


def lrp_from_match(match: MatchResult, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> LrpParts:
    loc_sum = sum((1.0 - v) / (1.0 - iou_threshold) for v in match.tp_ious)
    return _parts(loc_sum, match.tp, match.fp, match.fn, iou_threshold)


def lrp_at_cut(
    scenes: Sequence[Scene],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    score_cut: float = 0.0,
) -> LrpParts:
    """Pooled LRP of a scene set at one fixed score cut."""
    loc_sum = 0.0
    tp = fp = fn = 0
    for detections, truths in scenes:
        match = match_detections(detections, truths, iou_threshold, score_cut)
        loc_sum += sum((1.0 - v) / (1.0 - iou_threshold) for v in match.tp_ious)
        tp += match.tp
        fp += match.fp
        fn += match.fn
    return _parts(loc_sum, tp, fp, fn, iou_threshold)


@dataclass(frozen=True)
class OlrpResult:
    olrp: float
    loc: float
    fp: float
    fn: float
    cut: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "olrp": self.olrp,
            "loc": self.loc,
            "fp": self.fp,
            "fn": self.fn,
            "cut": self.cut,
        }


def score_cuts(scenes: Sequence[Scene]) -> List[float]:
    cuts = {det[4] for detections, _ in scenes for det in detections}
    cuts.add(0.0)
    return sorted(cuts, reverse=True)


def olrp(scenes: Sequence[Scene], iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> OlrpResult:
    """Minimum pooled LRP over every cut in {distinct scores} ∪ {0}.

    Equal minima resolve to the higher cut (fewer detections kept).
    """
    best: Optional[OlrpResult] = None
    for cut in score_cuts(scenes):
        parts = lrp_at_cut(scenes, iou_threshold, cut)
        if best is None or parts.lrp < best.olrp:
            best = OlrpResult(parts.lrp, parts.loc, parts.fp, parts.fn, cut)
    assert best is not None  # score_cuts always yields at least 0.0
    return best


def olrp_by_offset(
    scenes_by_offset: Dict[int, Sequence[Scene]],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> Dict[int, OlrpResult]:
    """One independent oLRP optimization per EV-offset bin.

    Bins that are entirely empty (no truth, no detections) are dropped.
    """
    curve: Dict[int, OlrpResult] = {}
    for offset in sorted(scenes_by_offset):
        try:
            curve[offset] = olrp(scenes_by_offset[offset], iou_threshold)
        except EmptyScene:
            continue
    return curve


def _ap_single(
    scenes: Sequence[Scene], label: str, iou_threshold: float
) -> Optional[float]:
    """101-point interpolated AP for one class at one IoU threshold."""
    n_gt = 0
    rows: List[Tuple[float, Tuple[float, ...], int, int]] = []
    for scene_index, (detections, truths) in enumerate(scenes):
        class_truths = [g for g in truths if g[4] == label]
        n_gt += len(class_truths)
        for det_index, det in enumerate(detections):
            if det[5] == label:
                rows.append((det[4], tuple(det[:4]), scene_index, det_index))
    if n_gt == 0:
        return None
    rows.sort(key=lambda r: (-r[0], r[1]))
    claimed: Dict[Tuple[int, int], bool] = {}
    truth_lists = [
        [(gi, g) for gi, g in enumerate(truths) if g[4] == label]
        for _, truths in scenes
    ]
    hits: List[bool] = []
    for score, box, scene_index, _ in rows:
        best = None
        best_iou = 0.0
        for gi, gt in truth_lists[scene_index]:
            if claimed.get((scene_index, gi)):
                continue
            overlap = iou(box, gt)
            if overlap > best_iou:
                best, best_iou = gi, overlap
        if best is not None and best_iou >= iou_threshold:
            claimed[(scene_index, best)] = True
            hits.append(True)
        else:
            hits.append(False)
    precisions: List[float] = []
    recalls: List[float] = []
    tp = 0
    for rank, hit in enumerate(hits, start=1):
        tp += int(hit)
        precisions.append(tp / rank)
        recalls.append(tp / n_gt)
    # Interpolated precision: running maximum from the right.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    total = 0.0
    for i in range(101):
        r = i / 100.0
        p = 0.0
        for rec, prec in zip(recalls, precisions):
            if rec >= r:
                p = prec
                break
        total += p
    return total / 101.0


def ap_coco(
    scenes: Sequence[Scene],
    iou_thresholds: Sequence[float] = AP_IOU_GRID,
) -> float:
    """AP averaged over classes present in the truth and the IoU grid."""
    labels = sorted({g[4] for _, truths in scenes for g in truths})
    if not labels:
        if not any(detections for detections, _ in scenes):
            raise EmptyScene("no ground truth and no detections")
        return 0.0
    per_threshold: List[float] = []
    for threshold in iou_thresholds:
        values = [_ap_single(scenes, label, threshold) for label in labels]
        present = [v for v in values if v is not None]
        per_threshold.append(sum(present) / len(present))
    return sum(per_threshold) / len(per_threshold)
