"""Top-1 accuracy per EV-offset bin for classification logs."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from capbias.records import GroundTruthRecord, PredictionRecord


class MissingPrediction(Warning):
    """An image in the ground truth had no prediction; scored as 0."""


def _fold_synonyms(synonyms: Optional[Mapping[str, Sequence[str]]]) -> Dict[str, frozenset]:
    folded: Dict[str, frozenset] = {}
    for truth, alternates in (synonyms or {}).items():
        folded[truth.casefold()] = frozenset(a.casefold() for a in alternates)
    return folded


def label_matches(
    predicted: str,
    truth: str,
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
) -> bool:
    predicted = predicted.strip().casefold()
    truth = truth.strip().casefold()
    if predicted == truth:
        return True
    return predicted in _fold_synonyms(synonyms).get(truth, frozenset())


@dataclass(frozen=True)
class Top1Result:
    overall: float
    by_offset: Dict[int, float]
    bin_sizes: Dict[int, int]
    per_image: Dict[str, int]
    diagnostics: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def curve(self) -> List[Tuple[int, float]]:
        return [(offset, self.by_offset[offset]) for offset in sorted(self.by_offset)]


def score_top1(
    preds: Iterable[PredictionRecord],
    gts: Iterable[GroundTruthRecord],
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
) -> Top1Result:
    """Per-image 0/1 scores and their mean per EV-offset bin.

    Missing predictions count as 0 with a diagnostic; duplicate predictions
    for one image keep the first occurrence.
    """
    truths = {g.image_id: g for g in gts}
    if not truths:
        raise ValueError("no ground truth records")
    chosen: Dict[str, PredictionRecord] = {}
    diagnostics: List[str] = []
    for pred in preds:
        if pred.image_id not in truths:
            diagnostics.append(f"prediction for unknown image {pred.image_id!r} ignored")
            continue
        if pred.image_id in chosen:
            diagnostics.append(f"duplicate prediction for {pred.image_id!r} ignored")
            continue
        chosen[pred.image_id] = pred

    per_image: Dict[str, int] = {}
    sums: Dict[int, int] = defaultdict(int)
    counts: Dict[int, int] = defaultdict(int)
    for image_id, truth in truths.items():
        pred = chosen.get(image_id)
        if pred is None or pred.label is None:
            diagnostics.append(f"missing prediction for {image_id!r}; scored 0")
            score = 0
        else:
            score = int(label_matches(pred.label, truth.label, synonyms))
        per_image[image_id] = score
        sums[truth.ev_offset] += score
        counts[truth.ev_offset] += 1

    by_offset = {o: sums[o] / counts[o] for o in counts}
    overall = sum(per_image.values()) / len(per_image)
    return Top1Result(
        overall=overall,
        by_offset=by_offset,
        bin_sizes=dict(counts),
        per_image=per_image,
        diagnostics=tuple(diagnostics),
    )
