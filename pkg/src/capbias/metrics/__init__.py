"""Scoring for prediction logs: top-1, LRP/oLRP, AP, VQA accuracy, PS."""

from capbias.metrics.classification import MissingPrediction, Top1Result, score_top1
from capbias.metrics.detection import (
    EmptyScene,
    LrpParts,
    MatchResult,
    ap_coco,
    iou,
    lrp_from_match,
    match_detections,
    olrp,
    olrp_by_offset,
)
from capbias.metrics.sensitivity import PsResult, parameter_sensitivity
from capbias.metrics.vqa import (
    DEFAULT_QUESTIONS,
    QuestionSpec,
    faithfulness_check,
    normalize_answer,
    response_length_stats,
    score_vqa,
)

__all__ = [
    "DEFAULT_QUESTIONS",
    "EmptyScene",
    "LrpParts",
    "MatchResult",
    "MissingPrediction",
    "PsResult",
    "QuestionSpec",
    "Top1Result",
    "ap_coco",
    "faithfulness_check",
    "iou",
    "lrp_from_match",
    "match_detections",
    "normalize_answer",
    "olrp",
    "olrp_by_offset",
    "parameter_sensitivity",
    "response_length_stats",
    "score_top1",
    "score_vqa",
]
