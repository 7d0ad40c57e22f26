"""Reference predictors for swept corpora.

Two deliberately simple pixel-space baselines give the scorer something
with a known failure envelope: a luminance-threshold classifier and a
box-proposal detector built on the same blob extraction.  Both degrade as
exposure pushes scene content into the clipped or flat regions, and both
accept a decision-noise knob that perturbs the threshold per image for
sensitivity experiments.
"""

from __future__ import annotations

import math
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from scipy import ndimage

from capbias.records import Detection, PredictionRecord

DEFAULT_CONTRAST = 18.0
MIN_BLOB_AREA = 40
NO_OBJECT_LABEL = "none"

# Fill ratio of the blob within its own bounding box separates the three
# shape families regardless of size.
FILL_PROTOTYPES = {
    "square": 1.0,
    "disc": math.pi / 4.0,
    "diamond": 0.5,
}


@dataclass(frozen=True)
class Blob:
    box: Tuple[int, int, int, int]  # half-open pixel bounds
    area: int
    fill: float
    strength: float  # mean absolute deviation from the background level


def decision_jitter(model: str, image_id: str, magnitude: float) -> float:
    """Deterministic per-image threshold perturbation in [-magnitude, magnitude]."""
    if magnitude <= 0:
        return 0.0
    seed = zlib.crc32(f"{model}:{image_id}".encode())
    rng = np.random.default_rng(seed)
    return float(rng.uniform(-magnitude, magnitude))


def find_blobs(
    image: np.ndarray,
    contrast: float = DEFAULT_CONTRAST,
    min_area: int = MIN_BLOB_AREA,
) -> List[Blob]:
    """Connected regions deviating from the median luminance."""
    gray = np.asarray(image, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    background = float(np.median(gray))
    deviation = np.abs(gray - background)
    labeled, count = ndimage.label(deviation > contrast)
    blobs: List[Blob] = []
    for index, slc in enumerate(ndimage.find_objects(labeled), start=1):
        if slc is None:
            continue
        mask = labeled[slc] == index
        area = int(mask.sum())
        if area < min_area:
            continue
        y1, y2 = slc[0].start, slc[0].stop
        x1, x2 = slc[1].start, slc[1].stop
        fill = area / ((y2 - y1) * (x2 - x1))
        strength = float(deviation[slc][mask].mean())
        blobs.append(Blob((x1, y1, x2, y2), area, fill, strength))
    return blobs


def classify_shape(fill: float) -> str:
    return min(FILL_PROTOTYPES, key=lambda name: abs(FILL_PROTOTYPES[name] - fill))


def classify_image(
    image: np.ndarray,
    contrast: float = DEFAULT_CONTRAST,
    min_area: int = MIN_BLOB_AREA,
) -> str:
    """Area-weighted majority vote over blob shapes; NO_OBJECT_LABEL when blank."""
    blobs = find_blobs(image, contrast, min_area)
    if not blobs:
        return NO_OBJECT_LABEL
    votes: Counter = Counter()
    for blob in blobs:
        votes[classify_shape(blob.fill)] += blob.area
    return votes.most_common(1)[0][0]


def _blob_score(blob: Blob) -> float:
    return max(0.05, min(0.99, blob.strength / 64.0))


def detect_objects(
    image: np.ndarray,
    contrast: float = DEFAULT_CONTRAST,
    min_area: int = MIN_BLOB_AREA,
) -> List[Detection]:
    detections: List[Detection] = []
    for blob in find_blobs(image, contrast, min_area):
        x1, y1, x2, y2 = blob.box
        detections.append(
            (float(x1), float(y1), float(x2), float(y2), _blob_score(blob),
             classify_shape(blob.fill))
        )
    return detections


def luminance_threshold_classifier(
    images: Mapping[str, np.ndarray],
    model: str = "thresh-vote",
    contrast: float = DEFAULT_CONTRAST,
    jitter: float = 0.0,
    min_area: int = MIN_BLOB_AREA,
) -> List[PredictionRecord]:
    """Label every image; jitter > 0 perturbs the threshold per image."""
    records = []
    for image_id in sorted(images):
        threshold = contrast + decision_jitter(model, image_id, jitter)
        label = classify_image(images[image_id], threshold, min_area)
        records.append(
            PredictionRecord(model=model, image_id=image_id, task="classification",
                             label=label)
        )
    return records


def box_proposal_detector(
    images: Mapping[str, np.ndarray],
    model: str = "blob-boxes",
    contrast: float = DEFAULT_CONTRAST,
    jitter: float = 0.0,
    min_area: int = MIN_BLOB_AREA,
) -> List[PredictionRecord]:
    """Emit scored boxes for every image (possibly none per image)."""
    records = []
    for image_id in sorted(images):
        threshold = contrast + decision_jitter(model, image_id, jitter)
        detections = detect_objects(images[image_id], threshold, min_area)
        records.append(
            PredictionRecord(model=model, image_id=image_id, task="detection",
                             detections=tuple(detections))
        )
    return records


def counting_answerer(
    images: Mapping[str, np.ndarray],
    question_id: str = "Q2",
    model: str = "blob-count",
    contrast: float = DEFAULT_CONTRAST,
    jitter: float = 0.0,
    min_area: int = MIN_BLOB_AREA,
) -> List[PredictionRecord]:
    """Answer a counting question with the number of blobs found."""
    records = []
    for image_id in sorted(images):
        threshold = contrast + decision_jitter(model, image_id, jitter)
        n = len(find_blobs(images[image_id], threshold, min_area))
        records.append(
            PredictionRecord(model=model, image_id=image_id, task="vqa",
                             question_id=question_id, raw_text=str(n))
        )
    return records
