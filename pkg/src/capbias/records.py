"""Wire formats shared by the sweep simulator and the scoring harness.

Everything is line-oriented JSON except human answer sheets and answer
overrides, which arrive as CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

Box = tuple[float, float, float, float]
Detection = tuple[float, float, float, float, float, str]  # box, score, label


@dataclass(frozen=True)
class GroundTruthRecord:
    """Truth for one swept image."""

    image_id: str
    scene_id: str
    lux: float
    ev_offset: int
    label: str
    boxes: tuple[Box, ...] = ()
    count: int = 0
    settings: Optional[dict] = None

    def to_json(self) -> dict:
        doc = {
            "image_id": self.image_id,
            "scene_id": self.scene_id,
            "lux": self.lux,
            "ev_offset": self.ev_offset,
            "class": self.label,
            "boxes": [list(b) for b in self.boxes],
            "count": self.count,
        }
        if self.settings is not None:
            doc["settings"] = self.settings
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruthRecord":
        return cls(
            image_id=str(doc["image_id"]),
            scene_id=str(doc["scene_id"]),
            lux=float(doc["lux"]),
            ev_offset=int(doc["ev_offset"]),
            label=str(doc["class"]),
            boxes=tuple(tuple(float(v) for v in b) for b in doc.get("boxes", [])),
            count=int(doc.get("count", 0)),
            settings=doc.get("settings"),
        )


@dataclass(frozen=True)
class PredictionRecord:
    """One model output: a label, a detection list, or a free-text answer."""

    model: str
    image_id: str
    task: str  # classification | detection | vqa
    label: Optional[str] = None
    detections: tuple[Detection, ...] = ()
    question_id: Optional[str] = None
    raw_text: Optional[str] = None

    def to_json(self) -> dict:
        doc: dict = {"model": self.model, "image_id": self.image_id, "task": self.task}
        if self.label is not None:
            doc["label"] = self.label
        if self.detections:
            doc["detections"] = [
                [d[0], d[1], d[2], d[3], d[4], d[5]] for d in self.detections
            ]
        if self.question_id is not None:
            doc["question_id"] = self.question_id
        if self.raw_text is not None:
            doc["raw_text"] = self.raw_text
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PredictionRecord":
        dets = tuple(
            (float(d[0]), float(d[1]), float(d[2]), float(d[3]), float(d[4]), str(d[5]))
            for d in doc.get("detections", [])
        )
        return cls(
            model=str(doc["model"]),
            image_id=str(doc["image_id"]),
            task=str(doc["task"]),
            label=doc.get("label"),
            detections=dets,
            question_id=doc.get("question_id"),
            raw_text=doc.get("raw_text"),
        )


def write_jsonl(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_ground_truth(records: Iterable[GroundTruthRecord], path: str | Path) -> None:
    write_jsonl((r.to_json() for r in records), path)


def read_ground_truth(path: str | Path) -> list[GroundTruthRecord]:
    return [GroundTruthRecord.from_json(doc) for doc in read_jsonl(path)]


def write_predictions(records: Iterable[PredictionRecord], path: str | Path) -> None:
    write_jsonl((r.to_json() for r in records), path)


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    return [PredictionRecord.from_json(doc) for doc in read_jsonl(path)]


def read_human_answers(path: str | Path, group: str = "all") -> list[PredictionRecord]:
    """Human answer sheets score through the same path as model logs.

    CSV columns: subject_id, image_id, question_id, raw_text. All subjects
    in the file share one pooled model id, "human:<group>".
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                PredictionRecord(
                    model=f"human:{group}",
                    image_id=row["image_id"],
                    task="vqa",
                    question_id=row["question_id"],
                    raw_text=row["raw_text"],
                )
            )
    return records


def read_overrides(path: str | Path) -> dict[tuple[str, str, str], str]:
    """Manual answer overrides: (image_id, model, question_id) -> canonical."""
    table: dict[tuple[str, str, str], str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["image_id"], row["model"], row["question_id"])
            table[key] = row["canonical"]
    return table


def write_overrides_queue(rows: Iterable[dict], path: str | Path) -> None:
    """Review queue for answers normalization could not settle."""
    rows = list(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["image_id", "model", "question_id", "raw_text", "canonical"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
