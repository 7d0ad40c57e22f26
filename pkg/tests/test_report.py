import json

import pytest

from capbias.metrics.report import (
    score_classification_log,
    score_detection_log,
    score_vqa_log,
    write_metric_artifacts,
)
from capbias.records import GroundTruthRecord, PredictionRecord


def truth(image_id, offset=0, scene="s1", label="disc", boxes=((10, 10, 30, 30),), count=1):
    return GroundTruthRecord(
        image_id=image_id, scene_id=scene, lux=1000.0, ev_offset=offset,
        label=label, boxes=boxes, count=count,
    )


def gt_set():
    gts = []
    for k in range(4):
        gts.append(truth(f"a{k}", offset=0, scene="s1"))
        gts.append(truth(f"b{k}", offset=-3, scene="s2"))
    return gts


class TestClassificationLog:
    def test_doc_and_tables(self):
        gts = gt_set()
        preds = [
            PredictionRecord(model="m", image_id=g.image_id, task="classification",
                             label="disc" if g.ev_offset == 0 else "square")
            for g in gts
        ]
        doc, tables = score_classification_log(preds, gts)
        entry = doc["models"]["m"]
        assert entry["top1"] == 0.5
        assert entry["curve"] == [[-3, 0.0, 4], [0, 1.0, 4]]
        assert entry["ps"]["groups"] == 2
        assert entry["ps"]["value"] == 0.0
        assert tables["top1_by_offset.csv"][0] == ["model", "ev_offset", "accuracy", "n"]
        assert tables["top1_by_offset.csv"][1] == ["m", -3, "0.000000", 4]

    def test_two_models_sorted(self):
        gts = gt_set()
        preds = []
        for model in ("zeta", "alpha"):
            preds.extend(
                PredictionRecord(model=model, image_id=g.image_id,
                                 task="classification", label="disc")
                for g in gts
            )
        doc, _ = score_classification_log(preds, gts)
        assert list(doc["models"]) == ["alpha", "zeta"]


class TestDetectionLog:
    def preds(self, gts, perfect=True):
        records = []
        for g in gts:
            if perfect or g.ev_offset == 0:
                dets = ((10.0, 10.0, 30.0, 30.0, 0.9, g.label),)
            else:
                dets = ()
            records.append(PredictionRecord(model="d", image_id=g.image_id,
                                            task="detection", detections=dets))
        return records

    def test_top_level_component_keys(self):
        gts = gt_set()
        doc, tables = score_detection_log(self.preds(gts), gts)
        for key in ("olrp", "loc", "fp", "fn"):
            assert key in doc
        assert doc["olrp"] == 0.0
        assert doc["models"]["d"]["ap"] == 1.0
        assert tables["olrp_components.csv"][0][:3] == ["model", "ev_offset", "olrp"]

    def test_partial_detector_curve(self):
        gts = gt_set()
        doc, _ = score_detection_log(self.preds(gts, perfect=False), gts)
        curve = {row[0]: row[1] for row in doc["models"]["d"]["curve"]}
        assert curve[0] == 0.0
        assert curve[-3] == 1.0

    def test_missing_detection_rows_counted_empty(self):
        gts = gt_set()
        preds = self.preds(gts)[:4]
        doc, _ = score_detection_log(preds, gts)
        assert doc["diagnostics"] >= 4
        assert doc["models"]["d"]["olrp"] > 0.0

    def test_no_truth_rejected(self):
        with pytest.raises(ValueError):
            score_detection_log([], [])


class TestVqaLog:
    def test_doc_tables_and_queue(self):
        gts = gt_set()
        preds = []
        for g in gts:
            raw = "1" if g.ev_offset == 0 else "a few"
            preds.append(PredictionRecord(model="v", image_id=g.image_id, task="vqa",
                                          question_id="Q2", raw_text=raw))
        doc, tables = score_vqa_log(preds, gts)
        block = doc["models"]["v"]["questions"]["Q2"]
        assert block["soft"] == 0.5
        assert block["hard"] == 0.5
        assert doc["needs_review"] == 4
        assert "overrides_queue.csv" in tables
        assert tables["vqa_acc.csv"][1] == ["v", "Q2", -3, "0.000000", "0.000000", 4]
        assert tables["resp_len.csv"][1][0] == "v"

    def test_override_resolves_queue(self):
        gts = gt_set()
        preds = [PredictionRecord(model="v", image_id=g.image_id, task="vqa",
                                  question_id="Q2", raw_text="a few") for g in gts]
        overrides = {(g.image_id, "v", "Q2"): "1" for g in gts}
        doc, tables = score_vqa_log(preds, gts, overrides=overrides)
        assert doc["needs_review"] == 0
        assert "overrides_queue.csv" not in tables
        assert doc["models"]["v"]["questions"]["Q2"]["soft"] == 1.0


class TestArtifacts:
    def test_written_files_and_idempotence(self, tmp_path):
        gts = gt_set()
        preds = [PredictionRecord(model="m", image_id=g.image_id,
                                  task="classification", label="disc") for g in gts]
        doc, tables = score_classification_log(preds, gts)
        first = write_metric_artifacts(tmp_path / "x", doc, tables, charts=True)
        names = {p.name for p in first}
        assert {"metrics.json", "top1_by_offset.csv", "ps.csv", "top1_by_offset.svg"} <= names
        write_metric_artifacts(tmp_path / "y", doc, tables, charts=True)
        for name in ("metrics.json", "top1_by_offset.csv", "top1_by_offset.svg"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
        loaded = json.loads((tmp_path / "x" / "metrics.json").read_text())
        assert loaded["task"] == "classification"
