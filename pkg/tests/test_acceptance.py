"""Ten gate checks over the whole toolkit, one printed verdict per check.

Each test prints `acceptance NN <name>: PASS|FAIL (elapsed)` through the
capture plug so the line shows up in plain `pytest` output too.  Checks
cover metadata round-tripping, the exposure math, plan expansion, the
discard rule, every scoring metric against independent oracles, one
end-to-end sweep of synthetic scenes, and audit merge determinism.
"""

import itertools
import random
import time
from collections import defaultdict
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from capbias.audit import (
    aggregate,
    aggregate_parallel,
    merge,
    normalized,
    render_report,
)
from capbias.baselines import box_proposal_detector, luminance_threshold_classifier
from capbias.exif import NotAnImage, parse_exif
from capbias.exif_writer import emit_exif
from capbias.exposure import (
    CameraSettings,
    build_grid,
    compute_ev,
    equivalence_key,
    ev_offset,
)
from capbias.metrics.classification import score_top1
from capbias.metrics.detection import olrp, olrp_by_offset
from capbias.metrics.sensitivity import parameter_sensitivity
from capbias.metrics.vqa import DEFAULT_QUESTIONS, normalize_answer, score_vqa
from capbias.records import GroundTruthRecord, PredictionRecord
from capbias.scenes import synth_scene
from capbias.sweep import (
    SimConfig,
    discard_check,
    emit_tether_script,
    plan_sweep,
    simulate_corpus,
    simulate_plan,
)

# Oracles stay single-sourced in the per-module suites.
from test_audit import audit_record
from test_detection import _matching_is_unique, oracle_olrp, random_scene
from test_exif import random_record
from test_exposure import reference_ev

TAU = 0.5


@contextmanager
def check(capsys, tag):
    start = time.monotonic()
    failed = False
    try:
        yield
    except BaseException:
        failed = True
        raise
    finally:
        verdict = "FAIL" if failed else "PASS"
        elapsed = time.monotonic() - start
        with capsys.disabled():
            print(f"acceptance {tag}: {verdict} ({elapsed:.1f}s)", flush=True)


def test_01_metadata_round_trip_and_fuzz(capsys):
    with check(capsys, "01 exif-round-trip-and-fuzz"):
        start = time.monotonic()
        rng = random.Random(1)
        for _ in range(1000):
            for order in ("little", "big"):
                record = random_record(rng, order)
                assert parse_exif(emit_exif(record)) == record

        seed_buffer = emit_exif(random_record(rng, "little"))
        for index in range(100_000):
            if index % 1000 == 0:
                seed_buffer = emit_exif(random_record(rng, rng.choice(("little", "big"))))
            choice = rng.random()
            if choice < 0.6:
                buf = rng.randbytes(rng.randint(0, 64))
            elif choice < 0.8:
                buf = seed_buffer[: rng.randint(0, len(seed_buffer))]
            else:
                mutated = bytearray(seed_buffer)
                mutated[rng.randrange(len(mutated))] ^= 1 << rng.randrange(8)
                buf = bytes(mutated)
            try:
                parse_exif(buf)
            except NotAnImage:
                pass  # the one documented rejection; anything else is a crash
        assert time.monotonic() - start < 60.0


def test_02_ev_formula_oracle(capsys):
    with check(capsys, "02 ev-formula-oracle"):
        grid = build_grid()
        for settings in grid.combos:
            want = reference_ev(
                float(settings.exposure_time), float(settings.f_number), float(settings.iso)
            )
            assert abs(compute_ev(settings) - want) <= 1e-9
        assert compute_ev(CameraSettings.of(1, 1, 100)) == 0.0
        lattice = itertools.product(
            [Fraction(1, 512), Fraction(1, 8), 1, 4], [1, 2, 8], [100, 400, 1600]
        )
        for t, n, iso in lattice:
            ev = compute_ev(CameraSettings.of(t, n, iso))
            assert compute_ev(CameraSettings.of(t * 2, n, iso)) == pytest.approx(ev - 1, abs=1e-9)
            assert compute_ev(CameraSettings.of(t, n * 2, iso)) == pytest.approx(ev + 2, abs=1e-9)
            assert compute_ev(CameraSettings.of(t, n, iso * 2)) == pytest.approx(ev - 1, abs=1e-9)


def test_03_lux_anchors_and_equivalence(capsys):
    with check(capsys, "03 lux-anchors-and-equivalence"):
        assert ev_offset(11, 1000) == 0
        assert ev_offset(5, 10) == 0
        a = CameraSettings.of("1/125", 8, 400)
        b = CameraSettings.of("1/250", 8, 800)
        assert a != b
        assert equivalence_key(a, 1000) == equivalence_key(b, 1000) == (1000.0, 0)


def test_04_grid_and_plan_counts(capsys):
    with check(capsys, "04 grid-and-plan-counts"):
        grid = build_grid()
        assert len(grid.combos) == 630
        plans = plan_sweep(grid, [1000, 10])
        assert sum(len(plan.steps) for plan in plans) == 1260
        capture_lines = sum(
            emit_tether_script(plan).count("--capture-image-and-download")
            for plan in plans
        )
        assert capture_lines == 1260


def test_05_clipping_discard_rule(capsys):
    with check(capsys, "05 clipping-discard-rule"):
        start = time.monotonic()
        assert discard_check(np.zeros((40, 50), dtype=np.uint8))
        borderline = np.zeros(10_000, dtype=np.uint8)
        borderline[:500] = 128  # exactly 95.0% black stays in
        assert not discard_check(borderline.reshape(100, 100))

        base = np.full((48, 48, 3), 128, dtype=np.uint8)
        cfg = SimConfig(gamma_model="linear", noise_k=0.0, seed=0)
        deep_under = 0
        for plan in plan_sweep(build_grid(), [1000, 10]):
            for capture in simulate_plan(base, plan, cfg):
                if capture.step.ev_offset <= -10:
                    deep_under += 1
                    assert not capture.kept
        assert deep_under > 0
        assert time.monotonic() - start < 60.0


def test_06_olrp_exhaustive_oracle(capsys):
    with check(capsys, "06 olrp-exhaustive-oracle"):
        perfect = [([(0.0, 0.0, 4.0, 4.0, 0.9, "a")], [(0.0, 0.0, 4.0, 4.0, "a")])]
        assert olrp(perfect, TAU).olrp == 0.0
        missed = [([], [(0.0, 0.0, 4.0, 4.0, "a")])]
        assert olrp(missed, TAU).olrp == 1.0
        shifted = [([(0.0, 1.0, 4.0, 4.0, 0.9, "a")], [(0.0, 0.0, 4.0, 4.0, "a")])]
        assert olrp(shifted, TAU).olrp == 0.5  # IoU 0.75 at tau 0.5

        rng = random.Random(9)
        scored = 0
        unique_checked = 0
        for _ in range(500):
            dets, gts = random_scene(rng)
            expected = oracle_olrp(dets, gts, TAU)
            if expected is None:
                continue
            scored += 1
            actual = olrp([(dets, gts)], TAU).olrp
            assert actual >= expected - 1e-12
            if _matching_is_unique(dets, gts, TAU):
                unique_checked += 1
                assert actual == pytest.approx(expected, abs=1e-12)
        assert scored > 400
        assert unique_checked > 100


def test_07_sensitivity_binary_rule(capsys):
    with check(capsys, "07 sensitivity-binary-rule"):
        for n in range(1, 7):
            for bits in itertools.product((0.0, 1.0), repeat=n):
                mu = sum(bits) / n
                sigma = (sum((b - mu) ** 2 for b in bits) / n) ** 0.5
                sensitive = mu > 0 and sigma / mu > 1
                assert sensitive == (0.0 < mu < 0.5)

        scores = {
            "a1": 1.0, "a2": 1.0, "a3": 1.0, "a4": 1.0,
            "b1": 1.0, "b2": 0.0, "b3": 0.0, "b4": 0.0,
            "c1": 0.0, "c2": 0.0, "c3": 0.0,
            "d1": 1.0, "d2": 1.0, "d3": 0.0, "d4": 0.0,
        }
        keys = {image_id: image_id[0] for image_id in scores}
        result = parameter_sensitivity(scores, keys)
        assert result.n_groups == 4
        assert result.n_sensitive == 1  # only the 1-of-4 group crosses cv 1
        assert result.ps == 25.0


def test_08_vqa_normalization_and_ordering(capsys):
    with check(capsys, "08 vqa-normalization-and-ordering"):
        spelled = normalize_answer("three", DEFAULT_QUESTIONS["Q2"])
        assert spelled.canonical == "3" and not spelled.needs_review
        wrapped = normalize_answer(
            "The objects in this image are cups", DEFAULT_QUESTIONS["Q1"]
        )
        assert wrapped.canonical == "cup" and not wrapped.needs_review
        invalid = normalize_answer("E) 10", DEFAULT_QUESTIONS["Q4"])
        assert "invalid_option" in invalid.flags

        pool = [
            "3", "three", "B) 3", "E) 10", "cup", "cups", "the cup", "a) backpack",
            "k) something", "It is a tie", "The answer is: 4", "seven", "none", "",
            "x" * 60, "maybe 2 or 3", "(c)", "12", "OPTION B", "b", "zero",
        ]
        labels = ["cup", "tie", "laptop", "remote", "backpack"]
        gts = [
            GroundTruthRecord(image_id=f"i{k}", scene_id="s", lux=1000.0,
                              ev_offset=k % 3 - 1, label=label, count=2 + k % 4)
            for k, label in enumerate(labels)
        ]
        rng = random.Random(8)
        sets_checked = 0
        for block in range(100):
            preds = []
            for m in range(25):
                model = f"m{block}-{m}"
                for question_id in ("Q1", "Q2", "Q3", "Q4"):
                    for g in gts:
                        preds.append(PredictionRecord(
                            model=model, image_id=g.image_id, task="vqa",
                            question_id=question_id, raw_text=rng.choice(pool),
                        ))
            result = score_vqa(preds, gts)
            for key, soft in result.soft_overall.items():
                assert result.hard_overall[key] <= soft + 1e-12
                sets_checked += 1
            for key, soft in result.soft_by_bin.items():
                assert result.hard_by_bin[key] <= soft + 1e-12
        assert sets_checked >= 10_000


def test_09_sweep_shape_end_to_end(capsys):
    with check(capsys, "09 sweep-shape-end-to-end"):
        start = time.monotonic()
        scenes = [synth_scene(seed) for seed in range(10)]
        grid = build_grid()
        cfg = SimConfig(gamma_model="linear", noise_k=0.0, seed=0)
        truths, images, log = simulate_corpus(scenes, grid, [1000, 10], cfg, subsample=4)
        assert len(log) == 3160  # 158-step thinned ramp x 10 scenes x 2 lux
        assert 600 < len(truths) < len(log)

        clean = luminance_threshold_classifier(images)
        top1 = score_top1(clean, truths)
        curve = top1.by_offset
        band = {o: v for o, v in curve.items() if abs(o) <= 1}
        far = {o: v for o, v in curve.items() if abs(o) >= 4}
        assert band and far
        peak = max(curve.values())
        assert max(band.values()) == pytest.approx(peak, abs=1e-12)
        assert all(v < peak - 1e-9 for v in far.values())

        det_by_image = {p.image_id: p.detections for p in box_proposal_detector(images)}
        scenes_by_offset = defaultdict(list)
        for g in truths:
            gt_objects = [(*box, g.label) for box in g.boxes]
            scenes_by_offset[g.ev_offset].append(
                (det_by_image.get(g.image_id, ()), gt_objects)
            )
        olrp_curve = {o: r.olrp for o, r in olrp_by_offset(scenes_by_offset, TAU).items()}
        best = min(olrp_curve.values())
        assert any(abs(o) <= 2 for o, v in olrp_curve.items() if v <= best + 1e-12)
        assert olrp_curve[min(olrp_curve)] > best + 1e-9
        assert olrp_curve[max(olrp_curve)] > best + 1e-9

        keys = {g.image_id: (g.scene_id, g.ev_offset) for g in truths}
        noisy = luminance_threshold_classifier(images, jitter=4.0)
        ps_clean = parameter_sensitivity(top1.per_image, keys).ps
        ps_noisy = parameter_sensitivity(score_top1(noisy, truths).per_image, keys).ps
        assert ps_noisy > ps_clean
        assert time.monotonic() - start < 300.0


def test_10_audit_merge_determinism(capsys, tmp_path):
    with check(capsys, "10 audit-merge-determinism"):
        records = []
        index = 0
        for _ in range(72):
            records.append(audit_record(index, program="Auto exposure"))
            index += 1
        for _ in range(26):
            records.append(audit_record(index, program="Manual"))
            index += 1
        for _ in range(2):
            records.append(audit_record(index, program="Bulb"))
            index += 1

        single = aggregate(records)
        halves = merge(aggregate(records[:37]), aggregate(records[37:]))
        assert halves == single
        assert aggregate_parallel(records, jobs=2) == single

        one, two = tmp_path / "one", tmp_path / "two"
        render_report(single, one, formats=("json",))
        render_report(halves, two, formats=("json",))
        assert (one / "report.json").read_bytes() == (two / "report.json").read_bytes()

        fractions = normalized(single.mode_hist, population=single.total)
        assert fractions["Auto"] == 0.72
        assert fractions["Manual"] == 0.26
        assert fractions["Unknown"] == 0.02
