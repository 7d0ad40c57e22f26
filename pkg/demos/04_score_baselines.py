"""
Scoring models across the exposure range
========================================

Simulate a swept corpus, run the built-in pixel baselines over it, and
score them per EV-offset bin. The toolkit's central claim is visible in
miniature even here: performance peaks on well-exposed frames and falls
off toward both ends of the ramp.
"""

from collections import defaultdict

from capbias.baselines import box_proposal_detector, luminance_threshold_classifier
from capbias.exposure import build_grid
from capbias.metrics import (
    DEFAULT_QUESTIONS,
    normalize_answer,
    olrp_by_offset,
    parameter_sensitivity,
    score_top1,
)
from capbias.scenes import synth_scene
from capbias.sweep import SimConfig, simulate_corpus

scenes = [synth_scene(seed) for seed in range(6)]
cfg = SimConfig(gamma_model="linear", noise_k=0.0, seed=0)
truths, images, _ = simulate_corpus(scenes, build_grid(), [1000, 10], cfg, subsample=8)
print(f"corpus: {len(images)} kept frames from {len(scenes)} scenes")

# Classification: top-1 accuracy per offset bin.
preds = luminance_threshold_classifier(images)
top1 = score_top1(preds, truths)
print()
print("top-1 accuracy by EV offset:")
for offset, acc in sorted(top1.by_offset.items()):
    bar = "#" * round(acc * 30)
    print(f"  {offset:+3d}  {acc:5.2f}  {bar}")

# Detection: oLRP per offset bin (lower is better).
det_by_image = {p.image_id: p.detections for p in box_proposal_detector(images)}
by_offset = defaultdict(list)
for g in truths:
    gt_objects = [(*box, g.label) for box in g.boxes]
    by_offset[g.ev_offset].append((det_by_image.get(g.image_id, ()), gt_objects))
print()
print("oLRP by EV offset (lower is better):")
for offset, result in sorted(olrp_by_offset(by_offset).items()):
    print(f"  {offset:+3d}  {result.olrp:5.2f}   (loc {result.loc:.2f}, "
          f"fp {result.fp:.2f}, fn {result.fn:.2f})")

# Parameter sensitivity: do exposure-equivalent captures of the same
# scene get the same score? Deterministic pixels say yes; add decision
# noise and equivalent frames start disagreeing.
keys = {g.image_id: (g.scene_id, g.ev_offset) for g in truths}
noisy = luminance_threshold_classifier(images, jitter=4.0)
ps_clean = parameter_sensitivity(top1.per_image, keys).ps
ps_noisy = parameter_sensitivity(score_top1(noisy, truths).per_image, keys).ps
print()
print(f"parameter sensitivity: clean {ps_clean:.1f}  vs  jittered {ps_noisy:.1f}")

# Free-text answers normalize before exact matching.
print()
print("answer normalization:")
for raw, question in [("three cups", "Q2"), ("The objects in this image are cups", "Q1"),
                      ("B) 3", "Q4"), ("E) 10", "Q4")]:
    r = normalize_answer(raw, DEFAULT_QUESTIONS[question])
    flags = f"  flags={','.join(r.flags)}" if r.flags else ""
    print(f"  {question} {raw!r:40} -> {r.canonical!r}{flags}")
