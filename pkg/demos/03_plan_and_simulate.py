"""
Planning a sweep and simulating it
==================================

A capture plan walks one scene through every (shutter, ISO, aperture)
combo of a grid at a fixed illuminance, ordered bright to dark. The
same plan drives a tethered camera via a generated shell script, or a
renderer that re-exposes a synthetic scene.
"""

import tempfile
from collections import Counter
from pathlib import Path

from capbias.exposure import build_grid
from capbias.scenes import synth_scene
from capbias.sweep import SimConfig, emit_tether_script, plan_sweep, simulate_corpus

grid = build_grid(
    shutter_speeds=["1/1000", "1/250", "1/60", "1/15", "1/4", "1", "4"],
    isos=[100, 800],
    f_numbers=["2.8", "8"],
)
plans = plan_sweep(grid, [1000, 10], scene_ids=["desk"])
print(f"{len(plans)} plans, {sum(len(p.steps) for p in plans)} steps total")

plan = plans[0]
first, last = plan.steps[0], plan.steps[-1]
print(f"first step: {first.settings} offset {first.ev_offset:+d}")
print(f"last step:  {last.settings} offset {last.ev_offset:+d}")

# What a tethered camera would actually run.
print()
print("tether script, first capture:")
for line in emit_tether_script(plan).splitlines():
    if "--capture-image-and-download" in line:
        print(" ", line.strip())
        break

# Now render the same sweep against a synthetic scene. Frames that are
# nearly all crushed or blown get discarded, same as a real protocol
# would bin unusable exposures.
scene = synth_scene(42)
outdir = Path(tempfile.mkdtemp(prefix="capbias_sweep_"))
truths, images, log = simulate_corpus(
    [scene], grid, [1000, 10], SimConfig(gamma_model="srgb"), outdir=outdir
)

kept = Counter(row["ev_offset"] for row in log if row["kept"])
dropped = Counter(row["ev_offset"] for row in log if not row["kept"])
print()
print(f"simulated {len(log)} captures, kept {len(truths)}")
print("offset  kept  dropped")
for offset in sorted(set(kept) | set(dropped)):
    print(f"{offset:+6d}  {kept.get(offset, 0):4d}  {dropped.get(offset, 0):7d}")

print()
print(f"rasters written to {outdir} ({len(images)} PPM files)")
