"""
Exposure value basics
=====================

EV folds shutter time, aperture, and ISO into one log2 light scale.
One EV unit is one stop, a doubling or halving of collected light.
"""

from capbias.exposure import (
    CameraSettings,
    build_grid,
    compute_ev,
    equivalence_key,
    ev_offset,
    quantize_ev,
    settings_offset,
)

# A sunny-day snapshot: 1/125 s at f/8, ISO 100.
snap = CameraSettings.of("1/125", 8, 100)
ev = compute_ev(snap)
print(f"1/125 s, f/8, ISO 100  ->  EV {ev:.4f}, bin {quantize_ev(ev)}")

# The reference point of the scale.
print("1 s, f/1, ISO 100      ->  EV", compute_ev(CameraSettings.of(1, 1, 100)))

# Each of these moves exactly one stop from the snapshot.
for label, s in [
    ("half the time ", CameraSettings.of("1/250", 8, 100)),
    ("double the ISO", CameraSettings.of("1/125", 8, 200)),
]:
    print(f"{label}         ->  EV {compute_ev(s):+.4f}")

# Offsets are read against a per-lux anchor bin: 11 at 1000 lux, 5 at 10 lux.
# Negative offsets are under-exposed, positive over-exposed.
print()
for shutter in ["1/2000", "1/125", "1/8", "2"]:
    s = CameraSettings.of(shutter, 8, 100)
    print(f"{shutter:>7} s at f/8 ISO 100, 1000 lux -> offset {settings_offset(s, 1000):+d}")

print()
print("bin 11 at 1000 lux -> offset", ev_offset(11, 1000))
print("bin  5 at   10 lux -> offset", ev_offset(5, 10))

# Different triples can admit the same light. The equivalence key groups
# them so sensitivity analysis can compare a model across "same exposure,
# different settings" captures.
a = CameraSettings.of("1/125", 8, 400)
b = CameraSettings.of("1/250", 8, 800)
print()
print("equivalence:", a, "->", equivalence_key(a, 1000))
print("equivalence:", b, "->", equivalence_key(b, 1000))

# The full sweep grid used throughout the toolkit.
grid = build_grid()
print()
print(f"default grid: {len(grid.shutter_speeds)} shutters x {len(grid.isos)} ISOs "
      f"x {len(grid.f_numbers)} apertures = {len(grid.combos)} combos")
