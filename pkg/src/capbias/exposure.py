"""Exposure-value arithmetic and the sweep settings grid.

EV here is the light-referenced exposure value: for a capture at shutter
time t seconds, aperture N, and sensitivity S,

    EV = log2(N^2 / t) - log2(S / 100)

so a 1 s, f/1, ISO 100 capture sits at EV 0. Bins are integer EV values;
an offset relates a bin to the metered anchor for a known illuminance,
with negative offsets meaning under-exposed relative to the anchor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

Numberish = Union[int, float, str, Fraction]

# Metered anchors: illuminance (lux) -> integer EV of a well-exposed capture.
DEFAULT_LUX_ANCHORS: dict[float, int] = {1000.0: 11, 10.0: 5}

# Full-stop shutter ladder used by the tethered sweep, fastest first.
SWEEP_SHUTTER_SPEEDS: tuple[Fraction, ...] = tuple(
    Fraction(s)
    for s in (
        "1/4000", "1/2000", "1/1000", "1/500", "1/250", "1/125", "1/60",
        "1/30", "1/15", "1/8", "1/4", "1/2", "1", "2", "4", "8", "15", "30",
    )
)

SWEEP_ISOS: tuple[int, ...] = (100, 200, 400, 800, 1600, 3200, 6400)

SWEEP_FNUMBERS: tuple[Fraction, ...] = tuple(
    Fraction(f) for f in ("5.6", "8", "11", "16", "22")
)


class UnknownLux(KeyError):
    """Raised when an ev offset is requested for a lux level with no anchor."""


class DuplicateValue(ValueError):
    """Raised when a grid axis repeats a value."""


def _as_fraction(value: Numberish, name: str) -> Fraction:
    try:
        frac = Fraction(value)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ValueError(f"{name} is not a number: {value!r}") from exc
    if frac <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return frac


@dataclass(frozen=True, order=True)
class CameraSettings:
    """One shutter/aperture/ISO triple. Values are exact rationals."""

    exposure_time: Fraction
    f_number: Fraction
    iso: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "exposure_time", _as_fraction(self.exposure_time, "exposure_time")
        )
        object.__setattr__(self, "f_number", _as_fraction(self.f_number, "f_number"))
        if int(self.iso) <= 0:
            raise ValueError(f"iso must be positive, got {self.iso!r}")
        object.__setattr__(self, "iso", int(self.iso))

    @classmethod
    def of(cls, exposure_time: Numberish, f_number: Numberish, iso: int) -> "CameraSettings":
        """Build settings from strings ("1/125", "5.6"), numbers, or Fractions."""
        return cls(Fraction(exposure_time), Fraction(f_number), iso)


def compute_ev(settings: CameraSettings) -> float:
    """Light-referenced EV of a settings triple."""
    ratio = settings.f_number * settings.f_number / settings.exposure_time
    return math.log2(float(ratio)) - math.log2(settings.iso / 100.0)


def quantize_ev(ev: float) -> int:
    """Round EV to the nearest integer bin, ties away from zero."""
    if ev >= 0:
        return math.floor(ev + 0.5)
    return math.ceil(ev - 0.5)


def _normalize_anchors(anchors: Mapping[Numberish, int] | None) -> dict[float, int]:
    if anchors is None:
        return dict(DEFAULT_LUX_ANCHORS)
    return {float(lux): int(ev) for lux, ev in anchors.items()}


def ev_offset(
    ev_bin: int,
    lux: Numberish,
    anchors: Mapping[Numberish, int] | None = None,
) -> int:
    """Signed distance of a bin from the anchor at this lux.

    Negative means the capture let in less light than the anchor
    (under-exposed), positive means more (over-exposed).
    """
    table = _normalize_anchors(anchors)
    key = float(lux)
    if key not in table:
        raise UnknownLux(f"no anchor configured for lux={lux!r}")
    return table[key] - int(ev_bin)


def settings_offset(
    settings: CameraSettings,
    lux: Numberish,
    anchors: Mapping[Numberish, int] | None = None,
) -> int:
    """EV offset of a settings triple at the given lux."""
    return ev_offset(quantize_ev(compute_ev(settings)), lux, anchors)


def equivalence_key(
    settings: CameraSettings,
    lux: Numberish,
    anchors: Mapping[Numberish, int] | None = None,
) -> tuple[float, int]:
    """Grouping key under which same-light settings collapse: (lux, offset)."""
    return (float(lux), settings_offset(settings, lux, anchors))


def anchor_from_reference(reference: CameraSettings) -> int:
    """Anchor EV estimated from an auto-exposure reference capture.

    For corpora without a metered lux, the camera's own auto pick of the
    scene stands in for the well-exposed bin.
    """
    return quantize_ev(compute_ev(reference))


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian settings grid for a sweep, shutter-major order."""

    shutter_speeds: tuple[Fraction, ...]
    isos: tuple[int, ...]
    f_numbers: tuple[Fraction, ...]
    lux_anchors: dict[float, int] = field(default_factory=lambda: dict(DEFAULT_LUX_ANCHORS))

    @property
    def combos(self) -> list[CameraSettings]:
        return [
            CameraSettings(t, f, iso)
            for t in self.shutter_speeds
            for iso in self.isos
            for f in self.f_numbers
        ]

    def __len__(self) -> int:
        return len(self.shutter_speeds) * len(self.isos) * len(self.f_numbers)


def _check_axis(values: Sequence, name: str) -> None:
    if not values:
        raise ValueError(f"{name} axis is empty")
    seen = set()
    for v in values:
        if v in seen:
            raise DuplicateValue(f"{name} axis repeats {v}")
        seen.add(v)
    ordered = sorted(values)
    if list(values) != ordered:
        raise ValueError(f"{name} axis must be sorted ascending")


def build_grid(
    shutter_speeds: Iterable[Numberish] | None = None,
    isos: Iterable[int] | None = None,
    f_numbers: Iterable[Numberish] | None = None,
    lux_anchors: Mapping[Numberish, int] | None = None,
) -> SweepGrid:
    """Validate axes and assemble a grid. Defaults to the tethered-sweep grid."""
    if shutter_speeds is None:
        shutter_speeds = SWEEP_SHUTTER_SPEEDS
    if isos is None:
        isos = SWEEP_ISOS
    if f_numbers is None:
        f_numbers = SWEEP_FNUMBERS
    shutters = tuple(_as_fraction(s, "shutter") for s in shutter_speeds)
    iso_axis = tuple(int(i) for i in isos)
    for i in iso_axis:
        if i <= 0:
            raise ValueError(f"iso must be positive, got {i}")
    fnums = tuple(_as_fraction(f, "f_number") for f in f_numbers)
    _check_axis(shutters, "shutter")
    _check_axis(iso_axis, "iso")
    _check_axis(fnums, "f_number")
    return SweepGrid(shutters, iso_axis, fnums, _normalize_anchors(lux_anchors))


def shutter_label(value: Fraction) -> str:
    """Camera-vocabulary shutter string: "1/125", "0.5", "30"."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    if value.numerator == 1 and value.denominator > 2:
        return f"1/{value.denominator}"
    return _decimal_label(value)


def fnumber_label(value: Fraction) -> str:
    """Camera-vocabulary aperture string: "5.6", "8"."""
    return _decimal_label(Fraction(value))


def _decimal_label(value: Fraction) -> str:
    text = f"{float(value):.6f}".rstrip("0").rstrip(".")
    return text if text else "0"


def grid_to_json(grid: SweepGrid) -> dict:
    return {
        "shutter": [shutter_label(s) for s in grid.shutter_speeds],
        "iso": list(grid.isos),
        "fnumber": [float(f) for f in grid.f_numbers],
        "lux_anchors": {
            _decimal_label(Fraction(str(lux))): ev
            for lux, ev in sorted(grid.lux_anchors.items())
        },
    }


def grid_from_json(doc: Mapping) -> SweepGrid:
    anchors = doc.get("lux_anchors")
    fnumbers = doc.get("fnumber")
    if fnumbers is not None:
        fnumbers = [str(f) for f in fnumbers]
    return build_grid(doc.get("shutter"), doc.get("iso"), fnumbers, anchors)


def save_grid(grid: SweepGrid, path: str | Path) -> None:
    Path(path).write_text(json.dumps(grid_to_json(grid), indent=2, sort_keys=True) + "\n")


def load_grid(path: str | Path) -> SweepGrid:
    return grid_from_json(json.loads(Path(path).read_text()))
