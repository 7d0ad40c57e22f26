"""Exposure sweep planning, tether scripts, and radiometric simulation.

A sweep walks the full settings grid at each illuminance level. Plans can
drive a real tethered camera (gphoto2 one-liners) or the simulator, which
re-exposes an offset-0 base rendering by scaling scene-linear values.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from capbias.exposure import (
    CameraSettings,
    SweepGrid,
    compute_ev,
    ev_offset,
    fnumber_label,
    quantize_ev,
    shutter_label,
)
from capbias.raster import decode_transfer, encode_transfer, write_raster
from capbias.records import GroundTruthRecord
from capbias.scenes import SceneTruth

DISCARD_FRACTION = 0.95


@dataclass(frozen=True)
class PlanStep:
    """One capture in a sweep plan."""

    index: int
    settings: CameraSettings
    ev: float
    ev_bin: int
    ev_offset: int
    filename: str

    @property
    def image_id(self) -> str:
        return Path(self.filename).stem


@dataclass(frozen=True)
class CapturePlan:
    """All captures for one (scene, lux) pair."""

    scene_id: str
    lux: float
    steps: tuple[PlanStep, ...]


@dataclass(frozen=True)
class SimConfig:
    """Simulator knobs.

    gamma_model picks the display transfer ("srgb", "gamma22", or "linear"
    for none). noise_k scales the ISO read-noise standard deviation,
    noise_k * iso / 100 in linear units. clip range is fixed at [0, 1].
    """

    gamma_model: str = "srgb"
    noise_k: float = 0.0
    seed: int = 0


def _lux_label(lux: float) -> str:
    return str(int(lux)) if float(lux) == int(lux) else str(lux)


def plan_sweep(
    grid: SweepGrid,
    lux_levels: Sequence[float],
    scene_ids: Sequence[str] = ("scene",),
    anchors: Optional[Mapping] = None,
    subsample: int = 1,
) -> list[CapturePlan]:
    """One plan per (scene, lux), ordered as a bright-to-dark EV ramp.

    subsample keeps every n-th step; because steps are EV-ordered, a
    thinned plan still covers the whole exposure range evenly.
    """
    if subsample < 1:
        raise ValueError("subsample must be >= 1")
    anchor_table = dict(anchors) if anchors is not None else grid.lux_anchors
    combos = sorted(
        grid.combos,
        key=lambda s: (compute_ev(s), s.exposure_time, s.iso, s.f_number),
    )[::subsample]
    plans = []
    for scene_id in scene_ids:
        for lux in lux_levels:
            steps = []
            for i, settings in enumerate(combos):
                ev = compute_ev(settings)
                ev_bin = quantize_ev(ev)
                offset = ev_offset(ev_bin, lux, anchor_table)
                filename = f"{scene_id}_{_lux_label(lux)}_{i}.jpg"
                steps.append(PlanStep(i, settings, ev, ev_bin, offset, filename))
            plans.append(CapturePlan(scene_id, float(lux), tuple(steps)))
    return plans


def plan_to_json(plan: CapturePlan) -> dict:
    return {
        "scene_id": plan.scene_id,
        "lux": plan.lux,
        "steps": [
            {
                "shutter": shutter_label(s.settings.exposure_time),
                "iso": s.settings.iso,
                "fnumber": fnumber_label(s.settings.f_number),
                "ev": s.ev,
                "ev_bin": s.ev_bin,
                "ev_offset": s.ev_offset,
                "filename": s.filename,
            }
            for s in plan.steps
        ],
    }


def plan_from_json(doc: Mapping) -> CapturePlan:
    steps = []
    for i, row in enumerate(doc["steps"]):
        settings = CameraSettings.of(row["shutter"], row["fnumber"], row["iso"])
        steps.append(
            PlanStep(
                index=i,
                settings=settings,
                ev=float(row["ev"]),
                ev_bin=int(row["ev_bin"]),
                ev_offset=int(row["ev_offset"]),
                filename=str(row["filename"]),
            )
        )
    return CapturePlan(str(doc["scene_id"]), float(doc["lux"]), tuple(steps))


def save_plan(plan: CapturePlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_json(plan), indent=2, sort_keys=True) + "\n")


def load_plan(path: str | Path) -> CapturePlan:
    return plan_from_json(json.loads(Path(path).read_text()))


def emit_tether_script(plan: CapturePlan) -> str:
    """gphoto2 capture script for one plan, one line per capture."""
    lines = [
        "#!/bin/sh",
        "# Tethered sweep: scene %s at %s lux, %d captures."
        % (plan.scene_id, _lux_label(plan.lux), len(plan.steps)),
        "# Keep the slowest shutter speeds for the end of the run.",
        "set -e",
    ]
    for step in plan.steps:
        lines.append(
            "gphoto2"
            f" --set-config shutterspeed={shutter_label(step.settings.exposure_time)}"
            f" --set-config iso={step.settings.iso}"
            f" --set-config aperture={fnumber_label(step.settings.f_number)}"
            " --capture-image-and-download"
            f" --filename {step.filename}"
        )
    return "\n".join(lines) + "\n"


def simulate_exposure(
    base: np.ndarray, offset: int, iso: int, cfg: SimConfig = SimConfig()
) -> np.ndarray:
    """Re-expose an offset-0 rendering by `offset` stops.

    Scene-linear values scale by 2**offset, ISO read noise is added in the
    linear domain, and the result is clipped and re-encoded to uint8.
    """
    linear = decode_transfer(base, cfg.gamma_model) * (2.0 ** offset)
    if cfg.noise_k > 0:
        rng = np.random.default_rng(cfg.seed)
        linear = linear + rng.normal(0.0, cfg.noise_k * iso / 100.0, size=linear.shape)
    return encode_transfer(linear, cfg.gamma_model)


def discard_check(img: np.ndarray, fraction: float = DISCARD_FRACTION) -> bool:
    """True when more than `fraction` of samples are crushed or blown.

    Samples are counted jointly across channels; the comparison is strict,
    so a raster at exactly the fraction is kept.
    """
    flat = np.asarray(img).ravel()
    n = flat.size
    if n == 0:
        raise ValueError("empty raster")
    return bool((flat == 0).sum() / n > fraction or (flat == 255).sum() / n > fraction)


def _step_seed(master: int, plan: CapturePlan, step: PlanStep) -> int:
    # Stable per-step derivation so parallel or resumed runs agree.
    key = f"{master}:{plan.scene_id}:{_lux_label(plan.lux)}:{step.index}"
    return zlib.crc32(key.encode())


@dataclass(frozen=True)
class SimulatedCapture:
    step: PlanStep
    plan: CapturePlan
    image: np.ndarray
    kept: bool

    @property
    def image_id(self) -> str:
        return self.step.image_id


def simulate_plan(
    base: np.ndarray, plan: CapturePlan, cfg: SimConfig = SimConfig()
) -> Iterable[SimulatedCapture]:
    """Run every step of a plan against one base rendering."""
    for step in plan.steps:
        step_cfg = replace(cfg, seed=_step_seed(cfg.seed, plan, step))
        img = simulate_exposure(base, step.ev_offset, step.settings.iso, step_cfg)
        yield SimulatedCapture(step, plan, img, not discard_check(img))


def ground_truth_for(capture: SimulatedCapture, truth: SceneTruth) -> GroundTruthRecord:
    step = capture.step
    return GroundTruthRecord(
        image_id=capture.image_id,
        scene_id=truth.scene_id,
        lux=capture.plan.lux,
        ev_offset=step.ev_offset,
        label=truth.label,
        boxes=tuple(tuple(float(v) for v in b) for b in truth.boxes),
        count=truth.count,
        settings={
            "shutter": shutter_label(step.settings.exposure_time),
            "iso": step.settings.iso,
            "fnumber": fnumber_label(step.settings.f_number),
        },
    )


def simulate_corpus(
    scenes: Sequence[tuple[np.ndarray, SceneTruth]],
    grid: SweepGrid,
    lux_levels: Sequence[float],
    cfg: SimConfig = SimConfig(),
    subsample: int = 1,
    outdir: Optional[str | Path] = None,
) -> tuple[list[GroundTruthRecord], dict[str, np.ndarray], list[dict]]:
    """Sweep every scene, apply the discard rule, collect ground truth.

    Returns (truth for kept images, kept rasters by image id, capture log
    covering every planned step). When outdir is set, kept rasters are
    also written there as PPM files.
    """
    out = Path(outdir) if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    truths = []
    images: dict[str, np.ndarray] = {}
    log = []
    for base, truth in scenes:
        plans = plan_sweep(
            grid, lux_levels, scene_ids=[truth.scene_id], subsample=subsample
        )
        for plan in plans:
            for capture in simulate_plan(base, plan, cfg):
                log.append(
                    {
                        "image_id": capture.image_id,
                        "scene_id": truth.scene_id,
                        "lux": plan.lux,
                        "shutter": shutter_label(capture.step.settings.exposure_time),
                        "iso": capture.step.settings.iso,
                        "fnumber": fnumber_label(capture.step.settings.f_number),
                        "ev_bin": capture.step.ev_bin,
                        "ev_offset": capture.step.ev_offset,
                        "kept": capture.kept,
                    }
                )
                if not capture.kept:
                    continue
                truths.append(ground_truth_for(capture, truth))
                images[capture.image_id] = capture.image
                if out is not None:
                    write_raster(capture.image, out / f"{capture.image_id}.ppm")
    return truths, images, log
