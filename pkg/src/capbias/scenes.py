"""Synthetic desk-scale scenes with box and count ground truth.

Each scene places 2..5 solid shapes of a single class on a gray backdrop
with a gentle horizontal lighting gradient. Objects alternate between
bright and dark fills so both over- and under-exposure degrade them
gradually. Rendering is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHAPE_CLASSES = ("disc", "square", "diamond")

DEFAULT_SIZE = (96, 144)
BACKGROUND = 105
GRADIENT_SPAN = 15  # plus/minus around BACKGROUND, left to right
BRIGHT_RANGE = (190, 230)
DARK_RANGE = (30, 60)
HALF_SIZE_RANGE = (8, 14)
BORDER = 4
SPACING = 5


@dataclass(frozen=True)
class SceneTruth:
    """Ground truth for one rendered scene."""

    scene_id: str
    label: str
    boxes: tuple[tuple[int, int, int, int], ...]  # half-open (x1, y1, x2, y2)
    count: int


def _shape_mask(kind: str, r: int) -> np.ndarray:
    side = 2 * r + 1
    yy, xx = np.mgrid[0:side, 0:side]
    dy = yy - r
    dx = xx - r
    if kind == "disc":
        return dx * dx + dy * dy <= r * r
    if kind == "square":
        return np.ones((side, side), dtype=bool)
    if kind == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    raise ValueError(f"unknown shape class {kind!r}")


def _boxes_clash(box: tuple[int, int, int, int], others, spacing: int) -> bool:
    x1, y1, x2, y2 = box
    for ox1, oy1, ox2, oy2 in others:
        if x1 - spacing < ox2 and ox1 - spacing < x2 and y1 - spacing < oy2 and oy1 - spacing < y2:
            return True
    return False


def synth_scene(
    seed: int,
    n_objects: int | None = None,
    size: tuple[int, int] = DEFAULT_SIZE,
    scene_id: str | None = None,
) -> tuple[np.ndarray, SceneTruth]:
    """Render one scene. Returns (rgb raster, truth)."""
    rng = np.random.default_rng(seed)
    h, w = size
    label = SHAPE_CLASSES[int(rng.integers(0, len(SHAPE_CLASSES)))]
    n = int(rng.integers(2, 6)) if n_objects is None else int(n_objects)
    if n < 1:
        raise ValueError("n_objects must be at least 1")

    gradient = np.linspace(-GRADIENT_SPAN, GRADIENT_SPAN, w)
    base = np.clip(BACKGROUND + gradient, 0, 255)
    img = np.repeat(base[np.newaxis, :], h, axis=0)

    boxes: list[tuple[int, int, int, int]] = []
    placed = 0
    attempts = 0
    while placed < n:
        attempts += 1
        if attempts > 2000:
            raise RuntimeError(f"could not place {n} objects in a {w}x{h} scene")
        r = int(rng.integers(HALF_SIZE_RANGE[0], HALF_SIZE_RANGE[1] + 1))
        cx = int(rng.integers(BORDER + r, w - BORDER - r))
        cy = int(rng.integers(BORDER + r, h - BORDER - r))
        box = (cx - r, cy - r, cx + r + 1, cy + r + 1)
        if _boxes_clash(box, boxes, SPACING):
            continue
        if placed % 2 == 0:
            value = int(rng.integers(BRIGHT_RANGE[0], BRIGHT_RANGE[1] + 1))
        else:
            value = int(rng.integers(DARK_RANGE[0], DARK_RANGE[1] + 1))
        mask = _shape_mask(label, r)
        region = img[box[1] : box[3], box[0] : box[2]]
        region[mask] = value
        boxes.append(box)
        placed += 1

    rgb = np.repeat(np.rint(img).astype(np.uint8)[:, :, np.newaxis], 3, axis=2)
    truth = SceneTruth(
        scene_id=scene_id or f"scene{seed:04d}",
        label=label,
        boxes=tuple(boxes),
        count=n,
    )
    return rgb, truth
