"""Corpus walkers: directories of images and JSONL manifests.

Both yield (image_id, ExifRecord) pairs. Files that cannot be read are
logged and skipped; files that parse but carry damaged metadata come back
as has_exif=False records so one bad image never aborts an audit.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterator, Optional

from capbias.exif import (
    EXPOSURE_PROGRAMS,
    ExifRational,
    ExifRecord,
    NotAnImage,
    parse_capture_datetime,
    parse_exif,
)

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".tif", ".tiff"}

MANIFEST_TAG_KEYS = ("exposure_time", "f_number", "iso", "exposure_program", "datetime")


class EmptySource(ValueError):
    """The directory or manifest contains no entries."""


def _parse_file(path: Path) -> ExifRecord:
    try:
        data = path.read_bytes()
    except OSError as exc:
        log.warning("skipping unreadable file %s: %s", path, exc)
        raise
    try:
        return parse_exif(data)
    except NotAnImage as exc:
        return ExifRecord(has_exif=False, diagnostic=f"not an image: {exc}")


def record_from_manifest_row(row: dict) -> ExifRecord:
    """Build a record from pre-extracted tag columns, no image bytes read."""

    def rational(key: str) -> Optional[ExifRational]:
        value = row.get(key)
        if value is None:
            return None
        try:
            r = ExifRational.parse(value)
        except (ValueError, ZeroDivisionError):
            return None
        return r if float(r) > 0 else None

    iso = row.get("iso")
    if iso is not None:
        try:
            iso = int(iso)
        except (TypeError, ValueError):
            iso = None
        else:
            if iso <= 0:
                iso = None

    dt = None
    if row.get("datetime") is not None:
        dt = parse_capture_datetime(str(row["datetime"]))

    program = row.get("exposure_program")
    if isinstance(program, int):
        program = EXPOSURE_PROGRAMS.get(program, f"Unknown ({program})")
    elif program is not None:
        program = str(program)

    fields_present = any(row.get(k) is not None for k in MANIFEST_TAG_KEYS)
    return ExifRecord(
        has_exif=fields_present,
        exposure_time=rational("exposure_time"),
        f_number=rational("f_number"),
        iso=iso,
        exposure_program=program,
        capture_datetime=dt,
    )


def _manifest_image_id(row: dict, index: int) -> str:
    if row.get("image_id") is not None:
        return str(row["image_id"])
    for key in ("path", "url"):
        if row.get(key):
            return Path(str(row[key])).name
    return f"row{index}"


def scan_directory(root: Path, jobs: int = 1) -> Iterator[tuple[str, ExifRecord]]:
    files = sorted(
        p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise EmptySource(f"no image files under {root}")

    def parse_one(path: Path) -> Optional[ExifRecord]:
        try:
            return _parse_file(path)
        except OSError:
            return None

    ids = [p.relative_to(root).as_posix() for p in files]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for image_id, record in zip(ids, pool.map(parse_one, files)):
                if record is not None:
                    yield image_id, record
    else:
        for image_id, path in zip(ids, files):
            record = parse_one(path)
            if record is not None:
                yield image_id, record


def scan_manifest(path: Path) -> Iterator[tuple[str, ExifRecord]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append((i, json.loads(line)))
            except json.JSONDecodeError as exc:
                log.warning("skipping bad manifest line %d: %s", i + 1, exc)
    if not rows:
        raise EmptySource(f"manifest {path} has no rows")
    for i, row in rows:
        image_id = _manifest_image_id(row, i)
        if any(row.get(k) is not None for k in MANIFEST_TAG_KEYS):
            yield image_id, record_from_manifest_row(row)
        elif row.get("path"):
            file_path = Path(str(row["path"]))
            if not file_path.is_absolute():
                file_path = path.parent / file_path
            try:
                yield image_id, _parse_file(file_path)
            except OSError:
                continue
        elif row.get("url"):
            yield image_id, ExifRecord(
                has_exif=False, diagnostic="url-only row; use a fetch source"
            )
        else:
            yield image_id, ExifRecord(has_exif=False, diagnostic="empty manifest row")


def scan_corpus(source: str | Path, jobs: int = 1) -> Iterator[tuple[str, ExifRecord]]:
    """Walk a directory of images or a JSONL manifest."""
    src = Path(source)
    if src.is_dir():
        yield from scan_directory(src, jobs=jobs)
    elif src.is_file():
        yield from scan_manifest(src)
    else:
        raise FileNotFoundError(f"no such corpus source: {source}")
