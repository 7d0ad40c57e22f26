"""Exif extraction for capture-settings audits.

Reads the handful of tags the audits need (exposure time, aperture, ISO,
exposure program, capture time, make/model) from JPEG APP1 segments or
bare TIFF headers. Parsing is defensive: malformed metadata degrades to a
record with has_exif=False and a diagnostic, never an exception, and no
read ever leaves the supplied buffer. Only inputs that are not JPEG or
TIFF at all raise NotAnImage.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, replace
from datetime import datetime
from fractions import Fraction
from typing import Optional

JPEG_SOI = b"\xff\xd8"
TIFF_LITTLE = b"II*\x00"
TIFF_BIG = b"MM\x00*"
EXIF_HEADER = b"Exif\x00\x00"

TAG_MAKE = 0x010F
TAG_MODEL = 0x0110
TAG_EXIF_IFD = 0x8769
TAG_EXPOSURE_TIME = 0x829A
TAG_F_NUMBER = 0x829D
TAG_EXPOSURE_PROGRAM = 0x8822
TAG_ISO_SPEED_RATINGS = 0x8827
TAG_PHOTOGRAPHIC_SENSITIVITY = 0x8832
TAG_DATETIME_ORIGINAL = 0x9003

TYPE_BYTE = 1
TYPE_ASCII = 2
TYPE_SHORT = 3
TYPE_LONG = 4
TYPE_RATIONAL = 5
TYPE_UNDEFINED = 7
TYPE_SLONG = 9
TYPE_SRATIONAL = 10

TYPE_SIZES = {
    TYPE_BYTE: 1,
    TYPE_ASCII: 1,
    TYPE_SHORT: 2,
    TYPE_LONG: 4,
    TYPE_RATIONAL: 8,
    TYPE_UNDEFINED: 1,
    TYPE_SLONG: 4,
    TYPE_SRATIONAL: 8,
}

# Numeric ExposureProgram values, rendered the way Exif dumpers print them.
EXPOSURE_PROGRAMS = {
    0: "Not defined",
    1: "Manual",
    2: "Normal program",
    3: "Aperture-priority AE",
    4: "Shutter speed priority AE",
    5: "Creative (Slow speed)",
    6: "Action (High speed)",
    7: "Portrait",
    8: "Landscape",
    9: "Bulb",
}

AUTO_MODE_VALUES = frozenset(
    {
        "Auto",
        "Auto exposure",
        "Aperture-priority AE",
        "Auto bracket",
        "Creative (Slow speed)",
        "Shutter speed priority AE",
        "Landscape",
        "Portrait",
        "Action (High speed)",
        "Normal program",
    }
)

MANUAL_MODE_VALUES = frozenset({"Manual", "Manual exposure"})

DATETIME_FORMATS = (
    "%Y:%m:%d %H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
)


class NotAnImage(ValueError):
    """Input bytes are neither a JPEG stream nor a TIFF container."""


class MalformedExif(ValueError):
    """Internal: structural damage inside an otherwise located Exif block."""


class ExposureMode(enum.Enum):
    AUTO = "Auto"
    MANUAL = "Manual"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class ExifRational:
    """A raw Exif rational, kept as the stored numerator/denominator pair."""

    numerator: int
    denominator: int

    def __post_init__(self) -> None:
        if self.denominator == 0:
            raise ValueError("zero denominator")

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __float__(self) -> float:
        return self.numerator / self.denominator

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"

    @classmethod
    def parse(cls, value) -> "ExifRational":
        """Accept "num/den" strings, plain numbers, or Fractions."""
        if isinstance(value, ExifRational):
            return value
        if isinstance(value, int):
            return cls(value, 1)
        frac = Fraction(str(value))
        return cls(frac.numerator, frac.denominator)


@dataclass(frozen=True)
class ExifRecord:
    """Extracted capture metadata for one image."""

    has_exif: bool = False
    exposure_time: Optional[ExifRational] = None
    f_number: Optional[ExifRational] = None
    iso: Optional[int] = None
    exposure_program: Optional[str] = None
    capture_datetime: Optional[datetime] = None
    make: Optional[str] = None
    model: Optional[str] = None
    byte_order: Optional[str] = None
    diagnostic: Optional[str] = None

    def has_full_settings(self) -> bool:
        """True when shutter, aperture, and ISO are all present."""
        return (
            self.exposure_time is not None
            and self.f_number is not None
            and self.iso is not None
        )


def classify_exposure_mode(value: Optional[str]) -> ExposureMode:
    """Bucket an exposure-program/mode string into Auto, Manual, or Unknown.

    Matching is exact and case-sensitive after trimming whitespace.
    """
    if value is None:
        return ExposureMode.UNKNOWN
    text = value.strip()
    if text in AUTO_MODE_VALUES:
        return ExposureMode.AUTO
    if text in MANUAL_MODE_VALUES:
        return ExposureMode.MANUAL
    return ExposureMode.UNKNOWN


def parse_capture_datetime(text: str) -> Optional[datetime]:
    cleaned = text.strip().strip("\x00").strip()
    for fmt in DATETIME_FORMATS:
        try:
            return datetime.strptime(cleaned, fmt)
        except ValueError:
            continue
    # Date-only fallbacks.
    for fmt in ("%Y:%m:%d", "%Y-%m-%d"):
        try:
            return datetime.strptime(cleaned, fmt)
        except ValueError:
            continue
    return None


class _TiffView:
    """Bounds-checked reader over a TIFF block inside a larger buffer."""

    def __init__(self, data: bytes, base: int):
        self.data = data
        self.base = base
        bom = self._raw(0, 2)
        if bom == b"II":
            self.fmt = "<"
        elif bom == b"MM":
            self.fmt = ">"
        else:
            raise MalformedExif("bad TIFF byte-order mark")
        if self.u16(2) != 42:
            raise MalformedExif("bad TIFF magic")

    def _raw(self, off: int, n: int) -> bytes:
        start = self.base + off
        if off < 0 or n < 0 or start + n > len(self.data):
            raise MalformedExif(f"offset {off}+{n} beyond buffer")
        return self.data[start : start + n]

    def u16(self, off: int) -> int:
        return struct.unpack(self.fmt + "H", self._raw(off, 2))[0]

    def u32(self, off: int) -> int:
        return struct.unpack(self.fmt + "I", self._raw(off, 4))[0]

    def byte_order(self) -> str:
        return "little" if self.fmt == "<" else "big"


def _ifd_entries(view: _TiffView, ifd_off: int):
    """Yield (tag, type, count, value_field_offset) for one IFD, in order."""
    count = view.u16(ifd_off)
    # Entries must physically fit; a count pointing past the buffer is damage.
    view._raw(ifd_off + 2, 12 * count)
    for i in range(count):
        entry = ifd_off + 2 + 12 * i
        tag = view.u16(entry)
        typ = view.u16(entry + 2)
        n = view.u32(entry + 4)
        yield tag, typ, n, entry + 8


def _value_offset(view: _TiffView, typ: int, count: int, field_off: int) -> int:
    size = TYPE_SIZES.get(typ)
    if size is None:
        raise MalformedExif(f"unsupported tag type {typ}")
    if count > 1 << 20:
        raise MalformedExif(f"implausible value count {count}")
    total = size * count
    if total <= 4:
        return field_off
    return view.u32(field_off)


def _read_short_or_long(view: _TiffView, typ: int, count: int, field_off: int) -> Optional[int]:
    if count < 1:
        return None
    off = _value_offset(view, typ, count, field_off)
    if typ == TYPE_SHORT:
        return view.u16(off)
    if typ in (TYPE_LONG, TYPE_SLONG):
        return view.u32(off)
    raise MalformedExif(f"expected integer tag type, got {typ}")


def _read_rational(view: _TiffView, typ: int, count: int, field_off: int) -> Optional[ExifRational]:
    if typ not in (TYPE_RATIONAL, TYPE_SRATIONAL):
        raise MalformedExif(f"expected rational tag type, got {typ}")
    if count < 1:
        return None
    off = _value_offset(view, typ, count, field_off)
    num = view.u32(off)
    den = view.u32(off + 4)
    if typ == TYPE_SRATIONAL:
        num = struct.unpack(view.fmt + "i", struct.pack(view.fmt + "I", num))[0]
        den = struct.unpack(view.fmt + "i", struct.pack(view.fmt + "I", den))[0]
    if den == 0:
        raise MalformedExif("zero denominator in rational tag")
    return ExifRational(num, den)


def _read_ascii(view: _TiffView, typ: int, count: int, field_off: int) -> Optional[str]:
    if typ not in (TYPE_ASCII, TYPE_UNDEFINED, TYPE_BYTE):
        raise MalformedExif(f"expected ASCII tag type, got {typ}")
    if count < 1:
        return None
    off = _value_offset(view, typ, count, field_off)
    raw = view._raw(off, count)
    return raw.split(b"\x00", 1)[0].decode("latin-1")


def _parse_tiff(data: bytes, base: int) -> ExifRecord:
    view = _TiffView(data, base)
    fields: dict[int, object] = {}
    exif_ifd_off = None

    def grab(tag: int, typ: int, count: int, field_off: int) -> None:
        # First occurrence wins, scan order IFD0 then the Exif sub-IFD.
        if tag in fields:
            return
        if tag in (TAG_MAKE, TAG_MODEL, TAG_DATETIME_ORIGINAL):
            fields[tag] = _read_ascii(view, typ, count, field_off)
        elif tag in (TAG_EXPOSURE_TIME, TAG_F_NUMBER):
            fields[tag] = _read_rational(view, typ, count, field_off)
        elif tag in (
            TAG_ISO_SPEED_RATINGS,
            TAG_PHOTOGRAPHIC_SENSITIVITY,
            TAG_EXPOSURE_PROGRAM,
        ):
            fields[tag] = _read_short_or_long(view, typ, count, field_off)

    ifd0 = view.u32(4)
    for tag, typ, count, field_off in _ifd_entries(view, ifd0):
        if tag == TAG_EXIF_IFD and typ in (TYPE_LONG, TYPE_SHORT):
            exif_ifd_off = _read_short_or_long(view, typ, count, field_off)
        else:
            grab(tag, typ, count, field_off)
    if exif_ifd_off is not None:
        for tag, typ, count, field_off in _ifd_entries(view, exif_ifd_off):
            grab(tag, typ, count, field_off)

    def positive_rational(tag: int) -> Optional[ExifRational]:
        value = fields.get(tag)
        if isinstance(value, ExifRational) and float(value) > 0:
            return value
        return None

    iso = fields.get(TAG_ISO_SPEED_RATINGS)
    if iso is None:
        iso = fields.get(TAG_PHOTOGRAPHIC_SENSITIVITY)
    if isinstance(iso, int) and iso <= 0:
        iso = None

    program_value = fields.get(TAG_EXPOSURE_PROGRAM)
    program = None
    if isinstance(program_value, int):
        program = EXPOSURE_PROGRAMS.get(program_value, f"Unknown ({program_value})")

    raw_dt = fields.get(TAG_DATETIME_ORIGINAL)
    capture_dt = parse_capture_datetime(raw_dt) if isinstance(raw_dt, str) else None

    return ExifRecord(
        has_exif=True,
        exposure_time=positive_rational(TAG_EXPOSURE_TIME),
        f_number=positive_rational(TAG_F_NUMBER),
        iso=iso,
        exposure_program=program,
        capture_datetime=capture_dt,
        make=fields.get(TAG_MAKE) or None,
        model=fields.get(TAG_MODEL) or None,
        byte_order=view.byte_order(),
    )


def _find_app1_exif(data: bytes) -> Optional[int]:
    """Offset of the TIFF block inside the first Exif APP1, or None."""
    off = 2
    n = len(data)
    while off + 4 <= n:
        if data[off] != 0xFF:
            raise MalformedExif(f"bad segment marker at {off}")
        marker = data[off + 1]
        if marker == 0xFF:
            off += 1
            continue
        if marker in (0xD8, 0x01) or 0xD0 <= marker <= 0xD7:
            off += 2
            continue
        if marker in (0xD9, 0xDA):
            return None
        length = struct.unpack(">H", data[off + 2 : off + 4])[0]
        if length < 2 or off + 2 + length > n:
            raise MalformedExif(f"segment at {off} overruns buffer")
        if marker == 0xE1 and data[off + 4 : off + 10] == EXIF_HEADER:
            return off + 10
        off += 2 + length
    return None


def parse_exif(data: bytes) -> ExifRecord:
    """Extract capture metadata from JPEG or TIFF bytes.

    Raises NotAnImage when the buffer is neither format. Any structural
    damage past that point returns has_exif=False with a diagnostic.
    """
    if data[:2] == JPEG_SOI:
        try:
            tiff_base = _find_app1_exif(data)
        except MalformedExif as exc:
            return ExifRecord(has_exif=False, diagnostic=str(exc))
        if tiff_base is None:
            return ExifRecord(has_exif=False)
        try:
            return _parse_tiff(data, tiff_base)
        except MalformedExif as exc:
            return ExifRecord(has_exif=False, diagnostic=str(exc))
    if data[:4] in (TIFF_LITTLE, TIFF_BIG):
        try:
            return _parse_tiff(data, 0)
        except MalformedExif as exc:
            return ExifRecord(has_exif=False, diagnostic=str(exc))
    raise NotAnImage("buffer is neither JPEG nor TIFF")


DT_WIRE_FORMAT = "%Y:%m:%d %H:%M:%S"


def record_to_json(record: ExifRecord, image_id: Optional[str] = None) -> dict:
    """JSON-ready dict with rationals rendered as "num/den"."""
    doc: dict = {}
    if image_id is not None:
        doc["image_id"] = image_id
    doc["has_exif"] = record.has_exif
    if record.exposure_time is not None:
        doc["exposure_time"] = str(record.exposure_time)
    if record.f_number is not None:
        doc["f_number"] = str(record.f_number)
    if record.iso is not None:
        doc["iso"] = record.iso
    if record.exposure_program is not None:
        doc["exposure_program"] = record.exposure_program
    if record.capture_datetime is not None:
        doc["datetime"] = record.capture_datetime.strftime(DT_WIRE_FORMAT)
    if record.make is not None:
        doc["make"] = record.make
    if record.model is not None:
        doc["model"] = record.model
    if record.byte_order is not None:
        doc["byte_order"] = record.byte_order
    if record.diagnostic is not None:
        doc["diagnostic"] = record.diagnostic
    return doc


def record_from_json(doc: dict) -> ExifRecord:
    def rational(key: str) -> Optional[ExifRational]:
        value = doc.get(key)
        return None if value is None else ExifRational.parse(value)

    dt = None
    if doc.get("datetime") is not None:
        dt = parse_capture_datetime(str(doc["datetime"]))
    iso = doc.get("iso")
    if iso is not None:
        iso = int(iso)
        if iso <= 0:
            iso = None
    record = ExifRecord(
        has_exif=bool(doc.get("has_exif", False)),
        exposure_time=rational("exposure_time"),
        f_number=rational("f_number"),
        iso=iso,
        exposure_program=doc.get("exposure_program"),
        capture_datetime=dt,
        make=doc.get("make"),
        model=doc.get("model"),
        byte_order=doc.get("byte_order"),
        diagnostic=doc.get("diagnostic"),
    )
    if not record.has_exif:
        record = replace(
            record,
            exposure_time=None,
            f_number=None,
            iso=None,
            exposure_program=None,
            capture_datetime=None,
            make=None,
            model=None,
            byte_order=None,
        )
    return record
