"""Author small JPEG fixtures carrying a chosen set of Exif tags.

The emitted files are real, decodable JPEGs (a canned 1x1 gray body) with
an APP1 Exif segment inserted after SOI, so third-party readers can serve
as cross-checks on the parser.
"""

from __future__ import annotations

import struct
from typing import Optional

from capbias.exif import (
    DT_WIRE_FORMAT,
    EXIF_HEADER,
    EXPOSURE_PROGRAMS,
    JPEG_SOI,
    TAG_DATETIME_ORIGINAL,
    TAG_EXIF_IFD,
    TAG_EXPOSURE_PROGRAM,
    TAG_EXPOSURE_TIME,
    TAG_F_NUMBER,
    TAG_ISO_SPEED_RATINGS,
    TAG_MAKE,
    TAG_MODEL,
    TYPE_ASCII,
    TYPE_LONG,
    TYPE_RATIONAL,
    TYPE_SHORT,
    ExifRecord,
)

PROGRAM_CODES = {text: code for code, text in EXPOSURE_PROGRAMS.items()}

U32_MAX = 0xFFFFFFFF
U16_MAX = 0xFFFF

# Baseline 1x1 gray JPEG, everything after the SOI marker.
_JPEG_BODY = bytes.fromhex(
    "ffe000104a46494600010100000100010000ffdb004300100b0c0e0c0a100e0d0e1211101318281a181616183123251d"
    "283a333d3c3933383740485c4e404457453738506d51575f626768673e4d71797064785c656763ffc0000b0800010001"
    "01011100ffc4001f0000010501010101010100000000000000000102030405060708090a0bffc400b510000201030302"
    "0403050504040000017d01020300041105122131410613516107227114328191a1082342b1c11552d1f0243362728209"
    "0a161718191a25262728292a3435363738393a434445464748494a535455565758595a636465666768696a7374757677"
    "78797a838485868788898a92939495969798999aa2a3a4a5a6a7a8a9aab2b3b4b5b6b7b8b9bac2c3c4c5c6c7c8c9cad2"
    "d3d4d5d6d7d8d9dae1e2e3e4e5e6e7e8e9eaf1f2f3f4f5f6f7f8f9faffda0008010100003f002bffd9"
)


class UnencodableField(ValueError):
    """A record field does not fit the Exif tag encoding."""


class _Entry:
    __slots__ = ("tag", "typ", "count", "payload")

    def __init__(self, tag: int, typ: int, count: int, payload: bytes):
        self.tag = tag
        self.typ = typ
        self.count = count
        self.payload = payload


def _ascii_entry(tag: int, text: str) -> _Entry:
    try:
        raw = text.encode("ascii") + b"\x00"
    except UnicodeEncodeError as exc:
        raise UnencodableField(f"tag {tag:#06x}: non-ASCII text") from exc
    return _Entry(tag, TYPE_ASCII, len(raw), raw)


def _short_entry(tag: int, value: int) -> _Entry:
    if not 0 <= value <= U16_MAX:
        raise UnencodableField(f"tag {tag:#06x}: {value} does not fit SHORT")
    return _Entry(tag, TYPE_SHORT, 1, struct.pack("=H", value))


def _rational_entry(tag: int, numerator: int, denominator: int) -> _Entry:
    for part in (numerator, denominator):
        if not 0 <= part <= U32_MAX:
            raise UnencodableField(
                f"tag {tag:#06x}: {numerator}/{denominator} overflows RATIONAL"
            )
    return _Entry(tag, TYPE_RATIONAL, 1, struct.pack("=II", numerator, denominator))


def _pack_entry(fmt: str, entry: _Entry, value_field: bytes) -> bytes:
    return struct.pack(fmt + "HHI", entry.tag, entry.typ, entry.count) + value_field


def _layout_ifd(fmt: str, entries: list[_Entry], ifd_off: int, extra_field: Optional[tuple[int, int]]) -> tuple[bytes, int]:
    """Serialize one IFD plus its out-of-line values.

    extra_field appends a (tag, LONG value) entry, used for the Exif
    sub-IFD pointer. Returns (bytes, next free offset).
    """
    n = len(entries) + (1 if extra_field else 0)
    data_off = ifd_off + 2 + 12 * n + 4
    body = b""
    values = b""
    ordered = list(entries)
    if extra_field:
        ordered.append(_Entry(extra_field[0], TYPE_LONG, 1, struct.pack(fmt + "I", extra_field[1])))
    ordered.sort(key=lambda e: e.tag)
    for entry in ordered:
        payload = entry.payload
        if entry.typ == TYPE_SHORT:
            payload = struct.pack(fmt + "H", struct.unpack("=H", payload)[0])
        elif entry.typ == TYPE_RATIONAL:
            payload = struct.pack(fmt + "II", *struct.unpack("=II", payload))
        if len(payload) <= 4:
            field = payload + b"\x00" * (4 - len(payload))
        else:
            field = struct.pack(fmt + "I", data_off + len(values))
            values += payload
        body += _pack_entry(fmt, entry, field)
    block = struct.pack(fmt + "H", n) + body + struct.pack(fmt + "I", 0) + values
    return block, data_off + len(values)


def build_tiff(record: ExifRecord, byte_order: str) -> bytes:
    """TIFF block holding the record's present fields."""
    if byte_order == "little":
        fmt, bom = "<", b"II"
    elif byte_order == "big":
        fmt, bom = ">", b"MM"
    else:
        raise ValueError(f"byte_order must be little or big, got {byte_order!r}")

    ifd0_entries: list[_Entry] = []
    if record.make is not None:
        ifd0_entries.append(_ascii_entry(TAG_MAKE, record.make))
    if record.model is not None:
        ifd0_entries.append(_ascii_entry(TAG_MODEL, record.model))

    exif_entries: list[_Entry] = []
    if record.exposure_time is not None:
        exif_entries.append(
            _rational_entry(
                TAG_EXPOSURE_TIME,
                record.exposure_time.numerator,
                record.exposure_time.denominator,
            )
        )
    if record.f_number is not None:
        exif_entries.append(
            _rational_entry(
                TAG_F_NUMBER, record.f_number.numerator, record.f_number.denominator
            )
        )
    if record.exposure_program is not None:
        code = PROGRAM_CODES.get(record.exposure_program)
        if code is None:
            raise UnencodableField(
                f"exposure program {record.exposure_program!r} has no numeric code"
            )
        exif_entries.append(_short_entry(TAG_EXPOSURE_PROGRAM, code))
    if record.iso is not None:
        exif_entries.append(_short_entry(TAG_ISO_SPEED_RATINGS, record.iso))
    if record.capture_datetime is not None:
        exif_entries.append(
            _ascii_entry(
                TAG_DATETIME_ORIGINAL, record.capture_datetime.strftime(DT_WIRE_FORMAT)
            )
        )

    header = bom + struct.pack(fmt + "HI", 42, 8)
    if exif_entries:
        # Two passes: sub-IFD offset depends on IFD0's total size.
        _, exif_off = _layout_ifd(fmt, ifd0_entries, 8, (TAG_EXIF_IFD, 0))
        ifd0_block, exif_off_check = _layout_ifd(fmt, ifd0_entries, 8, (TAG_EXIF_IFD, exif_off))
        assert exif_off_check == exif_off
        exif_block, _ = _layout_ifd(fmt, exif_entries, exif_off, None)
        return header + ifd0_block + exif_block
    ifd0_block, _ = _layout_ifd(fmt, ifd0_entries, 8, None)
    return header + ifd0_block


def emit_exif(record: ExifRecord, byte_order: Optional[str] = None) -> bytes:
    """Minimal valid JPEG whose APP1 carries the record's fields.

    byte_order defaults to the record's own, falling back to little.
    """
    order = byte_order or record.byte_order or "little"
    tiff = build_tiff(record, order)
    app1_payload = EXIF_HEADER + tiff
    if len(app1_payload) + 2 > U16_MAX:
        raise UnencodableField("Exif payload exceeds APP1 segment capacity")
    app1 = b"\xff\xe1" + struct.pack(">H", len(app1_payload) + 2) + app1_payload
    return JPEG_SOI + app1 + _JPEG_BODY
