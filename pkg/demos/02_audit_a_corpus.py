"""
Auditing capture settings in an image corpus
============================================

Fabricate a small JPEG corpus with a deliberately skewed settings
distribution, then scan it and aggregate the capture statistics the
same way the `capbias audit` subcommand does.
"""

import random
import tempfile
from datetime import datetime
from pathlib import Path

from capbias.audit import aggregate, ingest, merge, normalized, render_report
from capbias.exif import ExifRational, ExifRecord
from capbias.exif_writer import emit_exif

rng = random.Random(7)
root = Path(tempfile.mkdtemp(prefix="capbias_demo_"))

# Mostly auto-exposed daylight shots, a manual minority, a couple of
# odd frames with no metadata at all. This mirrors the long-tail shape
# audits keep finding in web-scraped corpora.
population = (
    [("Normal program", "1/125", 100)] * 60
    + [("Normal program", "1/250", 200)] * 20
    + [("Manual", "1/15", 1600)] * 15
)
for index, (program, shutter, iso) in enumerate(population):
    record = ExifRecord(
        has_exif=True,
        exposure_time=ExifRational.parse(shutter),
        f_number=ExifRational(4, 1),
        iso=iso,
        exposure_program=program,
        capture_datetime=datetime(2019 + index % 4, 6, 1, 12, 0, 0),
        byte_order="little",
    )
    (root / f"img_{index:03d}.jpg").write_bytes(emit_exif(record))
(root / "img_095.jpg").write_bytes(b"\xff\xd8\xff\xdbno metadata here")
(root / "img_096.jpg").write_bytes(b"\xff\xd8\xff\xdbnor here")

records = list(ingest({"name": "demo", "source": {"kind": "scan", "path": str(root)}}))
report = aggregate(records)

print(f"scanned {report.total} files, {report.downloaded} readable")
print()
print("exposure mode fractions:")
for mode, fraction in sorted(normalized(report.mode_hist, population=report.total).items()):
    print(f"  {mode:<10} {fraction:6.1%}")

print()
print("top shutter stops:")
for stop, count in sorted(report.shutter_hist.items(), key=lambda kv: -kv[1])[:4]:
    print(f"  {stop:>6}  x{count}")

# Aggregation is mergeable: shard the corpus, aggregate the shards,
# merge, and the totals match a single pass exactly.
halves = merge(aggregate(records[:40]), aggregate(records[40:]))
print()
print("merge(shards) == single pass:", halves == report)

outdir = root / "report"
written = render_report(report, outdir)
print(f"wrote {len(written)} report files under {outdir}")
