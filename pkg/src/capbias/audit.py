"""Corpus capture-bias audit: ingest, aggregate, merge, render.

The audit reduces a stream of per-image Exif records to histograms over
canonical setting stops, EV bins, capture years, and exposure modes.
Aggregation is a monoid: partial reports from any split of the stream
merge into the same totals, so workers can run independently.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from capbias.exif import ExifRecord, ExposureMode, classify_exposure_mode, parse_exif
from capbias.exposure import CameraSettings, compute_ev, quantize_ev
from capbias.fetch import fetch_remote
from capbias.scan import EmptySource, scan_corpus

OTHER_BUCKET = "other"

# Full-stop ladders for snapping raw tag values to nominal labels.
SHUTTER_STOPS: tuple[tuple[str, Fraction], ...] = tuple(
    (label, Fraction(label))
    for label in (
        "1/8000", "1/4000", "1/2000", "1/1000", "1/500", "1/250", "1/125",
        "1/60", "1/30", "1/15", "1/8", "1/4", "0.5", "1", "2", "4", "8",
        "15", "30", "60",
    )
)

FNUMBER_STOPS: tuple[tuple[str, Fraction], ...] = tuple(
    (label, Fraction(label))
    for label in ("1", "1.4", "2", "2.8", "4", "5.6", "8", "11", "16", "22", "32", "45", "64")
)

ISO_STOPS: tuple[tuple[str, Fraction], ...] = tuple(
    (str(v), Fraction(v))
    for v in (25, 50, 100, 200, 400, 800, 1600, 3200, 6400, 12800, 25600, 51200, 102400)
)


def snap_to_stop(value, stops: Sequence[tuple[str, Fraction]]) -> str:
    """Nearest nominal stop label, or "other" beyond half a stop."""
    try:
        v = float(value)
    except (TypeError, ValueError):
        return OTHER_BUCKET
    if v <= 0 or not math.isfinite(v):
        return OTHER_BUCKET
    lv = math.log2(v)
    best_label, best_dist = OTHER_BUCKET, math.inf
    for label, stop in stops:
        dist = abs(lv - math.log2(float(stop)))
        if dist < best_dist:
            best_label, best_dist = label, dist
    return best_label if best_dist <= 0.5 else OTHER_BUCKET


@dataclass(frozen=True)
class AuditRecord:
    """One corpus entry ready for aggregation."""

    dataset: str
    image_id: str
    exif: ExifRecord
    downloaded: bool = True

    @property
    def ev_bin(self) -> Optional[int]:
        if not self.exif.has_full_settings():
            return None
        settings = CameraSettings(
            self.exif.exposure_time.as_fraction(),
            self.exif.f_number.as_fraction(),
            self.exif.iso,
        )
        return quantize_ev(compute_ev(settings))

    @property
    def mode(self) -> ExposureMode:
        return classify_exposure_mode(self.exif.exposure_program)

    @property
    def year(self) -> Optional[int]:
        dt = self.exif.capture_datetime
        return dt.year if dt is not None else None


@dataclass
class AuditReport:
    """Mergeable audit totals and histograms."""

    datasets: tuple[str, ...] = ()
    total: int = 0
    downloaded: int = 0
    with_exif: int = 0
    shutter_hist: Counter = field(default_factory=Counter)
    fnumber_hist: Counter = field(default_factory=Counter)
    iso_hist: Counter = field(default_factory=Counter)
    ev_hist: Counter = field(default_factory=Counter)
    year_hist: Counter = field(default_factory=Counter)
    mode_hist: Counter = field(default_factory=Counter)

    def add(self, record: AuditRecord) -> None:
        if record.dataset not in self.datasets:
            self.datasets = tuple(sorted({*self.datasets, record.dataset}))
        self.total += 1
        if record.downloaded:
            self.downloaded += 1
        exif = record.exif
        if exif.has_full_settings():
            self.with_exif += 1
        if exif.exposure_time is not None:
            self.shutter_hist[snap_to_stop(float(exif.exposure_time), SHUTTER_STOPS)] += 1
        if exif.f_number is not None:
            self.fnumber_hist[snap_to_stop(float(exif.f_number), FNUMBER_STOPS)] += 1
        if exif.iso is not None:
            self.iso_hist[snap_to_stop(exif.iso, ISO_STOPS)] += 1
        ev_bin = record.ev_bin
        if ev_bin is not None:
            self.ev_hist[ev_bin] += 1
        year = record.year
        if year is not None:
            self.year_hist[year] += 1
        self.mode_hist[record.mode.value] += 1


def aggregate(records: Iterable[AuditRecord]) -> AuditReport:
    report = AuditReport()
    for record in records:
        report.add(record)
    return report


def merge(a: AuditReport, b: AuditReport) -> AuditReport:
    """Combine two partial reports; associative and commutative."""
    return AuditReport(
        datasets=tuple(sorted({*a.datasets, *b.datasets})),
        total=a.total + b.total,
        downloaded=a.downloaded + b.downloaded,
        with_exif=a.with_exif + b.with_exif,
        shutter_hist=a.shutter_hist + b.shutter_hist,
        fnumber_hist=a.fnumber_hist + b.fnumber_hist,
        iso_hist=a.iso_hist + b.iso_hist,
        ev_hist=a.ev_hist + b.ev_hist,
        year_hist=a.year_hist + b.year_hist,
        mode_hist=a.mode_hist + b.mode_hist,
    )


def aggregate_parallel(records: Sequence[AuditRecord], jobs: int) -> AuditReport:
    """Split the record list across workers and merge the partials."""
    if jobs <= 1 or len(records) < 2:
        return aggregate(records)
    jobs = min(jobs, len(records))
    chunk = (len(records) + jobs - 1) // jobs
    parts = [records[i : i + chunk] for i in range(0, len(records), chunk)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        partials = list(pool.map(aggregate, parts))
    report = partials[0]
    for partial in partials[1:]:
        report = merge(report, partial)
    return report


def normalized(hist: Mapping, population: Optional[int] = None) -> dict:
    """Histogram as fractions of its population, summing to 1."""
    total = population if population is not None else sum(hist.values())
    if total <= 0:
        return {k: 0.0 for k in hist}
    return {k: v / total for k, v in hist.items()}


# --- ingest -----------------------------------------------------------------


def load_descriptor(source) -> dict:
    if isinstance(source, (str, Path)):
        return json.loads(Path(source).read_text())
    return dict(source)


def _urls_from_source(src: Mapping, base: Optional[Path]) -> list[str]:
    if src.get("urls"):
        return [str(u) for u in src["urls"]]
    if src.get("path"):
        path = Path(str(src["path"]))
        if base is not None and not path.is_absolute():
            path = base / path
        urls = [line.strip() for line in path.read_text().splitlines() if line.strip()]
        if not urls:
            raise EmptySource(f"url list {path} is empty")
        return urls
    raise ValueError("fetch source needs 'urls' or 'path'")


def ingest(descriptor, jobs: int = 1, base_dir: Optional[Path] = None) -> Iterator[AuditRecord]:
    """Yield AuditRecords for a dataset descriptor.

    The descriptor names the dataset and a source: a directory scan, a
    JSONL manifest, or a URL list to fetch.
    """
    if isinstance(descriptor, (str, Path)):
        base_dir = Path(descriptor).parent
    doc = load_descriptor(descriptor)
    name = str(doc.get("name", "corpus"))
    src = doc.get("source") or {}
    kind = src.get("kind")
    if kind in ("scan", "manifest"):
        path = Path(str(src["path"]))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        for image_id, record in scan_corpus(path, jobs=jobs):
            yield AuditRecord(dataset=name, image_id=image_id, exif=record)
    elif kind == "fetch":
        urls = _urls_from_source(src, base_dir)
        results = fetch_remote(
            urls,
            rate_limit=float(src.get("rate_limit", 5.0)),
            prefix_bytes=src.get("prefix_bytes"),
            retries=int(src.get("retries", 2)),
        )
        for result in results:
            image_id = result.url.rstrip("/").rsplit("/", 1)[-1] or result.url
            if result.ok:
                try:
                    record = parse_exif(result.data)
                except Exception as exc:  # noqa: BLE001 - remote bytes are untrusted
                    record = ExifRecord(has_exif=False, diagnostic=str(exc))
                yield AuditRecord(dataset=name, image_id=image_id, exif=record)
            else:
                yield AuditRecord(
                    dataset=name,
                    image_id=image_id,
                    exif=ExifRecord(has_exif=False, diagnostic=result.error),
                    downloaded=False,
                )
    else:
        raise ValueError(f"unknown source kind: {kind!r}")


# --- rendering ---------------------------------------------------------------


def _stop_order(hist: Counter, stops: Sequence[tuple[str, Fraction]]) -> list:
    order = [label for label, _ in stops if label in hist]
    if OTHER_BUCKET in hist:
        order.append(OTHER_BUCKET)
    return order


def _hist_rows(hist: Counter, keys: Sequence) -> list[list]:
    fractions = normalized(hist)
    return [[k, hist[k], fractions[k]] for k in keys]


def report_to_json(report: AuditReport) -> dict:
    def pct(n: int) -> float:
        return 100.0 * n / report.total if report.total else 0.0

    mode_keys = [m.value for m in ExposureMode if m.value in report.mode_hist]
    return {
        "datasets": list(report.datasets),
        "total": report.total,
        "downloaded": report.downloaded,
        "downloaded_pct": pct(report.downloaded),
        "with_exif": report.with_exif,
        "with_exif_pct": pct(report.with_exif),
        "histograms": {
            "shutter": _hist_rows(report.shutter_hist, _stop_order(report.shutter_hist, SHUTTER_STOPS)),
            "fnumber": _hist_rows(report.fnumber_hist, _stop_order(report.fnumber_hist, FNUMBER_STOPS)),
            "iso": _hist_rows(report.iso_hist, _stop_order(report.iso_hist, ISO_STOPS)),
            "ev": _hist_rows(report.ev_hist, sorted(report.ev_hist)),
            "year": _hist_rows(report.year_hist, sorted(report.year_hist)),
            "mode": _hist_rows(report.mode_hist, mode_keys),
        },
    }


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def render_report(
    report: AuditReport,
    outdir: str | Path,
    formats: Sequence[str] = ("json", "csv", "svg"),
) -> list[Path]:
    """Write report.json plus per-histogram CSVs and SVG charts.

    Output bytes depend only on the report contents.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report_to_json(report)
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(path)
    if "csv" in formats:
        hists = doc["histograms"]
        for name, fname in (
            ("shutter", "hist_shutter.csv"),
            ("fnumber", "hist_fnumber.csv"),
            ("iso", "hist_iso.csv"),
        ):
            path = out / fname
            _write_csv(path, ["value", "count", "fraction"], hists[name])
            written.append(path)
        _write_csv(out / "ev_hist.csv", ["ev_bin", "count", "fraction"], hists["ev"])
        _write_csv(out / "years.csv", ["year", "count", "fraction"], hists["year"])
        _write_csv(out / "modes.csv", ["mode", "count", "fraction"], hists["mode"])
        written += [out / "ev_hist.csv", out / "years.csv", out / "modes.csv"]
    if "svg" in formats:
        from capbias import charts

        written += charts.audit_charts(report, out)
    return written
