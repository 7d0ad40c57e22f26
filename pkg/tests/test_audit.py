import gzip
import json
import threading
import time
from datetime import datetime
from fractions import Fraction
from functools import partial
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from capbias.audit import (
    FNUMBER_STOPS,
    ISO_STOPS,
    SHUTTER_STOPS,
    AuditRecord,
    AuditReport,
    aggregate,
    aggregate_parallel,
    ingest,
    merge,
    normalized,
    render_report,
    report_to_json,
    snap_to_stop,
)
from capbias.exif import ExifRational, ExifRecord, ExposureMode
from capbias.exif_writer import emit_exif
from capbias.fetch import FetchResult, TooManyFailures, fetch_remote
from capbias.scan import EmptySource, record_from_manifest_row, scan_corpus


def make_record(shutter="1/125", fnum="28/5", iso=200, program="Normal program", year=2020):
    return ExifRecord(
        has_exif=True,
        exposure_time=ExifRational.parse(shutter) if shutter else None,
        f_number=ExifRational.parse(fnum) if fnum else None,
        iso=iso,
        exposure_program=program,
        capture_datetime=datetime(year, 6, 1, 12, 0, 0) if year else None,
        byte_order="little",
    )


def audit_record(i=0, **kwargs):
    return AuditRecord(dataset="t", image_id=f"img{i}", exif=make_record(**kwargs))


class TestSnap:
    @pytest.mark.parametrize(
        "value,expected",
        [("1/125", "1/125"), (1 / 125, "1/125"), (1 / 100, "1/125"), (0.5, "0.5"),
         (30, "30"), (1 / 9000, "1/8000"), (500, "other")],
    )
    def test_shutter(self, value, expected):
        v = float(Fraction(value)) if isinstance(value, str) else value
        assert snap_to_stop(v, SHUTTER_STOPS) == expected

    @pytest.mark.parametrize(
        "value,expected",
        [(5.6, "5.6"), (5.0, "5.6"), (1.8, "2"), (22, "22"), (0.4, "other"), (0, "other"), (-1, "other")],
    )
    def test_fnumber(self, value, expected):
        assert snap_to_stop(value, FNUMBER_STOPS) == expected

    @pytest.mark.parametrize(
        "value,expected",
        [(100, "100"), (160, "200"), (6400, "6400"), (102400, "102400"), (4, "other")],
    )
    def test_iso(self, value, expected):
        assert snap_to_stop(value, ISO_STOPS) == expected


class TestAggregate:
    def test_counts_and_histograms(self):
        records = [
            audit_record(0),
            audit_record(1, program="Manual"),
            audit_record(2, shutter=None, fnum=None, iso=None, program=None, year=None),
        ]
        report = aggregate(records)
        assert report.total == 3
        assert report.downloaded == 3
        assert report.with_exif == 2
        assert report.shutter_hist["1/125"] == 2
        assert report.mode_hist == {"Auto": 1, "Manual": 1, "Unknown": 1}
        assert report.year_hist == {2020: 2}
        # 1/125, f/5.6, ISO 200: EV = log2(31.36 * 125) - 1 = 10.94 -> 11
        assert report.ev_hist == {11: 2}

    def test_percentages(self):
        records = [audit_record(i) for i in range(3)] + [
            audit_record(i + 3, shutter=None, fnum=None, iso=None) for i in range(7)
        ]
        doc = report_to_json(aggregate(records))
        assert doc["total"] == 10
        assert doc["with_exif"] == 3
        assert doc["with_exif_pct"] == 30.0

    def test_normalized_sums_to_one(self):
        report = aggregate([audit_record(i, iso=iso) for i, iso in enumerate([100, 100, 200, 3200, 7])])
        fractions = normalized(report.iso_hist)
        assert sum(fractions.values()) == pytest.approx(1.0, abs=1e-9)
        assert fractions["100"] == pytest.approx(0.4)
        assert fractions["other"] == pytest.approx(0.2)

    def test_ev_requires_all_three_settings(self):
        report = aggregate([audit_record(0, iso=None)])
        assert report.ev_hist == {}
        assert report.with_exif == 0


class TestMerge:
    def records(self):
        return [
            audit_record(i, iso=iso, program=p, year=y)
            for i, (iso, p, y) in enumerate(
                [(100, "Manual", 2019), (200, "Auto", 2020), (400, None, 2021),
                 (800, "Landscape", 2020), (1600, "Manual exposure", None)]
            )
        ]

    def test_merge_equals_single_pass(self):
        records = self.records()
        whole = aggregate(records)
        for split in range(len(records) + 1):
            left = aggregate(records[:split])
            right = aggregate(records[split:])
            assert merge(left, right) == whole

    def test_merge_commutes(self):
        records = self.records()
        a, b = aggregate(records[:2]), aggregate(records[2:])
        assert merge(a, b) == merge(b, a)

    def test_merge_associative(self):
        records = self.records()
        a, b, c = (aggregate(records[i::3]) for i in range(3))
        assert merge(merge(a, b), c) == merge(a, merge(b, c))

    def test_identity(self):
        whole = aggregate(self.records())
        assert merge(whole, AuditReport()) == whole

    def test_parallel_aggregate_matches(self):
        records = self.records() * 7
        assert aggregate_parallel(records, jobs=4) == aggregate(records)

    def test_merged_render_is_byte_identical(self, tmp_path):
        records = self.records()
        whole = aggregate(records)
        parts = merge(aggregate(records[:2]), aggregate(records[2:]))
        render_report(whole, tmp_path / "a", formats=("json",))
        render_report(parts, tmp_path / "b", formats=("json",))
        a = (tmp_path / "a" / "report.json").read_bytes()
        b = (tmp_path / "b" / "report.json").read_bytes()
        assert a == b


class TestRender:
    def test_outputs(self, tmp_path):
        report = aggregate([audit_record(i) for i in range(4)])
        written = render_report(report, tmp_path)
        names = {p.name for p in written}
        assert "report.json" in names
        assert {"hist_shutter.csv", "hist_fnumber.csv", "hist_iso.csv",
                "ev_hist.csv", "years.csv", "modes.csv"} <= names
        assert any(n.endswith(".svg") for n in names)
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["histograms"]["shutter"] == [["1/125", 4, 1.0]]

    def test_render_deterministic_including_svg(self, tmp_path):
        report = aggregate([audit_record(i, iso=100 * (1 + i % 3)) for i in range(6)])
        render_report(report, tmp_path / "x")
        render_report(report, tmp_path / "y")
        for name in ("report.json", "ev_hist.csv", "hist_iso.svg"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


class TestManifestRows:
    def test_passthrough_row(self):
        rec = record_from_manifest_row(
            {"exposure_time": "1/250", "f_number": 2.8, "iso": 400,
             "exposure_program": "Manual", "datetime": "2019:01/02"}
        )
        assert rec.has_exif
        assert rec.exposure_time == ExifRational(1, 250)
        assert rec.f_number == ExifRational(14, 5)
        assert rec.capture_datetime is None  # unparseable date stays absent

    def test_numeric_program_code(self):
        rec = record_from_manifest_row({"exposure_program": 3})
        assert rec.exposure_program == "Aperture-priority AE"

    def test_zero_iso_absent(self):
        rec = record_from_manifest_row({"iso": 0, "exposure_time": "1/30"})
        assert rec.iso is None

    def test_invalid_rational_absent(self):
        rec = record_from_manifest_row({"exposure_time": "1/0", "iso": 100})
        assert rec.exposure_time is None


class TestScan:
    def test_directory_scan(self, tmp_path):
        (tmp_path / "sub").mkdir()
        (tmp_path / "a.jpg").write_bytes(emit_exif(make_record()))
        (tmp_path / "sub" / "b.jpg").write_bytes(emit_exif(make_record(iso=400)))
        (tmp_path / "c.jpg").write_bytes(b"\xff\xd8garbage")
        (tmp_path / "notes.txt").write_text("not an image")
        results = dict(scan_corpus(tmp_path))
        assert set(results) == {"a.jpg", "sub/b.jpg", "c.jpg"}
        assert results["a.jpg"].iso == 200
        assert results["c.jpg"].has_exif is False

    def test_not_an_image_yields_diagnostic_record(self, tmp_path):
        (tmp_path / "fake.jpg").write_bytes(b"PNG?")
        (tmp_path / "real.jpg").write_bytes(emit_exif(make_record()))
        results = dict(scan_corpus(tmp_path))
        assert results["fake.jpg"].has_exif is False
        assert "not an image" in results["fake.jpg"].diagnostic

    def test_empty_directory_raises(self, tmp_path):
        with pytest.raises(EmptySource):
            list(scan_corpus(tmp_path))

    def test_parallel_scan_matches_serial(self, tmp_path):
        for i in range(9):
            (tmp_path / f"{i}.jpg").write_bytes(emit_exif(make_record(iso=100 + i)))
        serial = list(scan_corpus(tmp_path, jobs=1))
        threaded = list(scan_corpus(tmp_path, jobs=4))
        assert serial == threaded

    def test_manifest_scan(self, tmp_path):
        (tmp_path / "img.jpg").write_bytes(emit_exif(make_record(iso=1600)))
        manifest = tmp_path / "m.jsonl"
        rows = [
            {"image_id": "x1", "exposure_time": "1/60", "f_number": "4", "iso": 100},
            {"image_id": "x2", "path": "img.jpg"},
            {"url": "http://example.net/y.jpg"},
        ]
        manifest.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        results = dict(scan_corpus(manifest))
        assert results["x1"].iso == 100
        assert results["x2"].iso == 1600
        assert results["y.jpg"].has_exif is False

    def test_empty_manifest_raises(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("\n")
        with pytest.raises(EmptySource):
            list(scan_corpus(manifest))


class _Handler(BaseHTTPRequestHandler):
    store: dict = {}
    fail_first: dict = {}

    def log_message(self, *args):
        pass

    def do_GET(self):
        key = self.path.lstrip("/")
        if self.fail_first.get(key, 0) > 0:
            self.fail_first[key] -= 1
            self.send_response(503)
            self.end_headers()
            return
        if key not in self.store:
            self.send_response(404)
            self.end_headers()
            return
        body = self.store[key]
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture()
def http_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Handler.store = {}
    _Handler.fail_first = {}
    yield server, f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestFetch:
    def test_fetch_ok_and_404(self, http_server):
        server, base = http_server
        _Handler.store["good.jpg"] = emit_exif(make_record())
        results = list(
            fetch_remote([f"{base}/good.jpg", f"{base}/missing.jpg"], rate_limit=100)
        )
        assert results[0].ok and results[0].status == 200
        assert not results[1].ok and results[1].status == 404

    def test_prefix_bytes_limits_download(self, http_server):
        server, base = http_server
        _Handler.store["big.jpg"] = emit_exif(make_record()) + b"\x00" * 200_000
        (result,) = fetch_remote([f"{base}/big.jpg"], rate_limit=100, prefix_bytes=65536)
        assert result.ok
        assert len(result.data) <= 65536
        # The Exif lives in the prefix, so parsing still works.
        from capbias.exif import parse_exif

        assert parse_exif(result.data).iso == 200

    def test_retry_on_transient_error(self, http_server):
        server, base = http_server
        _Handler.store["flaky.jpg"] = b"\xff\xd8\xff\xd9"
        _Handler.fail_first["flaky.jpg"] = 1
        (result,) = fetch_remote([f"{base}/flaky.jpg"], rate_limit=100, retries=2)
        assert result.ok
        assert result.attempts == 2

    def test_rate_limit_paces_requests(self, http_server):
        server, base = http_server
        for i in range(10):
            _Handler.store[f"f{i}"] = b"x"
        start = time.monotonic()
        list(fetch_remote([f"{base}/f{i}" for i in range(10)], rate_limit=5))
        elapsed = time.monotonic() - start
        assert elapsed >= 1.8

    def test_too_many_failures_aborts(self, http_server):
        server, base = http_server
        urls = [f"{base}/nope{i}" for i in range(10)]
        with pytest.raises(TooManyFailures):
            list(fetch_remote(urls, rate_limit=1000, retries=0, min_checked=4))

    def test_connection_error_counts_as_failure(self):
        results = list(
            fetch_remote(["http://127.0.0.1:9/dead.jpg"], rate_limit=1000, retries=0,
                         timeout=0.5, min_checked=8)
        )
        assert not results[0].ok
        assert results[0].error


class TestIngest:
    def test_scan_descriptor(self, tmp_path):
        (tmp_path / "corpus").mkdir()
        (tmp_path / "corpus" / "a.jpg").write_bytes(emit_exif(make_record()))
        descriptor = {"name": "mini", "source": {"kind": "scan", "path": str(tmp_path / "corpus")}}
        records = list(ingest(descriptor))
        assert len(records) == 1
        assert records[0].dataset == "mini"
        assert records[0].ev_bin == 11

    def test_descriptor_file_with_relative_path(self, tmp_path):
        (tmp_path / "corpus").mkdir()
        (tmp_path / "corpus" / "a.jpg").write_bytes(emit_exif(make_record()))
        desc_path = tmp_path / "ds.json"
        desc_path.write_text(json.dumps({"name": "rel", "source": {"kind": "scan", "path": "corpus"}}))
        records = list(ingest(desc_path))
        assert records[0].image_id == "a.jpg"

    def test_fetch_descriptor_counts_dead_link(self, http_server, tmp_path):
        server, base = http_server
        _Handler.store["a.jpg"] = emit_exif(make_record())
        _Handler.store["b.jpg"] = emit_exif(make_record(iso=400))
        descriptor = {
            "name": "remote",
            "source": {
                "kind": "fetch",
                "urls": [f"{base}/a.jpg", f"{base}/b.jpg", f"{base}/dead.jpg"],
                "rate_limit": 200,
                "retries": 0,
            },
        }
        report = aggregate(ingest(descriptor))
        assert report.total == 3
        assert report.downloaded == 2
        assert report.with_exif == 2

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            list(ingest({"name": "x", "source": {"kind": "rsync"}}))


class TestModeFractions:
    def test_72_26_2_split(self):
        records = []
        i = 0
        for _ in range(72):
            records.append(audit_record(i, program="Auto exposure")); i += 1
        for _ in range(26):
            records.append(audit_record(i, program="Manual")); i += 1
        for _ in range(2):
            records.append(audit_record(i, program="Bulb")); i += 1
        report = aggregate(records)
        fractions = normalized(report.mode_hist, population=report.total)
        assert fractions["Auto"] == 0.72
        assert fractions["Manual"] == 0.26
        assert fractions["Unknown"] == 0.02
        assert report.mode_hist[ExposureMode.AUTO.value] == 72
