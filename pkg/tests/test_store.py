import json
import math
import os

import numpy as np
import pytest

from recitygen.ids import CROCKFORD, IdGenerator
from recitygen.images import BadImage, ImageTooLarge
from recitygen.store import (
    CorruptLog,
    EARTH_RADIUS_M,
    GeneratedVariant,
    GeoPoint,
    InvalidBox,
    InvalidField,
    IoError,
    QuestionnaireResponse,
    Rating,
    ScoreOutOfRange,
    Store,
    UnknownReference,
    haversine_m,
)

from conftest import uniform_png


def oracle_haversine(lat1, lon1, lat2, lon2):
    """Independent spherical-law-of-cosines distance for cross-checking."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    cos_angle = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return EARTH_RADIUS_M * math.acos(max(-1.0, min(1.0, cos_angle)))


def make_entry(store, lat=39.95, lon=116.34, note=None, png=None):
    return store.create_entry(GeoPoint(lat, lon), png or uniform_png(), note=note)


def make_variant(store, entry, seed=7):
    ref = store.put_blob(uniform_png(4, 4, (9, 9, 9)))
    variant = GeneratedVariant(
        variant_id=store.new_id(),
        job_id=store.new_id(),
        entry_id=entry.id,
        image_ref=ref,
        prompt="greener",
        seed=seed,
        backend_id="mock",
        created_at=123,
    )
    return store.save_variant(variant)


def questionnaire(entry_id, **overrides):
    fields = dict(entry_id=entry_id, q1=5, q2=4, q3=5, q4=3, q5=4, q6=2, q7=5)
    fields.update(overrides)
    return QuestionnaireResponse(**fields)


class TestIds:
    def test_length_and_alphabet(self):
        gen = IdGenerator()
        for _ in range(100):
            new = gen.new()
            assert len(new) == 26
            assert all(c in CROCKFORD for c in new)

    def test_unique_and_sorted_100k(self):
        gen = IdGenerator()
        ids = [gen.new() for _ in range(100_000)]
        assert len(set(ids)) == len(ids)
        assert ids == sorted(ids)

    def test_monotonic_under_clock_rewind(self):
        gen = IdGenerator()
        first = gen.new(ts_ms=2_000_000)
        second = gen.new(ts_ms=1_000_000)  # clock went backwards
        assert second > first


class TestGeoPoint:
    def test_valid(self):
        GeoPoint(39.95, 116.34)
        GeoPoint(-90, -180)
        GeoPoint(90, 180)

    @pytest.mark.parametrize("lat,lon", [(91, 0), (-91, 0), (0, 181), (0, -181)])
    def test_out_of_range(self, lat, lon):
        with pytest.raises(Exception) as err:
            GeoPoint(lat, lon)
        assert "InvalidGeo" in type(err.value).__name__

    def test_non_finite(self):
        with pytest.raises(Exception):
            GeoPoint(float("nan"), 0)
        with pytest.raises(Exception):
            GeoPoint(0, float("inf"))


class TestEntries:
    def test_create_assigns_26_char_id(self, tmp_path):
        with Store(tmp_path) as store:
            entry = make_entry(store)
            assert len(entry.id) == 26
            assert store.get_entry(entry.id) == entry

    def test_bad_image(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(BadImage):
                store.create_entry(GeoPoint(0, 0), b"definitely not a png")

    def test_oversized_image(self, tmp_path):
        import io
        from PIL import Image

        buf = io.BytesIO()
        Image.new("RGB", (8193, 1)).save(buf, "PNG")
        with Store(tmp_path) as store:
            with pytest.raises(ImageTooLarge):
                store.create_entry(GeoPoint(0, 0), buf.getvalue())

    def test_note_too_long(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(InvalidField):
                make_entry(store, note="x" * 1001)

    def test_same_image_shares_blob(self, tmp_path):
        png = uniform_png()
        with Store(tmp_path) as store:
            a = store.create_entry(GeoPoint(1, 1), png)
            b = store.create_entry(GeoPoint(2, 2), png)
            assert a.id != b.id
            assert a.image_ref == b.image_ref
            blob_files = list((tmp_path / "blobs").glob("*.png"))
            assert len(blob_files) == 1
            assert store.get_blob(a.image_ref) == png

    def test_blob_name_is_sha256(self, tmp_path):
        import hashlib

        png = uniform_png()
        with Store(tmp_path) as store:
            entry = store.create_entry(GeoPoint(0, 0), png)
            assert entry.image_ref == hashlib.sha256(png).hexdigest()


class TestReplay:
    def test_reopen_preserves_queries(self, tmp_path):
        with Store(tmp_path) as store:
            for i in range(100):
                make_entry(store, lat=i * 0.5 - 20, lon=i * 0.7 - 30)
            before = [(e.id, e.geo.lat, e.geo.lon) for e in store.query_bbox(-90, -180, 90, 180)]
            stats_before = store.aggregate_stats()
        with Store(tmp_path) as store:
            after = [(e.id, e.geo.lat, e.geo.lon) for e in store.query_bbox(-90, -180, 90, 180)]
            assert after == before
            assert store.aggregate_stats() == stats_before

    def test_corrupt_middle_line_is_hard_error(self, tmp_path):
        with Store(tmp_path) as store:
            make_entry(store)
            make_entry(store)
        log = tmp_path / "events.jsonl"
        lines = log.read_bytes().splitlines(keepends=True)
        lines.insert(1, b"{garbage!!!\n")
        log.write_bytes(b"".join(lines))
        with pytest.raises(CorruptLog) as err:
            Store(tmp_path)
        assert err.value.line_number == 2

    def test_trailing_partial_line_truncated(self, tmp_path, caplog):
        with Store(tmp_path) as store:
            make_entry(store)
            make_entry(store)
            count_before = store.event_count()
        log = tmp_path / "events.jsonl"
        original = log.read_bytes()
        log.write_bytes(original + b'{"type":"entry","payload":{"id"')  # torn write
        with Store(tmp_path) as store:
            assert store.event_count() == count_before
            make_entry(store)  # appends cleanly after repair
        with Store(tmp_path) as store:
            assert store.event_count() == count_before + 1

    def test_dangling_reference_is_corrupt(self, tmp_path):
        with Store(tmp_path) as store:
            make_entry(store)
        log = tmp_path / "events.jsonl"
        bogus = {
            "type": "rating",
            "payload": {"variant_id": "NOPE", "score": 5, "created_at": 1},
            "ts": 1,
        }
        with open(log, "ab") as fh:
            fh.write((json.dumps(bogus) + "\n").encode())
            fh.write(b'{"type":"entry"}\n')  # keep the bad line non-final
        with pytest.raises(CorruptLog):
            Store(tmp_path)

    def test_read_only_missing_dir(self, tmp_path):
        with pytest.raises(IoError):
            Store(tmp_path / "nope", read_only=True)

    def test_read_only_rejects_writes(self, tmp_path):
        with Store(tmp_path) as store:
            make_entry(store)
        with Store(tmp_path, read_only=True) as store:
            with pytest.raises(IoError):
                make_entry(store)


class TestGeoQueries:
    def test_bbox_inclusive_bounds(self, tmp_path):
        with Store(tmp_path) as store:
            entry = make_entry(store, lat=10.0, lon=20.0)
            assert store.query_bbox(10.0, 20.0, 10.0, 20.0) == [entry]
            assert store.query_bbox(10.1, 20.1, 11, 21) == []

    def test_bbox_all_points(self, tmp_path):
        with Store(tmp_path) as store:
            entries = [make_entry(store, lat=i, lon=i) for i in range(5)]
            hits = store.query_bbox(-90, -180, 90, 180)
            assert hits == sorted(entries, key=lambda e: e.id)

    def test_invalid_box(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(InvalidBox):
                store.query_bbox(5, 0, 4, 10)  # min_lat > max_lat
            with pytest.raises(InvalidBox):
                store.query_bbox(0, 170, 10, -170)  # antimeridian wrap
            with pytest.raises(InvalidBox):
                store.query_bbox(-95, 0, 0, 10)

    def test_bbox_matches_linear_scan(self, tmp_path):
        rng = np.random.default_rng(81)
        with Store(tmp_path) as store:
            coords = []
            for _ in range(300):
                lat = float(rng.uniform(-90, 90))
                lon = float(rng.uniform(-180, 180))
                entry = make_entry(store, lat=lat, lon=lon)
                coords.append((entry.id, lat, lon))
            for _ in range(20):
                lats = sorted(rng.uniform(-90, 90, size=2))
                lons = sorted(rng.uniform(-180, 180, size=2))
                expected = sorted(
                    eid
                    for eid, lat, lon in coords
                    if lats[0] <= lat <= lats[1] and lons[0] <= lon <= lons[1]
                )
                got = [e.id for e in store.query_bbox(lats[0], lons[0], lats[1], lons[1])]
                assert got == expected

    def test_nearest_stored_point_is_first_at_zero(self, tmp_path):
        with Store(tmp_path) as store:
            make_entry(store, lat=1, lon=1)
            target = make_entry(store, lat=50.5, lon=7.25)
            results = store.query_nearest(GeoPoint(50.5, 7.25), 2)
            assert results[0][0] == target
            assert results[0][1] == 0.0

    def test_quarter_great_circle(self):
        # (0,0) to (0,90) spans a quarter great circle: 2*pi*R/4, which is
        # 10_007_557.22 m for R = 6_371_008.8
        expected = 2 * math.pi * EARTH_RADIUS_M / 4
        assert expected == pytest.approx(10_007_557.22, abs=0.01)
        assert haversine_m(GeoPoint(0, 0), GeoPoint(0, 90)) == pytest.approx(expected, abs=1.0)

    def test_haversine_against_law_of_cosines(self):
        rng = np.random.default_rng(82)
        for _ in range(100):
            lat1, lat2 = rng.uniform(-80, 80, size=2)
            lon1, lon2 = rng.uniform(-179, 179, size=2)
            got = haversine_m(GeoPoint(lat1, lon1), GeoPoint(lat2, lon2))
            assert got == pytest.approx(oracle_haversine(lat1, lon1, lat2, lon2), abs=1.0)

    def test_nearest_matches_full_sort(self, tmp_path):
        rng = np.random.default_rng(83)
        with Store(tmp_path) as store:
            placed = []
            for _ in range(200):
                lat = float(rng.uniform(-90, 90))
                lon = float(rng.uniform(-180, 180))
                placed.append((make_entry(store, lat=lat, lon=lon), lat, lon))
            origin = GeoPoint(12.0, 34.0)
            expected = sorted(
                ((haversine_m(origin, GeoPoint(lat, lon)), e.id) for e, lat, lon in placed)
            )[:25]
            got = store.query_nearest(origin, 25)
            assert [(d, e.id) for e, d in got] == expected

    def test_nearest_k_larger_than_store(self, tmp_path):
        with Store(tmp_path) as store:
            make_entry(store)
            assert len(store.query_nearest(GeoPoint(0, 0), 10)) == 1

    def test_nearest_k_zero_rejected(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(ValueError):
                store.query_nearest(GeoPoint(0, 0), 0)


class TestRecords:
    def test_rating_bounds(self, tmp_path):
        with Store(tmp_path) as store:
            entry = make_entry(store)
            variant = make_variant(store, entry)
            store.save_rating(Rating(variant.variant_id, 1, created_at=1))
            store.save_rating(Rating(variant.variant_id, 5, created_at=2))
            with pytest.raises(ScoreOutOfRange):
                Rating(variant.variant_id, 0, created_at=3)
            with pytest.raises(ScoreOutOfRange):
                Rating(variant.variant_id, 6, created_at=4)

    def test_rating_unknown_variant(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(UnknownReference):
                store.save_rating(Rating("missing", 3, created_at=1))

    def test_variant_unknown_entry(self, tmp_path):
        with Store(tmp_path) as store:
            ref = store.put_blob(uniform_png())
            bogus = GeneratedVariant(
                variant_id=store.new_id(),
                job_id="j",
                entry_id="missing",
                image_ref=ref,
                prompt="p",
                seed=1,
                backend_id="mock",
                created_at=1,
            )
            with pytest.raises(UnknownReference):
                store.save_variant(bogus)

    def test_variant_requires_blob(self, tmp_path):
        with Store(tmp_path) as store:
            entry = make_entry(store)
            bogus = GeneratedVariant(
                variant_id=store.new_id(),
                job_id="j",
                entry_id=entry.id,
                image_ref="0" * 64,
                prompt="p",
                seed=1,
                backend_id="mock",
                created_at=1,
            )
            with pytest.raises(UnknownReference):
                store.save_variant(bogus)

    def test_questionnaire_bounds(self, tmp_path):
        with Store(tmp_path) as store:
            entry = make_entry(store)
            store.save_questionnaire(questionnaire(entry.id))
            with pytest.raises(ScoreOutOfRange):
                questionnaire(entry.id, q3=0)
            with pytest.raises(ScoreOutOfRange):
                questionnaire(entry.id, q7=6)

    def test_questionnaire_unknown_entry(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(UnknownReference):
                store.save_questionnaire(questionnaire("missing"))

    def test_birth_year_validation(self, tmp_path):
        questionnaire("e", birth_year="1985")
        questionnaire("e", birth_year="")
        questionnaire("e", birth_year="prefer not to say")
        with pytest.raises(InvalidField):
            questionnaire("e", birth_year="1899")
        with pytest.raises(InvalidField):
            questionnaire("e", birth_year="3000")

    def test_variants_listed_for_entry(self, tmp_path):
        with Store(tmp_path) as store:
            entry = make_entry(store)
            v1 = make_variant(store, entry)
            v2 = make_variant(store, entry)
            assert store.variants_for_entry(entry.id) == [v1, v2]


class TestStats:
    def test_empty_store_all_zero(self, tmp_path):
        with Store(tmp_path) as store:
            stats = store.aggregate_stats()
            assert stats.response_count == 0
            assert all(count == 0 for hist in stats.questions.values() for count in hist.values())
            assert all(count == 0 for count in stats.ratings.values())

    def test_q1_hand_count(self, tmp_path):
        with Store(tmp_path) as store:
            entry = make_entry(store)
            for q1 in (5, 5, 4):
                store.save_questionnaire(questionnaire(entry.id, q1=q1))
            stats = store.aggregate_stats()
            assert stats.questions["q1"] == {1: 0, 2: 0, 3: 0, 4: 1, 5: 2}

    def test_histogram_sums_equal_counts(self, tmp_path):
        rng = np.random.default_rng(84)
        with Store(tmp_path) as store:
            entry = make_entry(store)
            variant = make_variant(store, entry)
            n_responses = int(rng.integers(3, 20))
            for _ in range(n_responses):
                scores = {f"q{i}": int(rng.integers(1, 6)) for i in range(1, 8)}
                store.save_questionnaire(questionnaire(entry.id, **scores))
            n_ratings = int(rng.integers(3, 20))
            for i in range(n_ratings):
                store.save_rating(Rating(variant.variant_id, int(rng.integers(1, 6)), created_at=i))
            stats = store.aggregate_stats()
            for hist in stats.questions.values():
                assert sum(hist.values()) == n_responses
            assert sum(stats.ratings.values()) == n_ratings


class TestExport:
    def test_empty_store_zero_lines(self, tmp_path):
        with Store(tmp_path / "s") as store:
            out = tmp_path / "out.jsonl"
            assert store.export_jsonl(out) == 0
            assert out.read_text() == ""

    def test_line_count_equals_event_count(self, tmp_path):
        with Store(tmp_path / "s") as store:
            entries = [make_entry(store) for _ in range(5)]
            variant = make_variant(store, entries[0])
            store.save_rating(Rating(variant.variant_id, 5, created_at=1))
            store.save_rating(Rating(variant.variant_id, 4, created_at=2))
            out = tmp_path / "out.jsonl"
            count = store.export_jsonl(out)
            assert count == 8  # 5 entries + 1 variant + 2 ratings
            assert len(out.read_text().splitlines()) == 8
            for line in out.read_text().splitlines():
                assert json.loads(line)["type"] in {"entry", "variant", "rating", "questionnaire"}

    def test_export_import_export_byte_identical(self, tmp_path):
        with Store(tmp_path / "a") as store:
            entries = [make_entry(store, lat=i, lon=-i) for i in range(4)]
            variant = make_variant(store, entries[1])
            store.save_rating(Rating(variant.variant_id, 3, created_at=10))
            store.save_questionnaire(questionnaire(entries[0].id))
            first = tmp_path / "first.jsonl"
            store.export_jsonl(first)
        with Store(tmp_path / "b") as copy:
            imported = copy.import_jsonl(first)
            assert imported == 7  # 4 entries + variant + rating + questionnaire
            second = tmp_path / "second.jsonl"
            copy.export_jsonl(second)
        assert first.read_bytes() == second.read_bytes()

    def test_import_equivalent_stats(self, tmp_path):
        with Store(tmp_path / "a") as store:
            entry = make_entry(store)
            for q1 in (5, 5, 4):
                store.save_questionnaire(questionnaire(entry.id, q1=q1))
            out = tmp_path / "dump.jsonl"
            store.export_jsonl(out)
            original = store.aggregate_stats()
        with Store(tmp_path / "b") as copy:
            copy.import_jsonl(out)
            assert copy.aggregate_stats() == original


class TestDurability:
    def test_prefix_of_log_is_valid_store(self, tmp_path):
        with Store(tmp_path / "src") as store:
            entries = [make_entry(store) for _ in range(3)]
            variant = make_variant(store, entries[0])
            store.save_rating(Rating(variant.variant_id, 5, created_at=1))
        log_lines = (tmp_path / "src" / "events.jsonl").read_bytes().splitlines(keepends=True)
        for prefix_len in range(len(log_lines) + 1):
            prefix_dir = tmp_path / f"prefix{prefix_len}"
            os.makedirs(prefix_dir)
            (prefix_dir / "events.jsonl").write_bytes(b"".join(log_lines[:prefix_len]))
            with Store(prefix_dir) as partial:
                assert partial.event_count() == prefix_len
