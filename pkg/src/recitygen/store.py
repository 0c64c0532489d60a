"""Durable feedback corpus: geolabeled entries, generated variants, ratings,
and questionnaire responses.

Layout under data_dir:
    events.jsonl          one JSON event per line, fields type/payload/ts,
                          append-only, fsynced child-after-parent
    blobs/<sha256>.png    content-addressed source and variant images

The event log is the source of truth; opening a store replays it into
in-memory indexes. One process owns the log for writing; reads are concurrent
and only ever see fully committed events.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from .ids import IdGenerator
from .images import decode_png

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
MAX_NOTE_CHARS = 1000
MIN_BIRTH_YEAR = 1900

QUESTION_KEYS = ("q1", "q2", "q3", "q4", "q5", "q6", "q7")


class StoreError(Exception):
    pass


class IoError(StoreError):
    pass


class CorruptLog(StoreError):
    def __init__(self, line_number: int, detail: str):
        super().__init__(f"corrupt event log at line {line_number}: {detail}")
        self.line_number = line_number


class InvalidGeo(StoreError):
    pass


class InvalidBox(StoreError):
    pass


class UnknownReference(StoreError):
    pass


class ScoreOutOfRange(StoreError):
    pass


class InvalidField(StoreError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidGeo("latitude/longitude must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidGeo(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidGeo(f"longitude {self.lon} out of [-180, 180]")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a spherical Earth."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _now_ms() -> int:
    return int(datetime.now(timezone.utc).timestamp() * 1000)


def _check_score(value: int, name: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
        raise ScoreOutOfRange(f"{name} must be an integer in 1..5, got {value!r}")


@dataclass(frozen=True)
class FeedbackEntry:
    id: str
    geo: GeoPoint
    image_ref: str
    created_at: int
    note: str | None = None

    def __post_init__(self) -> None:
        if self.note is not None and len(self.note) > MAX_NOTE_CHARS:
            raise InvalidField(f"note exceeds {MAX_NOTE_CHARS} characters")


@dataclass(frozen=True)
class GeneratedVariant:
    variant_id: str
    job_id: str
    entry_id: str
    image_ref: str
    prompt: str
    seed: int
    backend_id: str
    created_at: int


@dataclass(frozen=True)
class Rating:
    variant_id: str
    score: int
    created_at: int

    def __post_init__(self) -> None:
        _check_score(self.score, "score")


@dataclass(frozen=True)
class QuestionnaireResponse:
    """Seven 1-5 scale answers (satisfaction, continue-use, recommend,
    rapid-generation agreement, image-requirements fit, self-design
    preference, convenience) plus demographics and open feedback."""

    entry_id: str
    q1: int
    q2: int
    q3: int
    q4: int
    q5: int
    q6: int
    q7: int
    gender: str = ""
    education: str = ""
    birth_year: str = ""
    profession: str = ""
    design_background: str = ""
    open_feedback: str = ""
    created_at: int = 0

    def __post_init__(self) -> None:
        for key in QUESTION_KEYS:
            _check_score(getattr(self, key), key)
        year_text = self.birth_year.strip()
        if year_text:
            try:
                year = int(year_text)
            except ValueError:
                return  # free text is allowed
            current = datetime.now(timezone.utc).year
            if not MIN_BIRTH_YEAR <= year <= current:
                raise InvalidField(f"birth_year {year} out of {MIN_BIRTH_YEAR}..{current}")


@dataclass(frozen=True)
class AggregateStats:
    """Score histograms: one per questionnaire item plus one for ratings."""

    questions: dict[str, dict[int, int]]
    ratings: dict[int, int]
    response_count: int
    rating_count: int


def _canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _entry_payload(e: FeedbackEntry) -> dict:
    return {
        "id": e.id,
        "lat": e.geo.lat,
        "lon": e.geo.lon,
        "image_ref": e.image_ref,
        "created_at": e.created_at,
        "note": e.note,
    }


def _variant_payload(v: GeneratedVariant) -> dict:
    return {
        "variant_id": v.variant_id,
        "job_id": v.job_id,
        "entry_id": v.entry_id,
        "image_ref": v.image_ref,
        "prompt": v.prompt,
        "seed": v.seed,
        "backend_id": v.backend_id,
        "created_at": v.created_at,
    }


def _rating_payload(r: Rating) -> dict:
    return {"variant_id": r.variant_id, "score": r.score, "created_at": r.created_at}


def _questionnaire_payload(q: QuestionnaireResponse) -> dict:
    return {
        "entry_id": q.entry_id,
        **{key: getattr(q, key) for key in QUESTION_KEYS},
        "gender": q.gender,
        "education": q.education,
        "birth_year": q.birth_year,
        "profession": q.profession,
        "design_background": q.design_background,
        "open_feedback": q.open_feedback,
        "created_at": q.created_at,
    }


class Store:
    """Feedback store over one data directory. Mutations are serialized by an
    internal lock; a read-only store never touches the log file."""

    def __init__(self, data_dir: str | Path, read_only: bool = False):
        self._dir = Path(data_dir)
        self._read_only = read_only
        self._lock = threading.RLock()
        self._ids = IdGenerator()
        self._entries: dict[str, FeedbackEntry] = {}
        self._variants: dict[str, GeneratedVariant] = {}
        self._variants_by_entry: dict[str, list[str]] = {}
        self._ratings: list[Rating] = []
        self._questionnaires: list[QuestionnaireResponse] = []
        self._events: list[dict] = []
        self._log_fd: int | None = None

        try:
            if not self._dir.exists():
                if read_only:
                    raise IoError(f"data dir {self._dir} does not exist")
                self._dir.mkdir(parents=True, exist_ok=True)
            if not read_only:
                self._blob_dir.mkdir(exist_ok=True)
        except OSError as exc:
            raise IoError(f"cannot prepare data dir {self._dir}: {exc}") from exc

        self._replay()
        if not read_only:
            try:
                self._log_fd = os.open(self._log_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            except OSError as exc:
                raise IoError(f"cannot open event log: {exc}") from exc

    @property
    def _log_path(self) -> Path:
        return self._dir / "events.jsonl"

    @property
    def _blob_dir(self) -> Path:
        return self._dir / "blobs"

    @property
    def data_dir(self) -> Path:
        return self._dir

    def close(self) -> None:
        with self._lock:
            if self._log_fd is not None:
                os.close(self._log_fd)
                self._log_fd = None

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # ------------------------------------------------------------------ log

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        try:
            data = self._log_path.read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read event log: {exc}") from exc
        if not data:
            return

        lines = data.split(b"\n")
        trailing_partial = lines[-1] != b""
        if not trailing_partial:
            lines = lines[:-1]

        good_bytes = 0
        for number, raw in enumerate(lines, start=1):
            is_last = number == len(lines)
            try:
                event = json.loads(raw.decode("utf-8"))
                if not isinstance(event, dict):
                    raise ValueError("event is not an object")
                self._apply(event.get("type"), event.get("payload"), event)
            except (ValueError, KeyError, StoreError, UnicodeDecodeError) as exc:
                if is_last:
                    # Torn tail from an interrupted append: drop it.
                    logger.warning("dropping corrupt trailing log line %d: %s", number, exc)
                    if not self._read_only:
                        with open(self._log_path, "ab") as fh:
                            fh.truncate(good_bytes)
                    return
                raise CorruptLog(number, str(exc)) from exc
            self._events.append(event)
            good_bytes += len(raw) + 1

        if trailing_partial and not self._read_only:
            # Final line parsed but its newline never hit disk; restore it so
            # the next append starts on a fresh line.
            with open(self._log_path, "ab") as fh:
                fh.write(b"\n")
                fh.flush()
                os.fsync(fh.fileno())

    def _apply(self, etype: str | None, payload: dict | None, event: dict) -> None:
        if not isinstance(payload, dict) or "ts" not in event:
            raise InvalidField("event missing payload or ts")
        if etype == "entry":
            entry = FeedbackEntry(
                id=str(payload["id"]),
                geo=GeoPoint(float(payload["lat"]), float(payload["lon"])),
                image_ref=str(payload["image_ref"]),
                created_at=int(payload["created_at"]),
                note=payload.get("note"),
            )
            if entry.id in self._entries:
                raise InvalidField(f"duplicate entry id {entry.id}")
            self._entries[entry.id] = entry
            self._variants_by_entry.setdefault(entry.id, [])
        elif etype == "variant":
            variant = GeneratedVariant(
                variant_id=str(payload["variant_id"]),
                job_id=str(payload["job_id"]),
                entry_id=str(payload["entry_id"]),
                image_ref=str(payload["image_ref"]),
                prompt=str(payload["prompt"]),
                seed=int(payload["seed"]),
                backend_id=str(payload["backend_id"]),
                created_at=int(payload["created_at"]),
            )
            if variant.entry_id not in self._entries:
                raise UnknownReference(f"variant references unknown entry {variant.entry_id}")
            if variant.variant_id in self._variants:
                raise InvalidField(f"duplicate variant id {variant.variant_id}")
            self._variants[variant.variant_id] = variant
            self._variants_by_entry[variant.entry_id].append(variant.variant_id)
        elif etype == "rating":
            rating = Rating(
                variant_id=str(payload["variant_id"]),
                score=int(payload["score"]),
                created_at=int(payload["created_at"]),
            )
            if rating.variant_id not in self._variants:
                raise UnknownReference(f"rating references unknown variant {rating.variant_id}")
            self._ratings.append(rating)
        elif etype == "questionnaire":
            response = QuestionnaireResponse(
                entry_id=str(payload["entry_id"]),
                **{key: int(payload[key]) for key in QUESTION_KEYS},
                gender=str(payload.get("gender", "")),
                education=str(payload.get("education", "")),
                birth_year=str(payload.get("birth_year", "")),
                profession=str(payload.get("profession", "")),
                design_background=str(payload.get("design_background", "")),
                open_feedback=str(payload.get("open_feedback", "")),
                created_at=int(payload.get("created_at", 0)),
            )
            if response.entry_id not in self._entries:
                raise UnknownReference(f"questionnaire references unknown entry {response.entry_id}")
            self._questionnaires.append(response)
        else:
            raise InvalidField(f"unknown event type {etype!r}")

    def _append(self, etype: str, payload: dict, ts: int) -> None:
        if self._read_only or self._log_fd is None:
            raise IoError("store is read-only")
        event = {"type": etype, "payload": payload, "ts": ts}
        line = (_canonical(event) + "\n").encode("utf-8")
        try:
            os.write(self._log_fd, line)
            os.fsync(self._log_fd)
        except OSError as exc:
            raise IoError(f"event append failed: {exc}") from exc
        self._events.append(event)

    # ---------------------------------------------------------------- blobs

    def put_blob(self, png_bytes: bytes) -> str:
        """Store PNG bytes under their SHA-256 and return the hex ref.
        Idempotent: identical bytes share one blob file."""
        ref = hashlib.sha256(png_bytes).hexdigest()
        path = self._blob_dir / f"{ref}.png"
        if path.exists():
            return ref
        if self._read_only:
            raise IoError("store is read-only")
        tmp = path.with_suffix(".tmp")
        try:
            with open(tmp, "wb") as fh:
                fh.write(png_bytes)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
            dir_fd = os.open(self._blob_dir, os.O_RDONLY)
            try:
                os.fsync(dir_fd)
            finally:
                os.close(dir_fd)
        except OSError as exc:
            raise IoError(f"blob write failed: {exc}") from exc
        return ref

    def get_blob(self, ref: str) -> bytes:
        path = self._blob_dir / f"{ref}.png"
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise UnknownReference(f"no blob {ref}") from None
        except OSError as exc:
            raise IoError(f"blob read failed: {exc}") from exc

    def has_blob(self, ref: str) -> bool:
        return (self._blob_dir / f"{ref}.png").exists()

    # -------------------------------------------------------------- entries

    def create_entry(self, geo: GeoPoint, image_png: bytes, note: str | None = None) -> FeedbackEntry:
        """Validate and persist a geolabeled entry; the PNG goes to the blob
        store (fsynced) before its event is appended."""
        decoded = decode_png(image_png)  # BadImage / ImageTooLarge on garbage
        del decoded
        with self._lock:
            ref = self.put_blob(image_png)
            created = _now_ms()
            entry_id = self._ids.new(created)
            while entry_id in self._entries:
                entry_id = self._ids.new(created)
            entry = FeedbackEntry(id=entry_id, geo=geo, image_ref=ref, created_at=created, note=note)
            self._append("entry", _entry_payload(entry), created)
            self._entries[entry.id] = entry
            self._variants_by_entry.setdefault(entry.id, [])
            return entry

    def get_entry(self, entry_id: str) -> FeedbackEntry:
        with self._lock:
            try:
                return self._entries[entry_id]
            except KeyError:
                raise UnknownReference(f"no entry {entry_id}") from None

    def entry_count(self) -> int:
        with self._lock:
            return len(self._entries)

    def event_count(self) -> int:
        with self._lock:
            return len(self._events)

    def new_id(self) -> str:
        return self._ids.new()

    # -------------------------------------------------------------- queries

    def query_bbox(
        self, min_lat: float, min_lon: float, max_lat: float, max_lon: float
    ) -> list[FeedbackEntry]:
        """Entries with min_lat <= lat <= max_lat and min_lon <= lon <= max_lon
        (all bounds inclusive), ordered by id. Antimeridian-wrapping boxes are
        rejected."""
        for name, value in (("lat", min_lat), ("lat", max_lat)):
            if not (math.isfinite(value) and -90.0 <= value <= 90.0):
                raise InvalidBox(f"{name} bound {value} out of range")
        for name, value in (("lon", min_lon), ("lon", max_lon)):
            if not (math.isfinite(value) and -180.0 <= value <= 180.0):
                raise InvalidBox(f"{name} bound {value} out of range")
        if min_lat > max_lat or min_lon > max_lon:
            raise InvalidBox("min bound exceeds max bound")
        with self._lock:
            hits = [
                e
                for e in self._entries.values()
                if min_lat <= e.geo.lat <= max_lat and min_lon <= e.geo.lon <= max_lon
            ]
        return sorted(hits, key=lambda e: e.id)

    def query_nearest(self, geo: GeoPoint, k: int) -> list[tuple[FeedbackEntry, float]]:
        """Up to k entries sorted by ascending haversine distance in meters,
        ties broken by id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock:
            entries = list(self._entries.values())
        ranked = sorted(
            ((haversine_m(geo, e.geo), e.id, e) for e in entries),
            key=lambda item: (item[0], item[1]),
        )
        return [(e, dist) for dist, _, e in ranked[:k]]

    # -------------------------------------------------------------- records

    def save_variant(self, variant: GeneratedVariant) -> GeneratedVariant:
        with self._lock:
            if variant.entry_id not in self._entries:
                raise UnknownReference(f"no entry {variant.entry_id}")
            if not self.has_blob(variant.image_ref):
                raise UnknownReference(f"no blob {variant.image_ref}")
            if variant.variant_id in self._variants:
                raise InvalidField(f"duplicate variant id {variant.variant_id}")
            self._append("variant", _variant_payload(variant), variant.created_at)
            self._variants[variant.variant_id] = variant
            self._variants_by_entry[variant.entry_id].append(variant.variant_id)
            return variant

    def get_variant(self, variant_id: str) -> GeneratedVariant:
        with self._lock:
            try:
                return self._variants[variant_id]
            except KeyError:
                raise UnknownReference(f"no variant {variant_id}") from None

    def variants_for_entry(self, entry_id: str) -> list[GeneratedVariant]:
        with self._lock:
            if entry_id not in self._entries:
                raise UnknownReference(f"no entry {entry_id}")
            return [self._variants[vid] for vid in self._variants_by_entry[entry_id]]

    def save_rating(self, rating: Rating) -> Rating:
        with self._lock:
            if rating.variant_id not in self._variants:
                raise UnknownReference(f"no variant {rating.variant_id}")
            self._append("rating", _rating_payload(rating), rating.created_at)
            self._ratings.append(rating)
            return rating

    def save_questionnaire(self, response: QuestionnaireResponse) -> QuestionnaireResponse:
        with self._lock:
            if response.entry_id not in self._entries:
                raise UnknownReference(f"no entry {response.entry_id}")
            if response.created_at == 0:
                response = replace(response, created_at=_now_ms())
            self._append("questionnaire", _questionnaire_payload(response), response.created_at)
            self._questionnaires.append(response)
            return response

    # ---------------------------------------------------------------- stats

    def aggregate_stats(self) -> AggregateStats:
        """Counts only; each question histogram sums to the response count."""
        questions = {key: {score: 0 for score in range(1, 6)} for key in QUESTION_KEYS}
        ratings = {score: 0 for score in range(1, 6)}
        with self._lock:
            for response in self._questionnaires:
                for key in QUESTION_KEYS:
                    questions[key][getattr(response, key)] += 1
            for rating in self._ratings:
                ratings[rating.score] += 1
            return AggregateStats(
                questions=questions,
                ratings=ratings,
                response_count=len(self._questionnaires),
                rating_count=len(self._ratings),
            )

    # --------------------------------------------------------------- export

    def export_jsonl(self, out_path: str | Path) -> int:
        """Write every event as one canonical JSON line; the file re-imports
        into an equivalent store."""
        with self._lock:
            events = list(self._events)
        try:
            with open(out_path, "w", encoding="utf-8") as fh:
                for event in events:
                    fh.write(_canonical(event) + "\n")
        except OSError as exc:
            raise IoError(f"export failed: {exc}") from exc
        return len(events)

    def import_jsonl(self, in_path: str | Path) -> int:
        """Validate and append events from an export file. Lines must be in
        parent-before-child order, as export writes them."""
        try:
            text = Path(in_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"import read failed: {exc}") from exc
        count = 0
        with self._lock:
            for number, raw in enumerate(text.splitlines(), start=1):
                if not raw.strip():
                    continue
                try:
                    event = json.loads(raw)
                    if not isinstance(event, dict):
                        raise ValueError("event is not an object")
                    self._apply(event.get("type"), event.get("payload"), event)
                except (ValueError, KeyError, StoreError) as exc:
                    raise CorruptLog(number, str(exc)) from exc
                self._append(event["type"], event["payload"], event["ts"])
                count += 1
        return count


def open_store(data_dir: str | Path, read_only: bool = False) -> Store:
    return Store(data_dir, read_only=read_only)
