"""Blinded description-rating service.

A study pairs each image with one candidate description per method. Raters
see candidates in a per-participant seeded-random order, identified only by
opaque ids; method labels never leave the server. Every registration and
rating is appended to a JSONL log, and replaying that log reconstructs the
exact service state, so a crashed service resumes where it stopped.

Note: no deferred annotations here — the request models live inside
build_app, and the web framework must see real classes, not strings.
"""
import hashlib
import json
import math
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DuplicateEntryError,
    MissingDescriptionError,
    MissingFileError,
    NoRatingsError,
    ParseError,
    ScoreOutOfRangeError,
    UnknownItemError,
    UnknownParticipantError,
)

CATEGORIES = ("Artist", "Designer", "Random Participant")
GENDERS = ("Male", "Female", "Undisclosed")
SCORE_RANGE = (1, 2, 3, 4)
DIMENSIONS = ("satisfaction", "accuracy", "creativity")


@dataclass(frozen=True)
class StudyItem:
    item_id: str
    image: Path
    candidates: tuple[tuple[str, str], ...]  # (method, text), methods order

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise ConfigError(f"item {self.item_id!r} needs at least 2 candidates")


@dataclass(frozen=True)
class Study:
    study_id: str
    seed: int
    methods: tuple[str, ...]
    items: tuple[StudyItem, ...]


@dataclass(frozen=True)
class Participant:
    participant_id: str
    category: str
    gender: str
    age: float | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ConfigError(f"unknown category {self.category!r}")
        if self.gender not in GENDERS:
            raise ConfigError(f"unknown gender {self.gender!r}")
        if self.age is not None and not self.age > 0:
            raise ConfigError("age must be positive when given")


@dataclass(frozen=True)
class RatingRecord:
    participant_id: str
    item_id: str
    method: str
    satisfaction: int
    accuracy: int
    creativity: int
    timestamp: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.participant_id, self.item_id, self.method)


def create_study(items, methods, seed: int) -> Study:
    """Assemble a study: every item must carry one description per method.

    `items` is a sequence of {"item_id", "image", "descriptions": {method: text}}.
    """
    methods = tuple(methods)
    if len(methods) < 2:
        raise ConfigError("a study needs at least 2 methods to compare")
    if len(set(methods)) != len(methods):
        raise DuplicateEntryError("duplicate method label")
    items = list(items)
    if not items:
        raise ConfigError("a study needs at least one item")

    built = []
    seen = set()
    for spec in items:
        item_id = str(spec["item_id"])
        if item_id in seen:
            raise DuplicateEntryError(f"duplicate item id {item_id!r}")
        seen.add(item_id)
        descriptions = spec.get("descriptions") or {}
        unknown = set(descriptions) - set(methods)
        if unknown:
            raise ConfigError(f"item {item_id!r} has descriptions for unknown "
                              f"methods {sorted(unknown)}")
        candidates = []
        for method in methods:
            if method not in descriptions or not str(descriptions[method]).strip():
                raise MissingDescriptionError(
                    f"item {item_id!r} lacks a description for {method!r}")
            candidates.append((method, str(descriptions[method])))
        built.append(StudyItem(item_id=item_id, image=Path(spec["image"]),
                               candidates=tuple(candidates)))

    digest_doc = {
        "seed": int(seed),
        "methods": list(methods),
        "items": [{"item_id": it.item_id, "descriptions": dict(it.candidates)}
                  for it in built],
    }
    study_id = hashlib.sha256(
        json.dumps(digest_doc, sort_keys=True).encode("utf-8")).hexdigest()[:12]
    return Study(study_id=study_id, seed=int(seed), methods=methods,
                 items=tuple(built))


def save_study(study: Study, path: str | Path) -> None:
    doc = {
        "study_id": study.study_id,
        "seed": study.seed,
        "methods": list(study.methods),
        "items": [
            {"item_id": it.item_id, "image": str(it.image),
             "descriptions": dict(it.candidates)}
            for it in study.items
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_study(path: str | Path) -> Study:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "methods" not in doc or "items" not in doc:
        raise ParseError(f"{path}: study file needs 'methods' and 'items'")
    base = path.parent
    items = []
    for spec in doc["items"]:
        image = Path(spec["image"])
        if not image.is_absolute():
            image = base / image
        items.append({**spec, "image": image})
    return create_study(items, doc["methods"], int(doc.get("seed", 0)))


def _participant_rng(study: Study, participant_id: str) -> np.random.Generator:
    pid = int.from_bytes(
        hashlib.sha256(participant_id.encode("utf-8")).digest()[:8], "big")
    return np.random.default_rng((study.seed, pid))


def candidate_id(study: Study, participant_id: str, item_id: str, method: str) -> str:
    """Opaque per-participant candidate handle; stable across requests."""
    raw = f"{study.study_id}|{participant_id}|{item_id}|{method}"
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:12]


class StudyService:
    """In-memory view over the append-only log, plus the log writer."""

    def __init__(self, study: Study, log_path: str | Path):
        self.study = study
        self.items = {it.item_id: it for it in study.items}
        self.log_path = Path(log_path)
        self.participants: dict[str, Participant] = {}
        self.ratings: dict[tuple[str, str, str], RatingRecord] = {}
        self._lock = threading.Lock()
        if self.log_path.exists():
            self._replay()
        else:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)

    # --- persistence ---

    def _replay(self) -> None:
        with self.log_path.open(encoding="utf-8") as fh:
            for n, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{self.log_path}:{n}: {exc}") from None
                self._apply(rec, line_no=n)

    def _apply(self, rec: dict, line_no: int) -> None:
        kind = rec.get("kind")
        if kind == "participant":
            p = Participant(participant_id=rec["participant_id"],
                            category=rec["category"], gender=rec["gender"],
                            age=rec.get("age"))
            self.participants[p.participant_id] = p
        elif kind == "rating":
            r = RatingRecord(
                participant_id=rec["participant_id"], item_id=rec["item_id"],
                method=rec["method"], satisfaction=rec["satisfaction"],
                accuracy=rec["accuracy"], creativity=rec["creativity"],
                timestamp=rec.get("timestamp", ""))
            self.ratings[r.key] = r
        else:
            raise ParseError(f"{self.log_path}:{line_no}: unknown record kind {kind!r}")

    def _append(self, rec: dict) -> None:
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

    # --- operations ---

    def register(self, category: str, gender: str, age=None) -> Participant:
        p = Participant(participant_id=uuid.uuid4().hex[:12],
                        category=category, gender=gender, age=age)
        with self._lock:
            self._append({"kind": "participant", "participant_id": p.participant_id,
                          "category": p.category, "gender": p.gender, "age": p.age,
                          "timestamp": _now()})
            self.participants[p.participant_id] = p
        return p

    def presentation(self, participant_id: str):
        """Item and candidate order for one participant: seeded, stable."""
        if participant_id not in self.participants:
            raise UnknownParticipantError(f"unknown participant {participant_id!r}")
        rng = _participant_rng(self.study, participant_id)
        items = [self.study.items[i] for i in rng.permutation(len(self.study.items))]
        plan = []
        for item in items:
            order = rng.permutation(len(item.candidates))
            plan.append((item, tuple(item.candidates[j] for j in order)))
        return plan

    def next_item(self, participant_id: str):
        """First item (in this participant's order) with unrated candidates."""
        with self._lock:
            plan = self.presentation(participant_id)
            for item, candidates in plan:
                missing = [m for m, _ in candidates
                           if (participant_id, item.item_id, m) not in self.ratings]
                if missing:
                    return item, candidates
        return None

    def resolve_candidate(self, participant_id: str, item_id: str, cand_id: str) -> str:
        if participant_id not in self.participants:
            raise UnknownParticipantError(f"unknown participant {participant_id!r}")
        item = self.items.get(item_id)
        if item is None:
            raise UnknownItemError(f"unknown item {item_id!r}")
        for method, _ in item.candidates:
            if candidate_id(self.study, participant_id, item_id, method) == cand_id:
                return method
        raise UnknownItemError(f"unknown candidate {cand_id!r} for item {item_id!r}")

    def submit_rating(self, participant_id: str, item_id: str, method: str,
                      satisfaction: int, accuracy: int, creativity: int) -> RatingRecord:
        if participant_id not in self.participants:
            raise UnknownParticipantError(f"unknown participant {participant_id!r}")
        item = self.items.get(item_id)
        if item is None:
            raise UnknownItemError(f"unknown item {item_id!r}")
        if method not in dict(item.candidates):
            raise UnknownItemError(f"item {item_id!r} has no method {method!r}")
        scores = {"satisfaction": satisfaction, "accuracy": accuracy,
                  "creativity": creativity}
        for name, value in scores.items():
            if not isinstance(value, int) or isinstance(value, bool) \
                    or value not in SCORE_RANGE:
                raise ScoreOutOfRangeError(f"{name}={value!r} not in 1..4")
        record = RatingRecord(participant_id=participant_id, item_id=item_id,
                              method=method, timestamp=_now(), **scores)
        with self._lock:
            self._append({"kind": "rating", "participant_id": participant_id,
                          "item_id": item_id, "method": method, **scores,
                          "timestamp": record.timestamp})
            self.ratings[record.key] = record
        return record

    def report(self) -> dict:
        """Per-method score means and per-category demographics."""
        with self._lock:
            if not self.ratings:
                raise NoRatingsError("no ratings submitted yet")
            methods = []
            for method in self.study.methods:
                records = [r for r in self.ratings.values() if r.method == method]
                row = {"method": method, "n_ratings": len(records)}
                for dim in DIMENSIONS:
                    row[dim] = (
                        sum(getattr(r, dim) for r in records) / len(records)
                        if records else None)
                methods.append(row)
            categories = []
            for category in CATEGORIES:
                members = [p for p in self.participants.values()
                           if p.category == category]
                if not members:
                    continue
                ages = [p.age for p in members if p.age is not None]
                categories.append({
                    "category": category,
                    "count": len(members),
                    "mean_age": math.fsum(ages) / len(ages) if ages else None,
                })
            return {
                "study_id": self.study.study_id,
                "methods": methods,
                "categories": categories,
                "n_participants": len(self.participants),
                "n_ratings": len(self.ratings),
            }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --- HTTP layer ---

_HTTP_STATUS = {
    UnknownParticipantError: 404,
    UnknownItemError: 404,
    ScoreOutOfRangeError: 400,
    NoRatingsError: 409,
}


def build_app(study: Study, log_path: str | Path, ui_dir: str | Path | None = None):
    """FastAPI app around a StudyService; API first, static UI mounted last."""
    from fastapi import FastAPI, Query, Request
    from fastapi.responses import FileResponse, JSONResponse, Response
    from pydantic import BaseModel, Field

    service = StudyService(study, log_path)
    app = FastAPI(title="covis rating study")
    app.state.service = service

    from .errors import CovisError

    @app.exception_handler(CovisError)
    async def _covis_error(_request: Request, exc: CovisError):
        status = _HTTP_STATUS.get(type(exc), 400)
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__, "message": str(exc)})

    class RegisterBody(BaseModel):
        category: str
        gender: str = "Undisclosed"
        age: float | None = Field(default=None, gt=0)

    class RatingBody(BaseModel):
        participant_id: str
        item_id: str
        candidate_id: str
        satisfaction: int
        accuracy: int
        creativity: int

    @app.post("/api/participants")
    def register(body: RegisterBody):
        p = service.register(body.category, body.gender, body.age)
        return {"participant_id": p.participant_id}

    @app.get("/api/next")
    def next_item(participant: str = Query(...)):
        found = service.next_item(participant)
        if found is None:
            return Response(status_code=204)
        item, candidates = found
        return {
            "item_id": item.item_id,
            "image_url": f"/media/{item.item_id}{item.image.suffix}",
            "candidates": [
                {"candidate_id": candidate_id(study, participant, item.item_id, m),
                 "text": text}
                for m, text in candidates
            ],
        }

    @app.post("/api/ratings")
    def submit(body: RatingBody):
        method = service.resolve_candidate(body.participant_id, body.item_id,
                                           body.candidate_id)
        service.submit_rating(body.participant_id, body.item_id, method,
                              body.satisfaction, body.accuracy, body.creativity)
        return {"status": "recorded", "item_id": body.item_id,
                "candidate_id": body.candidate_id}

    @app.get("/api/report")
    def report():
        return service.report()

    @app.get("/media/{name}")
    def media(name: str):
        stem = Path(name).stem
        item = service.items.get(stem)
        if item is None or not item.image.exists():
            raise UnknownItemError(f"no media for {name!r}")
        return FileResponse(item.image)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
