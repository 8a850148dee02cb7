"""Attempt lifecycle: start, answer with instant feedback, finalize, export.

State is a pure fold over an append-only event log (one JSON record per
line, versioned header line first), so a persisted log replays to exactly
the same attempt state: generated items are re-instantiated from the
recorded seed and grades are recomputed by the pure grading functions.

Concurrency contract: a single in-process store serializes all mutations
behind one lock, which makes attempt-limit checks atomic with attempt
creation and gives each attempt a single writer. Reads return snapshots.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from . import bank as bankmod
from .assessment import (
    COEFFICIENT_LABELS,
    ROOT_LABELS,
    DragDropItem,
    GradeResult,
    GradingPolicy,
    Item,
    MultipleChoiceItem,
    Ordering,
    StepwiseItem,
    Submission,
    grade,
    instantiate_generated_item,
    shuffle_options,
)
from .mathcore import DetTaskSpec
from .matrix import ColumnKind, ColumnSpec, ResponseMatrix, TOTAL_LABEL

EVENTS_FORMAT = "stepquiz-events"
EVENTS_VERSION = 1

QUIZ_FORMAT = "stepquiz-quiz"
QUIZ_VERSION = 1


class SessionError(Exception):
    """Base class for lifecycle errors."""


class UnknownQuiz(SessionError):
    pass


class UnknownAttempt(SessionError):
    pass


class UnknownItem(SessionError):
    pass


class AttemptLimitReached(SessionError):
    pass


class AttemptNotActive(SessionError):
    pass


class TimeExpired(SessionError):
    pass


class AlreadyFinalized(SessionError):
    pass


class QuizFormatError(SessionError):
    """Quiz document is structurally unreadable."""


class AttemptState(str, Enum):
    IN_PROGRESS = "in_progress"
    FINALIZED = "finalized"
    EXPIRED = "expired"


class FeedbackMode(str, Enum):
    IMMEDIATE = "immediate"
    ON_FINALIZE = "on_finalize"


class Granularity(str, Enum):
    ITEM_TOTALS = "item_totals"
    WITH_FIELD_SUBSCORES = "with_field_subscores"


@dataclass(frozen=True)
class QuizSettings:
    max_attempts: int = 1
    time_limit: Optional[int] = None  # seconds
    shuffle_options: bool = True
    feedback_mode: FeedbackMode = FeedbackMode.IMMEDIATE
    point_scale: Fraction = Fraction(100)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")


@dataclass(frozen=True)
class GeneratorRef:
    """A quiz slot filled by the determinant-task generator at attempt start."""

    kind: str = "det_quadratic"
    root_range: tuple[int, int] = (-9, 9)
    entry_range: tuple[int, int] = (-9, 9)

    def spec(self, seed: int) -> DetTaskSpec:
        if self.kind != "det_quadratic":
            raise QuizFormatError(f"unknown generator kind {self.kind!r}")
        return DetTaskSpec(seed=seed, root_range=self.root_range, entry_range=self.entry_range)


@dataclass(frozen=True)
class QuizEntry:
    """One quiz slot: a concrete item or a generator, plus scoring metadata.

    ``difficulty`` and ``field_difficulty`` are simulation metadata only;
    grading never reads them.
    """

    label: str
    item: Optional[Item] = None
    generator: Optional[GeneratorRef] = None
    points: Optional[Fraction] = None
    difficulty: float = 0.0
    field_difficulty: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if (self.item is None) == (self.generator is None):
            raise ValueError("entry needs exactly one of item or generator")


@dataclass(frozen=True)
class Quiz:
    id: str
    entries: tuple[QuizEntry, ...]
    title: str = ""
    settings: QuizSettings = QuizSettings()
    grading_policy: GradingPolicy = GradingPolicy()

    def __post_init__(self):
        if not self.entries:
            raise ValueError("quiz needs at least one item")
        labels = [e.label for e in self.entries]
        if len(labels) != len(set(labels)):
            raise ValueError("entry labels must be unique")
        explicit = [e for e in self.entries if e.points is not None]
        if explicit and len(explicit) != len(self.entries):
            raise ValueError("either all entries set points or none do")

    def item_points(self) -> tuple[Fraction, ...]:
        """Per-entry maximum points; equal split of the scale by default."""
        if self.entries[0].points is not None:
            return tuple(e.points for e in self.entries)  # type: ignore[misc]
        share = self.settings.point_scale / len(self.entries)
        return tuple(share for _ in self.entries)

    def max_points(self) -> Fraction:
        return sum(self.item_points(), Fraction(0))


def _derive_seed(seed: int, index: int) -> int:
    """Split one attempt seed into independent per-slot seeds."""
    mix = (seed ^ ((index + 1) * 0x9E3779B97F4A7C15)) & ((1 << 64) - 1)
    mix = (mix * 0xBF58476D1CE4E5B9) & ((1 << 64) - 1)
    return mix ^ (mix >> 31)


def instantiate_entries(quiz: Quiz, seed: int) -> tuple[Item, ...]:
    """Materialize every quiz slot deterministically from (seed, slot index)."""
    items: list[Item] = []
    for index, entry in enumerate(quiz.entries):
        sub_seed = _derive_seed(seed, index)
        if entry.generator is not None:
            item: Item = instantiate_generated_item(entry.generator.spec(sub_seed))
        else:
            item = entry.item
        if isinstance(item, MultipleChoiceItem) and quiz.settings.shuffle_options and item.shuffle:
            rng = random.Random(sub_seed)
            order = list(range(len(item.options)))
            rng.shuffle(order)
            item = shuffle_options(item, order)
        elif isinstance(item, DragDropItem) and quiz.settings.shuffle_options:
            rng = random.Random(sub_seed)
            tokens = list(item.tokens)
            rng.shuffle(tokens)
            item = replace(item, tokens=tuple(tokens))
        items.append(item)
    return tuple(items)


@dataclass
class ResponseRecord:
    submission: Submission
    result: GradeResult
    at: datetime


@dataclass
class Attempt:
    """Live attempt state; mutated only by the owning store."""

    id: str
    quiz_id: str
    student_id: str
    seed: int
    started_at: datetime
    items: tuple[Item, ...]
    labels: tuple[str, ...]
    state: AttemptState = AttemptState.IN_PROGRESS
    responses: dict[str, ResponseRecord] = field(default_factory=dict)
    finalized_at: Optional[datetime] = None

    def item_by_id(self, item_id: str) -> Item:
        for item in self.items:
            if item.id == item_id:
                return item
        raise UnknownItem(f"item {item_id!r} is not part of this attempt")

    def deadline(self, settings: QuizSettings) -> Optional[datetime]:
        if settings.time_limit is None:
            return None
        return self.started_at + timedelta(seconds=settings.time_limit)


@dataclass(frozen=True)
class ItemScore:
    item_id: str
    label: str
    score: Fraction
    points_awarded: Fraction
    points_max: Fraction
    answered: bool


@dataclass(frozen=True)
class ScoreSummary:
    attempt_id: str
    total: Fraction
    max_total: Fraction
    per_item: tuple[ItemScore, ...]


@dataclass(frozen=True)
class SubmitOutcome:
    """What a student sees right after submitting one answer."""

    item_id: str
    mode: FeedbackMode
    feedback: Optional[GradeResult]  # None when feedback waits for finalize


def summarize(quiz: Quiz, attempt: Attempt) -> ScoreSummary:
    """Point totals for an attempt; unanswered items score zero."""
    per_item: list[ItemScore] = []
    total = Fraction(0)
    for item, label, points in zip(attempt.items, attempt.labels, quiz.item_points()):
        record = attempt.responses.get(item.id)
        score = record.result.score if record else Fraction(0)
        awarded = score * points
        total += awarded
        per_item.append(ItemScore(item.id, label, score, awarded, points, record is not None))
    return ScoreSummary(attempt.id, total, quiz.max_points(), tuple(per_item))


class SessionStore:
    """In-process attempt store with optional append-only persistence."""

    def __init__(self, quizzes: Mapping[str, Quiz], log_path: str | Path | None = None):
        self._quizzes = dict(quizzes)
        self._attempts: dict[str, Attempt] = {}
        self._order: list[str] = []
        self._lock = threading.RLock()
        self._log_path = Path(log_path) if log_path is not None else None
        self._entropy = random.SystemRandom()
        if self._log_path is not None and not self._log_path.exists():
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            header = {"format": EVENTS_FORMAT, "version": EVENTS_VERSION}
            self._log_path.write_text(json.dumps(header) + "\n", encoding="utf-8")

    # -- event plumbing ----------------------------------------------------

    def _append(self, event: dict) -> None:
        if self._log_path is None:
            return
        with self._log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _apply_started(
        self, attempt_id: str, quiz_id: str, student_id: str, seed: int, at: datetime
    ) -> Attempt:
        quiz = self.quiz(quiz_id)
        attempt = Attempt(
            id=attempt_id,
            quiz_id=quiz_id,
            student_id=student_id,
            seed=seed,
            started_at=at,
            items=instantiate_entries(quiz, seed),
            labels=tuple(e.label for e in quiz.entries),
        )
        self._attempts[attempt_id] = attempt
        self._order.append(attempt_id)
        return attempt

    def _apply_submitted(self, attempt: Attempt, item_id: str, payload, at: datetime) -> GradeResult:
        quiz = self.quiz(attempt.quiz_id)
        item = attempt.item_by_id(item_id)
        submission = Submission(item_id=item_id, payload=payload)
        result = grade(item, submission, quiz.grading_policy)
        attempt.responses[item_id] = ResponseRecord(submission, result, at)
        return result

    # -- public API --------------------------------------------------------

    def quiz(self, quiz_id: str) -> Quiz:
        try:
            return self._quizzes[quiz_id]
        except KeyError:
            raise UnknownQuiz(f"no quiz {quiz_id!r}") from None

    def quizzes(self) -> list[Quiz]:
        return list(self._quizzes.values())

    def add_quiz(self, quiz: Quiz) -> None:
        with self._lock:
            self._quizzes[quiz.id] = quiz

    def get(self, attempt_id: str) -> Attempt:
        with self._lock:
            try:
                return self._attempts[attempt_id]
            except KeyError:
                raise UnknownAttempt(f"no attempt {attempt_id!r}") from None

    def attempts_for_quiz(self, quiz_id: str) -> list[Attempt]:
        with self._lock:
            return [self._attempts[a] for a in self._order if self._attempts[a].quiz_id == quiz_id]

    def start_attempt(
        self,
        quiz_id: str,
        student_id: str,
        seed: Optional[int] = None,
        *,
        now: datetime,
    ) -> Attempt:
        """Create an attempt; the limit check is atomic with creation.

        Every started attempt counts against ``max_attempts`` regardless of
        its state: starting one consumes it.
        """
        with self._lock:
            quiz = self.quiz(quiz_id)
            used = sum(
                1
                for a in self._attempts.values()
                if a.quiz_id == quiz_id and a.student_id == student_id
            )
            if used >= quiz.settings.max_attempts:
                raise AttemptLimitReached(
                    f"student {student_id!r} already used {used} attempt(s)"
                )
            if seed is None:
                seed = self._entropy.getrandbits(63)
            attempt_id = f"at-{len(self._order) + 1:06d}"
            attempt = self._apply_started(attempt_id, quiz_id, student_id, seed, now)
            self._append(
                {
                    "event": "attempt_started",
                    "at": now.isoformat(),
                    "attempt_id": attempt_id,
                    "quiz_id": quiz_id,
                    "student_id": student_id,
                    "seed": seed,
                }
            )
            return attempt

    def _expire(self, attempt: Attempt, now: datetime) -> None:
        attempt.state = AttemptState.EXPIRED
        self._append(
            {"event": "attempt_expired", "at": now.isoformat(), "attempt_id": attempt.id}
        )

    def submit_answer(
        self, attempt_id: str, item_id: str, payload, *, now: datetime
    ) -> SubmitOutcome:
        """Grade and store one answer; resubmission is last-write-wins.

        A submission past the time limit expires the attempt (stored
        responses are kept) and raises TimeExpired.
        """
        with self._lock:
            attempt = self.get(attempt_id)
            quiz = self.quiz(attempt.quiz_id)
            if attempt.state is not AttemptState.IN_PROGRESS:
                raise AttemptNotActive(f"attempt is {attempt.state.value}")
            deadline = attempt.deadline(quiz.settings)
            if deadline is not None and now > deadline:
                self._expire(attempt, now)
                raise TimeExpired("time limit exceeded; attempt expired")
            result = self._apply_submitted(attempt, item_id, payload, now)
            self._append(
                {
                    "event": "answer_submitted",
                    "at": now.isoformat(),
                    "attempt_id": attempt_id,
                    "item_id": item_id,
                    "payload": payload,
                }
            )
            if quiz.settings.feedback_mode is FeedbackMode.IMMEDIATE:
                return SubmitOutcome(item_id, FeedbackMode.IMMEDIATE, result)
            return SubmitOutcome(item_id, FeedbackMode.ON_FINALIZE, None)

    def finalize(self, attempt_id: str, *, now: datetime) -> ScoreSummary:
        """Close the attempt and compute its point total."""
        with self._lock:
            attempt = self.get(attempt_id)
            if attempt.state is AttemptState.FINALIZED:
                raise AlreadyFinalized("attempt is already finalized")
            attempt.state = AttemptState.FINALIZED
            attempt.finalized_at = now
            self._append(
                {"event": "attempt_finalized", "at": now.isoformat(), "attempt_id": attempt_id}
            )
            return summarize(self.quiz(attempt.quiz_id), attempt)

    def export_matrix(self, quiz_id: str, granularity: Granularity) -> ResponseMatrix:
        with self._lock:
            return export_matrix(
                self.quiz(quiz_id), self.attempts_for_quiz(quiz_id), granularity
            )

    # -- replay ------------------------------------------------------------

    @classmethod
    def replay(
        cls,
        log_path: str | Path,
        quizzes: Mapping[str, Quiz],
        resume: bool = False,
    ) -> "SessionStore":
        """Rebuild a store by folding a persisted event log.

        Replay itself never re-logs; with ``resume`` the store keeps
        appending new events to the same file afterwards.
        """
        store = cls(quizzes, log_path=None)
        lines = Path(log_path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError("empty event log")
        header = json.loads(lines[0])
        if header.get("format") != EVENTS_FORMAT or header.get("version") != EVENTS_VERSION:
            raise ValueError(f"unsupported event log header: {lines[0]!r}")
        for line in lines[1:]:
            if not line.strip():
                continue
            event = json.loads(line)
            at = datetime.fromisoformat(event["at"])
            kind = event["event"]
            if kind == "attempt_started":
                store._apply_started(
                    event["attempt_id"],
                    event["quiz_id"],
                    event["student_id"],
                    event["seed"],
                    at,
                )
            elif kind == "answer_submitted":
                attempt = store.get(event["attempt_id"])
                store._apply_submitted(attempt, event["item_id"], event["payload"], at)
            elif kind == "attempt_expired":
                store.get(event["attempt_id"]).state = AttemptState.EXPIRED
            elif kind == "attempt_finalized":
                attempt = store.get(event["attempt_id"])
                attempt.state = AttemptState.FINALIZED
                attempt.finalized_at = at
            else:
                raise ValueError(f"unknown event {kind!r}")
        if resume:
            store._log_path = Path(log_path)
        return store


def entry_field_labels(entry: QuizEntry) -> tuple[str, ...]:
    """Field labels a quiz slot contributes to field-level exports."""
    if entry.generator is not None:
        return COEFFICIENT_LABELS + ROOT_LABELS
    if isinstance(entry.item, StepwiseItem):
        return tuple(f.label for f in entry.item.fields)
    return ()


def latest_finalized(attempts: Iterable[Attempt]) -> dict[str, Attempt]:
    """Latest finalized attempt per student (creation order breaks ties)."""
    chosen: dict[str, Attempt] = {}
    for attempt in attempts:
        if attempt.state is not AttemptState.FINALIZED:
            continue
        current = chosen.get(attempt.student_id)
        if current is None or attempt.finalized_at >= current.finalized_at:
            chosen[attempt.student_id] = attempt
    return chosen


def export_matrix(
    quiz: Quiz, attempts: Sequence[Attempt], granularity: Granularity
) -> ResponseMatrix:
    """Response matrix over each student's latest finalized attempt.

    Item cells are point-scaled scores; the ``A-total`` column is the
    finalize total (unanswered items count zero there, but their item cells
    stay missing). Field columns are raw 0/1 sub-scores.
    """
    rows = latest_finalized(attempts)
    students = sorted(rows)
    points = quiz.item_points()

    columns: list[ColumnSpec] = [ColumnSpec(TOTAL_LABEL, ColumnKind.TOTAL)]
    for entry in quiz.entries:
        columns.append(ColumnSpec(entry.label, ColumnKind.ITEM))
    if granularity is Granularity.WITH_FIELD_SUBSCORES:
        for entry in quiz.entries:
            for label in entry_field_labels(entry):
                columns.append(ColumnSpec(f"{entry.label}.{label}", ColumnKind.FIELD))

    cells: list[tuple[Optional[float], ...]] = []
    for student in students:
        attempt = rows[student]
        summary = summarize(quiz, attempt)
        row: list[Optional[float]] = [float(summary.total)]
        for item, points_max in zip(attempt.items, points):
            record = attempt.responses.get(item.id)
            row.append(float(record.result.score * points_max) if record else None)
        if granularity is Granularity.WITH_FIELD_SUBSCORES:
            for entry, item in zip(quiz.entries, attempt.items):
                record = attempt.responses.get(item.id)
                for label in entry_field_labels(entry):
                    row.append(
                        float(record.result.field_scores[label]) if record else None
                    )
        cells.append(tuple(row))
    return ResponseMatrix(tuple(students), tuple(columns), tuple(cells))


# -- attempt snapshots -----------------------------------------------------


def attempt_to_doc(quiz: Quiz, attempt: Attempt) -> dict:
    """Canonical JSON form of full attempt state (server-side, keys included).

    Used by replay tests: two stores agree iff these documents agree byte
    for byte once dumped with sorted keys.
    """
    return {
        "id": attempt.id,
        "quiz_id": attempt.quiz_id,
        "student_id": attempt.student_id,
        "seed": attempt.seed,
        "state": attempt.state.value,
        "started_at": attempt.started_at.isoformat(),
        "finalized_at": attempt.finalized_at.isoformat() if attempt.finalized_at else None,
        "labels": list(attempt.labels),
        "items": [bankmod.item_to_doc(item) for item in attempt.items],
        "responses": {
            item_id: {
                "payload": record.submission.payload,
                "score": str(record.result.score),
                "field_scores": dict(record.result.field_scores),
                "verdicts": {p.part: p.verdict.value for p in record.result.per_part},
                "at": record.at.isoformat(),
            }
            for item_id, record in sorted(attempt.responses.items())
        },
    }


# -- quiz documents --------------------------------------------------------


def _fraction_or_none(doc, where: str) -> Optional[Fraction]:
    if doc is None:
        return None
    try:
        return Fraction(str(doc))
    except (ValueError, ZeroDivisionError) as exc:
        raise QuizFormatError(f"{where}: {doc!r} is not a rational") from exc


def quiz_from_doc(doc: dict, items_by_id: Mapping[str, Item] | None = None) -> Quiz:
    """Build a quiz from its JSON form, resolving bank refs if given."""
    items_by_id = items_by_id or {}
    try:
        settings_doc = doc.get("settings", {})
        settings = QuizSettings(
            max_attempts=int(settings_doc.get("max_attempts", 1)),
            time_limit=settings_doc.get("time_limit"),
            shuffle_options=bool(settings_doc.get("shuffle_options", True)),
            feedback_mode=FeedbackMode(settings_doc.get("feedback_mode", "immediate")),
            point_scale=Fraction(str(settings_doc.get("point_scale", 100))),
        )
        entries: list[QuizEntry] = []
        for entry_doc in doc["items"]:
            label = str(entry_doc["label"])
            item: Optional[Item] = None
            generator: Optional[GeneratorRef] = None
            if "generator" in entry_doc:
                gen = entry_doc["generator"]
                generator = GeneratorRef(
                    kind=gen.get("kind", "det_quadratic"),
                    root_range=tuple(gen.get("root_range", (-9, 9))),
                    entry_range=tuple(gen.get("entry_range", (-9, 9))),
                )
            elif "item" in entry_doc:
                item = bankmod.item_from_doc(entry_doc["item"])
            elif "ref" in entry_doc:
                ref = str(entry_doc["ref"])
                if ref not in items_by_id:
                    raise QuizFormatError(f"unresolved item ref {ref!r}")
                item = items_by_id[ref]
            else:
                raise QuizFormatError(f"entry {label!r} has no item, ref, or generator")
            entries.append(
                QuizEntry(
                    label=label,
                    item=item,
                    generator=generator,
                    points=_fraction_or_none(entry_doc.get("points"), label),
                    difficulty=float(entry_doc.get("difficulty", 0.0)),
                    field_difficulty={
                        str(k): float(v)
                        for k, v in entry_doc.get("field_difficulty", {}).items()
                    },
                )
            )
        ordering = doc.get("root_order", "any_order")
        return Quiz(
            id=str(doc["id"]),
            title=str(doc.get("title", "")),
            entries=tuple(entries),
            settings=settings,
            grading_policy=GradingPolicy(ordering=Ordering(ordering)),
        )
    except QuizFormatError:
        raise
    except (KeyError, TypeError, ValueError, bankmod.BankFormatError) as exc:
        raise QuizFormatError(f"malformed quiz document: {exc}") from exc


def parse_quiz(text: str, items_by_id: Mapping[str, Item] | None = None) -> Quiz:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QuizFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != QUIZ_FORMAT:
        raise QuizFormatError(f"missing format marker {QUIZ_FORMAT!r}")
    if doc.get("version") != QUIZ_VERSION:
        raise QuizFormatError(f"unsupported quiz version {doc.get('version')!r}")
    return quiz_from_doc(doc, items_by_id)


def load_quiz(path: str | Path, items_by_id: Mapping[str, Item] | None = None) -> Quiz:
    return parse_quiz(Path(path).read_text(encoding="utf-8"), items_by_id)
