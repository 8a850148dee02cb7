"""HTTP API over the session engine and the analytics pipeline.

Routes (all JSON unless stated):

- ``GET  /api/quizzes`` — quiz summaries
- ``POST /api/quizzes/{quiz_id}/attempts`` ``{student_id, seed?}`` — start an
  attempt; response carries display-ready items with all key material removed
- ``POST /api/attempts/{attempt_id}/answers`` ``{item_id, payload}`` — grade
  one answer; body of the reply depends on the quiz feedback mode
- ``POST /api/attempts/{attempt_id}/finalize`` — close and score
- ``GET  /api/attempts/{attempt_id}`` — current redacted state
- ``POST /api/admin/banks`` — bank document; replies with validation issues
- ``GET  /api/admin/export?quiz=..&granularity=..`` — response-matrix CSV
- ``POST /api/admin/analysis`` — ``{quiz_id, granularity}`` or a raw CSV body
  (content-type text/csv); replies with the reliability report document

Errors use a stable ``{code, message, detail?}`` shape: 404 for unknown ids,
409 for state conflicts (ATTEMPT_LIMIT, ATTEMPT_NOT_ACTIVE, TIME_EXPIRED,
ALREADY_FINALIZED), 422 for validation failures.

The service holds no grading or statistics logic; every state change flows
through the session store and its event log.
"""

from __future__ import annotations

from datetime import datetime, timezone
from typing import Any, Callable, Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import bank as bankmod
from .assessment import (
    AssessmentError,
    DragDropItem,
    GradeResult,
    Item,
    MultipleChoiceItem,
    StepwiseItem,
    validate_bank,
)
from .matrix import ResponseMatrix
from .psychometrics import (
    InsufficientData,
    PsychometricsError,
    ReportConfig,
    reliability_report,
    report_to_doc,
)
from .session import (
    AlreadyFinalized,
    Attempt,
    AttemptLimitReached,
    AttemptNotActive,
    AttemptState,
    FeedbackMode,
    Granularity,
    Quiz,
    SessionStore,
    TimeExpired,
    UnknownAttempt,
    UnknownItem,
    UnknownQuiz,
    summarize,
)

Clock = Callable[[], datetime]


class ApiFailure(Exception):
    """Carries a stable error code plus the HTTP status to map it to."""

    def __init__(self, status: int, code: str, message: str, detail: Any = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


_ERROR_MAP: tuple[tuple[type[Exception], int, str], ...] = (
    (UnknownQuiz, 404, "UNKNOWN_QUIZ"),
    (UnknownAttempt, 404, "UNKNOWN_ATTEMPT"),
    (UnknownItem, 404, "UNKNOWN_ITEM"),
    (AttemptLimitReached, 409, "ATTEMPT_LIMIT"),
    (AttemptNotActive, 409, "ATTEMPT_NOT_ACTIVE"),
    (TimeExpired, 409, "TIME_EXPIRED"),
    (AlreadyFinalized, 409, "ALREADY_FINALIZED"),
    (AssessmentError, 422, "INVALID_SUBMISSION"),
    (InsufficientData, 422, "INSUFFICIENT_DATA"),
    (PsychometricsError, 422, "ANALYSIS_ERROR"),
)


def _translate(exc: Exception) -> ApiFailure:
    for etype, status, code in _ERROR_MAP:
        if isinstance(exc, etype):
            return ApiFailure(status, code, str(exc))
    raise exc


# -- redacted views ----------------------------------------------------------


def item_view(item: Item, label: str) -> dict:
    """Client-safe item rendering: prompts and structure only, never keys."""
    if isinstance(item, StepwiseItem):
        return {
            "type": "stepwise",
            "id": item.id,
            "label": label,
            "prompt": item.prompt,
            "reveal_mode": item.reveal_mode.value,
            "steps": [
                {
                    "prompt": step.prompt,
                    "fields": [{"label": f.label} for f in step.fields],
                }
                for step in item.steps
            ],
        }
    if isinstance(item, MultipleChoiceItem):
        return {
            "type": "multiple_choice",
            "id": item.id,
            "label": label,
            "prompt": item.prompt,
            "options": list(item.options),
        }
    if isinstance(item, DragDropItem):
        return {
            "type": "drag_drop",
            "id": item.id,
            "label": label,
            "prompt": item.prompt,
            "image_ref": item.image_ref,
            "slots": list(item.slots),
            "tokens": list(item.tokens),
        }
    raise TypeError(f"cannot render {type(item).__name__}")


def feedback_view(result: GradeResult) -> dict:
    return {
        "score": float(result.score),
        "parts": [
            {"part": p.part, "verdict": p.verdict.value, "feedback": p.feedback}
            for p in result.per_part
        ],
        "field_scores": {k: v for k, v in result.field_scores.items()},
    }


def summary_view(quiz: Quiz, attempt: Attempt) -> dict:
    summary = summarize(quiz, attempt)
    return {
        "attempt_id": summary.attempt_id,
        "total": float(summary.total),
        "max_total": float(summary.max_total),
        "per_item": [
            {
                "item_id": s.item_id,
                "label": s.label,
                "score": float(s.score),
                "points_awarded": float(s.points_awarded),
                "points_max": float(s.points_max),
                "answered": s.answered,
            }
            for s in summary.per_item
        ],
    }


def attempt_view(quiz: Quiz, attempt: Attempt) -> dict:
    """Full redacted attempt state for the client."""
    deadline = attempt.deadline(quiz.settings)
    show_feedback = (
        quiz.settings.feedback_mode is FeedbackMode.IMMEDIATE
        or attempt.state is AttemptState.FINALIZED
    )
    responses = {}
    for item_id, record in attempt.responses.items():
        entry: dict[str, Any] = {
            "submitted": record.submission.payload,
            "at": record.at.isoformat(),
        }
        if show_feedback:
            entry["feedback"] = feedback_view(record.result)
        responses[item_id] = entry
    view = {
        "attempt_id": attempt.id,
        "quiz_id": attempt.quiz_id,
        "student_id": attempt.student_id,
        "state": attempt.state.value,
        "started_at": attempt.started_at.isoformat(),
        "deadline": deadline.isoformat() if deadline else None,
        "feedback_mode": quiz.settings.feedback_mode.value,
        "items": [
            item_view(item, label)
            for item, label in zip(attempt.items, attempt.labels)
        ],
        "responses": responses,
    }
    if attempt.state is AttemptState.FINALIZED:
        view["summary"] = summary_view(quiz, attempt)
    return view


def quiz_summary_view(quiz: Quiz) -> dict:
    return {
        "id": quiz.id,
        "title": quiz.title,
        "item_count": len(quiz.entries),
        "settings": {
            "max_attempts": quiz.settings.max_attempts,
            "time_limit": quiz.settings.time_limit,
            "shuffle_options": quiz.settings.shuffle_options,
            "feedback_mode": quiz.settings.feedback_mode.value,
            "point_scale": float(quiz.settings.point_scale),
        },
    }


# -- request bodies ----------------------------------------------------------


class AttemptCreate(BaseModel):
    student_id: str
    seed: Optional[int] = None


class AnswerBody(BaseModel):
    item_id: str
    payload: Any


def create_app(
    store: SessionStore,
    items_by_id: Optional[dict[str, Item]] = None,
    clock: Optional[Clock] = None,
    cors_origin: Optional[str] = None,
) -> FastAPI:
    """Build the API around an existing session store."""
    app = FastAPI(title="stepquiz", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.items_by_id = dict(items_by_id or {})
    app.state.clock = clock or (lambda: datetime.now(timezone.utc))

    if cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(ApiFailure)
    async def _api_failure(_request: Request, exc: ApiFailure) -> JSONResponse:
        body = {"code": exc.code, "message": exc.message}
        if exc.detail is not None:
            body["detail"] = exc.detail
        return JSONResponse(status_code=exc.status, content=body)

    def guarded(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (Exception) as exc:
            if isinstance(exc, ApiFailure):
                raise
            raise _translate(exc) from exc

    @app.get("/api/quizzes")
    def list_quizzes() -> list[dict]:
        return [quiz_summary_view(q) for q in store.quizzes()]

    @app.post("/api/quizzes/{quiz_id}/attempts", status_code=201)
    def start_attempt(quiz_id: str, body: AttemptCreate) -> dict:
        attempt = guarded(
            store.start_attempt,
            quiz_id,
            body.student_id,
            body.seed,
            now=app.state.clock(),
        )
        return attempt_view(store.quiz(quiz_id), attempt)

    @app.get("/api/attempts/{attempt_id}")
    def get_attempt(attempt_id: str) -> dict:
        attempt = guarded(store.get, attempt_id)
        return attempt_view(store.quiz(attempt.quiz_id), attempt)

    @app.post("/api/attempts/{attempt_id}/answers")
    def submit_answer(attempt_id: str, body: AnswerBody) -> dict:
        outcome = guarded(
            store.submit_answer,
            attempt_id,
            body.item_id,
            body.payload,
            now=app.state.clock(),
        )
        reply: dict[str, Any] = {
            "item_id": outcome.item_id,
            "received": True,
            "feedback_mode": outcome.mode.value,
        }
        if outcome.feedback is not None:
            reply["feedback"] = feedback_view(outcome.feedback)
        return reply

    @app.post("/api/attempts/{attempt_id}/finalize")
    def finalize(attempt_id: str) -> dict:
        guarded(store.finalize, attempt_id, now=app.state.clock())
        attempt = store.get(attempt_id)
        return summary_view(store.quiz(attempt.quiz_id), attempt)

    @app.post("/api/admin/banks")
    async def upload_bank(request: Request) -> dict:
        text = (await request.body()).decode("utf-8")
        try:
            items = bankmod.parse_bank(text)
        except bankmod.BankFormatError as exc:
            raise ApiFailure(422, "UNPARSEABLE_BANK", str(exc))
        issues = validate_bank(items)
        if issues:
            raise ApiFailure(
                422,
                "BANK_INVALID",
                f"{len(issues)} validation issue(s)",
                detail=[
                    {"code": i.code, "item_id": i.item_id, "message": i.message}
                    for i in issues
                ],
            )
        for item in items:
            app.state.items_by_id[item.id] = item
        return {"accepted": True, "items": len(items)}

    @app.get("/api/admin/export")
    def export(quiz: str, granularity: str = "item_totals") -> Response:
        try:
            gran = Granularity(granularity)
        except ValueError:
            raise ApiFailure(422, "BAD_GRANULARITY", f"unknown granularity {granularity!r}")
        matrix = guarded(store.export_matrix, quiz, gran)
        return Response(content=matrix.to_csv(), media_type="text/csv")

    @app.post("/api/admin/analysis")
    async def analysis(request: Request) -> dict:
        content_type = request.headers.get("content-type", "")
        if "csv" in content_type:
            text = (await request.body()).decode("utf-8")
            try:
                matrix = ResponseMatrix.from_csv(text)
            except ValueError as exc:
                raise ApiFailure(422, "BAD_CSV", str(exc))
            config = ReportConfig(
                granularity=request.query_params.get("granularity", "items")
            )
        else:
            doc = await request.json()
            quiz_id = doc.get("quiz_id")
            if not quiz_id:
                raise ApiFailure(422, "BAD_REQUEST", "quiz_id is required")
            gran = (
                Granularity.WITH_FIELD_SUBSCORES
                if doc.get("granularity") == "fields"
                else Granularity.ITEM_TOTALS
            )
            matrix = guarded(store.export_matrix, quiz_id, gran)
            config = ReportConfig(
                granularity="fields" if doc.get("granularity") == "fields" else "items"
            )
        report = guarded(reliability_report, matrix, config)
        return report_to_doc(report)

    return app
