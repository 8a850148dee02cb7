"""Item model and grading engine.

Three item kinds: stepwise numeric items graded field by field with weighted
partial credit, single-answer multiple choice, and drag-and-drop slot
matching. Grading compares exact rationals against exact keys; there is no
float tolerance anywhere. Items are immutable and grading is pure, so
everything here can be used concurrently without locks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .mathcore import DetTaskSpec, format_polynomial, generate_det_task


class AssessmentError(Exception):
    """Base class for grading errors."""


class Unparseable(AssessmentError):
    """Raw answer text does not denote a rational number."""


class UnknownItem(AssessmentError):
    """Submission references an item that does not exist."""


class IndexOutOfRange(AssessmentError):
    """Chosen option index outside the option list."""


class DuplicateToken(AssessmentError):
    """Drag-and-drop mapping places one token in several slots."""


class InvalidSlot(AssessmentError):
    """Drag-and-drop submission names an unknown slot or token."""


class Verdict(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    MISSING = "missing"
    UNPARSEABLE = "unparseable"


class Ordering(str, Enum):
    ANY_ORDER = "any_order"
    ASCENDING_REQUIRED = "ascending_required"


class RevealMode(str, Enum):
    ALL_AT_ONCE = "all_at_once"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class GradingPolicy:
    ordering: Ordering = Ordering.ANY_ORDER


@dataclass(frozen=True)
class FieldKey:
    """One validated answer box: label, exact expected value, weight.

    Fields sharing a ``group`` are interchangeable under the any-order
    policy (e.g. the two roots of a quadratic); grouped fields must carry
    equal weights.
    """

    label: str
    expected: Fraction
    weight: Fraction
    group: Optional[str] = None
    feedback: Optional[str] = None


@dataclass(frozen=True)
class Step:
    prompt: str
    fields: tuple[FieldKey, ...]


@dataclass(frozen=True)
class StepwiseItem:
    """Multi-step numeric item; each step holds one or more graded fields."""

    id: str
    prompt: str
    steps: tuple[Step, ...]
    reveal_mode: RevealMode = RevealMode.ALL_AT_ONCE

    @property
    def fields(self) -> tuple[FieldKey, ...]:
        return tuple(f for step in self.steps for f in step.fields)

    def step_of(self, label: str) -> int:
        """1-based step number containing the labelled field."""
        for idx, step in enumerate(self.steps, start=1):
            if any(f.label == label for f in step.fields):
                return idx
        raise KeyError(label)


@dataclass(frozen=True)
class MultipleChoiceItem:
    id: str
    prompt: str
    options: tuple[str, ...]
    correct_index: int
    shuffle: bool = True


@dataclass(frozen=True)
class DragDropItem:
    """Slot/token matching; tokens beyond the slots act as distractors."""

    id: str
    prompt: str
    slots: tuple[str, ...]
    tokens: tuple[str, ...]
    answer: Mapping[str, str]
    image_ref: Optional[str] = None


Item = Union[StepwiseItem, MultipleChoiceItem, DragDropItem]

# Payload conventions: stepwise -> {field label: raw text}, multiple choice
# -> chosen option index, drag-drop -> partial {slot: token} mapping.
Payload = Union[Mapping[str, str], int]


@dataclass(frozen=True)
class Submission:
    item_id: str
    payload: Payload


@dataclass(frozen=True)
class PartVerdict:
    part: str
    verdict: Verdict
    feedback: str


@dataclass(frozen=True)
class GradeResult:
    """Outcome of grading one submission.

    ``score`` is an exact rational in [0, 1]; ``field_scores`` holds the 0/1
    sub-score per graded part (fields, the single choice, or slots).
    """

    score: Fraction
    per_part: tuple[PartVerdict, ...]
    field_scores: Mapping[str, int]


_MINUS_VARIANTS = str.maketrans({"−": "-", "–": "-"})


def parse_numeric_answer(raw: str) -> Fraction:
    """Parse student input as an exact rational.

    Accepts optional sign, integers, finite decimals, and fractions "p/q"
    with nonzero q; surrounding whitespace and unicode minus variants are
    tolerated. Raises Unparseable otherwise.
    """
    text = raw.translate(_MINUS_VARIANTS).strip()
    if not text:
        raise Unparseable("empty answer")
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise Unparseable(f"cannot read {raw!r} as a number") from exc


def _correct_feedback() -> str:
    return "Correct."


def _incorrect_feedback(item: StepwiseItem, key: FieldKey) -> str:
    if key.feedback:
        return key.feedback
    return f"Check step {item.step_of(key.label)}."


def _grade_group_any_order(
    keys: Sequence[FieldKey],
    parsed: Mapping[str, Fraction],
) -> dict[str, bool]:
    """Grade one canonicalization group under the any-order policy.

    With every field answered, submitted values are sorted and compared
    position by position against the sorted keys; the i-th comparison is
    charged to the field holding the i-th smallest key. When some fields are
    missing or unparseable, the remaining values are matched greedily against
    the unused keys so a bad entry in one box never drags down another.
    """
    if len(parsed) == len(keys):
        fields_by_key = sorted(keys, key=lambda k: k.expected)
        values = sorted(parsed.values())
        return {
            f.label: value == f.expected
            for f, value in zip(fields_by_key, values)
        }
    remaining = sorted(k.expected for k in keys)
    result: dict[str, bool] = {}
    for label, value in sorted(parsed.items(), key=lambda kv: kv[1]):
        if value in remaining:
            remaining.remove(value)
            result[label] = True
        else:
            result[label] = False
    return result


def grade_stepwise(
    item: StepwiseItem,
    sub: Submission,
    policy: GradingPolicy = GradingPolicy(),
) -> GradeResult:
    """Grade a stepwise submission with weighted per-field partial credit.

    Each field is parsed and compared exactly against its key. Fields in the
    same canonicalization group are matched as a multiset under
    ``any_order`` or positionally under ``ascending_required``. The score is
    the weight-sum of correct fields; feedback names the failing step.
    """
    if sub.item_id != item.id:
        raise UnknownItem(f"submission targets {sub.item_id!r}, not {item.id!r}")
    payload = sub.payload if isinstance(sub.payload, Mapping) else {}

    verdicts: dict[str, Verdict] = {}
    parsed: dict[str, Fraction] = {}
    for key in item.fields:
        raw = payload.get(key.label)
        if raw is None or not str(raw).strip():
            verdicts[key.label] = Verdict.MISSING
            continue
        try:
            parsed[key.label] = parse_numeric_answer(str(raw))
        except Unparseable:
            verdicts[key.label] = Verdict.UNPARSEABLE

    correct: dict[str, bool] = {}
    groups: dict[str, list[FieldKey]] = {}
    for key in item.fields:
        if key.group is not None and policy.ordering is Ordering.ANY_ORDER:
            groups.setdefault(key.group, []).append(key)
        elif key.label in parsed:
            correct[key.label] = parsed[key.label] == key.expected
    for keys in groups.values():
        in_group = {k.label: parsed[k.label] for k in keys if k.label in parsed}
        correct.update(_grade_group_any_order(keys, in_group))

    per_part: list[PartVerdict] = []
    field_scores: dict[str, int] = {}
    score = Fraction(0)
    for key in item.fields:
        if key.label in correct:
            verdicts[key.label] = (
                Verdict.CORRECT if correct[key.label] else Verdict.INCORRECT
            )
        ok = verdicts[key.label] is Verdict.CORRECT
        field_scores[key.label] = 1 if ok else 0
        if ok:
            score += key.weight
        if verdicts[key.label] is Verdict.CORRECT:
            feedback = _correct_feedback()
        elif verdicts[key.label] is Verdict.MISSING:
            feedback = "No answer given."
        elif verdicts[key.label] is Verdict.UNPARSEABLE:
            feedback = "Could not read this as a number."
        else:
            feedback = _incorrect_feedback(item, key)
        per_part.append(PartVerdict(key.label, verdicts[key.label], feedback))
    return GradeResult(score, tuple(per_part), field_scores)


def grade_multiple_choice(item: MultipleChoiceItem, sub: Submission) -> GradeResult:
    """Score 1 iff the chosen index is the correct option, else 0."""
    if sub.item_id != item.id:
        raise UnknownItem(f"submission targets {sub.item_id!r}, not {item.id!r}")
    chosen = sub.payload
    if not isinstance(chosen, int) or isinstance(chosen, bool):
        raise IndexOutOfRange(f"choice must be an option index, got {chosen!r}")
    if not (0 <= chosen < len(item.options)):
        raise IndexOutOfRange(f"option {chosen} outside 0..{len(item.options) - 1}")
    ok = chosen == item.correct_index
    verdict = Verdict.CORRECT if ok else Verdict.INCORRECT
    feedback = _correct_feedback() if ok else "That option is not correct."
    return GradeResult(
        Fraction(1 if ok else 0),
        (PartVerdict("choice", verdict, feedback),),
        {"choice": 1 if ok else 0},
    )


def grade_drag_drop(item: DragDropItem, sub: Submission) -> GradeResult:
    """Score correct slots / total slots; unfilled slots count as missing."""
    if sub.item_id != item.id:
        raise UnknownItem(f"submission targets {sub.item_id!r}, not {item.id!r}")
    mapping = sub.payload if isinstance(sub.payload, Mapping) else {}
    for slot in mapping:
        if slot not in item.slots:
            raise InvalidSlot(f"unknown slot {slot!r}")
    for token in mapping.values():
        if token not in item.tokens:
            raise InvalidSlot(f"unknown token {token!r}")
    placed = list(mapping.values())
    if len(placed) != len(set(placed)):
        raise DuplicateToken("a token may occupy only one slot")

    per_part: list[PartVerdict] = []
    field_scores: dict[str, int] = {}
    n_correct = 0
    for slot in item.slots:
        token = mapping.get(slot)
        if token is None:
            verdict, feedback = Verdict.MISSING, "Slot left empty."
        elif token == item.answer[slot]:
            verdict, feedback = Verdict.CORRECT, _correct_feedback()
            n_correct += 1
        else:
            verdict, feedback = Verdict.INCORRECT, f"{token!r} does not belong here."
        field_scores[slot] = 1 if verdict is Verdict.CORRECT else 0
        per_part.append(PartVerdict(slot, verdict, feedback))
    return GradeResult(
        Fraction(n_correct, len(item.slots)),
        tuple(per_part),
        field_scores,
    )


def grade(item: Item, sub: Submission, policy: GradingPolicy = GradingPolicy()) -> GradeResult:
    """Dispatch to the grader for the item's kind."""
    if isinstance(item, StepwiseItem):
        return grade_stepwise(item, sub, policy)
    if isinstance(item, MultipleChoiceItem):
        return grade_multiple_choice(item, sub)
    if isinstance(item, DragDropItem):
        return grade_drag_drop(item, sub)
    raise TypeError(f"cannot grade {type(item).__name__}")


@dataclass(frozen=True)
class Issue:
    """One bank validation finding; issues are data, not exceptions."""

    code: str
    item_id: str
    message: str


def _validate_stepwise(item: StepwiseItem) -> list[Issue]:
    issues: list[Issue] = []
    if not item.steps:
        issues.append(Issue("EmptySteps", item.id, "item has no steps"))
        return issues
    if any(not step.fields for step in item.steps):
        issues.append(Issue("EmptyStep", item.id, "a step has no fields"))
    labels = [f.label for f in item.fields]
    if len(labels) != len(set(labels)):
        issues.append(Issue("DuplicateFieldLabel", item.id, "field labels repeat"))
    total = sum((f.weight for f in item.fields), Fraction(0))
    if total != 1:
        issues.append(Issue("WeightSum", item.id, f"field weights sum to {total}, not 1"))
    if any(f.weight < 0 for f in item.fields):
        issues.append(Issue("NegativeWeight", item.id, "field weight below zero"))
    groups: dict[str, set[Fraction]] = {}
    for f in item.fields:
        if f.group is not None:
            groups.setdefault(f.group, set()).add(f.weight)
    for name, weights in groups.items():
        if len(weights) > 1:
            issues.append(
                Issue("GroupWeightMismatch", item.id, f"group {name!r} mixes weights")
            )
    return issues


def _validate_multiple_choice(item: MultipleChoiceItem) -> list[Issue]:
    issues: list[Issue] = []
    if len(item.options) < 2:
        issues.append(Issue("TooFewOptions", item.id, "need at least two options"))
    if not (0 <= item.correct_index < len(item.options)):
        issues.append(
            Issue("CorrectIndexRange", item.id, f"correct_index {item.correct_index} out of range")
        )
    return issues


def _validate_drag_drop(item: DragDropItem) -> list[Issue]:
    issues: list[Issue] = []
    if len(item.tokens) < len(item.slots):
        issues.append(Issue("TokenShortage", item.id, "fewer tokens than slots"))
    if set(item.answer.keys()) != set(item.slots):
        issues.append(Issue("AnswerNotTotal", item.id, "answer must map every slot"))
    placed = list(item.answer.values())
    if len(placed) != len(set(placed)):
        issues.append(Issue("AnswerNotInjective", item.id, "answer reuses a token"))
    if any(t not in item.tokens for t in placed):
        issues.append(Issue("UnknownAnswerToken", item.id, "answer uses a token not offered"))
    return issues


def validate_bank(bank: Sequence[Item]) -> list[Issue]:
    """Collect every invariant violation in a bank; empty list iff well-formed."""
    issues: list[Issue] = []
    seen: set[str] = set()
    for item in bank:
        if item.id in seen:
            issues.append(Issue("DuplicateId", item.id, "item id repeats"))
        seen.add(item.id)
        if isinstance(item, StepwiseItem):
            issues.extend(_validate_stepwise(item))
        elif isinstance(item, MultipleChoiceItem):
            issues.extend(_validate_multiple_choice(item))
        elif isinstance(item, DragDropItem):
            issues.extend(_validate_drag_drop(item))
        else:
            issues.append(Issue("UnknownType", getattr(item, "id", "?"), "unsupported item"))
    return issues


def _matrix_markup(matrix) -> str:
    rows = " \\\\ ".join(
        " & ".join(format_polynomial(e) for e in row) for row in matrix.entries
    )
    return f"\\begin{{vmatrix}} {rows} \\end{{vmatrix}} = 0"


COEFFICIENT_LABELS = ("E", "F", "G")
ROOT_LABELS = ("H", "I")
ROOT_GROUP = "roots"


def instantiate_generated_item(spec: DetTaskSpec, item_id: str | None = None) -> StepwiseItem:
    """Wrap a generated determinant task into a two-step item.

    Step 1 asks for the quadratic's coefficients (fields E, F, G), step 2 for
    its roots (fields H, I, one canonicalization group). All five fields are
    weighted equally. Deterministic for a given spec.
    """
    task = generate_det_task(spec)
    a, b, c = task.coefficients
    weight = Fraction(1, 5)
    coeff_fields = tuple(
        FieldKey(label, value, weight)
        for label, value in zip(COEFFICIENT_LABELS, (a, b, c))
    )
    root_fields = tuple(
        FieldKey(label, root, weight, group=ROOT_GROUP)
        for label, root in zip(ROOT_LABELS, task.roots.roots)
    )
    return StepwiseItem(
        id=item_id or f"det-task-{spec.seed}",
        prompt=(
            "Find the values of x for which the determinant vanishes: "
            f"$${_matrix_markup(task.matrix)}$$"
        ),
        steps=(
            Step(
                "Expand the determinant into a quadratic E x^2 + F x + G = 0 "
                "and enter the coefficients.",
                coeff_fields,
            ),
            Step("Solve the quadratic equation for its two roots.", root_fields),
        ),
    )


def shuffle_options(item: MultipleChoiceItem, order: Sequence[int]) -> MultipleChoiceItem:
    """Re-order options by the given permutation, keeping the key attached."""
    if sorted(order) != list(range(len(item.options))):
        raise ValueError("order must be a permutation of the option indices")
    options = tuple(item.options[i] for i in order)
    return replace(item, options=options, correct_index=order.index(item.correct_index))
