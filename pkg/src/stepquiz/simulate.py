"""Synthetic cohorts with known ground truth.

Two generators: `simulate_matrix` draws score columns directly from a
one-factor model (the oracle for the analytics pipeline), and
`simulate_attempts` drives simulated students through the live session
engine so the full attempt -> export -> report path can be exercised.

Both are pure functions of their seed. Student-level randomness comes from
per-student sub-seeds split off the master seed, so per-student streams are
independent of iteration order.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assessment import DragDropItem, MultipleChoiceItem, StepwiseItem
from .matrix import ColumnKind, ColumnSpec, ResponseMatrix
from .session import Quiz, SessionStore, _derive_seed

# Logistic link for answer correctness: P(correct) = sigmoid(SLOPE * (ability
# - item difficulty - field offset)). The 1.7 slope makes the logistic track
# the normal ogive; offsets come from quiz entry metadata.
LOGISTIC_SLOPE = 1.7


class Discretization(str, Enum):
    CONTINUOUS = "continuous"
    ROUNDED_CLAMPED = "rounded_clamped"


@dataclass(frozen=True)
class SimItem:
    """Ground-truth parameters for one simulated score column."""

    label: str
    loading: float
    difficulty: float = 0.0
    max_points: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.loading < 1.0:
            raise ValueError("loading must lie in [0, 1)")


@dataclass(frozen=True)
class CohortSpec:
    n_students: int
    items: tuple[SimItem, ...]
    seed: int = 0
    discretization: Discretization = Discretization.CONTINUOUS

    def __post_init__(self):
        if self.n_students < 1:
            raise ValueError("need at least one student")
        if not self.items:
            raise ValueError("need at least one item")


def simulate_matrix(spec: CohortSpec) -> ResponseMatrix:
    """Draw a response matrix from a one-factor model.

    score = difficulty + loading * ability + sqrt(1 - loading^2) * noise,
    with ability and noise standard normal. Continuous discretization keeps
    the raw draw; rounded_clamped rounds to integers and clamps onto
    [0, max_points].
    """
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n_students, len(spec.items)
    ability = rng.standard_normal(n)
    noise = rng.standard_normal((n, k))
    scores = np.empty((n, k))
    for j, item in enumerate(spec.items):
        scores[:, j] = (
            item.difficulty
            + item.loading * ability
            + math.sqrt(1.0 - item.loading**2) * noise[:, j]
        )
        if spec.discretization is Discretization.ROUNDED_CLAMPED:
            scores[:, j] = np.clip(np.rint(scores[:, j]), 0.0, item.max_points)
    students = tuple(f"s{i + 1:04d}" for i in range(n))
    columns = tuple(ColumnSpec(item.label, ColumnKind.ITEM) for item in spec.items)
    cells = tuple(tuple(float(v) for v in row) for row in scores)
    return ResponseMatrix(students, columns, cells)


@dataclass(frozen=True)
class SimStudent:
    id: str
    ability: float


def make_cohort(n_students: int, seed: int) -> tuple[SimStudent, ...]:
    """Abilities drawn standard normal, one sub-seed per student."""
    rng = np.random.default_rng(seed)
    abilities = rng.standard_normal(n_students)
    return tuple(
        SimStudent(f"s{i + 1:04d}", float(a)) for i, a in enumerate(abilities)
    )


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _p_correct(ability: float, difficulty: float) -> float:
    return _sigmoid(LOGISTIC_SLOPE * (ability - difficulty))


def _wrong_numeric(expected: Fraction, rng: random.Random) -> str:
    delta = rng.choice((-3, -2, -1, 1, 2, 3))
    return str(expected + delta)


SIM_BASE_TIME = datetime(2026, 1, 1, 9, 0, 0, tzinfo=timezone.utc)


@dataclass(frozen=True)
class AttemptSimConfig:
    seed: int = 0
    base_time: datetime = SIM_BASE_TIME
    step_seconds: int = 5


def simulate_attempts(
    quiz: Quiz,
    students: Sequence[SimStudent],
    config: AttemptSimConfig = AttemptSimConfig(),
    log_path: str | Path | None = None,
) -> SessionStore:
    """Drive a cohort through start -> answer -> finalize on a fresh store.

    Field correctness is Bernoulli with the logistic link above; wrong
    stepwise entries are the key plus a small nonzero integer shift, wrong
    choices pick another option, wrong drags place a leftover token (or
    leave the slot empty when none is free). Deterministic per seed; the
    returned store carries a replayable event log when ``log_path`` is set.
    """
    store = SessionStore({quiz.id: quiz}, log_path=log_path)
    clock = config.base_time
    tick = timedelta(seconds=config.step_seconds)
    for index, student in enumerate(students):
        sub_seed = _derive_seed(config.seed, index)
        rng = random.Random(sub_seed)
        attempt = store.start_attempt(quiz.id, student.id, seed=sub_seed, now=clock)
        clock += tick
        for entry, item in zip(quiz.entries, attempt.items):
            payload = _draw_payload(item, entry.difficulty, entry.field_difficulty,
                                    student.ability, rng)
            store.submit_answer(attempt.id, item.id, payload, now=clock)
            clock += tick
        store.finalize(attempt.id, now=clock)
        clock += tick
    return store


def _draw_payload(
    item,
    difficulty: float,
    field_difficulty,
    ability: float,
    rng: random.Random,
):
    if isinstance(item, StepwiseItem):
        payload: dict[str, str] = {}
        for key in item.fields:
            offset = field_difficulty.get(key.label, 0.0)
            if rng.random() < _p_correct(ability, difficulty + offset):
                payload[key.label] = str(key.expected)
            else:
                payload[key.label] = _wrong_numeric(key.expected, rng)
        return payload
    if isinstance(item, MultipleChoiceItem):
        if rng.random() < _p_correct(ability, difficulty):
            return item.correct_index
        wrong = [i for i in range(len(item.options)) if i != item.correct_index]
        return rng.choice(wrong)
    if isinstance(item, DragDropItem):
        hit = {s: rng.random() < _p_correct(ability, difficulty) for s in item.slots}
        mapping = {s: item.answer[s] for s in item.slots if hit[s]}
        used = set(mapping.values())
        for slot in item.slots:
            if hit[slot]:
                continue
            free = [t for t in item.tokens if t != item.answer[slot] and t not in used]
            if free:
                token = rng.choice(free)
                mapping[slot] = token
                used.add(token)
        return mapping
    raise TypeError(f"cannot simulate {type(item).__name__}")
