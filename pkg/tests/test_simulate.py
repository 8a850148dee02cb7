import numpy as np
import pytest

from stepquiz.matrix import ColumnKind
from stepquiz.psychometrics import pearson, reliability_report, ReportConfig
from stepquiz.session import Granularity
from stepquiz.simulate import (
    AttemptSimConfig,
    CohortSpec,
    Discretization,
    SimItem,
    SimStudent,
    make_cohort,
    simulate_attempts,
    simulate_matrix,
)


def spec_with(loadings, n=5000, seed=0, disc=Discretization.CONTINUOUS):
    items = tuple(SimItem(f"Q{i}", l) for i, l in enumerate(loadings))
    return CohortSpec(n_students=n, items=items, seed=seed, discretization=disc)


def test_matrix_deterministic_per_seed():
    spec = spec_with([0.5, 0.6], n=50, seed=123)
    assert simulate_matrix(spec) == simulate_matrix(spec)
    other = spec_with([0.5, 0.6], n=50, seed=124)
    assert simulate_matrix(other) != simulate_matrix(spec)


def test_zero_loadings_give_uncorrelated_items():
    m = simulate_matrix(spec_with([0.0, 0.0, 0.0], seed=42))
    labels = m.column_labels()
    for i in range(3):
        for j in range(i + 1, 3):
            r = pearson(m.column(labels[i]), m.column(labels[j]))
            assert abs(r) < 0.05


def test_sample_correlations_track_model():
    loadings = [0.8, 0.7, 0.6]
    m = simulate_matrix(spec_with(loadings, seed=7))
    labels = m.column_labels()
    for i in range(3):
        for j in range(i + 1, 3):
            r = pearson(m.column(labels[i]), m.column(labels[j]))
            assert abs(r - loadings[i] * loadings[j]) < 0.05


def test_pipeline_omega_matches_analytic():
    m = simulate_matrix(spec_with([0.8, 0.7, 0.6], seed=99))
    report = reliability_report(m)
    assert report.omega == pytest.approx(0.745, abs=0.03)


def test_rounded_clamped_stays_in_range():
    items = (SimItem("C", 0.8, difficulty=16, max_points=20),)
    spec = CohortSpec(
        n_students=500, items=items, seed=5, discretization=Discretization.ROUNDED_CLAMPED
    )
    m = simulate_matrix(spec)
    values = [v for v in m.column("C")]
    assert all(v == int(v) for v in values)
    assert min(values) >= 0
    assert max(values) <= 20


def test_loading_bounds_validated():
    with pytest.raises(ValueError):
        SimItem("bad", 1.0)
    with pytest.raises(ValueError):
        CohortSpec(n_students=0, items=(SimItem("a", 0.5),))


# -- attempt simulation -------------------------------------------------------


def test_extreme_ability_limits(exam_quiz):
    top = simulate_attempts(exam_quiz, [SimStudent("ace", 60.0)], AttemptSimConfig(seed=1))
    matrix = top.export_matrix(exam_quiz.id, Granularity.ITEM_TOTALS)
    assert matrix.cells[0][0] == 100.0

    bottom = simulate_attempts(exam_quiz, [SimStudent("zero", -60.0)], AttemptSimConfig(seed=1))
    matrix = bottom.export_matrix(exam_quiz.id, Granularity.ITEM_TOTALS)
    assert matrix.cells[0][0] == 0.0


def test_attempts_deterministic(exam_quiz):
    cohort = make_cohort(10, seed=4)
    s1 = simulate_attempts(exam_quiz, cohort, AttemptSimConfig(seed=4))
    s2 = simulate_attempts(exam_quiz, cohort, AttemptSimConfig(seed=4))
    m1 = s1.export_matrix(exam_quiz.id, Granularity.WITH_FIELD_SUBSCORES)
    m2 = s2.export_matrix(exam_quiz.id, Granularity.WITH_FIELD_SUBSCORES)
    assert m1.to_csv() == m2.to_csv()


def test_cohort_drives_full_pipeline(exam_quiz):
    cohort = make_cohort(92, seed=2026)
    store = simulate_attempts(exam_quiz, cohort, AttemptSimConfig(seed=2026))
    matrix = store.export_matrix(exam_quiz.id, Granularity.WITH_FIELD_SUBSCORES)
    assert matrix.n_rows == 92
    field_labels = matrix.column_labels(ColumnKind.FIELD)
    for expected in ("C.E", "C.F", "C.G", "C.H", "C.I"):
        assert expected in field_labels
    report = reliability_report(matrix, ReportConfig(granularity="fields"))
    assert report.rows_used == 92
    item_report = reliability_report(matrix, ReportConfig(granularity="items"))
    assert item_report.alpha is not None


def test_mixed_item_kinds_simulatable(exam_quiz, items_by_id):
    from fractions import Fraction
    from stepquiz.session import Quiz, QuizEntry, QuizSettings

    quiz = Quiz(
        id="mixed",
        entries=(
            QuizEntry(label="M", item=items_by_id["integration-bounds-mc"]),
            QuizEntry(label="G", item=items_by_id["vector-match-dd"]),
            QuizEntry(label="C", generator=exam_quiz.entries[1].generator),
        ),
        settings=QuizSettings(),
    )
    cohort = make_cohort(25, seed=9)
    store = simulate_attempts(quiz, cohort, AttemptSimConfig(seed=9))
    matrix = store.export_matrix("mixed", Granularity.WITH_FIELD_SUBSCORES)
    assert matrix.n_rows == 25
    for row in matrix.cells:
        assert row[0] is not None
        assert 0 <= row[0] <= 100
