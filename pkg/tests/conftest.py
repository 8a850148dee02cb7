from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import settings

from stepquiz.assessment import FieldKey, Step, StepwiseItem
from stepquiz.bank import load_bank
from stepquiz.session import load_quiz

REPO_ROOT = Path(__file__).resolve().parent.parent
BANKS_DIR = REPO_ROOT / "banks"
DATA_DIR = Path(__file__).resolve().parent / "data"

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: release criterion, one pass/fail line in the summary"
    )


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" in getattr(report, "nodeid", ""):
                name = report.nodeid.split("::")[-1]
                lines.append((name, "PASS" if status == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}")


@pytest.fixture(scope="session")
def bank_path() -> Path:
    return BANKS_DIR / "linalg_bank.json"


@pytest.fixture(scope="session")
def quiz_path() -> Path:
    return BANKS_DIR / "linalg_quiz.json"


@pytest.fixture(scope="session")
def bank_items(bank_path):
    return load_bank(bank_path)


@pytest.fixture(scope="session")
def items_by_id(bank_items):
    return {item.id: item for item in bank_items}


@pytest.fixture(scope="session")
def exam_quiz(quiz_path, items_by_id):
    return load_quiz(quiz_path, items_by_id)


def make_det_item() -> StepwiseItem:
    """The worked determinant-to-quadratic item with keys (1, -3, 2; 1, 2)."""
    w = Fraction(1, 5)
    return StepwiseItem(
        id="det-quadratic-c",
        prompt="Solve det(...) = 0",
        steps=(
            Step(
                "Expand the determinant into E x^2 + F x + G = 0.",
                (
                    FieldKey("E", Fraction(1), w),
                    FieldKey("F", Fraction(-3), w),
                    FieldKey("G", Fraction(2), w),
                ),
            ),
            Step(
                "Solve for the roots.",
                (
                    FieldKey("H", Fraction(1), w, group="roots"),
                    FieldKey("I", Fraction(2), w, group="roots"),
                ),
            ),
        ),
    )


@pytest.fixture
def det_item() -> StepwiseItem:
    return make_det_item()
