"""Response matrix: students x score columns, with a missing mask.

This is the bridge between graded attempts and the analytics layer. The CSV
form is the interchange format: first column ``student_id``, then one column
per descriptor label, header row mandatory, empty cell for a missing score.

Column-label conventions (documented for CSV consumers):

- the total column is labelled ``A-total`` (any ``*-total`` label is treated
  as a total on read);
- item-total columns carry the item's short label (``B``, ``C``, ``D``);
- field sub-score columns are ``<item label>.<field label>`` (``C.E``), and
  analytics display just the field part, so heatmaps read E..I.

A CSV without dots or ``-total`` labels (a plain gradebook) reads as pure
item columns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

TOTAL_LABEL = "A-total"


class ColumnKind(str, Enum):
    TOTAL = "total"
    ITEM = "item"
    FIELD = "field"


@dataclass(frozen=True)
class ColumnSpec:
    """One score column: its CSV label, kind, and display name."""

    label: str
    kind: ColumnKind

    @property
    def display(self) -> str:
        if self.kind is ColumnKind.FIELD and "." in self.label:
            return self.label.split(".", 1)[1]
        return self.label

    @classmethod
    def infer(cls, label: str) -> "ColumnSpec":
        if label.endswith("-total"):
            return cls(label, ColumnKind.TOTAL)
        if "." in label:
            return cls(label, ColumnKind.FIELD)
        return cls(label, ColumnKind.ITEM)


@dataclass(frozen=True)
class ResponseMatrix:
    """Rectangular score table; ``None`` cells mark missing responses."""

    student_ids: tuple[str, ...]
    columns: tuple[ColumnSpec, ...]
    cells: tuple[tuple[Optional[float], ...], ...]

    def __post_init__(self):
        labels = [c.label for c in self.columns]
        if len(labels) != len(set(labels)):
            raise ValueError("column labels must be unique")
        for row in self.cells:
            if len(row) != len(self.columns):
                raise ValueError("matrix must be rectangular")
        if len(self.cells) != len(self.student_ids):
            raise ValueError("one row per student required")

    @property
    def n_rows(self) -> int:
        return len(self.student_ids)

    def column_labels(self, kind: ColumnKind | None = None) -> list[str]:
        return [c.label for c in self.columns if kind is None or c.kind is kind]

    def column(self, label: str) -> list[Optional[float]]:
        idx = next(i for i, c in enumerate(self.columns) if c.label == label)
        return [row[idx] for row in self.cells]

    def select(self, labels: Sequence[str]) -> "ResponseMatrix":
        """Sub-matrix keeping the named columns, in the given order."""
        index = {c.label: i for i, c in enumerate(self.columns)}
        missing = [l for l in labels if l not in index]
        if missing:
            raise KeyError(f"unknown columns: {missing}")
        cols = tuple(self.columns[index[l]] for l in labels)
        cells = tuple(tuple(row[index[l]] for l in labels) for row in self.cells)
        return ResponseMatrix(self.student_ids, cols, cells)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["student_id"] + [c.label for c in self.columns])
        for sid, row in zip(self.student_ids, self.cells):
            writer.writerow([sid] + ["" if v is None else _format_cell(v) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResponseMatrix":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV: header row is mandatory") from None
        if not header or header[0] != "student_id":
            raise ValueError("first column must be student_id")
        columns = tuple(ColumnSpec.infer(label) for label in header[1:])
        students: list[str] = []
        cells: list[tuple[Optional[float], ...]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"line {lineno}: expected {len(header)} cells")
            students.append(row[0])
            cells.append(tuple(float(v) if v.strip() else None for v in row[1:]))
        return cls(tuple(students), columns, tuple(cells))


def _format_cell(value: float) -> str:
    # Integral scores print as integers; repr keeps the float round trip exact.
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def load_matrix(path: str | Path) -> ResponseMatrix:
    return ResponseMatrix.from_csv(Path(path).read_text(encoding="utf-8"))


def save_matrix(matrix: ResponseMatrix, path: str | Path) -> None:
    Path(path).write_text(matrix.to_csv(), encoding="utf-8")
