import pytest

from stepquiz.matrix import ColumnKind, ColumnSpec, ResponseMatrix, TOTAL_LABEL


def sample_matrix() -> ResponseMatrix:
    columns = (
        ColumnSpec(TOTAL_LABEL, ColumnKind.TOTAL),
        ColumnSpec("B", ColumnKind.ITEM),
        ColumnSpec("C", ColumnKind.ITEM),
        ColumnSpec("C.E", ColumnKind.FIELD),
        ColumnSpec("C.H", ColumnKind.FIELD),
    )
    cells = (
        (50.0, 30.0, 20.0, 1.0, 1.0),
        (12.5, 12.5, None, None, None),
        (0.0, 0.0, 0.0, 0.0, 0.0),
    )
    return ResponseMatrix(("s1", "s2", "s3"), columns, cells)


def test_csv_round_trip():
    m = sample_matrix()
    again = ResponseMatrix.from_csv(m.to_csv())
    assert again == m


def test_csv_missing_cells_empty():
    lines = sample_matrix().to_csv().splitlines()
    assert lines[0] == "student_id,A-total,B,C,C.E,C.H"
    assert lines[2] == "s2,12.5,12.5,,,"


def test_column_kind_inference():
    text = "student_id,A-total,B,C.E\ns1,1,2,3\n"
    m = ResponseMatrix.from_csv(text)
    kinds = [c.kind for c in m.columns]
    assert kinds == [ColumnKind.TOTAL, ColumnKind.ITEM, ColumnKind.FIELD]
    assert m.columns[2].display == "E"


def test_flat_gradebook_reads_as_items():
    text = "student_id,E,F,G\ns1,1,0,1\ns2,0,1,1\n"
    m = ResponseMatrix.from_csv(text)
    assert m.column_labels(ColumnKind.ITEM) == ["E", "F", "G"]
    assert m.column_labels(ColumnKind.FIELD) == []


def test_select_subsets_columns():
    m = sample_matrix()
    sub = m.select(["C.E", "C.H"])
    assert sub.column_labels() == ["C.E", "C.H"]
    assert sub.cells[0] == (1.0, 1.0)
    with pytest.raises(KeyError):
        m.select(["nope"])


def test_rejects_duplicate_labels():
    with pytest.raises(ValueError):
        ResponseMatrix(
            ("s1",),
            (ColumnSpec("B", ColumnKind.ITEM), ColumnSpec("B", ColumnKind.ITEM)),
            ((1.0, 2.0),),
        )


def test_rejects_ragged_rows():
    with pytest.raises(ValueError):
        ResponseMatrix(
            ("s1",),
            (ColumnSpec("B", ColumnKind.ITEM),),
            ((1.0, 2.0),),
        )


def test_rejects_headerless_csv():
    with pytest.raises(ValueError):
        ResponseMatrix.from_csv("")
    with pytest.raises(ValueError):
        ResponseMatrix.from_csv("name,B\ns1,1\n")
