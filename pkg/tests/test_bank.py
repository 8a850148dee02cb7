import json

import pytest

from stepquiz.bank import (
    BankFormatError,
    load_bank,
    parse_bank,
    serialize_bank,
)


def test_fixture_bank_loads(bank_items):
    kinds = {type(item).__name__ for item in bank_items}
    assert kinds == {"StepwiseItem", "MultipleChoiceItem", "DragDropItem"}
    assert len(bank_items) == 5


def test_round_trip_is_identity(bank_items):
    text = serialize_bank(bank_items)
    again = parse_bank(text)
    assert again == bank_items
    assert serialize_bank(again) == text


def test_fixture_file_round_trips_exact_rationals(bank_path):
    items = load_bank(bank_path)
    det = next(i for i in items if i.id == "det-quadratic-c")
    keys = {f.label: f.expected for f in det.fields}
    assert keys == {"E": 1, "F": -3, "G": 2, "H": 1, "I": 2}
    weights = {f.weight for f in det.fields}
    assert len(weights) == 1


def test_rejects_non_json():
    with pytest.raises(BankFormatError):
        parse_bank("not json at all")


def test_rejects_wrong_format_marker():
    with pytest.raises(BankFormatError):
        parse_bank(json.dumps({"format": "something-else", "version": 1, "items": []}))


def test_rejects_wrong_version():
    with pytest.raises(BankFormatError):
        parse_bank(json.dumps({"format": "stepquiz-bank", "version": 99, "items": []}))


def test_rejects_irrational_key():
    doc = {
        "format": "stepquiz-bank",
        "version": 1,
        "items": [
            {
                "type": "stepwise",
                "id": "bad",
                "prompt": "p",
                "steps": [
                    {
                        "prompt": "s",
                        "fields": [
                            {"label": "A", "expected": "sqrt(2)", "weight": "1"}
                        ],
                    }
                ],
            }
        ],
    }
    with pytest.raises(BankFormatError):
        parse_bank(json.dumps(doc))


def test_rejects_unknown_item_type():
    doc = {
        "format": "stepquiz-bank",
        "version": 1,
        "items": [{"type": "essay", "id": "x", "prompt": "p"}],
    }
    with pytest.raises(BankFormatError):
        parse_bank(json.dumps(doc))
