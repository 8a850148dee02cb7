"""Question-bank file format.

A bank is a single UTF-8 JSON document with a version header and a top-level
list of items tagged by type::

    {
      "format": "stepquiz-bank",
      "version": 1,
      "items": [
        {"type": "stepwise", "id": "...", "prompt": "...", "reveal_mode": "all_at_once",
         "steps": [{"prompt": "...",
                    "fields": [{"label": "E", "expected": "1", "weight": "1/5",
                                "group": null, "feedback": null}]}]},
        {"type": "multiple_choice", "id": "...", "prompt": "...",
         "options": ["..."], "correct_index": 0, "shuffle": true},
        {"type": "drag_drop", "id": "...", "prompt": "...", "image_ref": null,
         "slots": ["..."], "tokens": ["..."], "answer": {"slot": "token"}}
      ]
    }

Rationals (expected values, weights) are encoded as strings such as "-3",
"1/5" or "0.5" so the round trip parse -> serialize -> parse is lossless and
exact. Unknown rational encodings are rejected at load time, which is what
keeps irrational keys out of banks.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from .assessment import (
    DragDropItem,
    FieldKey,
    Item,
    MultipleChoiceItem,
    RevealMode,
    Step,
    StepwiseItem,
)

BANK_FORMAT = "stepquiz-bank"
BANK_VERSION = 1


class BankFormatError(Exception):
    """Bank document is structurally unreadable."""


def _fraction_from(doc: Any, where: str) -> Fraction:
    if isinstance(doc, bool) or not isinstance(doc, (str, int)):
        raise BankFormatError(f"{where}: expected a rational string, got {doc!r}")
    try:
        return Fraction(str(doc))
    except (ValueError, ZeroDivisionError) as exc:
        raise BankFormatError(f"{where}: {doc!r} is not a rational") from exc


def _fraction_to(value: Fraction) -> str:
    return str(value)


def _field_from(doc: dict, item_id: str) -> FieldKey:
    return FieldKey(
        label=str(doc["label"]),
        expected=_fraction_from(doc["expected"], f"{item_id}/{doc.get('label')}"),
        weight=_fraction_from(doc["weight"], f"{item_id}/{doc.get('label')}/weight"),
        group=doc.get("group"),
        feedback=doc.get("feedback"),
    )


def item_from_doc(doc: dict) -> Item:
    """Build one item from its JSON object form."""
    try:
        kind = doc["type"]
        item_id = str(doc["id"])
        if kind == "stepwise":
            steps = tuple(
                Step(
                    prompt=str(step["prompt"]),
                    fields=tuple(_field_from(f, item_id) for f in step["fields"]),
                )
                for step in doc["steps"]
            )
            return StepwiseItem(
                id=item_id,
                prompt=str(doc["prompt"]),
                steps=steps,
                reveal_mode=RevealMode(doc.get("reveal_mode", "all_at_once")),
            )
        if kind == "multiple_choice":
            return MultipleChoiceItem(
                id=item_id,
                prompt=str(doc["prompt"]),
                options=tuple(str(o) for o in doc["options"]),
                correct_index=int(doc["correct_index"]),
                shuffle=bool(doc.get("shuffle", True)),
            )
        if kind == "drag_drop":
            return DragDropItem(
                id=item_id,
                prompt=str(doc["prompt"]),
                slots=tuple(str(s) for s in doc["slots"]),
                tokens=tuple(str(t) for t in doc["tokens"]),
                answer={str(k): str(v) for k, v in doc["answer"].items()},
                image_ref=doc.get("image_ref"),
            )
    except BankFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BankFormatError(f"malformed item document: {exc}") from exc
    raise BankFormatError(f"unknown item type {doc.get('type')!r}")


def item_to_doc(item: Item) -> dict:
    """Serialize one item to its JSON object form."""
    if isinstance(item, StepwiseItem):
        return {
            "type": "stepwise",
            "id": item.id,
            "prompt": item.prompt,
            "reveal_mode": item.reveal_mode.value,
            "steps": [
                {
                    "prompt": step.prompt,
                    "fields": [
                        {
                            "label": f.label,
                            "expected": _fraction_to(f.expected),
                            "weight": _fraction_to(f.weight),
                            "group": f.group,
                            "feedback": f.feedback,
                        }
                        for f in step.fields
                    ],
                }
                for step in item.steps
            ],
        }
    if isinstance(item, MultipleChoiceItem):
        return {
            "type": "multiple_choice",
            "id": item.id,
            "prompt": item.prompt,
            "options": list(item.options),
            "correct_index": item.correct_index,
            "shuffle": item.shuffle,
        }
    if isinstance(item, DragDropItem):
        return {
            "type": "drag_drop",
            "id": item.id,
            "prompt": item.prompt,
            "image_ref": item.image_ref,
            "slots": list(item.slots),
            "tokens": list(item.tokens),
            "answer": dict(item.answer),
        }
    raise TypeError(f"cannot serialize {type(item).__name__}")


def parse_bank(text: str) -> list[Item]:
    """Parse a bank document; raises BankFormatError on anything unreadable."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BankFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != BANK_FORMAT:
        raise BankFormatError(f"missing format marker {BANK_FORMAT!r}")
    if doc.get("version") != BANK_VERSION:
        raise BankFormatError(f"unsupported bank version {doc.get('version')!r}")
    items = doc.get("items")
    if not isinstance(items, list):
        raise BankFormatError("items must be a list")
    return [item_from_doc(d) for d in items]


def serialize_bank(items: Sequence[Item]) -> str:
    doc = {
        "format": BANK_FORMAT,
        "version": BANK_VERSION,
        "items": [item_to_doc(i) for i in items],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def load_bank(path: str | Path) -> list[Item]:
    return parse_bank(Path(path).read_text(encoding="utf-8"))


def save_bank(items: Sequence[Item], path: str | Path) -> None:
    Path(path).write_text(serialize_bank(items), encoding="utf-8")
