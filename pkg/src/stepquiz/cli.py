"""Operator command line.

Subcommands::

    stepquiz bank validate <file>
    stepquiz bank gen-det --count N --seed S --root-min A --root-max B --out F
    stepquiz serve --port P --data DIR --banks DIR [--cors-origin URL]
    stepquiz simulate --students N --seed S --quiz FILE --out CSV [--events F]
    stepquiz analyze --input CSV --granularity {item_totals|fields}
                     --report FILE [--markdown FILE]

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime error.
Every subcommand is deterministic given identical inputs and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bank as bankmod
from .assessment import instantiate_generated_item, validate_bank
from .matrix import ResponseMatrix, save_matrix
from .mathcore import DetTaskSpec
from .psychometrics import (
    PsychometricsError,
    ReportConfig,
    reliability_report,
    report_to_doc,
)
from .session import (
    Granularity,
    Quiz,
    SessionError,
    SessionStore,
    _derive_seed,
    load_quiz,
    parse_quiz,
)
from .simulate import AttemptSimConfig, make_cohort, simulate_attempts

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; this CLI reserves 2 for validation.
    def error(self, message: str):
        raise _UsageExit(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="stepquiz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    bank = sub.add_parser("bank", help="question bank tooling")
    bank_sub = bank.add_subparsers(dest="bank_command", required=True)

    validate = bank_sub.add_parser("validate", help="check a bank file")
    validate.add_argument("file", type=Path)

    gen = bank_sub.add_parser("gen-det", help="generate determinant-equation items")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--root-min", type=int, default=-9)
    gen.add_argument("--root-max", type=int, default=9)
    gen.add_argument("--entry-min", type=int, default=-9)
    gen.add_argument("--entry-max", type=int, default=9)
    gen.add_argument("--out", type=Path, required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data", type=Path, required=True, help="event-log directory")
    serve.add_argument("--banks", type=Path, required=True, help="bank/quiz directory")
    serve.add_argument("--cors-origin", default=None)

    sim = sub.add_parser("simulate", help="simulate a cohort through a quiz")
    sim.add_argument("--students", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--quiz", type=Path, required=True)
    sim.add_argument("--banks", type=Path, default=None, help="resolve quiz refs")
    sim.add_argument("--out", type=Path, required=True, help="response-matrix CSV")
    sim.add_argument("--events", type=Path, default=None, help="event-log file")
    sim.add_argument(
        "--granularity",
        choices=[g.value for g in Granularity],
        default=Granularity.WITH_FIELD_SUBSCORES.value,
    )

    analyze = sub.add_parser("analyze", help="reliability analysis of a matrix CSV")
    analyze.add_argument("--input", type=Path, required=True)
    analyze.add_argument("--granularity", choices=["item_totals", "fields"],
                         default="item_totals")
    analyze.add_argument("--report", type=Path, required=True, help="JSON output")
    analyze.add_argument("--markdown", type=Path, default=None)
    analyze.add_argument("--bins", type=int, default=None, help="histogram bin count")

    return parser


def _load_bank_dir(directory: Path) -> tuple[dict, dict]:
    """Load every bank and quiz document under a directory.

    Returns (items_by_id, quizzes_by_id); files are recognized by their
    format marker, other JSON files are ignored.
    """
    items: dict = {}
    quiz_texts: list[str] = []
    for path in sorted(directory.glob("*.json")):
        text = path.read_text(encoding="utf-8")
        try:
            marker = json.loads(text).get("format")
        except (json.JSONDecodeError, AttributeError):
            continue
        if marker == bankmod.BANK_FORMAT:
            for item in bankmod.parse_bank(text):
                items[item.id] = item
        elif marker == "stepquiz-quiz":
            quiz_texts.append(text)
    quizzes: dict[str, Quiz] = {}
    for text in quiz_texts:
        quiz = parse_quiz(text, items)
        quizzes[quiz.id] = quiz
    return items, quizzes


def _cmd_bank_validate(args) -> int:
    try:
        items = bankmod.load_bank(args.file)
    except FileNotFoundError:
        print(f"no such file: {args.file}", file=sys.stderr)
        return EXIT_VALIDATION
    except bankmod.BankFormatError as exc:
        print(f"unreadable bank: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    issues = validate_bank(items)
    for issue in issues:
        print(f"{issue.code}\t{issue.item_id}\t{issue.message}")
    if issues:
        return EXIT_VALIDATION
    print(f"ok: {len(items)} item(s)")
    return EXIT_OK


def _cmd_bank_gen_det(args) -> int:
    if args.count < 1:
        print("--count must be positive", file=sys.stderr)
        return EXIT_VALIDATION
    items = []
    for k in range(args.count):
        spec = DetTaskSpec(
            seed=_derive_seed(args.seed, k),
            root_range=(args.root_min, args.root_max),
            entry_range=(args.entry_min, args.entry_max),
        )
        items.append(
            instantiate_generated_item(spec, item_id=f"gen-det-{args.seed}-{k}")
        )
    bankmod.save_bank(items, args.out)
    print(f"wrote {len(items)} item(s) to {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    args.data.mkdir(parents=True, exist_ok=True)
    items, quizzes = _load_bank_dir(args.banks)
    log_path = args.data / "events.log"
    if log_path.exists():
        store = SessionStore.replay(log_path, quizzes, resume=True)
    else:
        store = SessionStore(quizzes, log_path=log_path)
    app = create_app(store, items_by_id=items, cors_origin=args.cors_origin)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    items = {}
    if args.banks is not None:
        items, _ = _load_bank_dir(args.banks)
    quiz = load_quiz(args.quiz, items)
    students = make_cohort(args.students, args.seed)
    store = simulate_attempts(
        quiz,
        students,
        AttemptSimConfig(seed=args.seed),
        log_path=args.events,
    )
    matrix = store.export_matrix(quiz.id, Granularity(args.granularity))
    save_matrix(matrix, args.out)
    print(f"wrote {matrix.n_rows} row(s) x {len(matrix.columns)} column(s) to {args.out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    try:
        matrix = ResponseMatrix.from_csv(args.input.read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"no such file: {args.input}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"unreadable CSV: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    granularity = "fields" if args.granularity == "fields" else "items"
    config = ReportConfig(granularity=granularity, bin_count=args.bins)
    report = reliability_report(matrix, config)
    doc = report_to_doc(report)
    args.report.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote report to {args.report}")
    if args.markdown is not None:
        args.markdown.write_text(render_markdown(doc), encoding="utf-8")
        print(f"wrote markdown to {args.markdown}")
    return EXIT_OK


def _fmt(value, digits: int = 3) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


def render_markdown(doc: dict) -> str:
    """Human-readable report rendering (presentation only; no recomputation)."""
    lines: list[str] = []
    lines.append("# Reliability report")
    lines.append("")
    lines.append(f"Rows: {doc['rows']} (used after listwise deletion: {doc['rows_used']})")
    lines.append("")

    lines.append("## Descriptives")
    lines.append("")
    labels = doc["columns"]
    header = ["Descriptives"] + labels + ["total"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    stats = [doc["descriptives"][l] for l in labels] + [doc["total"]]
    rows = [
        ("N", "n", 0),
        ("Missing", "missing", 0),
        ("Mean", "mean", 3),
        ("Median", "median", 3),
        ("Standard deviation", "sd", 3),
        ("Minimum", "min", 3),
        ("Maximum", "max", 3),
    ]
    for title, key, digits in rows:
        cells = [
            str(s[key]) if digits == 0 else _fmt(s[key], digits) for s in stats
        ]
        lines.append("| " + " | ".join([title] + cells) + " |")
    lines.append("")

    lines.append("## Histogram of totals")
    lines.append("")
    edges = doc["histogram"]["edges"]
    counts = doc["histogram"]["counts"]
    if len(edges) == 2 and edges[0] == edges[1]:
        lines.append(f"- all {counts[0]} observations at {_fmt(edges[0])}")
    else:
        for i, count in enumerate(counts):
            closer = "]" if i == len(counts) - 1 else ")"
            lines.append(f"- [{_fmt(edges[i])}, {_fmt(edges[i + 1])}{closer}: {count}")
    lines.append("")

    lines.append("## Correlations")
    lines.append("")
    clabels = doc["correlations"]["labels"]
    lines.append("| | " + " | ".join(clabels) + " |")
    lines.append("|" + "---|" * (len(clabels) + 1))
    for label, row in zip(clabels, doc["correlations"]["values"]):
        cells = ["-" if v is None else f"{v:.2f}" for v in row]
        lines.append("| " + " | ".join([f"**{label}**"] + cells) + " |")
    lines.append("")

    lines.append("## Reliability")
    lines.append("")
    lines.append(f"- Cronbach's alpha: {_fmt(doc['alpha'])}")
    lines.append(f"- McDonald's omega (total): {_fmt(doc['omega'])}")
    factor = doc.get("factor")
    if factor:
        loadings = ", ".join(
            f"{l}={_fmt(v)}" for l, v in zip(clabels, factor["loadings"])
        )
        lines.append(
            f"- one-factor loadings ({'converged' if factor['converged'] else 'NOT converged'}"
            f", {factor['iterations']} iterations): {loadings}"
        )
    lines.append("")

    if doc["notes"]:
        lines.append("## Notes")
        lines.append("")
        for note in doc["notes"]:
            lines.append(f"- {note}")
        lines.append("")
    return "\n".join(lines) + "\n"


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "bank":
            if args.bank_command == "validate":
                return _cmd_bank_validate(args)
            return _cmd_bank_gen_det(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
    except (bankmod.BankFormatError,) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SessionError, PsychometricsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    raise AssertionError("unreachable")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
