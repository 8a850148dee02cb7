"""Classical test theory analytics over a response matrix.

Implements the reliability toolbox: descriptive statistics (sample variance
with the N-1 denominator), frequency histograms, Pearson correlations,
Cronbach's alpha, a one-factor model fit by iterated principal-axis
factoring, McDonald's omega-total, and a consolidated report.

Missing data policy: univariate descriptives use all available values;
alpha, omega, and the correlation grid use listwise deletion. Both counts
are reported. Degenerate inputs (constant columns, too few items) degrade
to flagged report fields instead of raising.

All functions are pure over immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .matrix import ColumnKind, ResponseMatrix


class PsychometricsError(Exception):
    pass


class InsufficientData(PsychometricsError):
    pass


class ZeroVariance(PsychometricsError):
    pass


class DegenerateTotal(PsychometricsError):
    """Total-score variance is zero; alpha is undefined."""


class TooFewItems(PsychometricsError):
    pass


@dataclass(frozen=True)
class DescriptiveStats:
    """Availability-based univariate summary (schema: N, Missing, Mean,
    Median, Standard deviation, Minimum, Maximum)."""

    n: int
    missing: int
    mean: float
    median: float
    sd: Optional[float]  # None when fewer than two observations
    min: float
    max: float


@dataclass(frozen=True)
class Histogram:
    """Uniform-width frequency histogram; bins are right-open, last closed."""

    edges: tuple[float, ...]
    counts: tuple[int, ...]


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric Pearson grid; None marks undefined cells (zero variance)."""

    labels: tuple[str, ...]
    values: tuple[tuple[Optional[float], ...], ...]

    def cell(self, a: str, b: str) -> Optional[float]:
        i, j = self.labels.index(a), self.labels.index(b)
        return self.values[i][j]


@dataclass(frozen=True)
class FactorModel:
    """Single-factor solution on standardized items.

    loadings[i]**2 + uniquenesses[i] == 1 up to convergence error; a Heywood
    case (communality above 1) is clamped and flagged.
    """

    loadings: tuple[float, ...]
    uniquenesses: tuple[float, ...]
    converged: bool
    iterations: int
    heywood: bool = False


@dataclass(frozen=True)
class ReliabilityReport:
    column_labels: tuple[str, ...]
    descriptives: dict[str, DescriptiveStats]
    total_descriptives: DescriptiveStats
    histogram: Histogram
    correlations: CorrelationMatrix
    alpha: Optional[float]
    omega: Optional[float]
    factor: Optional[FactorModel]
    rows_used: int
    n_rows: int
    notes: tuple[str, ...] = field(default=())


def descriptives(column: Sequence[Optional[float]]) -> DescriptiveStats:
    """Mean, median, sample SD (N-1), extrema over the non-missing values."""
    values = sorted(v for v in column if v is not None)
    missing = len(column) - len(values)
    n = len(values)
    if n == 0:
        raise InsufficientData("no observations")
    mean = sum(values) / n
    mid = n // 2
    median = values[mid] if n % 2 else (values[mid - 1] + values[mid]) / 2
    if n >= 2:
        sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    else:
        sd = None
    return DescriptiveStats(n, missing, mean, median, sd, values[0], values[-1])


def sturges_bins(n: int) -> int:
    """Default bin count: ceil(log2 n) + 1."""
    if n < 1:
        raise InsufficientData("histogram needs at least one observation")
    return math.ceil(math.log2(n)) + 1 if n > 1 else 1


def histogram(scores: Sequence[float], bin_count: Optional[int] = None) -> Histogram:
    """Uniform bins spanning [min, max]; right-open except the last.

    All-equal data collapses to a single degenerate bin holding everything.
    """
    values = [v for v in scores if v is not None]
    if not values:
        raise InsufficientData("histogram needs at least one observation")
    lo, hi = min(values), max(values)
    if lo == hi:
        return Histogram((float(lo), float(hi)), (len(values),))
    k = bin_count if bin_count is not None else sturges_bins(len(values))
    if k < 1:
        raise ValueError("bin_count must be positive")
    width = (hi - lo) / k
    # The last edge is pinned to the exact maximum so no observation can
    # round itself outside the span; interior edges are capped accordingly.
    edges = tuple(min(lo + i * width, hi) for i in range(k)) + (hi,)
    counts = [0] * k
    for v in values:
        idx = min(int((v - lo) / (hi - lo) * k), k - 1)
        counts[idx] += 1
    return Histogram(edges, tuple(counts))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation over complete pairs."""
    pairs = [(a, b) for a, b in zip(x, y) if a is not None and b is not None]
    if len(pairs) < 2:
        raise InsufficientData("need at least two complete pairs")
    n = len(pairs)
    mx = sum(a for a, _ in pairs) / n
    my = sum(b for _, b in pairs) / n
    sxx = sum((a - mx) ** 2 for a, _ in pairs)
    syy = sum((b - my) ** 2 for _, b in pairs)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("correlation undefined for a constant series")
    sxy = sum((a - mx) * (b - my) for a, b in pairs)
    return sxy / math.sqrt(sxx * syy)


def _complete_rows(matrix: ResponseMatrix, labels: Sequence[str]) -> list[list[float]]:
    columns = [matrix.column(l) for l in labels]
    rows = []
    for i in range(matrix.n_rows):
        row = [col[i] for col in columns]
        if all(v is not None for v in row):
            rows.append(row)
    return rows


def correlation_matrix(
    matrix: ResponseMatrix, columns: Sequence[str] | None = None
) -> CorrelationMatrix:
    """All pairwise Pearson r over listwise-complete rows.

    Zero-variance columns yield None cells (diagonal stays 1 by convention)
    rather than an error.
    """
    labels = tuple(columns) if columns is not None else tuple(matrix.column_labels())
    rows = _complete_rows(matrix, labels)
    if len(rows) < 2:
        raise InsufficientData("need at least two listwise-complete rows")
    k = len(labels)
    series = [[row[j] for row in rows] for j in range(k)]
    values: list[list[Optional[float]]] = [[None] * k for _ in range(k)]
    for i in range(k):
        values[i][i] = 1.0
        for j in range(i + 1, k):
            try:
                r = pearson(series[i], series[j])
            except ZeroVariance:
                r = None
            values[i][j] = values[j][i] = r
    return CorrelationMatrix(labels, tuple(tuple(row) for row in values))


def cronbach_alpha(rows: Sequence[Sequence[float]]) -> float:
    """Internal-consistency alpha from complete item-score rows.

    alpha = K/(K-1) * (1 - sum(item variances) / variance(total)), with
    sample variances (N-1 denominator).
    """
    if not rows:
        raise InsufficientData("no rows")
    k = len(rows[0])
    if k < 2:
        raise TooFewItems("alpha needs at least two items")
    if any(len(row) != k for row in rows):
        raise ValueError("rows must be rectangular")
    n = len(rows)
    if n < 2:
        raise InsufficientData("alpha needs at least two rows")

    def sample_var(values: Sequence[float]) -> float:
        m = sum(values) / len(values)
        return sum((v - m) ** 2 for v in values) / (len(values) - 1)

    item_vars = [sample_var([row[j] for row in rows]) for j in range(k)]
    totals = [sum(row) for row in rows]
    total_var = sample_var(totals)
    if total_var == 0:
        raise DegenerateTotal("total-score variance is zero")
    return (k / (k - 1)) * (1 - sum(item_vars) / total_var)


def alpha_from_covariance(cov: Sequence[Sequence[float]]) -> float:
    """Alpha evaluated directly on a (population or sample) covariance matrix."""
    k = len(cov)
    if k < 2:
        raise TooFewItems("alpha needs at least two items")
    trace = sum(cov[i][i] for i in range(k))
    total = sum(sum(row) for row in cov)
    if total == 0:
        raise DegenerateTotal("total-score variance is zero")
    return (k / (k - 1)) * (1 - trace / total)


# Stop when the largest communality change drops below the tolerance. The
# tolerance is two orders tighter than the loading accuracy actually needed
# because the iteration is linearly convergent: the remaining error is about
# step * rate / (1 - rate), and weakly identified triads (two small loadings
# against one large) push the rate close to 1.
PAF_TOLERANCE = 1e-10
PAF_MAX_ITERATIONS = 100_000


def _standardize(matrix: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(matrix))
    if np.any(d <= 0):
        raise ZeroVariance("covariance has a zero-variance item")
    return matrix / np.outer(d, d)


def fit_one_factor(
    matrix: Sequence[Sequence[float]],
    tolerance: float = PAF_TOLERANCE,
    max_iterations: int = PAF_MAX_ITERATIONS,
) -> FactorModel:
    """One-factor fit by iterated principal-axis factoring.

    Accepts a correlation or covariance matrix (covariances are standardized
    first). Communalities start at each item's largest absolute off-diagonal
    correlation; each pass eigendecomposes the reduced matrix, takes
    loadings as sqrt(top eigenvalue) times its eigenvector with the sign
    fixed so the loading sum is nonnegative, and repeats until the largest
    communality change drops below the tolerance. Communalities above one
    are clamped and flagged as a Heywood case.
    """
    r = np.asarray(matrix, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("need a square matrix")
    k = r.shape[0]
    if k < 3:
        raise TooFewItems("one-factor fit needs at least three items")
    if not np.allclose(r, r.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    r = _standardize(r)

    off = r - np.diag(np.diag(r))
    h2 = np.max(np.abs(off), axis=1)
    heywood = False
    loadings = np.zeros(k)
    iterations = 0
    converged = False
    for iterations in range(1, max_iterations + 1):
        reduced = off + np.diag(h2)
        eigenvalues, eigenvectors = np.linalg.eigh(reduced)
        top = eigenvalues[-1]
        vec = eigenvectors[:, -1]
        loadings = math.sqrt(max(top, 0.0)) * vec
        if loadings.sum() < 0:
            loadings = -loadings
        new_h2 = loadings**2
        heywood = bool(np.any(new_h2 > 1.0))
        if heywood:
            new_h2 = np.minimum(new_h2, 1.0)
            loadings = np.sign(loadings) * np.sqrt(new_h2)
        delta = np.max(np.abs(new_h2 - h2))
        h2 = new_h2
        if delta < tolerance:
            converged = True
            break
    psi = np.clip(1.0 - h2, 0.0, None)
    return FactorModel(
        loadings=tuple(float(v) for v in loadings),
        uniquenesses=tuple(float(v) for v in psi),
        converged=converged,
        iterations=iterations,
        heywood=heywood,
    )


def mcdonald_omega(model: FactorModel) -> float:
    """Omega-total: (sum of loadings)^2 over modeled total variance.

    omega = (sum lambda)^2 / ((sum lambda)^2 + sum psi).
    """
    s = sum(model.loadings)
    denom = s * s + sum(model.uniquenesses)
    if denom == 0:
        return 0.0
    return (s * s) / denom


OMEGA_FORMULA_NOTE = (
    "omega computed as (sum of loadings)^2 / ((sum of loadings)^2 + sum of "
    "uniquenesses) on standardized items (omega-total)."
)

SKEW_THRESHOLD = 0.1


def _skewness_note(label: str, stats: DescriptiveStats) -> Optional[str]:
    if stats.sd is None or stats.sd == 0:
        return None
    gap = stats.mean - stats.median
    if abs(gap) <= SKEW_THRESHOLD * stats.sd:
        return None
    direction = "positive (right tail)" if gap > 0 else "negative (left tail)"
    return (
        f"{label}: mean {stats.mean:.4g} vs median {stats.median:.4g} "
        f"suggests {direction} skew."
    )


def fisher_pearson_skewness(values: Sequence[float]) -> Optional[float]:
    """Adjusted Fisher-Pearson skewness coefficient; None below n=3 or sd=0."""
    n = len(values)
    if n < 3:
        return None
    mean = sum(values) / n
    m2 = sum((v - mean) ** 2 for v in values) / n
    if m2 == 0:
        return None
    m3 = sum((v - mean) ** 3 for v in values) / n
    g1 = m3 / m2**1.5
    return g1 * math.sqrt(n * (n - 1)) / (n - 2)


@dataclass(frozen=True)
class ReportConfig:
    """Analysis options: which columns to treat as items, histogram bins."""

    granularity: str = "items"  # "items" | "fields"
    columns: Optional[tuple[str, ...]] = None  # explicit override
    bin_count: Optional[int] = None


def select_analysis_columns(matrix: ResponseMatrix, config: ReportConfig) -> tuple[str, ...]:
    """Resolve which columns feed alpha/omega/correlations.

    Explicit ``columns`` wins. Otherwise ``fields`` granularity picks field
    sub-score columns when the matrix has them (falling back to item
    columns for flat gradebook CSVs), and ``items`` picks item columns.
    Total columns never participate.
    """
    if config.columns is not None:
        return tuple(config.columns)
    items = tuple(matrix.column_labels(ColumnKind.ITEM))
    fields = tuple(matrix.column_labels(ColumnKind.FIELD))
    if config.granularity == "fields":
        return fields if fields else items
    return items


def reliability_report(matrix: ResponseMatrix, config: ReportConfig = ReportConfig()) -> ReliabilityReport:
    """Run the full reliability pipeline over the selected score columns.

    Produces per-column and total descriptives, a histogram of row totals,
    the correlation grid, alpha, the one-factor model, and omega. Degenerate
    pieces (undefined correlations, alpha on a constant total, omega with
    under three items) are reported as absent fields plus a note; only a
    matrix without enough complete rows raises.
    """
    labels = select_analysis_columns(matrix, config)
    if not labels:
        raise InsufficientData("no analysis columns selected")
    notes: list[str] = []
    sub = matrix.select(labels)

    complete = _complete_rows(sub, labels)
    rows_used = len(complete)
    if rows_used < 3:
        raise InsufficientData("need at least three listwise-complete rows")
    if rows_used < matrix.n_rows:
        notes.append(
            f"listwise deletion dropped {matrix.n_rows - rows_used} of "
            f"{matrix.n_rows} rows for multivariate statistics."
        )

    stats = {label: descriptives(sub.column(label)) for label in labels}
    totals = [sum(row) for row in complete]
    total_stats = descriptives(totals)
    hist = histogram(totals, config.bin_count)

    correlations = correlation_matrix(sub, labels)
    undefined = [
        (correlations.labels[i], correlations.labels[j])
        for i in range(len(labels))
        for j in range(i + 1, len(labels))
        if correlations.values[i][j] is None
    ]
    if undefined:
        names = ", ".join(f"({a}, {b})" for a, b in undefined)
        notes.append(f"undefined correlations (zero variance): {names}.")

    alpha: Optional[float] = None
    try:
        alpha = cronbach_alpha(complete)
    except (DegenerateTotal, TooFewItems, InsufficientData) as exc:
        notes.append(f"alpha unavailable: {exc}.")

    omega: Optional[float] = None
    model: Optional[FactorModel] = None
    if any(v is None for row in correlations.values for v in row):
        notes.append("omega unavailable: correlation grid has undefined cells.")
    else:
        try:
            model = fit_one_factor([[v for v in row] for row in correlations.values])
            omega = mcdonald_omega(model)
            notes.append(OMEGA_FORMULA_NOTE)
            if model.heywood:
                notes.append("Heywood case: a communality was clamped to 1.")
            if not model.converged:
                notes.append("factor fit did not converge within the iteration cap.")
            if max(abs(l) for l in model.loadings) < 1e-6:
                notes.append("loadings are all near zero; factor model is non-informative.")
        except (TooFewItems, ZeroVariance) as exc:
            notes.append(f"omega unavailable: {exc}.")

    skew_note = _skewness_note("total", total_stats)
    if skew_note:
        notes.append(skew_note)
    coeff = fisher_pearson_skewness(totals)
    if coeff is not None:
        notes.append(f"adjusted Fisher-Pearson skewness of totals: {coeff:.4f}.")

    return ReliabilityReport(
        column_labels=labels,
        descriptives=stats,
        total_descriptives=total_stats,
        histogram=hist,
        correlations=correlations,
        alpha=alpha,
        omega=omega,
        factor=model,
        rows_used=rows_used,
        n_rows=matrix.n_rows,
        notes=tuple(notes),
    )


# -- report documents --------------------------------------------------------


def _stats_doc(stats: DescriptiveStats) -> dict:
    return {
        "n": stats.n,
        "missing": stats.missing,
        "mean": stats.mean,
        "median": stats.median,
        "sd": stats.sd,
        "min": stats.min,
        "max": stats.max,
    }


def report_to_doc(report: ReliabilityReport) -> dict:
    """Machine-readable report document (plain JSON types only)."""
    display = dict(zip(report.correlations.labels, _display_labels(report)))
    return {
        "columns": list(report.column_labels),
        "rows": report.n_rows,
        "rows_used": report.rows_used,
        "descriptives": {
            label: _stats_doc(stats) for label, stats in report.descriptives.items()
        },
        "total": _stats_doc(report.total_descriptives),
        "histogram": {
            "edges": list(report.histogram.edges),
            "counts": list(report.histogram.counts),
        },
        "correlations": {
            "labels": [display[l] for l in report.correlations.labels],
            "values": [list(row) for row in report.correlations.values],
        },
        "alpha": report.alpha,
        "omega": report.omega,
        "factor": None
        if report.factor is None
        else {
            "loadings": list(report.factor.loadings),
            "uniquenesses": list(report.factor.uniquenesses),
            "converged": report.factor.converged,
            "iterations": report.factor.iterations,
            "heywood": report.factor.heywood,
        },
        "notes": list(report.notes),
    }


def _display_labels(report: ReliabilityReport) -> list[str]:
    # Field columns named "C.E" display as "E" when that stays unambiguous.
    labels = list(report.correlations.labels)
    short = [l.split(".", 1)[1] if "." in l else l for l in labels]
    return short if len(set(short)) == len(short) else labels
