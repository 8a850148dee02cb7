"""Exact linear-algebra kernel for determinant tasks.

Everything here runs on exact rationals (`fractions.Fraction`): polynomial
arithmetic, cofactor and triangular-reduction determinants, minors, quadratic
solving, and seeded generation of determinant-equation tasks. Floats appear
only at one boundary, the irrational roots of a quadratic. Keeping the kernel
exact means grading keys downstream never need tolerances.

All values are immutable after construction and every operation is a pure
function, so the module is safe to call concurrently.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction]


class MathcoreError(Exception):
    """Base class for kernel errors."""


class IndexOutOfRange(MathcoreError):
    """Row/column index outside the matrix."""


class NotQuadratic(MathcoreError):
    """Leading coefficient of a quadratic is zero."""


class GenerationExhausted(MathcoreError):
    """Rejection sampling hit its retry bound without an acceptable task."""


def _as_fraction(value: Rational | float | str) -> Fraction:
    if isinstance(value, Fraction):
        return value
    return Fraction(value)


class Polynomial:
    """Univariate polynomial with exact rational coefficients.

    Coefficients are stored ascending: ``coeffs[k]`` multiplies ``x**k``.
    The canonical zero polynomial is the empty coefficient tuple and its
    degree is the sentinel -1. Trailing zero coefficients are always
    stripped, so equal polynomials compare (and hash) equal.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[Rational | float | str] = ()):
        cs = [_as_fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    @classmethod
    def constant(cls, c: Rational | float | str) -> "Polynomial":
        return cls((c,))

    @classmethod
    def x(cls) -> "Polynomial":
        return cls((0, 1))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, k: int) -> Fraction:
        """Coefficient of x**k (zero beyond the stored degree)."""
        if 0 <= k < len(self.coeffs):
            return self.coeffs[k]
        return Fraction(0)

    @property
    def leading(self) -> Fraction:
        if self.is_zero:
            return Fraction(0)
        return self.coeffs[-1]

    def __call__(self, value: Rational | float) -> Fraction | float:
        result: Fraction | float = 0
        for c in reversed(self.coeffs):
            result = result * value + c
        return result

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] += c
        return Polynomial(out)

    def __neg__(self) -> "Polynomial":
        return Polynomial(tuple(-c for c in self.coeffs))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return Polynomial()
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return Polynomial(out)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        return f"Polynomial({list(self.coeffs)!r})"

    def __str__(self) -> str:
        return format_polynomial(self)


def format_polynomial(p: Polynomial, var: str = "x") -> str:
    """Render a polynomial as conventional infix text, e.g. ``x^2 - 3x + 2``."""
    if p.is_zero:
        return "0"
    parts: list[str] = []
    for k in range(p.degree, -1, -1):
        c = p.coefficient(k)
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if k == 0:
            body = str(mag)
        else:
            xpow = var if k == 1 else f"{var}^{k}"
            body = xpow if mag == 1 else f"{mag}{xpow}"
        if not parts:
            parts.append(body if sign == "+" else f"-{body}")
        else:
            parts.append(f" {sign} {body}")
    return "".join(parts)


def poly_arith(a: Polynomial, b: Polynomial, op: str) -> Polynomial:
    """Ring arithmetic on polynomials; ``op`` is one of add/sub/mul."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown op {op!r}")


def _check_square(rows: Sequence[Sequence[object]]) -> int:
    n = len(rows)
    if n < 1:
        raise ValueError("matrix must have dimension >= 1")
    for row in rows:
        if len(row) != n:
            raise ValueError("matrix must be square")
    return n


@dataclass(frozen=True)
class PolyMatrix:
    """Square matrix of polynomials."""

    entries: tuple[tuple[Polynomial, ...], ...]

    def __init__(self, rows: Sequence[Sequence[Polynomial | Rational]]):
        _check_square(rows)
        converted = tuple(
            tuple(e if isinstance(e, Polynomial) else Polynomial.constant(e) for e in row)
            for row in rows
        )
        object.__setattr__(self, "entries", converted)

    @property
    def n(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class NumericMatrix:
    """Square matrix of exact rationals."""

    entries: tuple[tuple[Fraction, ...], ...]

    def __init__(self, rows: Sequence[Sequence[Rational | float | str]]):
        _check_square(rows)
        converted = tuple(tuple(_as_fraction(e) for e in row) for row in rows)
        object.__setattr__(self, "entries", converted)

    @property
    def n(self) -> int:
        return len(self.entries)

    def to_poly(self) -> PolyMatrix:
        """Lift to a matrix of constant polynomials."""
        return PolyMatrix([[Polynomial.constant(e) for e in row] for row in self.entries])


def det_cofactor(m: PolyMatrix) -> Polynomial:
    """Determinant by Laplace cofactor expansion along the first row.

    Exact for polynomial entries of any degree. A 1x1 matrix returns its
    single entry.
    """
    return _det_cofactor_rows(m.entries)


def _det_cofactor_rows(rows: tuple[tuple[Polynomial, ...], ...]) -> Polynomial:
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    total = Polynomial()
    for j in range(n):
        entry = rows[0][j]
        if entry.is_zero:
            continue
        sub = tuple(row[:j] + row[j + 1:] for row in rows[1:])
        term = entry * _det_cofactor_rows(sub)
        total = total + term if j % 2 == 0 else total - term
    return total


def det_triangular(m: NumericMatrix) -> Fraction:
    """Determinant by Gaussian elimination to upper-triangular form.

    Pivot is the first nonzero entry in column order (exact arithmetic makes
    magnitude pivoting unnecessary); each row swap flips the sign. Returns 0
    for singular matrices.
    """
    n = m.n
    a = [list(row) for row in m.entries]
    sign = 1
    for col in range(n):
        pivot_row = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot_row is None:
            return Fraction(0)
        if pivot_row != col:
            a[col], a[pivot_row] = a[pivot_row], a[col]
            sign = -sign
        pivot = a[col][col]
        for r in range(col + 1, n):
            if a[r][col] == 0:
                continue
            factor = a[r][col] / pivot
            for c in range(col, n):
                a[r][c] -= factor * a[col][c]
    det = Fraction(sign)
    for i in range(n):
        det *= a[i][i]
    return det


def minor(m: NumericMatrix, i: int, j: int) -> Fraction:
    """Minor M_ij: determinant after deleting row ``i`` and column ``j``.

    Indices are 1-based, matching the usual linear-algebra convention.
    """
    n = m.n
    if n < 2:
        raise IndexOutOfRange("minor needs dimension >= 2")
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexOutOfRange(f"indices ({i}, {j}) outside a {n}x{n} matrix")
    sub = [
        [m.entries[r][c] for c in range(n) if c != j - 1]
        for r in range(n)
        if r != i - 1
    ]
    return det_triangular(NumericMatrix(sub))


def cofactor(m: NumericMatrix, i: int, j: int) -> Fraction:
    """Algebraic complement: (-1)^(i+j) times the minor (1-based indices)."""
    sign = -1 if (i + j) % 2 else 1
    return sign * minor(m, i, j)


class RootKind(str, Enum):
    TWO_DISTINCT = "two_distinct"
    DOUBLE = "double"
    NO_REAL = "no_real"


@dataclass(frozen=True)
class QuadraticRoots:
    """Real roots of a quadratic, ascending.

    Roots are exact `Fraction`s whenever the discriminant is a perfect square
    of a rational, otherwise a float pair.
    """

    kind: RootKind
    roots: tuple[Fraction | float, ...] = field(default=())

    def __post_init__(self):
        expected = {RootKind.TWO_DISTINCT: 2, RootKind.DOUBLE: 1, RootKind.NO_REAL: 0}
        if len(self.roots) != expected[self.kind]:
            raise ValueError(f"{self.kind} requires {expected[self.kind]} roots")
        if self.kind is RootKind.TWO_DISTINCT and not self.roots[0] < self.roots[1]:
            raise ValueError("roots must be ascending")


def _exact_sqrt(value: Fraction) -> Fraction | None:
    """Square root of a nonnegative rational if it is rational, else None."""
    if value < 0:
        return None
    p, q = value.numerator, value.denominator
    rp, rq = math.isqrt(p), math.isqrt(q)
    if rp * rp == p and rq * rq == q:
        return Fraction(rp, rq)
    return None


def solve_quadratic(a: Rational, b: Rational, c: Rational) -> QuadraticRoots:
    """Solve ax^2 + bx + c = 0 over the reals.

    Classifies by discriminant. Rational roots come back exact; irrational
    ones as floats. Raises NotQuadratic when a == 0.
    """
    a, b, c = _as_fraction(a), _as_fraction(b), _as_fraction(c)
    if a == 0:
        raise NotQuadratic("leading coefficient is zero")
    disc = b * b - 4 * a * c
    if disc < 0:
        return QuadraticRoots(RootKind.NO_REAL)
    if disc == 0:
        return QuadraticRoots(RootKind.DOUBLE, (-b / (2 * a),))
    sqrt_disc = _exact_sqrt(disc)
    if sqrt_disc is not None:
        r1 = (-b - sqrt_disc) / (2 * a)
        r2 = (-b + sqrt_disc) / (2 * a)
    else:
        s = math.sqrt(disc.numerator / disc.denominator)
        r1 = (float(-b) - s) / float(2 * a)
        r2 = (float(-b) + s) / float(2 * a)
    if r1 > r2:
        r1, r2 = r2, r1
    return QuadraticRoots(RootKind.TWO_DISTINCT, (r1, r2))


# Default placement of the variable in generated 3x3 tasks: the first two
# diagonal cells, as in the worked determinant-equation layout. Configurable
# via DetTaskSpec.x_positions.
DEFAULT_X_POSITIONS: tuple[tuple[int, int], ...] = ((0, 0), (1, 1))

GENERATION_RETRY_BOUND = 10_000


@dataclass(frozen=True)
class DetTaskSpec:
    """Parameters for seeded generation of determinant-equation tasks."""

    seed: int
    dimension: int = 3
    root_range: tuple[int, int] = (-9, 9)
    entry_range: tuple[int, int] = (-9, 9)
    x_positions: tuple[tuple[int, int], ...] = DEFAULT_X_POSITIONS

    def __post_init__(self):
        if self.dimension != 3:
            raise ValueError("only 3x3 tasks are supported")
        if self.root_range[0] > self.root_range[1]:
            raise ValueError("root_range is empty")
        if self.entry_range[0] > self.entry_range[1]:
            raise ValueError("entry_range is empty")
        if self.root_range[1] - self.root_range[0] < 1:
            raise ValueError("root_range must admit two distinct integers")
        for (r, c) in self.x_positions:
            if not (0 <= r < self.dimension and 0 <= c < self.dimension):
                raise ValueError("x position outside matrix")


@dataclass(frozen=True)
class GeneratedDetTask:
    """An accepted determinant-equation task.

    ``coefficients`` are the expanded determinant's (a, b, c) with a != 0;
    ``roots`` always holds two distinct integers inside the requested range.
    """

    matrix: PolyMatrix
    coefficients: tuple[Fraction, Fraction, Fraction]
    roots: QuadraticRoots


def _is_integer(value: Fraction | float) -> bool:
    return isinstance(value, Fraction) and value.denominator == 1


# Even permutations of (0, 1, 2) first, odd after; used by the integer
# fast path of the generator's rejection loop.
_PERMS_3 = (
    ((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1),
    ((0, 2, 1), -1), ((1, 0, 2), -1), ((2, 1, 0), -1),
)


def _det3_int(entries: list[list[tuple[int, int]]]) -> tuple[int, int, int, int]:
    """Cubic coefficients (c0..c3) of a 3x3 determinant of c + k*x entries."""
    c0 = c1 = c2 = c3 = 0
    for perm, sign in _PERMS_3:
        (a0, a1) = entries[0][perm[0]]
        (b0, b1) = entries[1][perm[1]]
        (d0, d1) = entries[2][perm[2]]
        # (a0 + a1 x)(b0 + b1 x)(d0 + d1 x)
        c0 += sign * a0 * b0 * d0
        c1 += sign * (a1 * b0 * d0 + a0 * b1 * d0 + a0 * b0 * d1)
        c2 += sign * (a1 * b1 * d0 + a1 * b0 * d1 + a0 * b1 * d1)
        c3 += sign * a1 * b1 * d1
    return c0, c1, c2, c3


def generate_det_task(spec: DetTaskSpec) -> GeneratedDetTask:
    """Draw determinant-equation tasks until one meets the acceptance rule.

    Rejection sampling: fill the template (x plus a constant at each
    configured position, plain constants elsewhere), expand the determinant,
    and accept iff it is a quadratic whose two roots are distinct integers
    inside ``root_range``. Deterministic per seed; raises
    GenerationExhausted after the retry bound.

    The rejection loop expands via exact integer arithmetic for speed; the
    accepted matrix is re-expanded with det_cofactor so the returned
    coefficients are by construction its output.
    """
    rng = random.Random(spec.seed)
    lo, hi = spec.entry_range
    x_cells = set(spec.x_positions)
    n = spec.dimension
    for _ in range(GENERATION_RETRY_BOUND):
        grid = [
            [(rng.randint(lo, hi), 1 if (r, c) in x_cells else 0) for c in range(n)]
            for r in range(n)
        ]
        c0, c1, c2, c3 = _det3_int(grid)
        if c3 != 0 or c2 == 0:
            continue
        roots = solve_quadratic(c2, c1, c0)
        if roots.kind is not RootKind.TWO_DISTINCT:
            continue
        if not all(
            _is_integer(r) and spec.root_range[0] <= r <= spec.root_range[1]
            for r in roots.roots
        ):
            continue
        matrix = PolyMatrix(
            [[Polynomial((const, k)) for (const, k) in row] for row in grid]
        )
        det = det_cofactor(matrix)
        coefficients = (det.coefficient(2), det.coefficient(1), det.coefficient(0))
        assert coefficients == (Fraction(c2), Fraction(c1), Fraction(c0))
        return GeneratedDetTask(matrix, coefficients, roots)
    raise GenerationExhausted(
        f"no acceptable task within {GENERATION_RETRY_BOUND} draws (seed {spec.seed})"
    )
