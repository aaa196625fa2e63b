"""Dense exact linear solves over Fraction.

Layer covariance matrices are small (at most a few thousand rows) and
positive definite, so plain Gaussian elimination with a first-nonzero pivot
search is enough.  A zero pivot on a symmetric PD input would mean the
covariance engine produced a singular matrix, which the callers treat as an
internal error rather than a user mistake.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence


class SingularMatrixError(ArithmeticError):
    """Exact elimination hit a structurally zero pivot."""


def solve_exact(a: Sequence[Sequence[Fraction]], b: Sequence[Fraction]) -> list[Fraction]:
    """Solve a x = b over the rationals; raises SingularMatrixError."""
    n = len(a)
    if any(len(row) != n for row in a) or len(b) != n:
        raise ValueError("shape mismatch")
    m = [list(row) + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise SingularMatrixError(f"zero pivot column {col}")
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
        prow = m[col]
        inv = 1 / prow[col]
        for j in range(col, n + 1):
            prow[j] *= inv
        for r in range(col + 1, n):
            f = m[r][col]
            if f:
                row = m[r]
                for j in range(col, n + 1):
                    row[j] -= f * prow[j]
    x = [Fraction(0)] * n
    for r in range(n - 1, -1, -1):
        s = m[r][n]
        row = m[r]
        for j in range(r + 1, n):
            s -= row[j] * x[j]
        x[r] = s
    return x


def dot(u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    if len(u) != len(v):
        raise ValueError("length mismatch")
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


def quadratic_form(a: Sequence[Sequence[Fraction]], x: Sequence[Fraction]) -> Fraction:
    """x^T a x."""
    return sum((x[i] * dot(row, x) for i, row in enumerate(a)), Fraction(0))
