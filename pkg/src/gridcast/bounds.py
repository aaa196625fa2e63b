"""Certified rational enclosures of pi, e and integer powers of e.

Inequalities that mix exact integers with transcendental constants are
decided here by interval arithmetic: every constant is replaced by a
rational interval that provably contains it, and the inequality is asserted
against the safe end of the interval.  Widths are driven well below 2**-64
so that only genuinely tight inequalities could ever be left undecided.
"""

from __future__ import annotations

from fractions import Fraction

DEFAULT_GUARD_BITS = 64


class PrecisionError(ArithmeticError):
    """An interval was too wide to decide a comparison."""


def _atan_inv_bounds(x: int, tol: Fraction) -> tuple[Fraction, Fraction]:
    """Enclosure of arctan(1/x) for integer x >= 2.

    Alternating series with strictly decreasing terms, so consecutive
    partial sums bracket the limit.
    """
    lo = Fraction(0)
    hi = Fraction(0)
    term = Fraction(1, x)
    k = 0
    s = Fraction(0)
    while term > tol:
        s = s + term if k % 2 == 0 else s - term
        if k % 2 == 0:
            hi = s
            lo = s - term  # next partial sum is below s
        else:
            lo = s
            hi = s + term
        k += 1
        term = Fraction(1, x ** (2 * k + 1) * (2 * k + 1))
    # one more bracketing step so [lo, hi] is valid regardless of parity
    if k % 2 == 0:
        lo, hi = s, s + term
    else:
        lo, hi = s - term, s
    return lo, hi


def pi_bounds(guard_bits: int = DEFAULT_GUARD_BITS) -> tuple[Fraction, Fraction]:
    """Rational lo <= pi <= hi with hi - lo < 2**-guard_bits.

    Machin's formula: pi = 16*arctan(1/5) - 4*arctan(1/239).
    """
    tol = Fraction(1, 2 ** (guard_bits + 8))
    a_lo, a_hi = _atan_inv_bounds(5, tol / 32)
    b_lo, b_hi = _atan_inv_bounds(239, tol / 8)
    lo = 16 * a_lo - 4 * b_hi
    hi = 16 * a_hi - 4 * b_lo
    assert hi - lo < Fraction(1, 2**guard_bits)
    return lo, hi


def exp_int_bounds(n: int, guard_bits: int = DEFAULT_GUARD_BITS) -> tuple[Fraction, Fraction]:
    """Rational lo <= e**n <= hi for integer n (n may be negative).

    Taylor series with an explicit geometric tail bound.  Relative width is
    below 2**-guard_bits.
    """
    if n < 0:
        lo, hi = exp_int_bounds(-n, guard_bits)
        return 1 / hi, 1 / lo
    if n == 0:
        return Fraction(1), Fraction(1)
    # partial sum with common denominator m! kept implicit in Fraction
    m = 2 * n + 2
    term = Fraction(1)
    s = Fraction(1)
    k = 0
    # grow until the tail bound term/(1 - n/(k+2)) is small relative to s
    while True:
        k += 1
        term = term * n / k
        s += term
        if k >= m and term * 2 < s / 2 ** (guard_bits + 4):
            break
    # tail: sum_{j>k} n^j/j! <= term * sum_{i>=1} (n/(k+1))^i, n/(k+1) <= 1/2
    ratio = Fraction(n, k + 1)
    assert ratio < 1
    tail = term * ratio / (1 - ratio)
    return s, s + tail


def certified_le(lhs: Fraction, rhs_lo: Fraction, rhs_hi: Fraction) -> bool:
    """Decide lhs <= rhs for rhs known only as an interval.

    Returns True when lhs <= rhs_lo, False when lhs > rhs_hi, and raises
    PrecisionError in the undecidable middle band.
    """
    if lhs <= rhs_lo:
        return True
    if lhs > rhs_hi:
        return False
    raise PrecisionError("interval too wide to decide comparison")
