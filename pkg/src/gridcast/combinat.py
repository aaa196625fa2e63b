"""Exact combinatorics: multinomials and abelian-square counts.

The abelian-square count ``F(m, i)`` is the sum of the squared multinomial
coefficients over all weak compositions of ``m`` into ``i`` parts; it counts
length-``2m`` abelian squares over an ``i``-letter alphabet and drives the
half-space variance series.  Counts are computed by convolving tables of
squared coefficients (splitting the alphabet in half), which reaches
``m ~ 2000`` exactly; the three-letter sequence additionally has a hard-coded
second-order holonomic recurrence used both as a fast path and as a
cross-check against direct summation.

Float companions of the same quantities are provided in the normalized form
``F(m, i) / i**(2m)`` for long scans where exact integers would be wasteful.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterator

import numpy as np

from .bounds import PrecisionError, pi_bounds


def multinomial(m: int, v: tuple[int, ...]) -> int:
    """Multinomial coefficient m! / (v_1! ... v_k!).

    Returns 0 unless all entries are nonnegative and sum to m, so shifted
    autocorrelation sums can be written without boundary cases.
    """
    if m < 0 or any(x < 0 for x in v) or sum(v) != m:
        return 0
    out = 1
    rem = m
    for x in v[:-1]:
        out *= math.comb(rem, x)
        rem -= x
    return out


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All weak compositions of ``total`` into ``parts`` parts, lex order."""
    if parts <= 0:
        if total == 0 and parts == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def central_binomials(n_max: int) -> list[int]:
    """[C(0,0), C(2,1), C(4,2), ...] up to C(2*n_max, n_max)."""
    out = [1]
    for j in range(n_max):
        out.append(out[-1] * 2 * (2 * j + 1) // (j + 1))
    return out


def _square_convolve(m_max: int, left: list[int], right: list[int]) -> list[int]:
    """F_{a+b}(m) = sum_k C(m,k)^2 F_a(k) F_b(m-k) for m <= m_max."""
    out = []
    for m in range(m_max + 1):
        row = 1  # C(m, 0)
        acc = 0
        for k in range(m + 1):
            acc += row * row * left[k] * right[m - k]
            row = row * (m - k) // (k + 1)
        out.append(acc)
    return out


def abelian_square_counts(m_max: int, i: int) -> list[int]:
    """Exact ``[F(0,i), ..., F(m_max,i)]`` by squared-coefficient convolution."""
    if i < 1:
        raise ValueError("alphabet size must be >= 1")
    if i == 1:
        return [1] * (m_max + 1)
    if i == 2:
        return central_binomials(m_max)
    a = i // 2
    return _square_convolve(m_max, abelian_square_counts(m_max, a),
                            abelian_square_counts(m_max, i - a))


def abelian_square_count(m: int, i: int) -> int:
    """Exact F(m, i)."""
    if i < 1:
        raise ValueError("alphabet size must be >= 1")
    if m < 0:
        raise ValueError("length must be >= 0")
    if i == 1:
        return 1
    if i == 2:
        return math.comb(2 * m, m)
    # single-value convolution against precomputed halves
    a = i // 2
    left = abelian_square_counts(m, a)
    right = abelian_square_counts(m, i - a)
    row = 1
    acc = 0
    for k in range(m + 1):
        acc += row * row * left[k] * right[m - k]
        row = row * (m - k) // (k + 1)
    return acc


def abelian_square_count_bruteforce(m: int, i: int) -> int:
    """Direct summation over compositions; exponential, for cross-checks."""
    return sum(multinomial(m, v) ** 2 for v in compositions(m, i))


def f3_by_recurrence(m_max: int) -> list[int]:
    """Three-letter counts F(0,3)..F(m_max,3) from the holonomic recurrence.

    (m+2)^2 F(m+2) = (10 m^2 + 30 m + 23) F(m+1) - 9 (m+1)^2 F(m),
    seeded with the directly summed values F(0) = 1 and F(1) = 3.  Every
    division is checked to be exact, which would expose a bad seed or a
    transcription slip immediately.
    """
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    seq = [1, 3]
    for m in range(0, m_max - 1):
        num = (10 * m * m + 30 * m + 23) * seq[m + 1] - 9 * (m + 1) ** 2 * seq[m]
        q, r = divmod(num, (m + 2) ** 2)
        if r:
            raise ArithmeticError(f"recurrence produced a non-integer at m={m + 2}")
        seq.append(q)
    return seq[: m_max + 1]


def f3_envelope_report(m_max: int, guard_bits: int = 64) -> dict:
    """Check (1/3) 9^m/m <= F(m,3) <= (sqrt(27)/(4 pi)) 9^m/m for m <= m_max.

    The lower bound and the strict monotonicity of a_m = m 9^-m F(m,3) are
    pure integer comparisons.  The upper bound squares away the radical and
    compares against a certified rational enclosure of pi^2.
    """
    seq = f3_by_recurrence(m_max)
    pi_lo, pi_hi = pi_bounds(guard_bits)
    pi_sq_lo, pi_sq_hi = pi_lo * pi_lo, pi_hi * pi_hi
    lower_ok = True
    upper_ok = True
    monotone_ok = True
    pow9 = 9  # 9^m, starting at m = 1
    pow81 = 81  # 81^m
    for m in range(1, m_max + 1):
        f = seq[m]
        if pow9 > 3 * m * f:
            lower_ok = False
        lhs = 16 * m * m * f * f
        rhs = 27 * pow81
        if lhs * pi_sq_hi > rhs:
            if lhs * pi_sq_lo > rhs:
                upper_ok = False
            else:
                raise PrecisionError(f"pi enclosure too wide at m={m}")
        if m < m_max and (m + 1) * seq[m + 1] <= 9 * m * f:
            monotone_ok = False
        pow9 *= 9
        pow81 *= 81
    return {
        "m_max": m_max,
        "lower_ok": lower_ok,
        "upper_ok": upper_ok,
        "monotone_ok": monotone_ok,
    }


def loose_upper_bound_holds(n: int, i: int) -> bool:
    """Whether F(n,i) <= i^(2n+i) / n^((i-1)/2), decided exactly.

    The hypothesis under which this bound is proved (astronomically large n)
    is unreachable, so callers record the outcome instead of asserting it.
    """
    f = abelian_square_count(n, i)
    return f * f * n ** (i - 1) <= i ** (2 * (2 * n + i))


def asymptotic_normalizer_ratio(m: int, i: int, f_value: int | None = None) -> float:
    """F(m,i) * (4 pi m)^((i-1)/2) / i^(2m + i/2); tends to 1 as m grows."""
    f = abelian_square_count(m, i) if f_value is None else f_value
    log_ratio = (
        math.log(f)
        + (i - 1) / 2 * math.log(4 * math.pi * m)
        - (2 * m + i / 2) * math.log(i)
    )
    return math.exp(log_ratio)


def sandwich_ratio(k: int, i: int, f_value: int | None = None) -> float:
    """F(k,i) * k^((i-1)/2) / i^(2k), the quantity bounded by dimension constants."""
    f = abelian_square_count(k, i) if f_value is None else f_value
    return math.exp(math.log(f) + (i - 1) / 2 * math.log(k) - 2 * k * math.log(i))


# ---------------------------------------------------------------------------
# normalized float sequences g_m = F(m, i) / i^(2m) for long scans
# ---------------------------------------------------------------------------

def central_binomial_ratio_seq(k_max: int) -> np.ndarray:
    """r[k] = C(2k,k)/4^k = F(k,2)/4^k."""
    r = np.empty(k_max + 1)
    r[0] = 1.0
    for k in range(1, k_max + 1):
        r[k] = r[k - 1] * (2 * k - 1) / (2 * k)
    return r


def f3_ratio_seq(m_max: int) -> np.ndarray:
    """g[m] = F(m,3)/9^m via the recurrence run in float.

    Forward iteration tracks the dominant solution of the recurrence, so the
    float evolution is stable; tests pin it against exact values.
    """
    g = np.empty(m_max + 1)
    g[0] = 1.0
    if m_max >= 1:
        g[1] = 3.0 / 9.0
    for m in range(0, m_max - 1):
        g[m + 2] = ((10 * m * m + 30 * m + 23) * g[m + 1] - (m + 1) ** 2 * g[m]) / (
            9 * (m + 2) ** 2
        )
    return g


def f4_ratio_seq(m_max: int) -> np.ndarray:
    """g[m] = F(m,4)/16^m via convolution of halved binomial rows.

    Uses F(m,4) = sum_k C(m,k)^2 F(k,2) F(m-k,2) with every factor kept in
    its normalized [0,1] form, so no overflow for any m.
    """
    r = central_binomial_ratio_seq(m_max)
    g = np.empty(m_max + 1)
    g[0] = 1.0
    b = np.array([1.0])  # C(m,k)/2^m row
    for m in range(1, m_max + 1):
        nb = np.zeros(m + 1)
        nb[:-1] += b
        nb[1:] += b
        nb *= 0.5
        b = nb
        g[m] = float(np.dot(b * b, r[: m + 1] * r[m::-1]))
    return g


def abelian_ratio_seq(i: int, m_max: int) -> np.ndarray:
    """g[m] = F(m,i)/i^(2m) for i in {1,2,3,4}."""
    if i == 1:
        return np.ones(m_max + 1)
    if i == 2:
        return central_binomial_ratio_seq(m_max)
    if i == 3:
        return f3_ratio_seq(m_max)
    if i == 4:
        return f4_ratio_seq(m_max)
    raise ValueError("normalized sequences are provided for alphabets of size <= 4")


def fraction_ratio_terms(i: int, m_max: int) -> list[Fraction]:
    """Exact [F(m,i)/i^(2m)] for modest m_max; exact twin of abelian_ratio_seq."""
    counts = abelian_square_counts(m_max, i)
    return [Fraction(counts[m], i ** (2 * m)) for m in range(m_max + 1)]
