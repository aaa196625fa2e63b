"""Exact bivariate polynomial arithmetic over rationals.

Small dense-support polynomials in two variables (called z and w
throughout), stored as a map from exponent pairs to nonzero Fraction
coefficients.  Enough ring operations for building covariance generating
polynomials and verifying closed-form identities after clearing
denominators; nothing fancier.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping

Scalar = int | Fraction


class BivariatePoly:
    """Polynomial sum c[i,j] * z^i * w^j with exact coefficients."""

    __slots__ = ("_c",)

    def __init__(self, coeffs: Mapping[tuple[int, int], Scalar] | None = None):
        c: dict[tuple[int, int], Fraction] = {}
        if coeffs:
            for (i, j), v in coeffs.items():
                if i < 0 or j < 0:
                    raise ValueError("exponents must be nonnegative")
                fv = Fraction(v)
                if fv:
                    c[(i, j)] = fv
        self._c = c

    @classmethod
    def zero(cls) -> "BivariatePoly":
        return cls()

    @classmethod
    def one(cls) -> "BivariatePoly":
        return cls({(0, 0): 1})

    @classmethod
    def monomial(cls, i: int, j: int, coeff: Scalar = 1) -> "BivariatePoly":
        return cls({(i, j): coeff})

    def coeff(self, i: int, j: int) -> Fraction:
        return self._c.get((i, j), Fraction(0))

    def items(self):
        return self._c.items()

    def is_zero(self) -> bool:
        return not self._c

    def degrees(self) -> tuple[int, int]:
        """(max z-degree, max w-degree); (-1, -1) for the zero polynomial."""
        if not self._c:
            return (-1, -1)
        return (max(i for i, _ in self._c), max(j for _, j in self._c))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BivariatePoly):
            return NotImplemented
        return self._c == other._c

    def __hash__(self):
        return hash(frozenset(self._c.items()))

    def __add__(self, other: "BivariatePoly") -> "BivariatePoly":
        c = dict(self._c)
        for k, v in other._c.items():
            s = c.get(k, Fraction(0)) + v
            if s:
                c[k] = s
            else:
                c.pop(k, None)
        out = BivariatePoly()
        out._c = c
        return out

    def __neg__(self) -> "BivariatePoly":
        out = BivariatePoly()
        out._c = {k: -v for k, v in self._c.items()}
        return out

    def __sub__(self, other: "BivariatePoly") -> "BivariatePoly":
        return self + (-other)

    def __mul__(self, other: "BivariatePoly | Scalar") -> "BivariatePoly":
        if isinstance(other, (int, Fraction)):
            f = Fraction(other)
            out = BivariatePoly()
            if f:
                out._c = {k: v * f for k, v in self._c.items()}
            return out
        c: dict[tuple[int, int], Fraction] = {}
        for (i1, j1), v1 in self._c.items():
            for (i2, j2), v2 in other._c.items():
                k = (i1 + i2, j1 + j2)
                s = c.get(k, Fraction(0)) + v1 * v2
                if s:
                    c[k] = s
                else:
                    c.pop(k, None)
        out = BivariatePoly()
        out._c = c
        return out

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "BivariatePoly":
        if n < 0:
            raise ValueError("negative power")
        out = BivariatePoly.one()
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def swap_vars(self) -> "BivariatePoly":
        """Exchange z and w."""
        out = BivariatePoly()
        out._c = {(j, i): v for (i, j), v in self._c.items()}
        return out

    def w_slice(self, t: int) -> dict[int, Fraction]:
        """Coefficient of w^t, as a univariate polynomial {z-power: coeff}."""
        return {i: v for (i, j), v in self._c.items() if j == t}

    def __repr__(self) -> str:
        if not self._c:
            return "BivariatePoly(0)"
        terms = sorted(self._c.items())
        body = " + ".join(f"({v})*z^{i}*w^{j}" for (i, j), v in terms)
        return f"BivariatePoly({body})"


def one_minus(var: str) -> BivariatePoly:
    """(1 - z), (1 - w) or (1 - zw) as a polynomial."""
    if var == "z":
        return BivariatePoly({(0, 0): 1, (1, 0): -1})
    if var == "w":
        return BivariatePoly({(0, 0): 1, (0, 1): -1})
    if var == "zw":
        return BivariatePoly({(0, 0): 1, (1, 1): -1})
    raise ValueError(f"unknown factor {var!r}")
