"""Generating polynomial of same-layer covariances, critical d=1 model.

Encode the layer-t covariances of the critical two-weight finite model as

    P_t(z, w) = sum_{i,j} Cov(X_(i,t-i), X_(j,t-j)) z^i w^j.

P_t admits a closed rational-function expression whose denominator is
(1-z)^2 (1-w)^2 (1-zw); multiplying both routes by that factor turns the
comparison into an identity of honest polynomials that can be checked
exactly, term by term.  A second identity states that multiplying P_t by
(1+w)^t and reading off the w^t slice yields a constant multiple of
1 + z + ... + z^t; the constant is what pins the closed-form optimum of the
layer estimation problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .bipoly import BivariatePoly, one_minus
from .covariance import LayerCovariance, finite_layer_covariance
from .poset import ModelSpec


def critical_d1_model() -> ModelSpec:
    return ModelSpec.finite_critical(1)


def covariance_poly_from_layer(lc: LayerCovariance) -> BivariatePoly:
    """P_t built from an exact layer covariance of the critical d=1 model."""
    if lc.backend != "exact":
        raise ValueError("the generating polynomial is exact-only")
    if lc.model != critical_d1_model():
        raise ValueError(
            "generating polynomial is defined for the normalized critical d=1 model"
        )
    coeffs = {}
    for a in range(lc.n):
        for b in range(lc.n):
            coeffs[(a, b)] = lc.sigma[a][b]
    return BivariatePoly(coeffs)


def covariance_poly(t: int) -> BivariatePoly:
    """P_t from the covariance recursion."""
    return covariance_poly_from_layer(finite_layer_covariance(critical_d1_model(), t))


def covariance_poly_closed_form_cleared(t: int) -> BivariatePoly:
    """The closed form of P_t multiplied by (1-z)^2 (1-w)^2 (1-zw)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    z = BivariatePoly.monomial(1, 0)
    w = BivariatePoly.monomial(0, 1)
    one_plus_z = BivariatePoly({(0, 0): 1, (1, 0): 1})
    one_plus_w = BivariatePoly({(0, 0): 1, (0, 1): 1})
    mz, mw, mzw = one_minus("z"), one_minus("w"), one_minus("zw")
    tri = mz * mw * mzw
    half_t = Fraction(1, 2**t)
    # the four t-th powers appearing in the closed form
    z_halfw_t = BivariatePoly.monomial(t, 0, half_t) * one_plus_w**t  # (z(1+w)/2)^t
    w_halfz_t = BivariatePoly.monomial(0, t, half_t) * one_plus_z**t  # (w(1+z)/2)^t
    halfz_t = one_plus_z**t * half_t                                  # ((1+z)/2)^t
    halfw_t = one_plus_w**t * half_t                                  # ((1+w)/2)^t
    zw_t1 = BivariatePoly.monomial(t + 1, t + 1)                      # (zw)^(t+1)

    out = BivariatePoly.zero()
    out = out + (-2) * z * w * mz * mzw * z_halfw_t
    out = out + (-2) * z * w * mw * mzw * w_halfz_t
    out = out + (t + 1) * zw_t1 * tri
    out = out + BivariatePoly({(0, 0): 2, (1, 1): -6, (2, 1): 2, (1, 2): 2}) * zw_t1
    out = out + 2 * z * mw * mzw * halfz_t
    out = out + 2 * w * mz * mzw * halfw_t
    out = out - (BivariatePoly.monomial(t + 1, 0) + BivariatePoly.monomial(0, t + 1)) * tri
    out = out + (t + 1) * tri
    out = out + BivariatePoly({(1, 0): -2, (0, 1): -2, (1, 1): 6, (2, 2): -2})
    return out


@dataclass(frozen=True)
class PolyCheckResult:
    t: int
    matched: bool
    mismatches: tuple[tuple[tuple[int, int], Fraction, Fraction], ...]

    @property
    def worst_mismatch(self) -> tuple[int, int] | None:
        """Highest-degree exponent pair where the two sides disagree."""
        if self.matched:
            return None
        return max(k for k, _, _ in self.mismatches)


def closed_form_identity_check(
    t: int, lc: LayerCovariance | None = None
) -> PolyCheckResult:
    """Compare DP-built P_t against the closed form, denominators cleared."""
    if t < 1:
        raise ValueError("the identity check is defined for t >= 1")
    poly = covariance_poly(t) if lc is None else covariance_poly_from_layer(lc)
    denom = one_minus("z") ** 2 * one_minus("w") ** 2 * one_minus("zw")
    lhs = poly * denom
    rhs = covariance_poly_closed_form_cleared(t)
    diff = lhs - rhs
    if diff.is_zero():
        return PolyCheckResult(t, True, ())
    bad = tuple(
        sorted((k, lhs.coeff(*k), rhs.coeff(*k)) for k, _ in diff.items())
    )
    return PolyCheckResult(t, False, bad)


def flat_row_constant(t: int) -> Fraction:
    """t 2^-t C(2t,t) + 2^t: the constant row value in the slice identity."""
    return Fraction(t * math.comb(2 * t, t), 2**t) + 2**t


def flat_row_identity_check(t: int, lc: LayerCovariance | None = None) -> bool:
    """Whether [w^t]((1+w)^t P_t) equals flat_row_constant(t) * (1+z+...+z^t)."""
    poly = covariance_poly(t) if lc is None else covariance_poly_from_layer(lc)
    one_plus_w = BivariatePoly({(0, 0): 1, (0, 1): 1})
    sliced = (one_plus_w**t * poly).w_slice(t)
    a = flat_row_constant(t)
    return sliced == {i: a for i in range(t + 1)}
