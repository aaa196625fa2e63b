"""Downward-chain hit probabilities and exact Poisson tail inequalities.

At critical weights the chain weights p(w -> u) are exactly the law of a
uniformly-random descending chain started on layer t, so for convex layer
weights c the quantity P(w in chain) = sum_u c_u p(w -> u) is a probability,
and the variance of the corresponding convex layer combination is bounded
below by 1/(d+1) times its squared sum over the whole poset.  The
continuous-time clock picture only enters through two Poisson tail facts,
which are decided here with exact rational CDFs against certified
enclosures of powers of e.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .bounds import exp_int_bounds
from .covariance import extend_coeffs_down
from .poset import ModelKind, ModelSpec, Vertex


@dataclass(frozen=True)
class ChainDistribution:
    """Hit probabilities of the descending chain, layer by layer."""

    model: ModelSpec
    t: int
    start_weights: dict[Vertex, Fraction]
    hit_probabilities: tuple[dict[Vertex, Fraction], ...]  # index = layer

    def layer_total(self, k: int) -> Fraction:
        return sum(self.hit_probabilities[k].values(), Fraction(0))

    def squared_mass(self) -> Fraction:
        """sum over all poset elements of P(w in chain)^2."""
        return sum(
            (p * p for lay in self.hit_probabilities for p in lay.values()),
            Fraction(0),
        )

    def variance_lower_bound(self) -> Fraction:
        return self.squared_mass() / (self.model.d + 1)


def chain_hit_probabilities(
    weights: Mapping[Vertex, Fraction], m: ModelSpec
) -> ChainDistribution:
    """P(w in chain) for the chain started on layer t with convex weights.

    Only defined at critical weights, where the chain law and the weighted
    path counts coincide.
    """
    if m.kind is not ModelKind.FINITE_ORTHANT:
        raise ValueError("the descending chain lives on the finite model")
    if not m.is_critical:
        raise ValueError("chain probabilities require critical weights")
    w = {v: Fraction(c) for v, c in weights.items()}
    if any(c < 0 for c in w.values()):
        raise ValueError("start weights must be nonnegative")
    total = sum(w.values(), Fraction(0))
    if total != 1:
        raise ValueError("start weights must sum to one")
    layers = {sum(v) for v in w}
    if len(layers) != 1:
        raise ValueError("start weights must sit on a single layer")
    t = layers.pop()
    ext = extend_coeffs_down(m, t, w)
    return ChainDistribution(m, t, w, tuple(ext))


# ---------------------------------------------------------------------------
# Poisson tails, decided exactly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoissonTailResult:
    T: int
    upper_half_ok: bool       # P(Z >= T) >= 1/2
    lower_tail_ok: bool       # P(Z <= T - sqrt(T)) >= e^-9
    lower_cutoff: int         # floor(T - sqrt(T))


def _partial_factorial_sum(T: int, upto: int) -> Fraction:
    """sum_{k=0}^{upto} T^k / k! as one exact rational."""
    if upto < 0:
        return Fraction(0)
    num = 0
    scale = 1  # upto!/k!, built downward from k = upto
    tk = T**upto
    for k in range(upto, -1, -1):
        num += tk * scale
        if k > 0:
            scale *= k
            tk //= T
    return Fraction(num, scale)


def poisson_tail_check(T: int, guard_bits: int = 64) -> PoissonTailResult:
    """Decide both tail inequalities for Z ~ Poisson(T), integer T >= 1."""
    if T < 1:
        raise ValueError("T must be a positive integer")
    exp_lo, exp_hi = exp_int_bounds(T, guard_bits)
    # P(Z >= T) >= 1/2  <=>  2 * sum_{k<T} T^k/k! <= e^T
    head = _partial_factorial_sum(T, T - 1)
    upper_half_ok = 2 * head <= exp_lo
    if not upper_half_ok and 2 * head <= exp_hi:
        raise ArithmeticError("e^T enclosure too wide; raise guard_bits")
    # cutoff m* = max integer m with (T - m)^2 >= T, i.e. m <= T - sqrt(T)
    cutoff = T - 1
    while cutoff >= 0 and (T - cutoff) ** 2 < T:
        cutoff -= 1
    if cutoff < 0:
        lower_tail_ok = False
    else:
        tail_head = _partial_factorial_sum(T, cutoff)
        # P(Z <= cutoff) >= e^-9  <=>  sum_{k<=cutoff} T^k/k! >= e^(T-9)
        thr_lo, thr_hi = exp_int_bounds(T - 9, guard_bits)
        lower_tail_ok = tail_head >= thr_hi
        if not lower_tail_ok and tail_head >= thr_lo:
            raise ArithmeticError("e^(T-9) enclosure too wide; raise guard_bits")
    return PoissonTailResult(T, upper_half_ok, lower_tail_ok, cutoff)


def poisson_tail_checks(T_max: int, guard_bits: int = 64) -> list[PoissonTailResult]:
    """Both bounds for every T = 1..T_max."""
    return [poisson_tail_check(T, guard_bits) for T in range(1, T_max + 1)]
