"""Classification of parameter tuples into reconstruction phases.

Five reconstruction modes are ordered by implication: a single-vertex
scheme is in particular a local convex one, which is both local and convex,
and any of those witnesses plain reconstruction.  Verdicts are per-mode with
a machine-readable rule tag naming the criterion that fired; finite-model
local modes are genuinely unresolved and come back "open".
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .poset import ModelKind, ModelSpec

POSSIBLE = "possible"
IMPOSSIBLE = "impossible"
OPEN = "open"

MODES = ("reconstruction", "convex", "local", "local-convex", "single-vertex")

# A -> modes implied possible when A is possible.
IMPLIES = {
    "single-vertex": ("local-convex",),
    "local-convex": ("local", "convex"),
    "local": ("reconstruction",),
    "convex": ("reconstruction",),
}


@dataclass(frozen=True)
class Claim:
    status: str
    rule: str


@dataclass(frozen=True)
class PhaseVerdict:
    model: ModelSpec
    claims: dict[str, Claim]

    def status(self, mode: str) -> str:
        return self.claims[mode].status

    def consistent(self) -> bool:
        """No claim may contradict the implication order between modes."""

        def implied_closure(mode: str) -> set[str]:
            out: set[str] = set()
            stack = [mode]
            while stack:
                cur = stack.pop()
                for nxt in IMPLIES.get(cur, ()):
                    if nxt not in out:
                        out.add(nxt)
                        stack.append(nxt)
            return out

        for mode, claim in self.claims.items():
            if claim.status == POSSIBLE:
                for weaker in implied_closure(mode):
                    if self.claims[weaker].status == IMPOSSIBLE:
                        return False
        return True


def _finite_verdict(m: ModelSpec) -> dict[str, Claim]:
    supercritical = any(
        m.alphas[i - 1] > Fraction(1, i) for i in range(1, m.d + 2)
    )
    if supercritical:
        level = Claim(POSSIBLE, "supercritical-index")
    else:
        level = Claim(IMPOSSIBLE, "inside-subcritical-box")
    claims = {"reconstruction": level, "convex": level}
    if supercritical:
        local = Claim(OPEN, "finite-local-unresolved")
    else:
        # impossible reconstruction rules out every stronger mode
        local = Claim(IMPOSSIBLE, "inside-subcritical-box")
    claims["local"] = local
    claims["local-convex"] = local
    claims["single-vertex"] = local
    return claims


def _halfspace_verdict(m: ModelSpec) -> dict[str, Claim]:
    d = m.d
    b = m.branching
    if d == 0:
        if b > 1:
            easy = Claim(POSSIBLE, "chain-weight-above-one")
        else:
            easy = Claim(IMPOSSIBLE, "chain-weight-at-most-one")
        return {mode: easy for mode in MODES}
    if b > 1:
        local = Claim(POSSIBLE, "branching-above-one")
    elif b < 1:
        local = Claim(IMPOSSIBLE, "branching-below-one")
    elif d >= 3:
        local = Claim(POSSIBLE, "critical-high-dimension")
    else:
        local = Claim(IMPOSSIBLE, "critical-low-dimension")
    # infinitely many exchangeable layer copies make unrestricted and convex
    # reconstruction possible for every positive weight when d >= 1
    easy = Claim(POSSIBLE, "unbounded-layer-averaging")
    return {
        "reconstruction": easy,
        "convex": easy,
        "local": local,
        "local-convex": local,
        "single-vertex": local,
    }


def phase_verdict(m: ModelSpec) -> PhaseVerdict:
    """Classify the model's parameters into per-mode verdicts."""
    if m.kind is ModelKind.FINITE_ORTHANT:
        claims = _finite_verdict(m)
    else:
        claims = _halfspace_verdict(m)
    verdict = PhaseVerdict(m, claims)
    assert verdict.consistent()
    return verdict
