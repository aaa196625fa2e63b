"""The two grid posets and their weighted path combinatorics.

Vertices are plain integer tuples in Z^(d+1); the layer of a vertex is its
coordinate sum.  Two poset families are supported:

* the finite orthant, all coordinates nonnegative, with a unique bottom
  vertex and parent counts varying with the number of positive coordinates;
* the half-space, coordinate sum nonnegative, where every vertex above
  layer zero has exactly d+1 parents.

Edges point upward (u covered by v) and carry the weight attached to the
head's parent count; the weighted count of saturated chains p(u -> v) is the
basic quantity every covariance formula is built from.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from .combinat import compositions, multinomial

Vertex = tuple[int, ...]

RationalLike = int | str | Fraction | float


def as_fraction(x: RationalLike) -> Fraction:
    """Coerce to an exact rational; floats go through their shortest repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


class ModelKind(enum.Enum):
    FINITE_ORTHANT = "finite"
    HALF_SPACE = "halfspace"


@dataclass(frozen=True)
class ModelSpec:
    """Poset family plus process parameters.

    ``alphas[i-1]`` is the weight applied by a vertex with i parents; the
    half-space model only ever consults ``alphas[d]``.  The root value has
    law N(mu0, sigma0_sq) and every edge carries independent N(0,1) noise
    scaled by epsilon.
    """

    kind: ModelKind
    d: int
    alphas: tuple[Fraction, ...]
    epsilon: Fraction = Fraction(1)
    mu0: Fraction = Fraction(0)
    sigma0_sq: Fraction = Fraction(1)

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("dimension parameter d must be >= 0")
        alphas = tuple(as_fraction(a) for a in self.alphas)
        if len(alphas) != self.d + 1:
            raise ValueError(f"expected {self.d + 1} weights, got {len(alphas)}")
        if any(a <= 0 for a in alphas):
            raise ValueError("all weights must be positive")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "epsilon", as_fraction(self.epsilon))
        object.__setattr__(self, "mu0", as_fraction(self.mu0))
        object.__setattr__(self, "sigma0_sq", as_fraction(self.sigma0_sq))
        if self.epsilon <= 0:
            raise ValueError("noise scale must be positive")
        if self.sigma0_sq <= 0:
            raise ValueError("root variance must be positive")

    # -- constructors -------------------------------------------------------

    @classmethod
    def finite(cls, d: int, alphas, **kw) -> "ModelSpec":
        return cls(ModelKind.FINITE_ORTHANT, d, tuple(alphas), **kw)

    @classmethod
    def halfspace(cls, d: int, alpha: RationalLike, **kw) -> "ModelSpec":
        a = as_fraction(alpha)
        return cls(ModelKind.HALF_SPACE, d, (a,) * (d + 1), **kw)

    @classmethod
    def finite_critical(cls, d: int, **kw) -> "ModelSpec":
        return cls.finite(d, tuple(Fraction(1, i) for i in range(1, d + 2)), **kw)

    @classmethod
    def halfspace_critical(cls, d: int, **kw) -> "ModelSpec":
        return cls.halfspace(d, Fraction(1, d + 1), **kw)

    # -- derived quantities --------------------------------------------------

    @property
    def alpha(self) -> Fraction:
        """The top weight; the only one used by the half-space model."""
        return self.alphas[-1]

    @property
    def branching(self) -> Fraction:
        """(d+1) * alpha_(d+1); one-step covariance growth factor."""
        return (self.d + 1) * self.alphas[-1]

    @property
    def is_critical(self) -> bool:
        if self.kind is ModelKind.HALF_SPACE:
            return self.alpha == Fraction(1, self.d + 1)
        return all(self.alphas[i - 1] == Fraction(1, i) for i in range(1, self.d + 2))

    @property
    def is_normalized(self) -> bool:
        return self.epsilon == 1 and self.mu0 == 0 and self.sigma0_sq == 1

    def normalized(self) -> "ModelSpec":
        """Same weights with (epsilon, mu0, sigma0^2) = (1, 0, 1)."""
        return ModelSpec(self.kind, self.d, self.alphas)

    def digest(self) -> bytes:
        """Stable 16-byte hash of the full parameter tuple."""
        parts = [self.kind.value, str(self.d)]
        parts += [f"{a.numerator}/{a.denominator}" for a in self.alphas]
        for x in (self.epsilon, self.mu0, self.sigma0_sq):
            parts.append(f"{x.numerator}/{x.denominator}")
        return hashlib.blake2b("|".join(parts).encode(), digest_size=16).digest()

    # -- membership ----------------------------------------------------------

    def contains(self, v: Vertex) -> bool:
        if len(v) != self.d + 1:
            return False
        if self.kind is ModelKind.FINITE_ORTHANT:
            return all(x >= 0 for x in v)
        return sum(v) >= 0

    def root(self) -> Vertex:
        if self.kind is not ModelKind.FINITE_ORTHANT:
            raise ValueError("only the finite orthant has a unique bottom vertex")
        return (0,) * (self.d + 1)


@dataclass(frozen=True)
class Window(object):
    """Axis-aligned half-open box: product of [base_i, base_i + width)."""

    base: tuple[int, ...]
    width: int

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("window width must be a positive integer")
        object.__setattr__(self, "base", tuple(int(b) for b in self.base))

    def contains(self, v: Vertex) -> bool:
        if len(v) != len(self.base):
            return False
        return all(b <= x < b + self.width for b, x in zip(self.base, v))


def layer(v: Vertex) -> int:
    return sum(v)


def parent_count(m: ModelSpec, v: Vertex) -> int:
    """Number of poset elements covered by v."""
    if not m.contains(v):
        raise ValueError(f"vertex {v} lies outside the poset")
    if layer(v) == 0 and m.kind is ModelKind.HALF_SPACE:
        return 0
    if m.kind is ModelKind.HALF_SPACE:
        return m.d + 1
    return sum(1 for x in v if x > 0)


def parents(v: Vertex, m: ModelSpec) -> set[Vertex]:
    """All u covered by v: v minus one unit vector, kept inside the poset."""
    if not m.contains(v):
        raise ValueError(f"vertex {v} lies outside the poset")
    out: set[Vertex] = set()
    if m.kind is ModelKind.HALF_SPACE and layer(v) == 0:
        return out
    for i in range(len(v)):
        u = v[:i] + (v[i] - 1,) + v[i + 1:]
        if m.contains(u):
            out.add(u)
    return out


def children(v: Vertex, m: ModelSpec) -> tuple[Vertex, ...]:
    """All vertices covering v; in both grid models these always exist."""
    if not m.contains(v):
        raise ValueError(f"vertex {v} lies outside the poset")
    return tuple(v[:i] + (v[i] + 1,) + v[i + 1:] for i in range(len(v)))


def layer_vertices(m: ModelSpec, t: int, window: Window | None = None) -> list[Vertex]:
    """Layer t in lexicographic order, optionally window-restricted.

    The half-space layers are infinite, so a window is mandatory there; all
    matrix and vector indexing throughout the package follows the ordering
    returned here.
    """
    if t < 0:
        raise ValueError("layer index must be >= 0")
    if m.kind is ModelKind.FINITE_ORTHANT:
        verts: Iterator[Vertex] = compositions(t, m.d + 1)
        if window is not None:
            return [v for v in verts if window.contains(v)]
        return list(verts)
    if window is None:
        raise ValueError("half-space layers are infinite; a window is required")
    if len(window.base) != m.d + 1:
        raise ValueError("window dimension does not match the model")
    out: list[Vertex] = []

    def rec(prefix: tuple[int, ...], remaining: int):
        i = len(prefix)
        if i == m.d:
            x = remaining
            if window.base[i] <= x < window.base[i] + window.width:
                v = prefix + (x,)
                out.append(v)
            return
        for x in range(window.base[i], window.base[i] + window.width):
            rec(prefix + (x,), remaining - x)

    rec((), t)
    return [v for v in out if m.contains(v)]


def _edge_weight_into(m: ModelSpec, v: Vertex) -> Fraction:
    """Weight carried by every edge whose head is v."""
    return m.alphas[parent_count(m, v) - 1]


def path_weight_sum(u: Vertex, v: Vertex, m: ModelSpec) -> Fraction:
    """Weighted count of saturated chains from u up to v.

    Each chain contributes the product of its edge weights, where an edge
    into a vertex with i parents weighs alphas[i-1].  Zero when u is not
    below v; one when u equals v.  Exact rationals throughout: at critical
    weights the chain weights form a probability distribution and the tests
    rely on the resulting identities holding exactly.
    """
    if not m.contains(u) or not m.contains(v):
        raise ValueError("both endpoints must lie in the poset")
    diff = tuple(b - a for a, b in zip(u, v))
    if any(x < 0 for x in diff):
        return Fraction(0)
    steps = sum(diff)
    if steps == 0:
        return Fraction(1)
    # layered DP over the box [u, v]
    prev: dict[Vertex, Fraction] = {u: Fraction(1)}
    for _ in range(steps):
        nxt: dict[Vertex, Fraction] = {}
        for w, acc in prev.items():
            for i in range(len(w)):
                if w[i] < v[i]:
                    c = w[:i] + (w[i] + 1,) + w[i + 1:]
                    nxt[c] = nxt.get(c, Fraction(0)) + acc * _edge_weight_into(m, c)
        prev = nxt
    return prev.get(v, Fraction(0))


def path_weights_into(v: Vertex, m: ModelSpec) -> dict[Vertex, Fraction]:
    """p(u -> v) for every u below v, one backward sweep over the box.

    The batched direction for layer sums: summing the returned values over a
    fixed layer is how the chain-probability normalization is checked.
    """
    if not m.contains(v):
        raise ValueError(f"vertex {v} lies outside the poset")
    out: dict[Vertex, Fraction] = {v: Fraction(1)}
    frontier: dict[Vertex, Fraction] = {v: Fraction(1)}
    for _ in range(layer(v)):
        nxt: dict[Vertex, Fraction] = {}
        for w, acc in frontier.items():
            weight = acc * _edge_weight_into(m, w)
            for u in parents(w, m):
                nxt[u] = nxt.get(u, Fraction(0)) + weight
        frontier = nxt
        out.update(frontier)
    return out


def halfspace_path_weight_closed_form(u: Vertex, v: Vertex, m: ModelSpec) -> Fraction:
    """alpha^k * multinomial(k, v-u) with k the layer gap; half-space only."""
    if m.kind is not ModelKind.HALF_SPACE:
        raise ValueError("closed form applies to the half-space model")
    diff = tuple(b - a for a, b in zip(u, v))
    if any(x < 0 for x in diff):
        return Fraction(0)
    k = sum(diff)
    return m.alpha**k * multinomial(k, diff)


def dependency_cone(m: ModelSpec, top: list[Vertex]) -> list[list[Vertex]]:
    """Per-layer ancestor sets of ``top`` down to layer zero, lex sorted.

    Layer t is ``sorted(set(top))``; layer k-1 collects every parent of the
    layer-k set.  In both grid models this is finite whenever ``top`` is.
    """
    if not top:
        raise ValueError("need at least one vertex")
    t = layer(top[0])
    if any(layer(v) != t for v in top):
        raise ValueError("all vertices must sit on one layer")
    layers = [sorted(set(top))]
    for _ in range(t, 0, -1):
        cur = layers[-1]
        below: set[Vertex] = set()
        for v in cur:
            below.update(parents(v, m))
        layers.append(sorted(below))
    layers.reverse()
    return layers
