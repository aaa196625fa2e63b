"""Closed-form covariances for the half-space model.

Translation invariance makes every layer-t vertex statistically identical:
with B = (d+1) * alpha,

    Cov(X_v, X_root) = B^t sigma0^2,
    Var(X_v)         = B^(2t) sigma0^2
                       + eps^2 (d+1) alpha^2 * sum_{k<t} alpha^(2k) F(k, d+1),
    Cov(X_v, X_v')   = same with the abelian-square count F replaced by the
                       shifted autocorrelation sum_w C(k,w) C(k, w+v-v').

The shifted sums have a closed Vandermonde form for d=1 and a quadratic-size
exact convolution for d=2; larger d would need a cubic-size convolution per
term, which nothing downstream requires, so pair covariances stop at d=2
(single-vertex variances work for every d).

Float scans use the normalized series S_t = sum_{k<t} B^(2(k-t)) g_k with
g_k = F(k, d+1)/(d+1)^(2k), updated by S_{t+1} = (S_t + g_t)/B^2 so nothing
overflows for B >= 1; for B < 1 the bounded partial sums are used directly
and a log-scale ratio is available where the plain one would underflow.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .combinat import (
    abelian_ratio_seq,
    abelian_square_count,
    abelian_square_counts,
    multinomial,
)
from .poset import ModelKind, ModelSpec, Vertex, Window, layer_vertices
from .covariance import LayerCovariance


def _require_halfspace(m: ModelSpec):
    if m.kind is not ModelKind.HALF_SPACE:
        raise ValueError("this quantity is defined for the half-space model")


def halfspace_vertex_variance(m: ModelSpec, t: int) -> Fraction:
    """Exact Var(X_v) for any vertex v on layer t."""
    _require_halfspace(m)
    if t < 0:
        raise ValueError("layer index must be >= 0")
    if t == 0:
        return m.sigma0_sq
    a = m.alpha
    b = m.branching
    counts = abelian_square_counts(t - 1, m.d + 1)
    noise = sum((a ** (2 * k) * counts[k] for k in range(t)), Fraction(0))
    return b ** (2 * t) * m.sigma0_sq + m.epsilon**2 * (m.d + 1) * a * a * noise


def halfspace_root_covariance(m: ModelSpec, t: int) -> Fraction:
    """Exact Cov(X_v, X_root) = B^t sigma0^2 on layer t."""
    _require_halfspace(m)
    if t < 0:
        raise ValueError("layer index must be >= 0")
    return m.branching**t * m.sigma0_sq


def _binomial_autocorr(k: int, shift: int) -> int:
    idx = k + shift
    if idx < 0 or idx > 2 * k:
        return 0
    return math.comb(2 * k, idx)


def _trinomial_autocorr(k: int, delta: tuple[int, int, int]) -> int:
    d1, d2, d3 = delta
    total = 0
    for w1 in range(max(0, -d1), k + 1):
        rem = k - w1
        w2_hi = rem - max(0, -d3)
        w2_lo = max(0, -d2)
        if w2_hi < w2_lo:
            continue
        c1 = math.comb(k, w1)
        for w2 in range(w2_lo, w2_hi + 1):
            w3 = rem - w2
            m1 = c1 * math.comb(rem, w2)
            m2 = multinomial(k, (w1 + d1, w2 + d2, w3 + d3))
            if m2:
                total += m1 * m2
    return total


def shifted_autocorrelation(k: int, delta: tuple[int, ...]) -> int:
    """sum_w multinomial(k,w) * multinomial(k,w+delta) over w in Z^(d+1)."""
    if sum(delta) != 0:
        raise ValueError("shift must have zero coordinate sum")
    if len(delta) == 1:
        return abelian_square_count(k, 1) if k >= 0 else 0
    if len(delta) == 2:
        return _binomial_autocorr(k, delta[0])
    if len(delta) == 3:
        return _trinomial_autocorr(k, delta)
    raise NotImplementedError(
        "pair covariances are implemented for d <= 2; use vertex variances for d >= 3"
    )


def halfspace_pair_covariance(m: ModelSpec, t: int, delta: tuple[int, ...]) -> Fraction:
    """Exact Cov(X_v, X_v') for layer-t vertices with v - v' = delta."""
    _require_halfspace(m)
    if t < 0:
        raise ValueError("layer index must be >= 0")
    if len(delta) != m.d + 1:
        raise ValueError("shift dimension does not match the model")
    if sum(delta) != 0:
        raise ValueError("vertices on one layer differ by a zero-sum shift")
    if all(x == 0 for x in delta):
        return halfspace_vertex_variance(m, t)
    if m.d > 2:
        raise NotImplementedError(
            "pair covariances are implemented for d <= 2; use vertex variances for d >= 3"
        )
    a = m.alpha
    acc = Fraction(0)
    for k in range(t):
        s = shifted_autocorrelation(k, delta)
        if s:
            acc += a ** (2 * k) * s
    return m.branching ** (2 * t) * m.sigma0_sq + m.epsilon**2 * (m.d + 1) * a * a * acc


def single_vertex_ratio_sq_exact(m: ModelSpec, t: int) -> Fraction:
    """Exact (Cov(X_v, X_root))^2 / Var(X_v) on layer t."""
    cov = halfspace_root_covariance(m, t)
    return cov * cov / halfspace_vertex_variance(m, t)


def single_vertex_ratio_sq_exact_upto(m: ModelSpec, t_max: int) -> list[Fraction]:
    """Exact squared ratios for t = 0..t_max, sharing one count table."""
    _require_halfspace(m)
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    counts = abelian_square_counts(max(t_max - 1, 0), m.d + 1)
    a = m.alpha
    b2t = m.sigma0_sq  # B^(2t) sigma0^2
    noise = Fraction(0)  # sum_{k<t} a^(2k) F(k, d+1)
    scale = m.epsilon**2 * (m.d + 1) * a * a
    out = [m.sigma0_sq]
    apow = Fraction(1)
    for t in range(1, t_max + 1):
        noise += apow * counts[t - 1]
        apow *= a * a
        b2t *= m.branching**2
        cov = m.branching**t * m.sigma0_sq
        out.append(cov * cov / (b2t + scale * noise))
    return out


# ---------------------------------------------------------------------------
# float scans
# ---------------------------------------------------------------------------

def normalized_noise_series(m: ModelSpec, t_max: int) -> np.ndarray:
    """S[t] = sum_{k<t} B^(2(k-t)) g_k for t = 0..t_max (float).

    For subcritical models the terms grow with t; entries overflow to inf
    once past float range, and callers fall back to the log-scale helpers.
    """
    _require_halfspace(m)
    g = abelian_ratio_seq(m.d + 1, max(t_max - 1, 0))
    b2 = float(m.branching) ** 2
    out = np.empty(t_max + 1)
    out[0] = 0.0
    s = 0.0
    with np.errstate(over="ignore"):
        for t in range(1, t_max + 1):
            s = (s + g[t - 1]) / b2
            out[t] = s
    return out


def single_vertex_ratio_series(m: ModelSpec, t_max: int) -> np.ndarray:
    """rho[t] = Cov(X_v, X_root)/sqrt(Var(X_v)) for t = 0..t_max (float)."""
    s = normalized_noise_series(m, t_max)
    sig = float(m.sigma0_sq)
    c = float(m.epsilon) ** 2 * (m.d + 1) * float(m.alpha) ** 2
    with np.errstate(over="ignore", invalid="ignore"):
        out = sig / np.sqrt(sig + c * s)
    out[np.isnan(out)] = 0.0
    return out


def single_vertex_log10_ratio_series(m: ModelSpec, t_max: int) -> np.ndarray:
    """log10 of the single-vertex ratio, finite deep in the subcritical range."""
    _require_halfspace(m)
    g = abelian_ratio_seq(m.d + 1, max(t_max - 1, 0))
    b = float(m.branching)
    sig = float(m.sigma0_sq)
    c = float(m.epsilon) ** 2 * (m.d + 1) * float(m.alpha) ** 2
    out = np.empty(t_max + 1)
    out[0] = 0.0
    if b >= 1.0:
        s = 0.0
        for t in range(1, t_max + 1):
            s = (s + g[t - 1]) / (b * b)
            out[t] = math.log10(sig) - 0.5 * math.log10(sig + c * s)
    else:
        w = 0.0  # bounded partial sums sum_{k<t} B^(2k) g_k
        bpow = 1.0
        for t in range(1, t_max + 1):
            w += bpow * g[t - 1]
            bpow *= b * b
            # Var/sigma0^4-normalized, in logs: ratio = B^t sig / sqrt(B^2t sig + c w)
            out[t] = t * math.log10(b) + math.log10(sig) - 0.5 * math.log10(
                bpow * sig + c * w
            )
    return out


def _binomial_autocorr_scaled(k: int, shift: int) -> float:
    """C(2k, k+shift)/4^k via log-gamma; exact enough for float scans."""
    idx = k + shift
    if idx < 0 or idx > 2 * k:
        return 0.0
    if k == 0:
        return 1.0
    return math.exp(
        math.lgamma(2 * k + 1)
        - math.lgamma(idx + 1)
        - math.lgamma(2 * k - idx + 1)
        - k * math.log(4.0)
    )


def pair_covariance_over_cov_sq_series(
    m: ModelSpec, t_max: int, shift: int
) -> np.ndarray:
    """d=1 only: Cov(X_v, X_{v+delta}) / B^(2t) for t = 0..t_max (float).

    delta = (shift, -shift).  Dividing by the squared root covariance keeps
    the series in float range at every criticality.
    """
    _require_halfspace(m)
    if m.d != 1:
        raise NotImplementedError("float pair scans are provided for d = 1")
    b2 = float(m.branching) ** 2
    sig = float(m.sigma0_sq)
    c = float(m.epsilon) ** 2 * (m.d + 1) * float(m.alpha) ** 2
    out = np.empty(t_max + 1)
    out[0] = sig
    s = 0.0
    for t in range(1, t_max + 1):
        s = (s + _binomial_autocorr_scaled(t - 1, shift)) / b2
        out[t] = sig + c * s
    return out


# ---------------------------------------------------------------------------
# window-restricted layer covariance
# ---------------------------------------------------------------------------

def window_layer_covariance(
    m: ModelSpec, t: int, window: Window, backend: str = "exact"
) -> LayerCovariance:
    """Covariance of the window-restricted layer, from the closed forms.

    Exact backend evaluates every distinct vertex difference once; the float
    backend floats the exact entries (window layers are small, the expensive
    part is the per-difference series, which is shared).
    """
    _require_halfspace(m)
    verts = layer_vertices(m, t, window)
    if not verts:
        raise ValueError("the window meets layer {} in no vertices".format(t))
    if len(verts) > 1 and m.d > 2:
        raise NotImplementedError(
            "pair covariances are implemented for d <= 2; use width-1 windows for d >= 3"
        )
    cache: dict[tuple[int, ...], Fraction] = {}

    def pair(delta: tuple[int, ...]) -> Fraction:
        key = min(delta, tuple(-x for x in delta))
        if key not in cache:
            cache[key] = halfspace_pair_covariance(m, t, key)
        return cache[key]

    n = len(verts)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            delta = tuple(a - b for a, b in zip(verts[i], verts[j]))
            row.append(pair(delta))
        rows.append(tuple(row))
    f = tuple(halfspace_root_covariance(m, t) for _ in range(n))
    if backend == "exact":
        return LayerCovariance(m, t, tuple(verts), tuple(rows), f, "exact")
    if backend == "float":
        sigma = np.array([[float(x) for x in row] for row in rows])
        fv = np.array([float(x) for x in f])
        return LayerCovariance(m, t, tuple(verts), sigma, fv, "float")
    raise ValueError(f"unknown backend {backend!r}")


def window_scaled_covariance_float(
    m: ModelSpec, t: int, window: Window
) -> tuple[tuple[Vertex, ...], np.ndarray, np.ndarray]:
    """(vertices, Sigma/B^2t, f/B^t) in float, d <= 1 only.

    Ratios of estimators are invariant under this joint rescaling, and the
    scaled entries stay in float range at every criticality and depth, which
    is what large-t window scans need.
    """
    _require_halfspace(m)
    if m.d > 1:
        raise NotImplementedError("the scaled float window path covers d <= 1")
    verts = layer_vertices(m, t, window)
    if not verts:
        raise ValueError(f"the window meets layer {t} in no vertices")
    n = len(verts)
    if m.d == 0:
        val = float(m.sigma0_sq) + float(m.epsilon) ** 2 * float(m.alpha) ** 2 * float(
            normalized_noise_series(m, t)[t]
        )
        series = {0: val}
    else:
        shifts = {abs(verts[i][0] - verts[j][0]) for i in range(n) for j in range(n)}
        series = {
            s: float(pair_covariance_over_cov_sq_series(m, t, s)[t])
            for s in sorted(shifts)
        }
    sigma = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            s = abs(verts[i][0] - verts[j][0]) if m.d == 1 else 0
            sigma[i, j] = series[s]
    f = np.full(n, float(m.sigma0_sq))
    return tuple(verts), sigma, f


def subcritical_window_ratio_bound(m: ModelSpec, t: int, width: int) -> float:
    """width^(d/2) / (alpha sqrt(d+1)) * B^t; valid bound for B < 1."""
    _require_halfspace(m)
    if m.branching >= 1:
        raise ValueError("the exponential bound applies below criticality")
    return (
        float(width) ** (m.d / 2)
        / (float(m.alpha) * math.sqrt(m.d + 1))
        * float(m.branching) ** t
    )
