"""Exact and float second-order statistics of the finite-orthant process.

The process on layer t is jointly Gaussian; its covariance matrix evolves by
a bilinear layer-to-layer recursion.  Writing a(v) for the weight applied at
v and p(v) for its parent set,

    Cov(X_v, X_v') = a(v) a(v') * sum over parents u of v, u' of v' of
                     Cov(X_u, X_u'),                          for v != v',
    Var(X_v)       = the same double sum plus a(v)^2 |p(v)| epsilon^2,

because edge noises are indexed by edges and two distinct same-layer
vertices never share one.  The vector f of covariances with the root obeys
the same one-parent recursion and equals sigma0^2 times the weighted chain
count from the bottom.

Two backends share the recursion: exact ``Fraction`` arithmetic, and a
vectorized float64 path for long scans.  Both store only two consecutive
layers at a time.

For a *fixed* estimator on layer t the full matrix is not needed: pushing
its coefficients down layer by layer gives exact first and second moments in
time linear in the number of ancestors (the noise-decomposition identity
``Var = root part + sum over vertices of |p(w)| a(w)^2 coeff_w^2``), which is
what the supercritical certificates and chain bounds use.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping

import numpy as np

from .poset import (
    ModelKind,
    ModelSpec,
    Vertex,
    layer_vertices,
    parent_count,
    parents,
)

DEFAULT_MAX_LAYER = 50_000


class ResourceCapError(RuntimeError):
    """A configured size cap would be exceeded."""


@dataclass(frozen=True)
class LayerCovariance:
    """Covariance data of one layer: vertex order, matrix, root column.

    ``sigma`` is a tuple-of-tuples of Fractions for the exact backend and an
    ``np.ndarray`` for the float backend; ``f[i] = Cov(X_{vertices[i]}, X_root)``.
    Instances are immutable and safe to share across threads.
    """

    model: ModelSpec
    t: int
    vertices: tuple[Vertex, ...]
    sigma: tuple[tuple[Fraction, ...], ...] | np.ndarray
    f: tuple[Fraction, ...] | np.ndarray
    backend: str = "exact"

    @property
    def n(self) -> int:
        return len(self.vertices)

    def index_of(self, v: Vertex) -> int:
        return self.vertices.index(v)


def _check_layer_cap(n: int, max_layer_size: int):
    if n > max_layer_size:
        raise ResourceCapError(
            f"layer has {n} vertices, above the cap of {max_layer_size}"
        )


def _parent_tables(m: ModelSpec, verts: list[Vertex], prev_index: dict[Vertex, int]):
    """Per-vertex parent index lists and weights for one transition."""
    idx_lists: list[list[int]] = []
    weights: list[Fraction] = []
    counts: list[int] = []
    for v in verts:
        ps = sorted(parents(v, m))
        idx_lists.append([prev_index[u] for u in ps])
        counts.append(len(ps))
        weights.append(m.alphas[len(ps) - 1])
    return idx_lists, weights, counts


def finite_layer_covariances(
    m: ModelSpec,
    t_max: int,
    backend: str = "exact",
    max_layer_size: int = DEFAULT_MAX_LAYER,
    resume_from: LayerCovariance | None = None,
) -> Iterator[LayerCovariance]:
    """Yield LayerCovariance for t = 0 .. t_max, built by the layer recursion.

    ``resume_from`` (exact backend only) restarts the recursion from an
    already-built layer, e.g. one loaded from the binary cache; the resumed
    layer itself is yielded first.
    """
    if m.kind is not ModelKind.FINITE_ORTHANT:
        raise ValueError("layer covariance recursion applies to the finite model")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if backend not in ("exact", "float"):
        raise ValueError(f"unknown backend {backend!r}")
    if resume_from is not None:
        if backend != "exact" or resume_from.backend != "exact":
            raise ValueError("resuming is supported on the exact backend only")
        if resume_from.model != m:
            raise ValueError("resume layer belongs to a different model")
        if resume_from.t > t_max:
            raise ValueError("resume layer is above t_max")
        yield from _finite_layers_exact(m, t_max, max_layer_size, resume_from)
        return
    if backend == "exact":
        yield from _finite_layers_exact(m, t_max, max_layer_size)
    else:
        yield from _finite_layers_float(m, t_max, max_layer_size)


def finite_layer_covariance(
    m: ModelSpec,
    t: int,
    backend: str = "exact",
    max_layer_size: int = DEFAULT_MAX_LAYER,
) -> LayerCovariance:
    """LayerCovariance at a single layer t."""
    out = None
    for out in finite_layer_covariances(m, t, backend, max_layer_size):
        pass
    assert out is not None
    return out


def _finite_layers_exact(
    m: ModelSpec,
    t_max: int,
    max_layer_size: int,
    resume_from: LayerCovariance | None = None,
):
    if resume_from is None:
        t_start = 0
        verts = [m.root()]
        sigma = [[m.sigma0_sq]]
        f = [m.sigma0_sq]
        yield LayerCovariance(m, 0, tuple(verts), (tuple(sigma[0]),), tuple(f), "exact")
    else:
        t_start = resume_from.t
        verts = list(resume_from.vertices)
        sigma = [list(row) for row in resume_from.sigma]
        f = list(resume_from.f)
        yield resume_from
    eps2 = m.epsilon * m.epsilon
    for t in range(t_start + 1, t_max + 1):
        new_verts = layer_vertices(m, t)
        n = len(new_verts)
        _check_layer_cap(n, max_layer_size)
        prev_index = {v: i for i, v in enumerate(verts)}
        idx_lists, weights, counts = _parent_tables(m, new_verts, prev_index)
        new_sigma = [[Fraction(0)] * n for _ in range(n)]
        for a in range(n):
            rows_a = [sigma[i] for i in idx_lists[a]]
            wa = weights[a]
            for b in range(a, n):
                s = Fraction(0)
                for row in rows_a:
                    for j in idx_lists[b]:
                        s += row[j]
                cov = wa * weights[b] * s
                if a == b:
                    cov += wa * wa * counts[a] * eps2
                new_sigma[a][b] = cov
                new_sigma[b][a] = cov
        new_f = [
            weights[a] * sum((f[i] for i in idx_lists[a]), Fraction(0))
            for a in range(n)
        ]
        verts, sigma, f = new_verts, new_sigma, new_f
        yield LayerCovariance(
            m, t, tuple(verts), tuple(tuple(r) for r in sigma), tuple(f), "exact"
        )


def _finite_layers_float(m: ModelSpec, t_max: int, max_layer_size: int):
    verts = [m.root()]
    sigma = np.array([[float(m.sigma0_sq)]])
    f = np.array([float(m.sigma0_sq)])
    yield LayerCovariance(m, 0, tuple(verts), sigma.copy(), f.copy(), "float")
    eps2 = float(m.epsilon) ** 2
    alphas = [float(a) for a in m.alphas]
    for t in range(1, t_max + 1):
        new_verts = layer_vertices(m, t)
        n = len(new_verts)
        _check_layer_cap(n, max_layer_size)
        prev_index = {v: i for i, v in enumerate(verts)}
        d1 = m.d + 1
        parent_idx = np.full((n, d1), -1, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        for a, v in enumerate(new_verts):
            ps = sorted(parents(v, m))
            counts[a] = len(ps)
            for k, u in enumerate(ps):
                parent_idx[a, k] = prev_index[u]
        w = np.array([alphas[c - 1] for c in counts])
        half = np.zeros((n, sigma.shape[0]))
        for k in range(d1):
            idx = parent_idx[:, k]
            mask = idx >= 0
            half[mask] += sigma[idx[mask], :]
        new_sigma = np.zeros((n, n))
        for k in range(d1):
            idx = parent_idx[:, k]
            mask = idx >= 0
            new_sigma[:, mask] += half[:, idx[mask]]
        new_sigma *= np.outer(w, w)
        new_sigma[np.arange(n), np.arange(n)] += w * w * counts * eps2
        new_f = np.zeros(n)
        for k in range(d1):
            idx = parent_idx[:, k]
            mask = idx >= 0
            new_f[mask] += f[idx[mask]]
        new_f *= w
        verts, sigma, f = new_verts, new_sigma, new_f
        yield LayerCovariance(m, t, tuple(verts), sigma.copy(), f.copy(), "float")


# ---------------------------------------------------------------------------
# fixed-estimator evaluation by pushing coefficients down the poset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorStats:
    """Exact moments of a fixed layer-t combination."""

    cov_root: Fraction
    variance: Fraction

    @property
    def ratio_sq(self) -> Fraction:
        return self.cov_root * self.cov_root / self.variance


def extend_coeffs_down(
    m: ModelSpec, t: int, coeffs: Mapping[Vertex, Fraction]
) -> list[dict[Vertex, Fraction]]:
    """Layer-indexed extension a_w = sum_u coeff_u p(w -> u), w below layer t.

    Element [k] of the result covers layer k.  Works for both grid models;
    only ancestors of the support are materialized.
    """
    if t < 0:
        raise ValueError("layer index must be >= 0")
    cur: dict[Vertex, Fraction] = {}
    for v, c in coeffs.items():
        if sum(v) != t:
            raise ValueError(f"coefficient vertex {v} is not on layer {t}")
        if not m.contains(v):
            raise ValueError(f"vertex {v} lies outside the poset")
        c = Fraction(c)
        if c:
            cur[v] = cur.get(v, Fraction(0)) + c
    if not cur:
        raise ValueError("coefficients must not all be zero")
    out = [cur]
    for _ in range(t):
        nxt: dict[Vertex, Fraction] = {}
        for u, a in out[-1].items():
            weight = a * m.alphas[parent_count(m, u) - 1]
            for w in parents(u, m):
                nxt[w] = nxt.get(w, Fraction(0)) + weight
        out.append(nxt)
    out.reverse()
    return out


def estimator_stats(
    m: ModelSpec, t: int, coeffs: Mapping[Vertex, Fraction]
) -> EstimatorStats:
    """Exact Cov(zeta, X_root) and Var(zeta) for zeta = sum coeff_v X_v.

    Uses the noise decomposition: the root contributes through the total
    extended weight at layer zero (all layer-zero vertices carry the same
    root variable), one fresh-noise block per vertex contributes
    |p(w)| a(w)^2 extended_coeff(w)^2 epsilon^2.
    """
    ext = extend_coeffs_down(m, t, coeffs)
    root_total = sum(ext[0].values(), Fraction(0))
    cov_root = m.sigma0_sq * root_total
    var = m.sigma0_sq * root_total * root_total
    eps2 = m.epsilon * m.epsilon
    for k in range(1, t + 1):
        for w, a in ext[k].items():
            pc = parent_count(m, w)
            alpha = m.alphas[pc - 1]
            var += eps2 * pc * alpha * alpha * a * a
    return EstimatorStats(cov_root=cov_root, variance=var)


# ---------------------------------------------------------------------------
# optional binary cache
# ---------------------------------------------------------------------------

_MAGIC = b"GBLC"
_VERSION = 1


def _write_int(out: bytearray, x: int):
    raw = x.to_bytes((x.bit_length() + 8) // 8, "little", signed=True)
    out += struct.pack("<I", len(raw))
    out += raw


def _read_int(buf: memoryview, pos: int) -> tuple[int, int]:
    (ln,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    val = int.from_bytes(buf[pos : pos + ln], "little", signed=True)
    return val, pos + ln


def save_layer_covariance(lc: LayerCovariance, path) -> None:
    """Serialize an exact LayerCovariance; format is a pure cache artifact."""
    if lc.backend != "exact":
        raise ValueError("only the exact backend is cached")
    out = bytearray()
    out += _MAGIC
    out += bytes([_VERSION])
    out += lc.model.digest()
    out += struct.pack("<III", lc.model.d, lc.t, lc.n)
    for row in lc.sigma:
        for x in row:
            _write_int(out, x.numerator)
            _write_int(out, x.denominator)
    for x in lc.f:
        _write_int(out, x.numerator)
        _write_int(out, x.denominator)
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_layer_covariance(m: ModelSpec, path) -> LayerCovariance:
    """Read back a cached layer; validates magic, version and model hash."""
    with open(path, "rb") as fh:
        raw = fh.read()
    buf = memoryview(raw)
    if bytes(buf[:4]) != _MAGIC:
        raise ValueError("not a layer covariance cache file")
    if buf[4] != _VERSION:
        raise ValueError(f"unsupported cache version {buf[4]}")
    if bytes(buf[5:21]) != m.digest():
        raise ValueError("cache file belongs to a different model")
    d, t, n = struct.unpack_from("<III", buf, 21)
    if d != m.d:
        raise ValueError("dimension mismatch in cache header")
    pos = 21 + 12
    sigma_rows = []
    for _ in range(n):
        row = []
        for _ in range(n):
            num, pos = _read_int(buf, pos)
            den, pos = _read_int(buf, pos)
            row.append(Fraction(num, den))
        sigma_rows.append(tuple(row))
    f_vals = []
    for _ in range(n):
        num, pos = _read_int(buf, pos)
        den, pos = _read_int(buf, pos)
        f_vals.append(Fraction(num, den))
    verts = tuple(layer_vertices(m, t))
    if len(verts) != n:
        raise ValueError("vertex count mismatch in cache header")
    return LayerCovariance(m, t, verts, tuple(sigma_rows), tuple(f_vals), "exact")


def cache_filename(m: ModelSpec, t: int, backend: str = "exact") -> str:
    return f"layercov-{m.digest().hex()}-t{t}-{backend}.bin"
