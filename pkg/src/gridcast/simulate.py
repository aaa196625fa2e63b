"""Monte Carlo sampler: an oracle independent of the covariance engines.

Sampling follows the defining recursion directly: the root value is drawn
once per sample, every covering edge gets one fresh standard Gaussian, and
each vertex applies its weight to the sum of parent values plus scaled edge
noise.  The half-space model is simulated exactly on the dependency cone of
the requested window; every cone vertex on layer zero carries the same root
draw, so no boundary is ever approximated.

Reproducibility contract: draws come from the Philox counter-based
generator; sample index space is split into fixed-size chunks and chunk i
uses the substream spawned as SeedSequence(seed).spawn-key (i,).  Identical
(model, window, t, n, seed) therefore produce byte-identical batches
regardless of how results are consumed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import sqrt
from typing import Callable

import numpy as np

from .covariance import ResourceCapError
from .poset import (
    ModelKind,
    ModelSpec,
    Vertex,
    Window,
    dependency_cone,
    layer_vertices,
    parents,
)

CHUNK = 1 << 16
DEFAULT_MAX_CELLS = 10**7


@dataclass(frozen=True)
class SampleBatch:
    """Layer-t samples plus the root draw for each sample."""

    model: ModelSpec
    t: int
    n: int
    seed: int
    vertices: tuple[Vertex, ...]
    x: np.ndarray   # shape (n, len(vertices))
    x0: np.ndarray  # shape (n,)


@dataclass(frozen=True)
class MomentSummary:
    """Streaming first/second moments of [X_root, X_v1, ..., X_vk]."""

    model: ModelSpec
    t: int
    n: int
    seed: int
    vertices: tuple[Vertex, ...]
    mean: np.ndarray      # length k+1, root first
    second: np.ndarray    # (k+1, k+1) raw sum of outer products

    def sample_cov(self) -> np.ndarray:
        m = self.mean
        return (self.second - self.n * np.outer(m, m)) / (self.n - 1)

    def standard_error(self, exact_cov: np.ndarray) -> np.ndarray:
        """SE of each sample covariance entry, from exact second moments."""
        d = np.diag(exact_cov)
        return np.sqrt((np.outer(d, d) + exact_cov**2) / (self.n - 1))


class _Layout:
    """Precomputed propagation tables: one entry per layer transition."""

    def __init__(self, m: ModelSpec, layers: list[list[Vertex]]):
        self.model = m
        self.layers = layers
        self.steps = []
        alphas = [float(a) for a in m.alphas]
        for k in range(1, len(layers)):
            prev_index = {v: i for i, v in enumerate(layers[k - 1])}
            verts = layers[k]
            idx_rows = []
            counts = []
            for v in verts:
                ps = sorted(parents(v, m))
                idx_rows.append([prev_index[u] for u in ps])
                counts.append(len(ps))
            width = max(counts)
            pidx = np.full((len(verts), width), -1, dtype=np.int64)
            for a, row in enumerate(idx_rows):
                pidx[a, : len(row)] = row
            offsets = np.zeros(len(verts), dtype=np.int64)
            np.cumsum(counts[:-1], out=offsets[1:])
            self.steps.append(
                {
                    "pidx": pidx,
                    "counts": np.array(counts, dtype=np.int64),
                    "alpha": np.array([alphas[c - 1] for c in counts]),
                    "offsets": offsets,
                    "n_edges": int(sum(counts)),
                }
            )

    @property
    def total_vertices(self) -> int:
        return sum(len(l) for l in self.layers)


def _finite_layout(m: ModelSpec, t: int) -> _Layout:
    if m.kind is not ModelKind.FINITE_ORTHANT:
        raise ValueError("finite-model layout requested for another poset")
    return _Layout(m, [layer_vertices(m, k) for k in range(t + 1)])


def _halfspace_layout(m: ModelSpec, window: Window, t: int) -> _Layout:
    if m.kind is not ModelKind.HALF_SPACE:
        raise ValueError("half-space layout requested for another poset")
    top = layer_vertices(m, t, window)
    if not top:
        raise ValueError(f"the window meets layer {t} in no vertices")
    return _Layout(m, dependency_cone(m, top))


def _chunk_generator(seed: int, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    return np.random.Generator(np.random.Philox(ss))


def _propagate_chunk(
    layout: _Layout, gen: np.random.Generator, k: int, eps: float
) -> tuple[np.ndarray, np.ndarray]:
    m = layout.model
    x0 = float(m.mu0) + sqrt(float(m.sigma0_sq)) * gen.standard_normal(k)
    cur = np.repeat(x0[:, None], len(layout.layers[0]), axis=1)
    for step in layout.steps:
        pidx = step["pidx"]
        n1 = pidx.shape[0]
        acc = np.zeros((k, n1))
        for col in range(pidx.shape[1]):
            idx = pidx[:, col]
            mask = idx >= 0
            acc[:, mask] += cur[:, idx[mask]]
        noise = gen.standard_normal((k, step["n_edges"]))
        acc += eps * np.add.reduceat(noise, step["offsets"], axis=1)
        cur = acc * step["alpha"]
    return x0, cur


def _run_chunks(
    layout: _Layout,
    n: int,
    seed: int,
    eps: float,
    consume: Callable[[np.ndarray, np.ndarray], None],
):
    done = 0
    chunk_index = 0
    while done < n:
        k = min(CHUNK, n - done)
        gen = _chunk_generator(seed, chunk_index)
        x0, top = _propagate_chunk(layout, gen, k, eps)
        consume(x0, top)
        done += k
        chunk_index += 1


def _check_cells(layout: _Layout, n: int, max_cells: int):
    cells = layout.total_vertices * n
    if cells > max_cells:
        raise ResourceCapError(
            f"simulation needs {cells} vertex-samples, above the cap of {max_cells}"
        )


def _resolve_eps(m: ModelSpec, epsilon_override: float | None) -> float:
    if epsilon_override is None:
        return float(m.epsilon)
    if epsilon_override < 0:
        raise ValueError("noise override must be >= 0")
    return float(epsilon_override)


def sample_finite(
    m: ModelSpec,
    t: int,
    n: int,
    seed: int,
    max_cells: int = DEFAULT_MAX_CELLS,
    epsilon_override: float | None = None,
) -> SampleBatch:
    """n independent samples of the full layer t of the finite model."""
    if n < 1:
        raise ValueError("need at least one sample")
    layout = _finite_layout(m, t)
    _check_cells(layout, n, max_cells)
    xs = []
    x0s = []
    _run_chunks(
        layout, n, seed, _resolve_eps(m, epsilon_override),
        lambda x0, top: (x0s.append(x0), xs.append(top)),
    )
    return SampleBatch(
        m, t, n, seed, tuple(layout.layers[-1]), np.vstack(xs), np.concatenate(x0s)
    )


def sample_halfspace_window(
    m: ModelSpec,
    window: Window,
    t: int,
    n: int,
    seed: int,
    max_cells: int = DEFAULT_MAX_CELLS,
    epsilon_override: float | None = None,
) -> SampleBatch:
    """Exact simulation of the window vertices over their dependency cone."""
    if n < 1:
        raise ValueError("need at least one sample")
    layout = _halfspace_layout(m, window, t)
    _check_cells(layout, n, max_cells)
    xs = []
    x0s = []
    _run_chunks(
        layout, n, seed, _resolve_eps(m, epsilon_override),
        lambda x0, top: (x0s.append(x0), xs.append(top)),
    )
    return SampleBatch(
        m, t, n, seed, tuple(layout.layers[-1]), np.vstack(xs), np.concatenate(x0s)
    )


def sample_moments(
    m: ModelSpec,
    t: int,
    n: int,
    seed: int,
    window: Window | None = None,
    max_cells: int = DEFAULT_MAX_CELLS,
    epsilon_override: float | None = None,
) -> MomentSummary:
    """Streaming moment accumulation; draws identical to the batch samplers."""
    if n < 2:
        raise ValueError("need at least two samples")
    if m.kind is ModelKind.FINITE_ORTHANT:
        layout = _finite_layout(m, t)
    else:
        if window is None:
            raise ValueError("half-space sampling requires a window")
        layout = _halfspace_layout(m, window, t)
    _check_cells(layout, n, max_cells)
    width = len(layout.layers[-1]) + 1
    total = np.zeros(width)
    second = np.zeros((width, width))

    def consume(x0: np.ndarray, top: np.ndarray):
        y = np.hstack([x0[:, None], top])
        total[:] += y.sum(axis=0)
        second[:] += y.T @ y

    _run_chunks(layout, n, seed, _resolve_eps(m, epsilon_override), consume)
    return MomentSummary(
        m, t, n, seed, tuple(layout.layers[-1]), total / n, second
    )


def moment_summary(batch: SampleBatch) -> MomentSummary:
    """Moments of an in-memory batch; matches sample_moments for equal seeds."""
    y = np.hstack([batch.x0[:, None], batch.x])
    return MomentSummary(
        batch.model,
        batch.t,
        batch.n,
        batch.seed,
        batch.vertices,
        y.mean(axis=0),
        y.T @ y,
    )


def export_csv(batch: SampleBatch, path) -> None:
    """One row per sample; vertex columns labelled by coordinate tuples."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0"] + ["(" + ",".join(map(str, v)) + ")" for v in batch.vertices])
        for i in range(batch.n):
            writer.writerow(
                [repr(float(batch.x0[i]))]
                + [repr(float(x)) for x in batch.x[i]]
            )


def export_npz(batch: SampleBatch, path) -> None:
    np.savez_compressed(
        path,
        x=batch.x,
        x0=batch.x0,
        vertices=np.array(batch.vertices, dtype=np.int64),
        seed=np.array([batch.seed], dtype=np.int64),
        t=np.array([batch.t], dtype=np.int64),
    )


def exact_reference_cov(m: ModelSpec, t: int, window: Window | None = None) -> np.ndarray:
    """Float rendering of the exact covariance of [X_root, layer vertices].

    The cross row carries Cov(X_root, X_v); entry (0,0) is the root variance.
    Used as the oracle target when validating sampler output.
    """
    from .covariance import finite_layer_covariance
    from .halfspace import window_layer_covariance

    if m.kind is ModelKind.FINITE_ORTHANT:
        lc = finite_layer_covariance(m, t)
    else:
        if window is None:
            raise ValueError("half-space reference needs a window")
        lc = window_layer_covariance(m, t, window)
    k = lc.n
    out = np.zeros((k + 1, k + 1))
    out[0, 0] = float(m.sigma0_sq)
    for i in range(k):
        out[0, i + 1] = out[i + 1, 0] = float(lc.f[i])
        for j in range(k):
            out[i + 1, j + 1] = float(lc.sigma[i][j])
    return out
