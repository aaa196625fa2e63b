"""Optimal linear estimators of the root signal under sign/support modes.

Everything reduces to the layer data (Sigma, f): the best unrestricted
combination solves Sigma c = f and achieves squared ratio f^T Sigma^-1 f;
the best convex combination minimizes c^T Sigma c subject to f^T c = 1,
c >= 0 (the ratio is scale-free, so normalizing the root covariance to one
loses nothing).  The convex program is solved by a primal active-set method
on the nonnegativity constraints, optionally refined to an exact rational
KKT point once the float iteration has settled on an active set.

The critical d=1 finite model has a closed-form answer (binomial
coefficients, ratio 1/sqrt(t 4^-t C(2t,t) + 1)), kept here both as a public
operation and as the anchor for exactness tests.  The supercritical
certificate builds the parent-count-weighted combination whose root
covariance is constant in t while its variance stays bounded, which is the
finite-model route to reconstruction above criticality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import halfspace as hs
from .covariance import (
    LayerCovariance,
    estimator_stats,
    finite_layer_covariances,
)
from .linalg import SingularMatrixError, dot, quadratic_form, solve_exact
from .poset import ModelKind, ModelSpec, Vertex, Window, parent_count

MODE_UNRESTRICTED = "unrestricted"
MODE_CONVEX = "convex"
MODE_WINDOW = "window"
MODE_SINGLE_VERTEX = "single-vertex"


@dataclass(frozen=True)
class EstimatorResult:
    """A layer estimator with its achieved ratio Cov(zeta, X_root)/sd(zeta)."""

    mode: str
    t: int
    vertices: tuple[Vertex, ...]
    coefficients: tuple
    ratio_sq: Fraction | float
    backend: str
    certificate: dict | None = None

    @property
    def ratio(self) -> float:
        return math.sqrt(float(self.ratio_sq))

    def coefficient_map(self) -> dict[Vertex, Fraction | float]:
        return dict(zip(self.vertices, self.coefficients))


class EngineInvariantError(RuntimeError):
    """A structurally impossible state, e.g. a singular layer covariance."""


def optimal_linear(lc: LayerCovariance) -> EstimatorResult:
    """Maximize Cov(zeta, X_root)/sd(zeta) over all layer combinations."""
    if lc.backend == "exact":
        try:
            c = solve_exact(lc.sigma, lc.f)
        except SingularMatrixError as exc:
            raise EngineInvariantError(
                "layer covariance must be positive definite; this is an engine bug"
            ) from exc
        ratio_sq = dot(c, lc.f)
        return EstimatorResult(
            MODE_UNRESTRICTED, lc.t, lc.vertices, tuple(c), ratio_sq, "exact"
        )
    sigma = np.asarray(lc.sigma, dtype=float)
    f = np.asarray(lc.f, dtype=float)
    try:
        c = np.linalg.solve(sigma, f)
    except np.linalg.LinAlgError as exc:
        raise EngineInvariantError(
            "layer covariance must be positive definite; this is an engine bug"
        ) from exc
    ratio_sq = float(c @ f)
    return EstimatorResult(
        MODE_UNRESTRICTED, lc.t, lc.vertices, tuple(c.tolist()), ratio_sq, "float"
    )


def ratio_of(lc: LayerCovariance, coeffs: Sequence) -> Fraction | float:
    """Squared ratio achieved by an arbitrary coefficient vector on lc."""
    if lc.backend == "exact":
        c = [Fraction(x) for x in coeffs]
        cov = dot(c, lc.f)
        var = quadratic_form(lc.sigma, c)
        if var == 0:
            raise ValueError("estimator must have positive variance")
        return cov * cov / var
    c = np.asarray(coeffs, dtype=float)
    cov = float(c @ np.asarray(lc.f, dtype=float))
    var = float(c @ np.asarray(lc.sigma, dtype=float) @ c)
    return cov * cov / var


# ---------------------------------------------------------------------------
# closed form, critical d = 1
# ---------------------------------------------------------------------------

def closed_form_critical_d1(t: int) -> tuple[Fraction, tuple[int, ...]]:
    """(squared optimal ratio, optimal coefficients) on layer t.

    The optimum is the binomial-coefficient profile; its squared ratio is
    4^t / (t C(2t,t) + 4^t).
    """
    if t < 0:
        raise ValueError("layer index must be >= 0")
    ratio_sq = Fraction(4**t, t * math.comb(2 * t, t) + 4**t)
    coeffs = tuple(math.comb(t, i) for i in range(t + 1))
    return ratio_sq, coeffs


def critical_d1_ratio_seq(t_max: int) -> np.ndarray:
    """Float closed-form optimal ratios for t = 0..t_max."""
    out = np.empty(t_max + 1)
    r = 1.0  # 4^-t C(2t,t)
    out[0] = 1.0
    for t in range(1, t_max + 1):
        r *= (2 * t - 1) / (2 * t)
        out[t] = 1.0 / math.sqrt(t * r + 1.0)
    return out


# ---------------------------------------------------------------------------
# convex (nonnegative) estimators
# ---------------------------------------------------------------------------

class ConvexSolverError(RuntimeError):
    """Active-set iteration did not converge; carries the best iterate."""

    def __init__(self, message: str, best: np.ndarray | None = None):
        super().__init__(message)
        self.best = best


def _equality_kkt_float(sigma: np.ndarray, f: np.ndarray, free: np.ndarray):
    """Solve min c^T Sigma c s.t. f^T c = 1 on the free coordinates."""
    k = len(free)
    mat = np.zeros((k + 1, k + 1))
    mat[:k, :k] = 2.0 * sigma[np.ix_(free, free)]
    mat[:k, k] = -f[free]
    mat[k, :k] = f[free]
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.solve(mat, rhs)
    return sol[:k], sol[k]


def _equality_kkt_exact(sigma, f, free: list[int]):
    k = len(free)
    mat = [[Fraction(0)] * (k + 1) for _ in range(k + 1)]
    for a, i in enumerate(free):
        row = sigma[i]
        for b, j in enumerate(free):
            mat[a][b] = 2 * row[j]
        mat[a][k] = -f[i]
        mat[k][a] = f[i]
    rhs = [Fraction(0)] * k + [Fraction(1)]
    sol = solve_exact(mat, rhs)
    return sol[:k], sol[k]


def _active_set_float(
    sigma: np.ndarray,
    f: np.ndarray,
    tol: float,
    max_iter: int,
    warm: set[int] | None = None,
) -> tuple[np.ndarray, float, list[int]]:
    n = len(f)
    working: set[int] = set() if not warm else set(warm)
    if len(working) >= n:
        working = set()
    free0 = sorted(set(range(n)) - working)
    mass = float(sum(f[i] for i in free0))
    if mass <= 0:
        working = set()
        free0 = list(range(n))
        mass = float(f.sum())
    x = np.zeros(n)
    for i in free0:
        x[i] = 1.0 / mass  # feasible: f^T x = 1, zero on the working set
    for _ in range(max_iter):
        free = np.array(sorted(set(range(n)) - working), dtype=int)
        y_free, lam = _equality_kkt_float(sigma, f, free)
        y = np.zeros(n)
        y[free] = y_free
        step = y - x
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(x))):
            grad = 2.0 * (sigma @ y)
            bad = [
                i
                for i in sorted(working)
                if grad[i] - lam * f[i] < -tol * max(1.0, abs(lam))
            ]
            if not bad:
                return y, lam, sorted(working)
            working.discard(bad[0])  # smallest index: Bland's anti-cycling rule
            continue
        # longest feasible step toward y; a zero-length degenerate step just
        # moves the blocking coordinate into the working set
        alpha = 1.0
        blocker = None
        for i in free:
            if step[i] < -tol:
                a = max(x[i], 0.0) / (-step[i])
                if a < alpha:
                    alpha = a
                    blocker = int(i)
        x = x + alpha * step
        np.clip(x, 0.0, None, out=x)
        if blocker is not None and alpha < 1.0:
            working.add(blocker)
    raise ConvexSolverError("active-set iteration budget exhausted", best=x)


def _refine_exact(sigma, f, active: list[int], n: int, max_rounds: int = 200):
    """Exact KKT point from a candidate active set, with smallest-index repair."""
    active_set = sorted(active)
    for _ in range(max_rounds):
        free = [i for i in range(n) if i not in active_set]
        if not free:
            raise ConvexSolverError("active set swallowed every coordinate")
        y_free, lam = _equality_kkt_exact(sigma, f, free)
        neg = [i for i, v in zip(free, y_free) if v < 0]
        if neg:
            active_set = sorted(active_set + [neg[0]])
            continue
        c = [Fraction(0)] * n
        for i, v in zip(free, y_free):
            c[i] = v
        mu_bad = None
        for i in active_set:
            mu = 2 * dot(sigma[i], c) - lam * f[i]
            if mu < 0:
                mu_bad = i
                break
        if mu_bad is not None:
            active_set = [i for i in active_set if i != mu_bad]
            continue
        return c, lam, active_set
    raise ConvexSolverError("exact active-set repair did not settle")


def optimal_convex(
    lc: LayerCovariance, tol: float = 1e-9, max_iter: int | None = None
) -> EstimatorResult:
    """Best nonnegative combination: min c^T Sigma c with f^T c = 1, c >= 0.

    Exact backend: when the unrestricted optimum is already nonnegative it is
    returned directly; otherwise a float active-set pass proposes the active
    set and the KKT system is re-solved and verified in exact rationals.
    """
    n = lc.n
    if max_iter is None:
        max_iter = 3 * n + 300
    if lc.backend == "exact":
        if any(x <= 0 for x in lc.f):
            raise ValueError("convex mode requires positive root covariances")
        unrestricted = optimal_linear(lc)
        total = dot(unrestricted.coefficients, lc.f)
        scaled = [ci / total for ci in unrestricted.coefficients]
        if all(x >= 0 for x in scaled):
            return EstimatorResult(
                MODE_CONVEX,
                lc.t,
                lc.vertices,
                tuple(scaled),
                unrestricted.ratio_sq,
                "exact",
                certificate={"active": (), "lambda": 2 / unrestricted.ratio_sq,
                             "exact": True},
            )
        sigma_f = np.array([[float(x) for x in row] for row in lc.sigma])
        f_f = np.array([float(x) for x in lc.f])
        warm = {i for i, x in enumerate(scaled) if x < 0}
        _, _, active = _active_set_float(sigma_f, f_f, tol, max_iter, warm)
        c, lam, active = _refine_exact(lc.sigma, lc.f, active, n)
        var = quadratic_form(lc.sigma, c)
        return EstimatorResult(
            MODE_CONVEX,
            lc.t,
            lc.vertices,
            tuple(c),
            1 / var,
            "exact",
            certificate={"active": tuple(active), "lambda": lam, "exact": True},
        )
    sigma = np.asarray(lc.sigma, dtype=float)
    f = np.asarray(lc.f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("convex mode requires positive root covariances")
    warm = {int(i) for i in np.flatnonzero(np.linalg.solve(sigma, f) < 0)}
    c, lam, active = _active_set_float(sigma, f, tol, max_iter, warm)
    if float(np.min(c)) < -10 * tol:
        raise ConvexSolverError("converged iterate is infeasible", best=c)
    c = np.clip(c, 0.0, None)
    grad = 2.0 * (sigma @ c)
    resid = max(
        (abs(grad[i] - lam * f[i]) for i in range(n) if i not in active),
        default=0.0,
    )
    var = float(c @ sigma @ c)
    return EstimatorResult(
        MODE_CONVEX,
        lc.t,
        lc.vertices,
        tuple(c.tolist()),
        1.0 / var,
        "float",
        certificate={
            "active": tuple(active),
            "lambda": lam,
            "max_residual": float(resid),
        },
    )


# ---------------------------------------------------------------------------
# half-space single-vertex and window estimators
# ---------------------------------------------------------------------------

def single_vertex_ratio(m: ModelSpec, t: int, backend: str = "exact") -> float:
    """Cov(X_v, X_root)/sd(X_v) on layer t; the same for every layer vertex."""
    if m.kind is not ModelKind.HALF_SPACE:
        raise ValueError("single-vertex ratios are a half-space quantity")
    if backend == "exact":
        return math.sqrt(float(hs.single_vertex_ratio_sq_exact(m, t)))
    if backend == "float":
        return float(hs.single_vertex_ratio_series(m, t)[t])
    raise ValueError(f"unknown backend {backend!r}")


def single_vertex_result(
    m: ModelSpec, t: int, vertex: Vertex | None = None, backend: str = "exact"
) -> EstimatorResult:
    """The one-vertex estimator as a full result record.

    Any layer vertex gives the same ratio; the default representative is
    (t, 0, ..., 0).
    """
    if vertex is None:
        vertex = (t,) + (0,) * m.d
    if not m.contains(vertex) or sum(vertex) != t:
        raise ValueError(f"vertex {vertex} is not on layer {t}")
    if backend == "exact":
        ratio_sq: Fraction | float = hs.single_vertex_ratio_sq_exact(m, t)
    else:
        ratio_sq = float(single_vertex_ratio(m, t, backend)) ** 2
    return EstimatorResult(
        MODE_SINGLE_VERTEX, t, (vertex,), (1,), ratio_sq, backend
    )


def window_optimal(
    m: ModelSpec, t: int, window: Window, backend: str = "exact"
) -> EstimatorResult:
    """Best unrestricted combination supported on the window at layer t.

    The float backend for d <= 1 works in the jointly rescaled frame
    (Sigma/B^2t, f/B^t), under which the ratio is invariant; reported
    coefficients are then determined up to a positive scale, like any
    estimator here.
    """
    if backend == "float" and m.d <= 1:
        verts, sigma, f = hs.window_scaled_covariance_float(m, t, window)
        c = np.linalg.solve(sigma, f)
        ratio_sq = float(c @ f)
        return EstimatorResult(
            MODE_WINDOW, t, verts, tuple(c.tolist()), ratio_sq, "float"
        )
    lc = hs.window_layer_covariance(m, t, window, backend)
    res = optimal_linear(lc)
    return EstimatorResult(
        MODE_WINDOW, res.t, res.vertices, res.coefficients, res.ratio_sq, res.backend
    )


# ---------------------------------------------------------------------------
# supercritical certificate for the finite model
# ---------------------------------------------------------------------------

def supercritical_weights(m: ModelSpec) -> tuple[Fraction, ...]:
    """Per-parent-count weights whose layer sums satisfy Z_{t+1} = B Z_t + noise.

    Entry i-1 is the weight attached to vertices with i parents:

        (d+1-i)! * prod_{j<i} ((d+1) a_{d+1} - j a_j) * prod_{j>i} a_j.
    """
    if m.kind is not ModelKind.FINITE_ORTHANT:
        raise ValueError("the weighted construction lives on the finite model")
    d = m.d
    b = m.branching
    out = []
    for i in range(1, d + 2):
        w = Fraction(math.factorial(d + 1 - i))
        for j in range(1, i):
            w *= b - j * m.alphas[j - 1]
        for j in range(i + 1, d + 2):
            w *= m.alphas[j - 1]
        out.append(w)
    return tuple(out)


@dataclass(frozen=True)
class CertificateRow:
    t: int
    cov_root: Fraction
    variance: Fraction

    @property
    def ratio(self) -> float:
        return float(self.cov_root) / math.sqrt(float(self.variance))


@dataclass(frozen=True)
class SupercriticalCertificate:
    model: ModelSpec
    effective_model: ModelSpec
    horizon: int
    rows: tuple[CertificateRow, ...]

    @property
    def cov_constant(self) -> bool:
        return len({r.cov_root for r in self.rows}) == 1

    @property
    def variance_nondecreasing(self) -> bool:
        return all(
            self.rows[i].variance <= self.rows[i + 1].variance
            for i in range(len(self.rows) - 1)
        )

    def variance_tail(self, steps: int = 1) -> Fraction:
        """Var at the horizon minus Var ``steps`` layers earlier."""
        if steps >= len(self.rows):
            raise ValueError("not enough rows")
        return self.rows[-1].variance - self.rows[-1 - steps].variance

    def ratio_floor(self) -> float:
        """Conservative limit estimate from the observed geometric tail."""
        incs = [
            float(self.rows[i + 1].variance - self.rows[i].variance)
            for i in range(len(self.rows) - 1)
        ]
        last = incs[-1]
        ratios = [b / a for a, b in zip(incs[-6:-1], incs[-5:]) if a > 0]
        r = max(ratios) if ratios else 0.0
        var_limit = float(self.rows[-1].variance)
        if last > 0 and 0 < r < 1:
            var_limit += last * r / (1 - r)
        return float(self.rows[-1].cov_root) / math.sqrt(var_limit)


def _supercritical_effective_model(m: ModelSpec) -> ModelSpec:
    if m.alphas[-1] > Fraction(1, m.d + 1):
        return m
    # use the largest index whose weight clears its threshold, zero-padding
    # the remaining coordinates
    for i in range(m.d + 1, 0, -1):
        if m.alphas[i - 1] > Fraction(1, i):
            return ModelSpec.finite(
                i - 1,
                m.alphas[:i],
                epsilon=m.epsilon,
                mu0=m.mu0,
                sigma0_sq=m.sigma0_sq,
            )
    raise ValueError(
        "no weight exceeds its criticality threshold; the construction needs one"
    )


def supercritical_layer_coefficients(
    m: ModelSpec, t: int
) -> dict[Vertex, Fraction]:
    """Coefficients of the normalized certificate estimator on layer t."""
    from .poset import layer_vertices

    weights = supercritical_weights(m)
    scale = m.branching**t
    return {
        v: weights[parent_count(m, v) - 1] / scale
        for v in layer_vertices(m, t)
    }


def supercritical_certificate(m: ModelSpec, horizon: int) -> SupercriticalCertificate:
    """Exact per-layer moments of the weighted certificate estimator.

    Requires some weight above its threshold; when only a lower index
    clears it, the estimator lives on the corresponding sub-orthant
    (coefficients are zero-padded, which changes no moment).
    """
    if m.kind is not ModelKind.FINITE_ORTHANT:
        raise ValueError("the certificate lives on the finite model")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    eff = _supercritical_effective_model(m)
    rows = []
    for t in range(1, horizon + 1):
        coeffs = supercritical_layer_coefficients(eff, t)
        stats = estimator_stats(eff, t, coeffs)
        rows.append(CertificateRow(t, stats.cov_root, stats.variance))
    return SupercriticalCertificate(m, eff, horizon, tuple(rows))


def decay_bound_constant(m: ModelSpec) -> float:
    """max_i 1/(sqrt(i) alpha_i); reference constant for subcritical decay.

    The regime in which this constant's bound bites starts at iterated-
    exponential layer counts, so nothing here evaluates it against data.
    """
    return max(1.0 / (math.sqrt(i) * float(m.alphas[i - 1])) for i in range(1, m.d + 2))


def unrestricted_ratio_trace(
    m: ModelSpec, t_max: int, backend: str = "float", max_layer_size: int = 50_000
) -> list[EstimatorResult]:
    """optimal_linear on every layer 0..t_max, reusing one covariance sweep."""
    out = []
    for lc in finite_layer_covariances(m, t_max, backend, max_layer_size):
        out.append(optimal_linear(lc))
    return out
